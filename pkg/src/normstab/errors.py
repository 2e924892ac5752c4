"""Exception types shared across the package."""


class NormstabError(Exception):
    """Base class for all package-specific failures."""


# --- configuration / problem definition ---

class ParseError(NormstabError):
    """Malformed config, expression, or inconsistent quasilinear split."""


class UnknownGallery(NormstabError):
    """Problem name not in the built-in gallery."""


class DimensionMismatch(NormstabError):
    """Field/Jacobian output shape disagrees with the declared dimension."""


class DomainViolation(NormstabError):
    """State left the declared domain ball of the vector field."""


class NotAnEquilibrium(NormstabError):
    """Shift point has |F(u*)| above the equilibrium tolerance."""


# --- spectral analysis ---

class SingularLinearization(NormstabError):
    """A linear solve against the linearization failed."""


class ZeroNotSemisimple(NormstabError):
    """Zero eigenvalue has a nontrivial Jordan block."""


class NoSpectralGap(NormstabError):
    """Nonzero spectrum is not strictly in the right half plane."""


# --- equilibrium manifold / graph chart ---

class NewtonDiverged(NormstabError):
    """Damped Newton failed to reach the residual tolerance."""


class ChartConstructionFailed(NormstabError):
    """No radius found on which the graph map is solvable."""


class ManifoldInconsistent(NormstabError):
    """Center residual too large: equilibria are not a graph over the kernel."""


class OutsideChart(NormstabError):
    """Center coordinate left the certified chart ball."""


class InsufficientSamples(NormstabError):
    """Too few usable samples to estimate a constant."""


# --- time stepping ---

class IntegrationFailure(NormstabError):
    """Generic stepper failure wrapper."""


class StepSizeUnderflow(IntegrationFailure):
    """Step size shrank below the resolvable floor."""


class NewtonStageFailure(IntegrationFailure):
    """Implicit stage equations unsolvable even at the minimum step."""


# --- empirical norm bank / fits ---

class TooFewSamples(NormstabError):
    """Trajectory has too few samples for the requested norm."""


class DegenerateData(NormstabError):
    """Fit or estimate attempted on degenerate data."""


class HorizonTooShort(NormstabError):
    """Stable part has not decayed enough to predict the limit."""
