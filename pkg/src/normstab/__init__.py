"""Numerical verification of convergence to manifolds of equilibria.

For du/dt + F(u) = 0 with a non-isolated equilibrium u*, the package
checks normal stability (kernel = tangent space, semisimple zero,
spectral gap), builds the local graph representation of the equilibrium
manifold, transforms to normal coordinates, estimates the structural
constants empirically, integrates, and verifies exponential convergence
to a predicted limit equilibrium.
"""

from .dynamics import (
    Trajectory,
    exit_time,
    integrate,
    integrate_normal_form,
)
from .errors import (
    ChartConstructionFailed,
    DegenerateData,
    DimensionMismatch,
    DomainViolation,
    HorizonTooShort,
    InsufficientSamples,
    IntegrationFailure,
    ManifoldInconsistent,
    NewtonDiverged,
    NormstabError,
    NotAnEquilibrium,
    OutsideChart,
    ParseError,
    StepSizeUnderflow,
    UnknownGallery,
)
from .manifold import (
    GraphChart,
    build_graph_map,
    estimate_tangent_basis,
    find_equilibrium,
)
from .model import (
    ProblemDef,
    ShiftedProblem,
    gallery_names,
    get_gallery_defaults,
    get_gallery_problem,
    load_problem,
    shift_to_deviation,
)
from .normalform import (
    NormalFormSystem,
    StructureConstants,
    estimate_structure_constants,
    search_smallness,
)
from .normbank import (
    MaxRegConstants,
    NormFamily,
    estimate_maxreg_constants,
    hoelder,
    lp,
    norm_E0,
    norm_E1,
    weighted_copy,
    weighted_sup,
)
from .report import (
    Check,
    ConvergenceReport,
    SweepResult,
    VerifyOptions,
    analyze_problem,
    build_pipeline,
    fit_decay_rate,
    predict_limit,
    run_gallery,
    stability_sweep,
    verify_convergence,
)
from .spectral import (
    NormSuiteX,
    SpectralData,
    StabilityVerdict,
    build_norm_suite,
    check_normally_stable,
    linearize,
    principal_angle,
    project,
)
from .stepcore import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Check",
    "ChartConstructionFailed",
    "ConvergenceReport",
    "DegenerateData",
    "DimensionMismatch",
    "DomainViolation",
    "GraphChart",
    "HorizonTooShort",
    "InsufficientSamples",
    "IntegrationFailure",
    "ManifoldInconsistent",
    "MaxRegConstants",
    "NewtonDiverged",
    "NormFamily",
    "NormSuiteX",
    "NormalFormSystem",
    "NormstabError",
    "NotAnEquilibrium",
    "OutsideChart",
    "ParseError",
    "ProblemDef",
    "ShiftedProblem",
    "SpectralData",
    "StabilityVerdict",
    "StepSizeUnderflow",
    "StructureConstants",
    "SweepResult",
    "Trajectory",
    "UnknownGallery",
    "VerifyOptions",
    "analyze_problem",
    "build_graph_map",
    "build_norm_suite",
    "build_pipeline",
    "check_normally_stable",
    "estimate_maxreg_constants",
    "estimate_structure_constants",
    "estimate_tangent_basis",
    "exit_time",
    "find_equilibrium",
    "fit_decay_rate",
    "gallery_names",
    "get_gallery_defaults",
    "get_gallery_problem",
    "hoelder",
    "integrate",
    "integrate_normal_form",
    "linearize",
    "load_problem",
    "lp",
    "norm_E0",
    "norm_E1",
    "predict_limit",
    "principal_angle",
    "project",
    "run_gallery",
    "search_smallness",
    "shift_to_deviation",
    "stability_sweep",
    "verify_convergence",
    "weighted_copy",
    "weighted_sup",
]
