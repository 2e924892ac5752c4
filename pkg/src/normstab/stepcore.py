"""Stepper backend selection.

The compiled core is used when the extension built; the pure NumPy twin is
the fallback and can be forced with NORMSTAB_PURE_PYTHON=1 (useful for
benchmarking and debugging).  Both implement the identical scheme.
"""

import os

from . import _stepcore_py

if os.environ.get("NORMSTAB_PURE_PYTHON"):
    _impl = _stepcore_py
    BACKEND = "pure-python"
else:
    try:
        from . import _stepcore_cy as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        _impl = _stepcore_py
        BACKEND = "pure-python"

integrate_adaptive = _impl.integrate_adaptive

GAMMA = _stepcore_py.GAMMA
STATUS_DONE = _stepcore_py.STATUS_DONE
STATUS_STEP_UNDERFLOW = _stepcore_py.STATUS_STEP_UNDERFLOW
STATUS_NEWTON_FAIL = _stepcore_py.STATUS_NEWTON_FAIL
STATUS_MAX_STEPS = _stepcore_py.STATUS_MAX_STEPS
STATUS_DIVERGED = _stepcore_py.STATUS_DIVERGED


def available_backends():
    """Names and callables of the importable stepper implementations."""
    out = {"pure-python": _stepcore_py.integrate_adaptive}
    try:
        from . import _stepcore_cy  # type: ignore[attr-defined]
        out["compiled"] = _stepcore_cy.integrate_adaptive
    except ImportError:
        pass
    return out
