"""Deterministic JSON emission: sorted keys, fixed float formatting.

Identical inputs produce byte-identical output.  Floats are written with
17 significant digits (round-trip exact); non-finite floats must be
converted to markers by the caller, so they raise here.
"""

import json
import math

import numpy as np


def _fmt_float(x):
    if math.isnan(x) or math.isinf(x):
        raise ValueError(
            "non-finite float in report; encode it as a string marker instead"
        )
    return f"{x:.17g}"


def _emit(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"dict keys must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key))
            out.append(":")
            _emit(obj[key], out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj):
    """Serialize to a deterministic JSON string (no trailing newline)."""
    out = []
    _emit(obj, out)
    return "".join(out)


def inf_marker(x):
    """Represent possibly-infinite floats: finite -> float, inf -> 'inf'."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)
