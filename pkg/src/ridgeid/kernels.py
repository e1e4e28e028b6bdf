"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
reference runs.  Setting ``RIDGEID_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("RIDGEID_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"


def get(backend: str | None = None):
    name = BACKEND if backend is None else backend
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available") from None


def rank1_iterate(Q, c0, gamma, steps, tol, backend=None):
    return get(backend).rank1_iterate(Q, c0, gamma, steps, tol)


def pd_ascent(Q, c0, iters, backend=None):
    return get(backend).pd_ascent(Q, c0, iters)
