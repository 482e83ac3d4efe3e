"""Selects the compiled rollout kernel when built, else the numpy fallback.

Set ``SGLSTM_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _fallback
from .nn import LOG_SIGMA_MAX, LOG_SIGMA_MIN, RHO_RAW_MAX

try:
    if os.environ.get("SGLSTM_BACKEND", "").lower() == "python":
        raise ImportError("compiled backend disabled by SGLSTM_BACKEND")
    from . import _kernels
except ImportError:
    _kernels = None

BACKEND = "compiled" if _kernels is not None else "python"
AVAILABLE = ("compiled", "python") if _kernels is not None else ("python",)

_DUMMY2 = np.zeros((1, 1))
_DUMMY1 = np.zeros(1)


def rollout(params, obs, segment, mode, extent, cells, backend=None):
    """Closed-loop prediction of 5 Gaussian steps for every entity row."""
    backend = backend or BACKEND
    if backend == "python":
        return _fallback.rollout(params, obs, segment, mode, extent, cells)
    if _kernels is None:
        raise RuntimeError("compiled backend is not available")
    f = lambda k: np.ascontiguousarray(params[k], dtype=np.float64)
    if mode == _fallback.MODE_SOCIAL:
        pw, pb = f("pool.W"), f("pool.b")
    elif mode == _fallback.MODE_OCCUPANCY:
        pw, pb = f("occ.W"), f("occ.b")
    else:
        pw, pb = _DUMMY2, _DUMMY1
    wp = f("lstm.Wp") if mode != _fallback.MODE_NONE else _DUMMY2
    return _kernels.rollout_kernel(
        np.ascontiguousarray(obs, dtype=np.float64), np.ascontiguousarray(segment, dtype=np.int64),
        int(mode), float(extent), int(cells),
        f("coord.W"), f("coord.b"), pw, pb, f("lstm.Wx"), wp, f("lstm.Wh"), f("lstm.b"),
        f("head.W"), f("head.b"), LOG_SIGMA_MIN, LOG_SIGMA_MAX, RHO_RAW_MAX)
