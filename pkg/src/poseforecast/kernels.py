"""Selects the compiled nearest-neighbour kernels, falling back to numpy.

Set ``POSEFORECAST_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _nnkernel_py

BACKEND = "python"
_impl = _nnkernel_py
if not os.environ.get("POSEFORECAST_PURE_PYTHON"):
    try:
        from . import _nnkernel as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _nnkernel_py


def _prep(query, query_vis, cands, cand_vis):
    return (np.ascontiguousarray(query, dtype=np.float64),
            np.ascontiguousarray(query_vis, dtype=np.uint8),
            np.ascontiguousarray(cands, dtype=np.float64),
            np.ascontiguousarray(cand_vis, dtype=np.uint8))


def pose_distances(query, query_vis, cands, cand_vis, impl=None):
    """Per-coordinate MSE between ``query`` ``(N, 2)`` and each of ``cands`` ``(M, N, 2)``.

    Only joints visible in both poses count; no common joint gives ``inf``.
    """
    return (impl or _impl).pose_distances(*_prep(query, query_vis, cands, cand_vis))


def nearest(query, query_vis, cands, cand_vis, allowed=None, impl=None):
    """Index and distance of the closest allowed candidate, lowest index on ties; ``(-1, inf)`` if none."""
    args = _prep(query, query_vis, cands, cand_vis)
    if allowed is None:
        allowed = np.ones(len(args[2]), dtype=np.uint8)
    idx, d = (impl or _impl).nearest(*args, np.ascontiguousarray(allowed, dtype=np.uint8))
    return int(idx), float(d)
