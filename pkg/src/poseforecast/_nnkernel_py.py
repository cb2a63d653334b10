"""Pure numpy versions of the compiled nearest-neighbour kernels.

Accumulation order matches the compiled loops, so both give bitwise-equal results.
"""
import numpy as np


def pose_distances(query, query_vis, cands, cand_vis):
    query_vis = np.asarray(query_vis, dtype=bool)
    cand_vis = np.asarray(cand_vis, dtype=bool)
    m, n = cand_vis.shape
    acc = np.zeros(m)
    cnt = np.zeros(m, dtype=np.int64)
    for k in range(n):
        if not query_vis[k]:
            continue
        mask = cand_vis[:, k]
        dx = query[k, 0] - cands[:, k, 0]
        dy = query[k, 1] - cands[:, k, 1]
        acc = np.where(mask, acc + (dx * dx + dy * dy), acc)
        cnt += mask
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(cnt > 0, acc / (2.0 * cnt), np.inf)


def nearest(query, query_vis, cands, cand_vis, allowed):
    d = pose_distances(query, query_vis, cands, cand_vis)
    d = np.where(np.asarray(allowed, dtype=bool), d, np.inf)
    if len(d) == 0 or not np.isfinite(d).any():
        return -1, np.inf
    best = int(np.argmin(d))
    return best, float(d[best])
