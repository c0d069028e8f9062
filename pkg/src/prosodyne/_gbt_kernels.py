"""Exact greedy split scan over pre-sorted per-node feature matrices.

Both implementations share the same sequential-prefix-sum arithmetic so
their outputs are bit-identical; the numba path only removes interpreter
overhead. Inputs per node: ``xs`` (features x rows) holds node rows sorted
ascending per feature, ``gs`` the matching gradients. Hessians are row
counts (squared-error objective). Returns per-feature best gain (-inf
when no valid split) and split position (index of the last left row).
"""

from __future__ import annotations

import numpy as np

try:
    import numba
    from numba import njit, prange

    numba.config.THREADING_LAYER = "workqueue"  # skip noisy TBB probing
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def split_scan_numpy(xs: np.ndarray, gs: np.ndarray, lam: float, gamma: float,
                     mcw: float) -> tuple[np.ndarray, np.ndarray]:
    d, k = xs.shape
    best_gain = np.full(d, -np.inf)
    best_pos = np.full(d, -1, dtype=np.int64)
    if k < 2:
        return best_gain, best_pos
    cum = np.cumsum(gs, axis=1)
    gt = cum[:, -1]
    ht = float(k)
    parent = gt * gt / (ht + lam)
    hl = np.arange(1, k, dtype=np.float64)
    hr = ht - hl
    gl = cum[:, :-1]
    gr = gt[:, None] - gl
    gain = 0.5 * (gl * gl / (hl + lam)[None, :] + gr * gr / (hr + lam)[None, :]
                  - parent[:, None]) - gamma
    valid = (xs[:, 1:] > xs[:, :-1]) & (hl >= mcw)[None, :] & (hr >= mcw)[None, :]
    gain = np.where(valid, gain, -np.inf)
    pos = np.argmax(gain, axis=1)
    g = gain[np.arange(d), pos]
    has = np.isfinite(g)
    best_gain[has] = g[has]
    best_pos[has] = pos[has]
    return best_gain, best_pos


if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def _split_scan_numba(xs, gs, lam, gamma, mcw):  # pragma: no cover - jit
        d, k = xs.shape
        best_gain = np.full(d, -np.inf)
        best_pos = np.full(d, -1, dtype=np.int64)
        if k < 2:
            return best_gain, best_pos
        ht = float(k)
        for f in prange(d):
            gt = 0.0
            for i in range(k):
                gt += gs[f, i]
            parent = gt * gt / (ht + lam)
            gl = 0.0
            bg = -np.inf
            bp = -1
            for i in range(k - 1):
                gl += gs[f, i]
                hl = float(i + 1)
                hr = ht - hl
                if hl < mcw or hr < mcw:
                    continue
                if xs[f, i + 1] <= xs[f, i]:
                    continue
                gr = gt - gl
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                              - parent) - gamma
                if gain > bg:
                    bg = gain
                    bp = i
            best_gain[f] = bg
            best_pos[f] = bp
        return best_gain, best_pos

    def split_scan(xs, gs, lam, gamma, mcw):
        return _split_scan_numba(xs, gs, lam, gamma, mcw)

else:
    split_scan = split_scan_numpy
