"""Formant estimation from LPC pole locations.

Per voiced frame: pre-emphasis (0.97), Hamming window, order-18
autocorrelation LPC solved by Levinson-Durbin, polynomial roots mapped
to (frequency, bandwidth). Bandwidth uses the half-width convention
B = -fs * ln|r| / (2*pi). Poles with bandwidth under 400 Hz and
frequency inside (90, 7900) Hz count as formant candidates; the window
value per slot is the median over frames. Unvoiced windows fall back to
all frames and carry a degenerate flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pitch import FRAME_S, F0Contour, f0_contour, frame_starts

LPC_ORDER = 18
PREEMPHASIS = 0.97
MAX_BANDWIDTH_HZ = 400.0
FREQ_RANGE_HZ = (90.0, 7900.0)
N_FORMANTS = 5


@dataclass(frozen=True)
class FormantEstimate:
    frequencies_hz: np.ndarray  # length 5; zero where no candidate existed
    missing: list[int]          # slot indices filled with zero
    unvoiced_fallback: bool


def levinson_durbin(r: np.ndarray, order: int) -> np.ndarray | None:
    """Solve the autocorrelation normal equations.

    Returns inverse-filter coefficients [1, a1..ap] such that
    A(z) = 1 + a1 z^-1 + ... + ap z^-p whitens the input, or None when
    the recursion collapses (zero or non-positive prediction error).
    """
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    if err <= 0.0:
        return None
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        new = a.copy()
        new[1:i] = a[1:i] + k * a[i - 1:0:-1]
        new[i] = k
        a = new
        err *= (1.0 - k * k)
        if err <= 0.0:
            return None
    return a


def _frame_candidates(frame: np.ndarray, rate: int) -> list[float]:
    """Sorted formant candidates of one windowed frame."""
    w = frame * np.hamming(len(frame))
    full = np.correlate(w, w, mode="full")
    mid = len(w) - 1
    r = full[mid:mid + LPC_ORDER + 1]
    if r[0] <= 0.0:
        return []
    r = r.copy()
    r[0] *= 1.0 + 1e-9  # tiny ridge for near-singular frames
    a = levinson_durbin(r, LPC_ORDER)
    if a is None:
        return []
    roots = np.roots(a)
    roots = roots[np.imag(roots) > 1e-9]
    freqs = np.angle(roots) * rate / (2.0 * np.pi)
    mags = np.abs(roots)
    bws = -rate / (2.0 * np.pi) * np.log(np.maximum(mags, 1e-12))
    keep = (bws < MAX_BANDWIDTH_HZ) & (freqs > FREQ_RANGE_HZ[0]) & (freqs < FREQ_RANGE_HZ[1])
    return sorted(freqs[keep].tolist())


def formants(samples: np.ndarray, rate: int,
             contour: F0Contour | None = None) -> FormantEstimate:
    x = np.asarray(samples, dtype=np.float64)
    if contour is None:
        contour = f0_contour(x, rate)
    pre = np.concatenate([[x[0]], x[1:] - PREEMPHASIS * x[:-1]]) if len(x) else x
    starts = frame_starts(len(x), rate)
    frame = int(round(FRAME_S * rate))

    use = contour.voiced
    fallback = False
    if not use.any():
        use = np.ones(len(starts), dtype=bool)
        fallback = True

    per_slot: list[list[float]] = [[] for _ in range(N_FORMANTS)]
    for i in np.nonzero(use)[0]:
        s = int(starts[i])
        cands = _frame_candidates(pre[s:s + frame], rate)
        for slot, f in enumerate(cands[:N_FORMANTS]):
            per_slot[slot].append(f)

    values = np.zeros(N_FORMANTS)
    missing = []
    for slot in range(N_FORMANTS):
        if per_slot[slot]:
            values[slot] = float(np.median(np.asarray(per_slot[slot])))
        else:
            missing.append(slot)
    return FormantEstimate(frequencies_hz=values, missing=missing,
                           unvoiced_fallback=fallback)
