"""Fundamental-frequency tracking via cumulative-mean-normalized autocorrelation.

Framing convention shared across the acoustic stack: 25 ms frames at a
10 ms hop. Each frame carries a lookahead buffer long enough to evaluate
lags down to 50 Hz, so the search range 50..600 Hz is always available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRAME_S = 0.025
HOP_S = 0.010
F0_MIN_HZ = 50.0
F0_MAX_HZ = 600.0
CMNDF_THRESHOLD = 0.15


@dataclass(frozen=True)
class F0Contour:
    """Per-frame pitch track. ``f0_hz`` is NaN on unvoiced frames."""

    times: np.ndarray   # frame start times, seconds
    f0_hz: np.ndarray   # NaN where unvoiced
    voiced: np.ndarray  # boolean

    def __len__(self) -> int:
        return len(self.times)

    @property
    def voiced_fraction(self) -> float:
        return float(self.voiced.mean()) if len(self.voiced) else 0.0


def frame_starts(n_samples: int, rate: int) -> np.ndarray:
    """Start indices of all 25 ms frames at a 10 ms hop that fit the signal."""
    frame = int(round(FRAME_S * rate))
    hop = int(round(HOP_S * rate))
    if n_samples < frame:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_samples - frame + 1, hop, dtype=np.int64)


def frame_rms(samples: np.ndarray, rate: int) -> np.ndarray:
    """RMS per 25 ms frame at a 10 ms hop (same grid as the F0 contour)."""
    x = np.asarray(samples, dtype=np.float64)
    starts = frame_starts(len(x), rate)
    frame = int(round(FRAME_S * rate))
    if len(starts) == 0:
        return np.zeros(0, dtype=np.float64)
    idx = starts[:, None] + np.arange(frame)[None, :]
    return np.sqrt(np.mean(x[idx] ** 2, axis=1))


def _frame_buffers(x: np.ndarray, rate: int) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Frames with lookahead: (buffers [F, frame+tau_max], starts, frame, tau_max)."""
    frame = int(round(FRAME_S * rate))
    tau_max = int(np.floor(rate / F0_MIN_HZ))
    starts = frame_starts(len(x), rate)
    buf_len = frame + tau_max
    padded = np.concatenate([x, np.zeros(buf_len, dtype=np.float64)])
    idx = starts[:, None] + np.arange(buf_len)[None, :]
    return padded[idx], starts, frame, tau_max


def _lag_correlations(buffers: np.ndarray, frame: int, tau_max: int
                      ) -> tuple[np.ndarray, np.ndarray]:
    """corr[f, tau] = sum_j b[j] * b[j+tau] over j < frame; energy[f, tau] likewise."""
    n_fft = 1
    while n_fft < buffers.shape[1] + 1:
        n_fft *= 2
    spec_full = np.fft.rfft(buffers, n_fft, axis=1)
    head = np.zeros_like(buffers)
    head[:, :frame] = buffers[:, :frame]
    spec_head = np.fft.rfft(head, n_fft, axis=1)
    corr = np.fft.irfft(np.conj(spec_head) * spec_full, n_fft, axis=1)[:, :tau_max + 1]
    sq = np.concatenate(
        [np.zeros((buffers.shape[0], 1)), np.cumsum(buffers ** 2, axis=1)], axis=1
    )
    taus = np.arange(tau_max + 1)
    energy = sq[:, taus + frame] - sq[:, taus]
    return corr, energy


def f0_contour(samples: np.ndarray, rate: int) -> F0Contour:
    """Track F0 per frame. Short or unvoiceable input yields all-unvoiced frames."""
    x = np.asarray(samples, dtype=np.float64)
    buffers, starts, frame, tau_max = _frame_buffers(x, rate)
    times = starts / rate
    n_frames = len(starts)
    if n_frames == 0:
        return F0Contour(times=times, f0_hz=np.zeros(0), voiced=np.zeros(0, dtype=bool))

    corr, energy = _lag_correlations(buffers, frame, tau_max)
    taus = np.arange(1, tau_max + 1)
    # difference function d(tau) and its cumulative-mean normalization
    diff = energy[:, 0:1] + energy[:, 1:] - 2.0 * corr[:, 1:]
    diff = np.maximum(diff, 0.0)
    cum = np.cumsum(diff, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmndf = np.where(cum > 0.0, diff * taus[None, :] / cum, 1.0)

    tau_lo = int(np.ceil(rate / F0_MAX_HZ))
    f0 = np.full(n_frames, np.nan)
    voiced = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        d = cmndf[i]
        tau = _pick_lag(d, tau_lo, tau_max)
        if tau is None or d[tau - 1] >= CMNDF_THRESHOLD:
            continue
        period = tau + _parabolic_offset(d, tau - 1)
        hz = rate / period
        f0[i] = min(max(hz, F0_MIN_HZ), F0_MAX_HZ)
        voiced[i] = True
    return F0Contour(times=times, f0_hz=f0, voiced=voiced)


def _pick_lag(cmndf_row: np.ndarray, tau_lo: int, tau_max: int) -> int | None:
    """First local CMNDF minimum below threshold, else the global minimum."""
    d = cmndf_row  # index t-1 holds lag t
    below = np.nonzero(d[tau_lo - 1:tau_max] < CMNDF_THRESHOLD)[0]
    if below.size:
        tau = int(below[0]) + tau_lo
        while tau < tau_max and d[tau] < d[tau - 1]:
            tau += 1
        return tau
    seg = d[tau_lo - 1:tau_max]
    if not np.all(np.isfinite(seg)):
        return None
    return int(np.argmin(seg)) + tau_lo


def _parabolic_offset(d: np.ndarray, i: int) -> float:
    """Sub-sample offset of the minimum of d around index i (lag = i+1)."""
    if i <= 0 or i >= len(d) - 1:
        return 0.0
    a, b, c = d[i - 1], d[i], d[i + 1]
    denom = a - 2.0 * b + c
    if denom <= 0.0:
        return 0.0
    off = 0.5 * (a - c) / denom
    return float(np.clip(off, -0.5, 0.5))


def normalized_autocorr(samples: np.ndarray, rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame normalized autocorrelation r(tau) in [-1, 1] plus frame times.

    r[f, tau] = corr(tau) / sqrt(e(0) * e(tau)); tau runs 0..tau_max.
    Used for harmonicity estimation at the pitch-period lag.
    """
    x = np.asarray(samples, dtype=np.float64)
    buffers, starts, frame, tau_max = _frame_buffers(x, rate)
    if len(starts) == 0:
        return np.zeros((0, 0)), np.zeros(0)
    corr, energy = _lag_correlations(buffers, frame, tau_max)
    denom = np.sqrt(energy[:, 0:1] * energy)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 0.0, corr / denom, 0.0)
    return r, starts / rate
