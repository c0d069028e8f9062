"""Voice-quality measures: harmonicity, jitter, shimmer.

HNR comes from the normalized autocorrelation at the pitch-period lag,
10*log10(r / (1 - r)), averaged over voiced frames. Jitter and shimmer
use F0-guided peak picking: successive glottal-pulse marks located by
searching one expected period ahead, refined to sub-sample precision by
parabolic interpolation. A window with no voiced frames yields zeros
with a degenerate flag instead of an error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pitch import F0Contour, f0_contour, normalized_autocorr

_R_MIN = 1e-4
_R_MAX = 0.9999  # caps HNR at ~40 dB


@dataclass(frozen=True)
class VoiceQuality:
    hnr_db: float
    jitter_local: float
    shimmer_local: float
    degenerate: bool


def voice_quality(samples: np.ndarray, rate: int,
                  contour: F0Contour | None = None) -> VoiceQuality:
    x = np.asarray(samples, dtype=np.float64)
    if contour is None:
        contour = f0_contour(x, rate)
    if not contour.voiced.any():
        return VoiceQuality(0.0, 0.0, 0.0, degenerate=True)

    hnr = _harmonicity_db(x, rate, contour)
    marks, amps = _period_marks(x, rate, contour)
    jitter, shimmer = _perturbations(marks, amps)
    return VoiceQuality(hnr_db=hnr, jitter_local=jitter, shimmer_local=shimmer,
                        degenerate=False)


def _harmonicity_db(x: np.ndarray, rate: int, contour: F0Contour) -> float:
    r, _times = normalized_autocorr(x, rate)
    tau_max = r.shape[1] - 1
    values = []
    for i in np.nonzero(contour.voiced)[0]:
        tau = rate / contour.f0_hz[i]
        t0 = int(round(tau))
        if t0 < 2 or t0 > tau_max - 1:
            continue
        a, b, c = r[i, t0 - 1], r[i, t0], r[i, t0 + 1]
        denom = a - 2.0 * b + c
        peak = b if denom >= 0.0 else b - 0.25 * (a - c) * ((a - c) / (2.0 * denom))
        peak = float(np.clip(peak, _R_MIN, _R_MAX))
        values.append(10.0 * np.log10(peak / (1.0 - peak)))
    if not values:
        return 0.0
    return float(np.mean(values))


def _period_at(contour: F0Contour, rate: int, sample: int) -> float | None:
    """Expected period in samples near a sample position, from the closest voiced frame."""
    if not contour.voiced.any():
        return None
    t = sample / rate
    voiced_idx = np.nonzero(contour.voiced)[0]
    dist = np.abs(contour.times[voiced_idx] - t)
    j = voiced_idx[int(np.argmin(dist))]
    if dist.min() > 0.05:
        return None
    return rate / contour.f0_hz[j]


def _refine_peak(x: np.ndarray, i: int) -> tuple[float, float]:
    """Sub-sample position and amplitude of the local peak at index i."""
    if i <= 0 or i >= len(x) - 1:
        return float(i), float(x[i])
    a, b, c = x[i - 1], x[i], x[i + 1]
    denom = a - 2.0 * b + c
    if denom >= 0.0:
        return float(i), float(b)
    off = 0.5 * (a - c) / denom
    off = float(np.clip(off, -0.5, 0.5))
    amp = b - 0.25 * (a - c) * off
    return i + off, float(amp)


def _period_marks(x: np.ndarray, rate: int, contour: F0Contour
                  ) -> tuple[list[list[float]], list[list[float]]]:
    """Chains of pulse marks (sub-sample positions) and their amplitudes.

    A chain breaks whenever the expected next pulse leaves the voiced
    region or the signal ends; perturbation stats only pair marks inside
    one chain.
    """
    n = len(x)
    chains: list[list[float]] = []
    amps: list[list[float]] = []
    frame_starts = (contour.times * rate).astype(np.int64)
    voiced_starts = frame_starts[contour.voiced]
    if voiced_starts.size == 0:
        return chains, amps

    cursor = int(voiced_starts[0])
    while cursor < n - 2:
        period = _period_at(contour, rate, cursor)
        if period is None:
            later = voiced_starts[voiced_starts > cursor]
            if later.size == 0:
                break
            cursor = int(later[0])
            continue
        hi = min(n, cursor + int(round(2.0 * period)) + 1)
        if hi - cursor < 3:
            break
        first = cursor + int(np.argmax(x[cursor:hi]))
        pos, amp = _refine_peak(x, first)
        chain = [pos]
        chain_amp = [amp]
        while True:
            p = _period_at(contour, rate, int(round(chain[-1])))
            if p is None:
                break
            lo = int(round(chain[-1] + 0.75 * p))
            hi = int(round(chain[-1] + 1.40 * p)) + 1
            if lo < 0 or hi > n or hi - lo < 3:
                break
            peak_i = lo + int(np.argmax(x[lo:hi]))
            pos, amp = _refine_peak(x, peak_i)
            chain.append(pos)
            chain_amp.append(amp)
        if len(chain) >= 2:
            chains.append(chain)
            amps.append(chain_amp)
        cursor = int(round(chain[-1] + period))  # strictly advances: period >= 26 samples
    return chains, amps


def _perturbations(chains: list[list[float]], amps: list[list[float]]
                   ) -> tuple[float, float]:
    periods: list[float] = []
    period_diffs: list[float] = []
    amp_values: list[float] = []
    amp_diffs: list[float] = []
    for chain, chain_amp in zip(chains, amps):
        t = np.diff(np.asarray(chain))
        periods.extend(t.tolist())
        if len(t) >= 2:
            period_diffs.extend(np.abs(np.diff(t)).tolist())
        a = np.asarray(chain_amp)
        amp_values.extend(np.abs(a).tolist())
        if len(a) >= 2:
            amp_diffs.extend(np.abs(np.diff(a)).tolist())
    jitter = 0.0
    shimmer = 0.0
    if period_diffs and periods:
        mean_t = float(np.mean(np.asarray(periods)))
        if mean_t > 0.0:
            jitter = float(np.mean(np.asarray(period_diffs))) / mean_t
    if amp_diffs and amp_values:
        mean_a = float(np.mean(np.asarray(amp_values)))
        if mean_a > 0.0:
            shimmer = float(np.mean(np.asarray(amp_diffs))) / mean_a
    return jitter, shimmer
