"""Selection of the prosodically stable 2-second analysis window.

Candidate windows start at 10-second steps; the final candidate is
clamped to the clip end. Each candidate's instability is the sum of the
coefficients of variation of voiced F0 and frame RMS over the frames it
fully contains. Candidates with under 25% voiced frames are pushed to
+inf; if that disqualifies every candidate, RMS variation alone decides.
Ties break toward the earliest start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import AudioClip
from ..errors import ClipTooShort
from .pitch import FRAME_S, F0Contour, f0_contour, frame_rms

WINDOW_S = 2.0
STEP_S = 10.0
MIN_VOICED_FRACTION = 0.25


@dataclass(frozen=True)
class StableWindow:
    start_sample: int
    length_samples: int
    stability_score: float


def candidate_starts(n_samples: int, rate: int) -> list[int]:
    """Window starts at 10 s steps plus the end-clamped final candidate."""
    win = int(round(WINDOW_S * rate))
    step = int(round(STEP_S * rate))
    last = n_samples - win
    starts = list(range(0, last + 1, step))
    if starts[-1] != last:
        starts.append(last)
    return starts


def _frames_in_window(times: np.ndarray, rate: int, start: int, length: int) -> np.ndarray:
    """Mask of frames fully contained in [start, start+length) samples."""
    t0 = start / rate
    t1 = (start + length) / rate
    return (times >= t0 - 1e-9) & (times + FRAME_S <= t1 + 1e-9)


def _coefficient_of_variation(values: np.ndarray) -> float:
    if values.size == 0:
        return np.inf
    mean = float(np.mean(values))
    if mean <= 1e-12:
        return np.inf
    return float(np.std(values)) / mean


def window_scores(contour: F0Contour, rms: np.ndarray, rate: int,
                  starts: list[int], length: int) -> tuple[np.ndarray, np.ndarray]:
    """(combined score, rms-only score) per candidate; voiced-poor windows get +inf."""
    combined = np.empty(len(starts))
    rms_only = np.empty(len(starts))
    for i, s in enumerate(starts):
        mask = _frames_in_window(contour.times, rate, s, length)
        cv_rms = _coefficient_of_variation(rms[mask])
        rms_only[i] = cv_rms
        n = int(mask.sum())
        voiced = contour.voiced & mask
        frac = voiced.sum() / n if n else 0.0
        if frac < MIN_VOICED_FRACTION:
            combined[i] = np.inf
        else:
            combined[i] = _coefficient_of_variation(contour.f0_hz[voiced]) + cv_rms
    return combined, rms_only


def select_stable_window(clip: AudioClip) -> StableWindow:
    """Pick the candidate 2-second window with the lowest instability."""
    rate = clip.sample_rate_hz
    win = int(round(WINDOW_S * rate))
    if len(clip.samples) < win:
        raise ClipTooShort(
            f"clip holds {len(clip.samples) / rate:.3f} s, need {WINDOW_S} s"
        )
    x = np.asarray(clip.samples, dtype=np.float64)
    contour = f0_contour(x, rate)
    rms = frame_rms(x, rate)
    starts = candidate_starts(len(x), rate)
    combined, rms_only = window_scores(contour, rms, rate, starts, win)
    scores = combined if np.isfinite(combined).any() else rms_only

    best = 0
    for i in range(1, len(starts)):
        if scores[i] < scores[best]:
            best = i
    score = scores[best] if np.isfinite(scores[best]) else rms_only[best]
    if not np.isfinite(score):
        score = 0.0
    return StableWindow(start_sample=starts[best], length_samples=win,
                        stability_score=float(score))


def extract_window(clip: AudioClip, window: StableWindow) -> AudioClip:
    seg = clip.samples[window.start_sample:window.start_sample + window.length_samples]
    return AudioClip(samples=seg, sample_rate_hz=clip.sample_rate_hz)
