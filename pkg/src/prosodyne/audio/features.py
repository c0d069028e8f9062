"""Assembly of the canonical 203-dimension acoustic vector plus prosody extras.

Layout "acoustic-203-v1", fixed and versioned:

    [0:40)    mfcc
    [40:52)   chroma
    [52:180)  mel_log
    [180:187) spectral_contrast
    [187:193) tonnetz
    [193]     f0_mean_hz
    [194:199) f1..f5_hz
    [199]     hnr_db
    [200]     jitter_local
    [201]     shimmer_local
    [202]     rms_mean

Values are raw; z-normalization happens at dataset fusion. Degenerate
conditions (unvoiced window, missing formant slots) surface as sidecar
flags, never as errors, so corpora do not silently shrink mid-pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import AudioClip
from .formants import formants
from .pitch import F0Contour, f0_contour, frame_rms
from .preprocess import PreprocessedAudio
from .quality import voice_quality
from .spectral import spectral_features

ACOUSTIC_DIM = 203

SLICE_MFCC = slice(0, 40)
SLICE_CHROMA = slice(40, 52)
SLICE_MEL_LOG = slice(52, 180)
SLICE_CONTRAST = slice(180, 187)
SLICE_TONNETZ = slice(187, 193)
IDX_F0_MEAN = 193
SLICE_FORMANTS = slice(194, 199)
IDX_HNR = 199
IDX_JITTER = 200
IDX_SHIMMER = 201
IDX_RMS_MEAN = 202


def acoustic_dimension_names() -> list[str]:
    names = [f"mfcc_{i}" for i in range(40)]
    names += [f"chroma_{i}" for i in range(12)]
    names += [f"mel_log_{i}" for i in range(128)]
    names += [f"spectral_contrast_{i}" for i in range(7)]
    names += [f"tonnetz_{i}" for i in range(6)]
    names += ["f0_mean_hz"]
    names += [f"f{i}_hz" for i in range(1, 6)]
    names += ["hnr_db", "jitter_local", "shimmer_local", "rms_mean"]
    return names


@dataclass(frozen=True)
class ProsodySupplement:
    """Stand-in prosody quotients kept outside the canonical 203 dims."""

    cq: float   # voiced-frame ratio
    dtq: float  # speech-time quotient after VAD
    ci: float   # std of frame RMS in dB


@dataclass(frozen=True)
class AcousticVector:
    values: np.ndarray  # exactly 203 finite floats
    flags: dict = field(default_factory=dict)


def prosody_supplement(pre: PreprocessedAudio,
                       contour: F0Contour | None = None) -> ProsodySupplement:
    x = np.asarray(pre.clip.samples, dtype=np.float64)
    if contour is None:
        contour = f0_contour(x, pre.clip.sample_rate_hz)
    cq = contour.voiced_fraction
    dtq = min(1.0, pre.active_ratio)
    rms = frame_rms(x, pre.clip.sample_rate_hz)
    ci = float(np.std(20.0 * np.log10(rms + 1e-10))) if rms.size else 0.0
    return ProsodySupplement(cq=cq, dtq=dtq, ci=ci)


def acoustic_vector(window: AudioClip) -> AcousticVector:
    """Compute the full acoustic-203-v1 vector for a 2-second window."""
    x = np.asarray(window.samples, dtype=np.float64)
    rate = window.sample_rate_hz
    contour = f0_contour(x, rate)
    spec = spectral_features(x, rate)
    vq = voice_quality(x, rate, contour=contour)
    fm = formants(x, rate, contour=contour)
    rms = frame_rms(x, rate)

    out = np.zeros(ACOUSTIC_DIM, dtype=np.float64)
    out[SLICE_MFCC] = spec["mfcc"]
    out[SLICE_CHROMA] = spec["chroma"]
    out[SLICE_MEL_LOG] = spec["mel_log"]
    out[SLICE_CONTRAST] = spec["spectral_contrast"]
    out[SLICE_TONNETZ] = spec["tonnetz"]
    voiced_f0 = contour.f0_hz[contour.voiced]
    out[IDX_F0_MEAN] = float(voiced_f0.mean()) if voiced_f0.size else 0.0
    out[SLICE_FORMANTS] = fm.frequencies_hz
    out[IDX_HNR] = vq.hnr_db
    out[IDX_JITTER] = vq.jitter_local
    out[IDX_SHIMMER] = vq.shimmer_local
    out[IDX_RMS_MEAN] = float(rms.mean()) if rms.size else 0.0

    flags = {}
    if vq.degenerate:
        flags["voice_quality_degenerate"] = True
    if fm.missing:
        flags["formant_slots_missing"] = fm.missing
    if fm.unvoiced_fallback:
        flags["formants_unvoiced_fallback"] = True
    if not voiced_f0.size:
        flags["no_voiced_frames"] = True
    return AcousticVector(values=out, flags=flags)
