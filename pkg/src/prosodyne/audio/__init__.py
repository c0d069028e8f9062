"""Acoustic feature extraction: preprocessing, pitch, stable-window search,
spectral descriptors, voice quality, formants, and 203-D vector assembly."""

from .features import (
    ACOUSTIC_DIM,
    AcousticVector,
    ProsodySupplement,
    acoustic_dimension_names,
    acoustic_vector,
    prosody_supplement,
)
from .formants import FormantEstimate, formants
from .pitch import F0Contour, f0_contour, frame_rms
from .preprocess import PreprocessConfig, PreprocessedAudio, preprocess
from .quality import VoiceQuality, voice_quality
from .spectral import mel_filterbank, spectral_features
from .windowing import StableWindow, extract_window, select_stable_window

__all__ = [
    "ACOUSTIC_DIM",
    "AcousticVector",
    "F0Contour",
    "FormantEstimate",
    "PreprocessConfig",
    "PreprocessedAudio",
    "ProsodySupplement",
    "StableWindow",
    "VoiceQuality",
    "acoustic_dimension_names",
    "acoustic_vector",
    "extract_window",
    "f0_contour",
    "formants",
    "frame_rms",
    "mel_filterbank",
    "preprocess",
    "prosody_supplement",
    "select_stable_window",
    "spectral_features",
    "voice_quality",
]
