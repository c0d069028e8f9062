"""Frame-averaged spectral descriptors of the 2-second window.

STFT: 2048-point frames, 512 hop, periodic Hann, no centering. Each
frame-wise feature is averaged over frames to a fixed-size vector:
40 MFCCs, 12 chroma bins, 128 log-mel bands, 7 spectral-contrast values,
6 tonal-centroid dimensions.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dct

N_FFT = 2048
HOP = 512
N_MELS = 128
N_MFCC = 40
LOG_FLOOR = 1e-10
FMIN_HZ = 0.0
FMAX_HZ = 8000.0
_CONTRAST_EDGES = [0.0, 200.0, 400.0, 800.0, 1600.0, 3200.0, 6400.0, 8000.0]


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    mel = f / (200.0 / 3.0)
    log_region = f >= 1000.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(f, 1e-3) / 1000.0) / np.log(6.4) * 27.0, mel)
    return mel


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    m = np.asarray(m, dtype=np.float64)
    f = m * (200.0 / 3.0)
    log_region = m >= 15.0
    return np.where(log_region, 1000.0 * np.exp(np.log(6.4) * (m - 15.0) / 27.0), f)


def mel_filterbank(rate: int, n_fft: int = N_FFT, n_mels: int = N_MELS,
                   fmin: float = FMIN_HZ, fmax: float = FMAX_HZ) -> np.ndarray:
    """Triangular mel filters with Slaney area normalization, shape (n_mels, bins)."""
    bin_freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = np.asarray(mel_to_hz(mel_pts))
    fb = np.zeros((n_mels, len(bin_freqs)))
    for m in range(n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        fb[m] *= 2.0 / (hi - lo)  # area normalization
    return fb


def stft_power(samples: np.ndarray, rate: int) -> np.ndarray:
    """Power spectrogram, shape (frames, n_fft//2+1), no center padding."""
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < N_FFT:
        raise ValueError(f"window holds {len(x)} samples, STFT needs {N_FFT}")
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(N_FFT) / N_FFT)
    starts = np.arange(0, len(x) - N_FFT + 1, HOP)
    frames = x[starts[:, None] + np.arange(N_FFT)[None, :]] * window
    spec = np.fft.rfft(frames, axis=1)
    return np.abs(spec) ** 2


def _pitch_classes(rate: int) -> tuple[np.ndarray, np.ndarray]:
    """(usable-bin mask, pitch class per bin); class 9 is A (MIDI convention)."""
    freqs = np.arange(N_FFT // 2 + 1) * rate / N_FFT
    mask = freqs >= 27.5
    midi = np.zeros_like(freqs)
    midi[mask] = 69.0 + 12.0 * np.log2(freqs[mask] / 440.0)
    classes = np.mod(np.round(midi).astype(np.int64), 12)
    return mask, classes


_TONNETZ_BASIS = None


def tonnetz_basis() -> np.ndarray:
    """6x12 tonal-centroid projection (fifths, minor thirds, major thirds)."""
    global _TONNETZ_BASIS
    if _TONNETZ_BASIS is None:
        p = np.arange(12, dtype=np.float64)
        basis = np.vstack([
            np.sin(p * 7.0 * np.pi / 6.0),
            np.cos(p * 7.0 * np.pi / 6.0),
            np.sin(p * 3.0 * np.pi / 2.0),
            np.cos(p * 3.0 * np.pi / 2.0),
            0.5 * np.sin(p * 2.0 * np.pi / 3.0),
            0.5 * np.cos(p * 2.0 * np.pi / 3.0),
        ])
        _TONNETZ_BASIS = basis
    return _TONNETZ_BASIS


def spectral_features(samples: np.ndarray, rate: int) -> dict[str, np.ndarray]:
    """All frame-averaged spectral descriptors of a 2-second window."""
    power = stft_power(samples, rate)

    fb = mel_filterbank(rate)
    mel_power = power @ fb.T
    mel_log_frames = np.log(mel_power + LOG_FLOOR)
    mel_log = mel_log_frames.mean(axis=0)

    mfcc_frames = dct(mel_log_frames, type=2, norm="ortho", axis=1)[:, :N_MFCC]
    mfcc = mfcc_frames.mean(axis=0)

    mask, classes = _pitch_classes(rate)
    chroma_frames = np.zeros((power.shape[0], 12))
    for c in range(12):
        sel = mask & (classes == c)
        if sel.any():
            chroma_frames[:, c] = power[:, sel].sum(axis=1)
    peak = chroma_frames.max(axis=1, keepdims=True)
    chroma_frames = np.where(peak > 0.0, chroma_frames / np.maximum(peak, 1e-300), 0.0)
    chroma = chroma_frames.mean(axis=0)

    freqs = np.arange(N_FFT // 2 + 1) * rate / N_FFT
    contrast = np.zeros(7)
    for b in range(7):
        lo, hi = _CONTRAST_EDGES[b], _CONTRAST_EDGES[b + 1]
        sel = (freqs >= lo) & ((freqs < hi) if b < 6 else (freqs <= hi))
        band = power[:, sel]
        contrast[b] = np.mean(
            np.log(band.max(axis=1) + LOG_FLOOR) - np.log(band.min(axis=1) + LOG_FLOOR)
        )

    l1 = chroma_frames.sum(axis=1, keepdims=True)
    chroma_unit = np.where(l1 > 0.0, chroma_frames / np.maximum(l1, 1e-300), 0.0)
    tonnetz = (chroma_unit @ tonnetz_basis().T).mean(axis=0)

    return {
        "mfcc": mfcc,
        "chroma": chroma,
        "mel_log": mel_log,
        "spectral_contrast": contrast,
        "tonnetz": tonnetz,
    }
