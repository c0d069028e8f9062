"""Audio conditioning: VAD, band-limiting, spectral gating, trim, loudness.

The chain runs high-pass -> voice-activity detection -> spectral noise
gating -> leading/trailing silence trim -> RMS normalization to
-23 dBFS. The returned record keeps the pre-trim timing so downstream
duty-cycle measures (speech-time quotient) stay computable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from ..corpus import AudioClip
from ..errors import AllSilence

_EPS = 1e-10


@dataclass(frozen=True)
class PreprocessConfig:
    target_rms_dbfs: float = -23.0
    vad_frame_s: float = 0.030
    vad_margin_db: float = 6.0
    vad_floor_dbfs: float = -45.0
    highpass_hz: float = 50.0
    lowpass_hz: float = 8000.0
    gate_oversubtract: float = 1.5
    gate_floor: float = 0.178  # about -15 dB residual


@dataclass(frozen=True)
class PreprocessedAudio:
    clip: AudioClip
    original_duration_s: float
    active_duration_s: float
    trim_start_s: float
    rms_dbfs: float

    @property
    def active_ratio(self) -> float:
        if self.original_duration_s <= 0.0:
            return 0.0
        return self.active_duration_s / self.original_duration_s


def _vad_frames(x: np.ndarray, rate: int, cfg: PreprocessConfig) -> np.ndarray:
    """Boolean activity per non-overlapping VAD frame."""
    frame = int(round(cfg.vad_frame_s * rate))
    n_frames = len(x) // frame
    if n_frames == 0:
        return np.zeros(0, dtype=bool)
    rms = np.sqrt(np.mean(x[:n_frames * frame].reshape(n_frames, frame) ** 2, axis=1))
    db = 20.0 * np.log10(rms + _EPS)
    n_floor = max(1, int(np.ceil(0.10 * n_frames)))
    floor_db = float(np.mean(np.sort(db)[:n_floor]))
    thr = max(floor_db + cfg.vad_margin_db, cfg.vad_floor_dbfs)
    if thr > db.max():
        # homogeneous clip: no distinguishable noise floor, absolute rule only
        thr = cfg.vad_floor_dbfs
    return db >= thr


def _band_limit(x: np.ndarray, rate: int, cfg: PreprocessConfig) -> np.ndarray:
    nyq = rate / 2.0
    if cfg.lowpass_hz >= nyq - 1.0:
        sos = sps.butter(4, cfg.highpass_hz, btype="highpass", fs=rate, output="sos")
    else:
        sos = sps.butter(4, [cfg.highpass_hz, cfg.lowpass_hz], btype="bandpass",
                         fs=rate, output="sos")
    return sps.sosfiltfilt(sos, x)


def _spectral_gate(x: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Attenuate bins below the noise profile taken from the quietest frames."""
    n_fft, hop = 512, 128
    if len(x) < n_fft:
        return x
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n_fft) / n_fft)
    pad = np.concatenate([np.zeros(n_fft), x, np.zeros(n_fft)])
    starts = np.arange(0, len(pad) - n_fft + 1, hop)
    frames = pad[starts[:, None] + np.arange(n_fft)[None, :]] * window
    spec = np.fft.rfft(frames, axis=1)
    mag = np.abs(spec)
    energy = np.sum(mag ** 2, axis=1)
    n_noise = max(1, int(np.ceil(0.10 * len(starts))))
    noise_profile = mag[np.argsort(energy)[:n_noise]].mean(axis=0)
    gain = np.clip(1.0 - cfg.gate_oversubtract * noise_profile / (mag + _EPS),
                   cfg.gate_floor, 1.0)
    cleaned = np.fft.irfft(spec * gain, n_fft, axis=1)
    out = np.zeros(len(pad))
    norm = np.zeros(len(pad))
    win_sq = window ** 2
    for i, s in enumerate(starts):
        out[s:s + n_fft] += cleaned[i] * window
        norm[s:s + n_fft] += win_sq
    out = out / np.maximum(norm, _EPS)
    return out[n_fft:n_fft + len(x)]


def preprocess(clip: AudioClip, cfg: PreprocessConfig | None = None) -> PreprocessedAudio:
    """Condition a clip for feature extraction.

    Raises AllSilence when VAD finds no speech, signalling the segment
    must be excluded upstream.
    """
    cfg = cfg or PreprocessConfig()
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("preprocess requires a non-empty clip")
    rate = clip.sample_rate_hz
    original_s = len(x) / rate

    x = _band_limit(x, rate, cfg)
    x = _spectral_gate(x, cfg)

    active = _vad_frames(x, rate, cfg)
    if not active.any():
        raise AllSilence("no speech-active frames found")
    frame = int(round(cfg.vad_frame_s * rate))
    first = int(np.argmax(active))
    last = len(active) - 1 - int(np.argmax(active[::-1]))
    lo = first * frame
    hi = min((last + 1) * frame, len(x))
    trimmed = x[lo:hi]
    active_s = float(active.sum()) * frame / rate

    rms = float(np.sqrt(np.mean(trimmed ** 2)))
    target = 10.0 ** (cfg.target_rms_dbfs / 20.0)
    gain = target / max(rms, _EPS)
    peak = float(np.max(np.abs(trimmed))) * gain
    if peak > 0.999:
        gain *= 0.999 / peak
    out = trimmed * gain
    out_rms_db = 20.0 * np.log10(float(np.sqrt(np.mean(out ** 2))) + _EPS)

    return PreprocessedAudio(
        clip=AudioClip(samples=np.asarray(out, dtype=np.float32), sample_rate_hz=rate),
        original_duration_s=original_s,
        active_duration_s=active_s,
        trim_start_s=lo / rate,
        rms_dbfs=out_rms_db,
    )
