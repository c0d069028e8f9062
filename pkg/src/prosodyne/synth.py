"""Synthetic desk-scale corpus with planted score functions.

Each segment gets latent traits in [0, 1]: pitch (u_f0), harmonicity
(u_hnr), period perturbation (u_jit), lip motion (u_lip), eyebrow motion
(u_brow). Engagement is a smooth function of pitch, harmonicity, jitter
and the two facial-motion traits; vocal attractiveness depends on the
acoustic traits only. Ratings are integer 1..5 scores from five raters
with Gaussian perturbation (sigma 0.15) around the planted value.

Audio is a jittered glottal-pulse train through two vocal-tract
resonators plus band-limited noise, framed by silence so trimming and
voice-activity detection do real work. Landmarks animate a fixed
478-point template with lip/eyebrow oscillation, head drift, a
fixation/saccade gaze pattern on the iris points, and per-frame wobble.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .corpus import (
    RatingRow,
    write_feature_matrix,
    write_landmark_stream,
    write_ratings_csv,
    write_wav_pcm16,
)
from .visual import REGION_MAP

RATE = 16_000
CLIP_S = 3.0
LEAD_SILENCE_S = 0.25
FPS = 30.0
N_RATERS = 5


@dataclass(frozen=True)
class PlantedSegment:
    segment_id: str
    speaker_id: str
    video_id: str
    u_f0: float
    u_hnr: float
    u_jit: float
    u_lip: float
    u_brow: float
    engagement_true: float
    vocal_true: float
    missing_landmarks: bool
    silent_audio: bool
    n_raters: int


def engagement_score(u_f0, u_hnr, u_jit, u_lip, u_brow) -> float:
    return (2.55 + 0.9 * u_f0 * (1.0 - u_jit) + 0.75 * u_hnr * u_lip
            + 0.55 * u_brow)


def vocal_score(u_f0, u_hnr, u_jit) -> float:
    return 2.4 + 1.1 * u_hnr + 0.9 * (1.0 - u_jit) * u_f0


def _trait(base: float, rng: np.random.Generator) -> float:
    return float(np.clip(0.6 * base + 0.4 * rng.uniform(), 0.0, 1.0))


# ------------------------------------------------------------------------ audio

def _resonator_sos(freq: float, bw: float) -> list[float]:
    r = np.exp(-np.pi * bw / RATE)
    return [1.0, 0.0, 0.0, 1.0, -2.0 * r * np.cos(2.0 * np.pi * freq / RATE), r * r]


def synth_voice(seg: PlantedSegment, f1: float, f2: float,
                rng: np.random.Generator) -> np.ndarray:
    n = int(CLIP_S * RATE)
    if seg.silent_audio:
        return np.zeros(n, dtype=np.float64)
    active_s = CLIP_S - 2 * LEAD_SILENCE_S
    f0 = 100.0 + 120.0 * seg.u_f0
    jitter = 0.002 + 0.045 * seg.u_jit
    noise_amp = 0.012 + 0.30 * (1.0 - seg.u_hnr) ** 2
    shimmer = 0.01 + 0.04 * seg.u_jit

    pulses = np.zeros(int(active_s * RATE) + 1)
    t_mark = 0.01
    while t_mark < active_s - 0.01:
        i = int(round(t_mark * RATE))
        pulses[i] += 1.0 + shimmer * rng.uniform(-1.0, 1.0)
        period = (1.0 / f0) * (1.0 + jitter * rng.choice((-1.0, 1.0)))
        t_mark += period
    sos = np.array([_resonator_sos(f1, 90.0), _resonator_sos(f2, 110.0)])
    voiced = sps.sosfilt(sos, pulses)
    voiced = voiced / (np.max(np.abs(voiced)) + 1e-12)

    band = sps.butter(4, [120.0, 7000.0], btype="bandpass", fs=RATE, output="sos")
    noise = sps.sosfilt(band, rng.normal(0.0, 1.0, len(voiced)))
    noise = noise / (np.std(noise) + 1e-12)
    mix = voiced + noise_amp * 0.22 * noise

    taper = int(0.02 * RATE)
    ramp = np.linspace(0.0, 1.0, taper)
    mix[:taper] *= ramp
    mix[-taper:] *= ramp[::-1]

    out = np.zeros(n)
    lead = int(LEAD_SILENCE_S * RATE)
    out[lead:lead + len(mix)] = 0.28 * mix / (np.max(np.abs(mix)) + 1e-12)
    return out


# --------------------------------------------------------------------- landmarks

_TEMPLATE: np.ndarray | None = None


def face_template() -> np.ndarray:
    """Fixed 478-point layout with plausible geometry for mapped regions."""
    global _TEMPLATE
    if _TEMPLATE is not None:
        return _TEMPLATE
    rng = np.random.default_rng(987654321)
    pts = np.empty((478, 3))
    pts[:, 0] = rng.uniform(0.30, 0.70, 478)
    pts[:, 1] = rng.uniform(0.28, 0.76, 478)
    pts[:, 2] = rng.uniform(-0.04, 0.04, 478)

    def ellipse(indices, cx, cy, rx, ry, z=0.0):
        ang = np.linspace(0.0, 2.0 * np.pi, len(indices), endpoint=False)
        for i, idx in enumerate(indices):
            pts[idx] = [cx + rx * np.cos(ang[i]), cy + ry * np.sin(ang[i]), z]

    def arc(indices, cx, cy, rx, ry, a0, a1, z=0.0):
        ang = np.linspace(a0, a1, len(indices))
        for i, idx in enumerate(indices):
            pts[idx] = [cx + rx * np.cos(ang[i]), cy + ry * np.sin(ang[i]), z]

    arc(REGION_MAP["forehead"], 0.48, 0.40, 0.17, 0.12, np.pi * 0.15, np.pi * 0.85, 0.01)
    eyes = REGION_MAP["eyes"]
    ellipse(eyes[:16], 0.38, 0.42, 0.035, 0.016)
    ellipse(eyes[16:], 0.58, 0.42, 0.035, 0.016)
    pts[33] = [0.345, 0.42, 0.0]
    pts[133] = [0.415, 0.42, 0.0]
    pts[362] = [0.545, 0.42, 0.0]
    pts[263] = [0.615, 0.42, 0.0]
    arc(REGION_MAP["nose"], 0.48, 0.50, 0.030, 0.055, -np.pi * 0.5, np.pi * 0.5, 0.02)
    ellipse(REGION_MAP["lips"], 0.48, 0.62, 0.055, 0.027)
    cheeks = REGION_MAP["cheeks"]
    ellipse(cheeks[:10], 0.36, 0.55, 0.04, 0.05)
    ellipse(cheeks[10:], 0.60, 0.55, 0.04, 0.05)
    arc(REGION_MAP["jaw"], 0.48, 0.58, 0.17, 0.16, np.pi * 1.15, np.pi * 1.85, 0.01)
    brows = REGION_MAP["eyebrows"]
    arc(brows[:10], 0.38, 0.395, 0.045, 0.018, np.pi * 0.1, np.pi * 0.9, 0.005)
    arc(brows[10:], 0.58, 0.395, 0.045, 0.018, np.pi * 0.1, np.pi * 0.9, 0.005)
    for center, iris in (((0.38, 0.42), range(468, 473)), ((0.58, 0.42), range(473, 478))):
        ang = np.linspace(0.0, 2.0 * np.pi, 5, endpoint=False)
        for i, idx in enumerate(iris):
            pts[idx] = [center[0] + 0.008 * np.cos(ang[i]),
                        center[1] + 0.008 * np.sin(ang[i]), 0.0]
    _TEMPLATE = pts
    return pts


def synth_landmarks(seg: PlantedSegment, rng: np.random.Generator
                    ) -> list[tuple[float, np.ndarray]]:
    template = face_template()
    n_frames = int(CLIP_S * FPS)
    a_lip = 0.002 + 0.030 * seg.u_lip
    a_brow = 0.002 + 0.020 * seg.u_brow
    ph_lip = rng.uniform(0.0, 2.0 * np.pi)
    ph_brow = rng.uniform(0.0, 2.0 * np.pi)
    ph_head = rng.uniform(0.0, 2.0 * np.pi)
    lip_idx = REGION_MAP["lips"]
    brow_idx = REGION_MAP["eyebrows"]
    iris_idx = list(range(468, 478))

    # piecewise-constant gaze offsets with occasional jumps
    jump_times = [0.0]
    while jump_times[-1] < CLIP_S:
        jump_times.append(jump_times[-1] + rng.uniform(0.45, 0.95))
    offsets = [(rng.uniform(-0.011, 0.011), rng.uniform(-0.008, 0.008))
               for _ in jump_times]

    frames = []
    for k in range(n_frames):
        t = k / FPS
        pts = template.copy()
        pts[:, 0] += 0.004 * np.sin(2.0 * np.pi * 0.3 * t + ph_head)
        pts[:, 1] += 0.003 * np.sin(2.0 * np.pi * 0.22 * t + ph_head * 0.7)
        pts[lip_idx, 1] += a_lip * np.sin(2.0 * np.pi * 3.0 * t + ph_lip)
        pts[brow_idx, 1] += a_brow * np.sin(2.0 * np.pi * 1.5 * t + ph_brow)
        gi = int(np.searchsorted(np.asarray(jump_times), t, side="right") - 1)
        dx, dy = offsets[gi]
        pts[iris_idx, 0] += dx
        pts[iris_idx, 1] += dy
        pts += rng.normal(0.0, 5e-4, (478, 3))
        frames.append((t, pts))
    return frames


# ------------------------------------------------------------------------- text

def synth_text(seg: PlantedSegment, rng: np.random.Generator
               ) -> tuple[list[dict], np.ndarray]:
    spans = [(0.10, 1.10), (1.20, 2.05), (2.15, 2.90)]
    transcript = [
        {"text": f"utterance {seg.segment_id} part {i}", "start": s, "end": e}
        for i, (s, e) in enumerate(spans)
    ]
    emb = rng.normal(0.0, 1.0, (len(spans), 384))
    emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    return transcript, emb.astype(np.float32)


# ----------------------------------------------------------------------- corpus

def plan_corpus(n_speakers: int, segments_per_speaker: int,
                seed: int) -> list[PlantedSegment]:
    rng = np.random.default_rng(seed)
    segments = []
    g = 0
    for s in range(n_speakers):
        speaker = f"spk{s:03d}"
        base = {k: rng.uniform() for k in ("f0", "hnr", "jit", "lip", "brow")}
        for i in range(segments_per_speaker):
            u_f0 = _trait(base["f0"], rng)
            u_hnr = _trait(base["hnr"], rng)
            u_jit = _trait(base["jit"], rng)
            u_lip = _trait(base["lip"], rng)
            u_brow = _trait(base["brow"], rng)
            segments.append(PlantedSegment(
                segment_id=f"{speaker}_s{i:03d}",
                speaker_id=speaker,
                video_id=f"{speaker}_v{i // 10}",
                u_f0=u_f0, u_hnr=u_hnr, u_jit=u_jit, u_lip=u_lip, u_brow=u_brow,
                engagement_true=engagement_score(u_f0, u_hnr, u_jit, u_lip, u_brow),
                vocal_true=vocal_score(u_f0, u_hnr, u_jit),
                missing_landmarks=(g % 97 == 5),
                silent_audio=(g % 401 == 7),
                n_raters=2 if g % 211 == 11 else N_RATERS,
            ))
            g += 1
    return segments


def _stable_seed(seed: int, name: str) -> tuple[int, int]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return seed, int.from_bytes(digest[:8], "little")


def build_segment_files(seg: PlantedSegment, out_dir: str, seed: int) -> dict:
    """Write one segment's media files; returns its manifest entry."""
    rng = np.random.default_rng(_stable_seed(seed, seg.segment_id))
    spk_rng = np.random.default_rng(_stable_seed(seed, seg.speaker_id))
    f1 = 550.0 + 300.0 * spk_rng.uniform()
    f2 = 1300.0 + 600.0 * spk_rng.uniform()

    audio_rel = f"audio/{seg.segment_id}.wav"
    write_wav_pcm16(os.path.join(out_dir, audio_rel), synth_voice(seg, f1, f2, rng))

    entry = {
        "segment_id": seg.segment_id,
        "speaker_id": seg.speaker_id,
        "video_id": seg.video_id,
        "audio_path": audio_rel,
    }
    if not seg.missing_landmarks:
        lm_rel = f"landmarks/{seg.segment_id}.jsonl"
        write_landmark_stream(os.path.join(out_dir, lm_rel),
                              synth_landmarks(seg, rng))
        entry["landmarks_path"] = lm_rel

    transcript, emb = synth_text(seg, rng)
    tr_rel = f"text/{seg.segment_id}.json"
    emb_rel = f"text/{seg.segment_id}.emb"
    with open(os.path.join(out_dir, tr_rel), "w", encoding="utf-8") as fh:
        json.dump(transcript, fh)
    write_feature_matrix(os.path.join(out_dir, emb_rel), emb, "text-384-v1")
    entry["transcript_path"] = tr_rel
    entry["embedding_path"] = emb_rel
    return entry


def make_corpus(out_dir: str, n_speakers: int = 60, segments_per_speaker: int = 20,
                seed: int = 7) -> str:
    """Generate the full synthetic corpus; returns the manifest path."""
    for sub in ("audio", "landmarks", "text"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    segments = plan_corpus(n_speakers, segments_per_speaker, seed)

    entries = []
    ratings: list[RatingRow] = []
    rater_rng = np.random.default_rng((seed, 1))
    for seg in segments:
        entries.append(build_segment_files(seg, out_dir, seed))
        for r in range(seg.n_raters):
            e = int(np.clip(round(seg.engagement_true + rater_rng.normal(0.0, 0.15)), 1, 5))
            v = int(np.clip(round(seg.vocal_true + rater_rng.normal(0.0, 0.15)), 1, 5))
            ratings.append(RatingRow(seg.segment_id, f"r{r + 1:02d}", e, v))

    write_ratings_csv(os.path.join(out_dir, "ratings.csv"), ratings)
    manifest = {
        "corpus_id": f"synthetic-{n_speakers}x{segments_per_speaker}-seed{seed}",
        "created_at": "2026-01-01T00:00:00+00:00",
        "entries": entries,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest_path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="generate the synthetic demo corpus")
    parser.add_argument("--out", required=True)
    parser.add_argument("--speakers", type=int, default=60)
    parser.add_argument("--segments", type=int, default=20)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    path = make_corpus(args.out, args.speakers, args.segments, args.seed)
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
