"""On-disk formats: manifest, WAV decode, landmark streams, feature matrices, ratings.

All readers are pure functions; writers require exclusive access to their
output path. Every malformed input maps to a typed error from
:mod:`prosodyne.errors`, never a bare exception.

Feature matrices use a self-describing container: 4-byte magic ``PSYN``,
little-endian uint32 header length, UTF-8 JSON header
(``{"dtype": "<f4", "shape": [rows, cols], "layout_id": ..., "byte_order": "little"}``),
then the raw row-major float32 payload.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np
from scipy.io import wavfile

from .errors import (
    BadFrame,
    DanglingPath,
    DuplicateSegment,
    EmptyAudio,
    LayoutMismatch,
    NonMonotonicTime,
    ParseError,
    UnsupportedCodec,
)

TARGET_RATE_HZ = 16_000

# Registered feature-matrix layouts: layout_id -> column count.
LAYOUTS = {
    "acoustic-203-v1": 203,
    "facial-3780-v1": 3780,
    "oculo-7-v1": 7,
    "text-384-v1": 384,
    "fused-4374-v1": 4374,
}

_MAGIC = b"PSYN"


@dataclass(frozen=True)
class AudioClip:
    """Mono float32 samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = TARGET_RATE_HZ

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class LandmarkFrame:
    """One face-mesh observation: timestamp plus 478 (x, y, z) points."""

    t: float
    pts: np.ndarray  # shape (478, 3), float64

    N_POINTS = 478


@dataclass(frozen=True)
class SegmentEntry:
    segment_id: str
    speaker_id: str
    video_id: str
    audio_path: str
    landmarks_path: str | None = None
    embedding_path: str | None = None
    transcript_path: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    corpus_id: str
    created_at: str
    entries: list[SegmentEntry] = field(default_factory=list)

    def by_segment(self) -> dict[str, SegmentEntry]:
        return {e.segment_id: e for e in self.entries}


@dataclass(frozen=True)
class RatingRow:
    segment_id: str
    rater_id: str
    engagement: int
    vocal_attractiveness: int


# --------------------------------------------------------------------- manifest

def load_manifest(path: str) -> CorpusManifest:
    """Load and fully validate a corpus manifest JSON file.

    Relative file paths inside the manifest resolve against the manifest's
    own directory. Raises ParseError, DuplicateSegment or DanglingPath.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read manifest: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}", path=path) from exc

    if not isinstance(doc, dict):
        raise ParseError("manifest root must be a JSON object", path=path)
    corpus_id = doc.get("corpus_id")
    created_at = doc.get("created_at")
    raw_entries = doc.get("entries")
    if not isinstance(corpus_id, str) or not corpus_id:
        raise ParseError("missing or empty corpus_id", path=path)
    if not isinstance(created_at, str):
        raise ParseError("missing created_at", path=path)
    try:
        datetime.fromisoformat(created_at)
    except ValueError as exc:
        raise ParseError(f"created_at is not ISO-8601: {created_at!r}", path=path) from exc
    if not isinstance(raw_entries, list):
        raise ParseError("entries must be a list", path=path)

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p: str) -> str:
        return p if os.path.isabs(p) else os.path.join(base, p)

    entries: list[SegmentEntry] = []
    seen: set[str] = set()
    video_speaker: dict[str, str] = {}
    for i, raw in enumerate(raw_entries):
        if not isinstance(raw, dict):
            raise ParseError(f"entry {i} is not an object", path=path)
        try:
            segment_id = raw["segment_id"]
            speaker_id = raw["speaker_id"]
            video_id = raw["video_id"]
            audio_path = raw["audio_path"]
        except KeyError as exc:
            raise ParseError(f"entry {i} missing field {exc}", path=path) from exc
        if not isinstance(segment_id, str) or not segment_id:
            raise ParseError(f"entry {i} has empty segment_id", path=path)
        if not isinstance(speaker_id, str) or not speaker_id:
            raise ParseError(f"entry {segment_id!r} has empty speaker_id", path=path)
        if segment_id in seen:
            raise DuplicateSegment(segment_id)
        seen.add(segment_id)
        prev = video_speaker.setdefault(video_id, speaker_id)
        if prev != speaker_id:
            raise ParseError(
                f"video {video_id!r} maps to speakers {prev!r} and {speaker_id!r}",
                path=path,
            )
        entry = SegmentEntry(
            segment_id=segment_id,
            speaker_id=speaker_id,
            video_id=video_id,
            audio_path=resolve(audio_path),
            landmarks_path=resolve(raw["landmarks_path"]) if raw.get("landmarks_path") else None,
            embedding_path=resolve(raw["embedding_path"]) if raw.get("embedding_path") else None,
            transcript_path=resolve(raw["transcript_path"]) if raw.get("transcript_path") else None,
        )
        for p in (entry.audio_path, entry.landmarks_path, entry.embedding_path,
                  entry.transcript_path):
            if p is not None and not os.path.isfile(p):
                raise DanglingPath(segment_id, p)
        entries.append(entry)

    return CorpusManifest(corpus_id=corpus_id, created_at=created_at, entries=entries)


# ------------------------------------------------------------------------- WAV

def read_wav(path: str) -> AudioClip:
    """Decode a RIFF/WAVE file to mono float32 at 16 kHz.

    PCM16 scales by 1/32768; IEEE-float passes through. Multi-channel
    input is averaged. Non-16 kHz input is resampled with a 64-tap
    Kaiser-windowed sinc (beta = 8.6).
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:  # scipy raises ValueError on exotic codecs
        raise UnsupportedCodec(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise UnsupportedCodec(f"{path}: unsupported sample format {data.dtype}")

    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise EmptyAudio(path)
    if int(rate) != TARGET_RATE_HZ:
        x = _resample_sinc(x, int(rate), TARGET_RATE_HZ)
        if x.size == 0:
            raise EmptyAudio(path)
    return AudioClip(samples=np.asarray(x, dtype=np.float32), sample_rate_hz=TARGET_RATE_HZ)


def write_wav_pcm16(path: str, samples: np.ndarray, rate: int = TARGET_RATE_HZ) -> None:
    """Write mono float samples in [-1, 1] as PCM16."""
    q = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32767.0), -32768, 32767)
    wavfile.write(path, rate, q.astype(np.int16))


_KAISER_BETA = 8.6
_TAPS = 64
_HALF = _TAPS // 2  # kernel support is +/- 32 input samples


def _kaiser(u: np.ndarray) -> np.ndarray:
    inside = np.clip(1.0 - u * u, 0.0, None)
    return np.i0(_KAISER_BETA * np.sqrt(inside)) / np.i0(_KAISER_BETA)


def _resample_sinc(x: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Arbitrary-ratio windowed-sinc resampling, kernel-sum normalized."""
    n_in = len(x)
    n_out = int(round(n_in * rate_out / rate_in))
    if n_out <= 0:
        return np.zeros(0, dtype=np.float64)
    ratio = rate_out / rate_in
    cutoff = min(1.0, ratio)  # relative to input Nyquist
    padded = np.concatenate([np.zeros(_HALF), x, np.zeros(_HALF + 1)])
    out = np.empty(n_out, dtype=np.float64)
    offsets = np.arange(-_HALF + 1, _HALF + 1, dtype=np.float64)  # 64 taps
    block = 65536
    for start in range(0, n_out, block):
        m = np.arange(start, min(start + block, n_out), dtype=np.float64)
        pos = m * rate_in / rate_out
        base = np.floor(pos)
        frac = pos - base
        dx = offsets[None, :] - frac[:, None]  # tap position minus center
        kern = cutoff * np.sinc(cutoff * dx) * _kaiser(dx / _HALF)
        kern /= kern.sum(axis=1, keepdims=True)
        idx = (base[:, None] + offsets[None, :]).astype(np.int64) + _HALF
        out[start:start + len(m)] = np.sum(padded[idx] * kern, axis=1)
    return np.clip(out, -1.0, 1.0)


# -------------------------------------------------------------- landmark stream

def read_landmark_stream(path: str) -> list[LandmarkFrame]:
    """Parse a JSON-Lines landmark stream.

    Each line holds ``{"t": seconds, "pts": [[x, y, z] * 478]}``. Frames
    must arrive in strictly increasing time order; every frame must carry
    exactly 478 finite points.
    """
    frames: list[LandmarkFrame] = []
    prev_t = -math.inf
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BadFrame(f"malformed JSON: {exc}", line=lineno) from exc
            if not isinstance(doc, dict) or "t" not in doc or "pts" not in doc:
                raise BadFrame("frame must be an object with 't' and 'pts'", line=lineno)
            try:
                pts = np.asarray(doc["pts"], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise BadFrame(f"points are not numeric: {exc}", line=lineno) from exc
            if pts.shape != (LandmarkFrame.N_POINTS, 3):
                raise BadFrame(
                    f"expected {LandmarkFrame.N_POINTS}x3 points, got {pts.shape}",
                    line=lineno,
                )
            if not np.all(np.isfinite(pts)):
                raise BadFrame("non-finite landmark coordinate", line=lineno)
            t = doc["t"]
            if not isinstance(t, (int, float)) or not math.isfinite(t):
                raise BadFrame("non-finite timestamp", line=lineno)
            if t <= prev_t:
                raise NonMonotonicTime(
                    f"timestamp {t} at line {lineno} does not increase past {prev_t}"
                )
            prev_t = t
            frames.append(LandmarkFrame(t=float(t), pts=pts))
    return frames


def write_landmark_stream(path: str, frames: list[tuple[float, np.ndarray]],
                          decimals: int = 4) -> None:
    """Write frames as JSON-Lines; coordinates rounded to keep files compact."""
    with open(path, "w", encoding="utf-8") as fh:
        for t, pts in frames:
            rounded = np.round(np.asarray(pts, dtype=np.float64), decimals)
            fh.write(json.dumps({"t": round(float(t), 6), "pts": rounded.tolist()},
                                separators=(",", ":")))
            fh.write("\n")


# -------------------------------------------------------------- feature matrices

def write_feature_matrix(path: str, matrix: np.ndarray, layout_id: str) -> None:
    """Persist a float32 matrix under a registered layout id."""
    if layout_id not in LAYOUTS:
        raise ParseError(f"unregistered layout_id: {layout_id!r}")
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2:
        raise ParseError(f"matrix must be 2-D, got shape {m.shape}")
    if m.shape[1] != LAYOUTS[layout_id]:
        raise ParseError(
            f"layout {layout_id!r} expects {LAYOUTS[layout_id]} columns, got {m.shape[1]}"
        )
    if not np.all(np.isfinite(m)):
        raise ParseError("matrix contains non-finite values")
    header = json.dumps(
        {"dtype": "<f4", "shape": [int(m.shape[0]), int(m.shape[1])],
         "layout_id": layout_id, "byte_order": "little"},
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(m.astype("<f4").tobytes(order="C"))


def read_feature_matrix(path: str, expected_layout: str | None = None) -> np.ndarray:
    """Read a feature matrix; optionally enforce its layout id."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise ParseError("not a feature matrix file (bad magic)", path=path)
    hlen = int.from_bytes(blob[4:8], "little")
    if len(blob) < 8 + hlen:
        raise ParseError("truncated header", path=path)
    try:
        header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"malformed header: {exc}", path=path) from exc
    layout_id = header.get("layout_id")
    shape = header.get("shape")
    if header.get("dtype") != "<f4" or header.get("byte_order") != "little":
        raise ParseError(f"unsupported dtype/byte order in {header}", path=path)
    if (not isinstance(shape, list) or len(shape) != 2
            or not all(isinstance(v, int) and v >= 0 for v in shape)):
        raise ParseError(f"bad shape in header: {shape}", path=path)
    if expected_layout is not None and layout_id != expected_layout:
        raise LayoutMismatch(expected=expected_layout, found=str(layout_id))
    rows, cols = shape
    payload = blob[8 + hlen:]
    if len(payload) != rows * cols * 4:
        raise ParseError(
            f"payload holds {len(payload)} bytes, expected {rows * cols * 4}", path=path
        )
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


# --------------------------------------------------------------------- ratings

_RATING_COLUMNS = ["segment_id", "rater_id", "engagement", "vocal_attractiveness"]


def read_ratings_csv(path: str) -> list[RatingRow]:
    """Read the per-rater scores table. Scores are integers in 1..5."""
    rows: list[RatingRow] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("ratings CSV is empty (header row required)", path=path)
        if [h.strip() for h in header] != _RATING_COLUMNS:
            raise ParseError(
                f"expected header {_RATING_COLUMNS}, got {header}", path=path, line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, got {len(row)}", path=path, line=lineno)
            segment_id, rater_id = row[0].strip(), row[1].strip()
            if not segment_id or not rater_id:
                raise ParseError("empty segment_id or rater_id", path=path, line=lineno)
            try:
                eng = int(row[2])
                voc = int(row[3])
            except ValueError as exc:
                raise ParseError(f"non-integer score: {exc}", path=path, line=lineno) from exc
            if not (1 <= eng <= 5 and 1 <= voc <= 5):
                raise ParseError(f"score outside 1..5: {row[2]},{row[3]}", path=path, line=lineno)
            key = (segment_id, rater_id)
            if key in seen:
                raise ParseError(f"duplicate rating for {key}", path=path, line=lineno)
            seen.add(key)
            rows.append(RatingRow(segment_id, rater_id, eng, voc))
    return rows


def write_ratings_csv(path: str, rows: list[RatingRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RATING_COLUMNS)
        for r in rows:
            writer.writerow([r.segment_id, r.rater_id, r.engagement, r.vocal_attractiveness])
