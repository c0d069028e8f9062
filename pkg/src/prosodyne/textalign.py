"""Alignment of externally produced transcripts and sentence embeddings.

Transcripts arrive as JSON lists of ``{"text", "start", "end"}`` whose
order matches the rows of a "text-384-v1" embedding matrix. Each 2-second
analysis window receives the mean embedding of overlapping segments, the
nearest segment's embedding when nothing overlaps, or a flagged zero
vector when the transcript is empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import read_feature_matrix
from .errors import BadTiming, CountMismatch, ParseError

TEXT_DIM = 384


@dataclass(frozen=True)
class TranscriptSegment:
    text: str
    start: float
    end: float
    embedding_row: int


@dataclass(frozen=True)
class Transcript:
    segments: list[TranscriptSegment]  # sorted by start time
    embeddings: np.ndarray             # (n_segments, 384) in original file order


@dataclass(frozen=True)
class WindowEmbedding:
    values: np.ndarray  # length 384
    no_text: bool


def load_transcript(path: str, embedding_path: str) -> Transcript:
    """Load transcript JSON plus its row-aligned embedding matrix."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read transcript: {exc}", path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}", path=path) from exc
    if not isinstance(doc, list):
        raise ParseError("transcript root must be a list", path=path)

    embeddings = read_feature_matrix(embedding_path, expected_layout="text-384-v1")
    if len(doc) != embeddings.shape[0]:
        raise CountMismatch(
            f"{len(doc)} transcript segments vs {embeddings.shape[0]} embedding rows"
        )

    segments: list[TranscriptSegment] = []
    for i, raw in enumerate(doc):
        if not isinstance(raw, dict) or not {"text", "start", "end"} <= raw.keys():
            raise ParseError(f"segment {i} must carry text/start/end", path=path)
        start = float(raw["start"])
        end = float(raw["end"])
        if not (np.isfinite(start) and np.isfinite(end)) or start >= end:
            raise BadTiming(f"segment {i}: start={start} end={end}")
        segments.append(TranscriptSegment(text=str(raw["text"]), start=start,
                                          end=end, embedding_row=i))
    segments.sort(key=lambda s: (s.start, s.embedding_row))
    return Transcript(segments=segments, embeddings=embeddings)


def window_embedding(transcript: Transcript, window_start_s: float,
                     window_end_s: float) -> WindowEmbedding:
    """Embedding for one window: mean of overlaps, else nearest, else zero."""
    if not transcript.segments:
        return WindowEmbedding(values=np.zeros(TEXT_DIM), no_text=True)

    overlapping = [
        s for s in transcript.segments
        if s.start < window_end_s and s.end > window_start_s
    ]
    if overlapping:
        # fixed row order keeps the pairwise mean bit-stable under input permutation
        rows = sorted(s.embedding_row for s in overlapping)
        vec = transcript.embeddings[rows].astype(np.float64)
        return WindowEmbedding(values=np.sum(vec, axis=0) / len(rows), no_text=False)

    def distance(s: TranscriptSegment) -> float:
        if s.end <= window_start_s:
            return window_start_s - s.end
        return s.start - window_end_s

    best = min(transcript.segments, key=lambda s: (distance(s), s.start, s.embedding_row))
    return WindowEmbedding(
        values=transcript.embeddings[best.embedding_row].astype(np.float64),
        no_text=False,
    )
