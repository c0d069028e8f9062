"""Rating aggregation, reliability statistics, speaker splits, normalization,
and construction of the fused 4,374-dimension samples.

Fused layout: facial [0, 3780) | oculomotor [3780, 3787) |
acoustic [3787, 3990) | text [3990, 4374). Ground truth per outcome is
the mean of rater scores; segments need more than two ratings to count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import RatingRow
from .errors import (
    DegenerateVariance,
    LeakageError,
    TooFewSpeakers,
    UnknownSegment,
)

FUSED_DIM = 4374
MODALITY_SLICES = {
    "facial": slice(0, 3780),
    "oculomotor": slice(3780, 3787),
    "acoustic": slice(3787, 3990),
    "textual": slice(3990, 4374),
    "multimodal": slice(0, 4374),
}
MIN_RATERS = 3
SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class AggregatedRating:
    y_engagement: float
    y_vocal: float
    n_raters: int

    @property
    def included(self) -> bool:
        return self.n_raters >= MIN_RATERS


class RatingTable:
    """Per-rater scores indexed by segment."""

    def __init__(self, rows: list[RatingRow]):
        self._by_segment: dict[str, list[RatingRow]] = {}
        for r in rows:
            self._by_segment.setdefault(r.segment_id, []).append(r)

    def segments(self) -> list[str]:
        return list(self._by_segment)

    def rows_for(self, segment_id: str) -> list[RatingRow]:
        return self._by_segment.get(segment_id, [])

    def aggregate(self, segment_id: str) -> AggregatedRating:
        rows = self._by_segment.get(segment_id)
        if not rows:
            raise UnknownSegment(segment_id)
        eng = float(np.mean([r.engagement for r in rows]))
        voc = float(np.mean([r.vocal_attractiveness for r in rows]))
        return AggregatedRating(y_engagement=eng, y_vocal=voc, n_raters=len(rows))

    def complete_block(self, outcome: str) -> tuple[np.ndarray, list[str], list[str]]:
        """Largest complete raters x segments score matrix for one outcome.

        Raters = union of rater ids; segments = those rated by every one
        of them. Returns (matrix raters x segments, rater ids, segment ids).
        """
        raters = sorted({r.rater_id for rows in self._by_segment.values() for r in rows})
        rater_pos = {r: i for i, r in enumerate(raters)}
        keep_segments = []
        columns = []
        for seg in sorted(self._by_segment):
            rows = self._by_segment[seg]
            if {r.rater_id for r in rows} >= set(raters):
                col = np.zeros(len(raters))
                for r in rows:
                    if r.rater_id in rater_pos:
                        col[rater_pos[r.rater_id]] = getattr(r, outcome)
                keep_segments.append(seg)
                columns.append(col)
        if not columns:
            return np.zeros((len(raters), 0)), raters, []
        return np.stack(columns, axis=1), raters, keep_segments


def aggregate_ratings(table: RatingTable, segment_id: str) -> AggregatedRating:
    return table.aggregate(segment_id)


# ------------------------------------------------------------------ reliability

def cronbach_alpha(matrix: np.ndarray) -> float:
    """Internal consistency over a raters x items score matrix.

    alpha = k/(k-1) * (1 - sum(var(item_i)) / var(row totals)), sample
    variances (n-1 denominator).
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ValueError(f"need >= 2 raters and >= 2 items, got {m.shape}")
    k = m.shape[1]
    item_vars = m.var(axis=0, ddof=1)
    total_var = m.sum(axis=1).var(ddof=1)
    if total_var <= 0.0:
        raise DegenerateVariance("row-total variance is zero")
    return float(k / (k - 1) * (1.0 - item_vars.sum() / total_var))


def icc_1k(matrix: np.ndarray) -> float:
    """One-way ANOVA intraclass correlation over a targets x raters matrix.

    ICC(1,k) = (MSB - MSW) / MSB.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ValueError(f"need >= 2 targets and k >= 2 raters, got {m.shape}")
    n, k = m.shape
    target_means = m.mean(axis=1)
    grand = m.mean()
    ssb = k * np.sum((target_means - grand) ** 2)
    ssw = np.sum((m - target_means[:, None]) ** 2)
    msb = ssb / (n - 1)
    msw = ssw / (n * (k - 1))
    if msb <= 0.0:
        raise DegenerateVariance("between-target mean square is zero")
    return float((msb - msw) / msb)


# ----------------------------------------------------------------- speaker split

@dataclass(frozen=True)
class SplitAssignment:
    assignment: dict[str, str]  # speaker_id -> split name
    seed: int
    achieved_fractions: dict[str, float]

    def split_of(self, speaker_id: str) -> str:
        return self.assignment[speaker_id]


def speaker_split(segments: list[tuple[str, str, float]],
                  ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
                  seed: int = 0) -> SplitAssignment:
    """Stratified speaker-independent split.

    ``segments`` rows are (segment_id, speaker_id, y_engagement). Speakers
    are bucketed into quartile strata of their mean engagement, shuffled
    per stratum by the seed, and greedily assigned to the split with the
    largest relative segment-count deficit. Every speaker lands in exactly
    one split.
    """
    speakers: dict[str, list[float]] = {}
    counts: dict[str, int] = {}
    for _seg, spk, y in segments:
        speakers.setdefault(spk, []).append(y)
        counts[spk] = counts.get(spk, 0) + 1
    if len(speakers) < 3:
        raise TooFewSpeakers(f"{len(speakers)} speakers, need >= 3")

    ids = sorted(speakers)
    means = np.asarray([np.mean(speakers[s]) for s in ids])
    qs = np.quantile(means, [0.25, 0.5, 0.75])
    strata: list[list[str]] = [[], [], [], []]
    for s, m in zip(ids, means):
        strata[int(np.searchsorted(qs, m, side="right"))].append(s)

    rng = np.random.default_rng(seed)
    total = sum(counts.values())
    targets = {name: ratio * total for name, ratio in zip(SPLIT_NAMES, ratios)}
    assigned = {name: 0 for name in SPLIT_NAMES}
    assignment: dict[str, str] = {}
    for stratum in strata:
        order = list(stratum)
        rng.shuffle(order)
        for spk in order:
            best_name = None
            best_deficit = -np.inf
            for name in SPLIT_NAMES:
                if targets[name] <= 0.0:
                    continue
                deficit = (targets[name] - assigned[name]) / targets[name]
                if deficit > best_deficit:
                    best_deficit = deficit
                    best_name = name
            assignment[spk] = best_name
            assigned[best_name] += counts[spk]

    fractions = {name: assigned[name] / total for name in SPLIT_NAMES}
    return SplitAssignment(assignment=assignment, seed=seed,
                           achieved_fractions=fractions)


# ------------------------------------------------------------------ normalization

@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray            # degenerate dims replaced by 1
    layout_id: str
    n_train_rows: int
    degenerate: np.ndarray = field(default=None)  # boolean mask of replaced dims


def fit_normalizer(rows: np.ndarray, speaker_ids: list[str],
                   split: SplitAssignment, layout_id: str) -> NormStats:
    """Fit per-dimension z-normalization on training rows only.

    Raises LeakageError when any row belongs to a non-train speaker.
    """
    m = np.asarray(rows, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError(f"expected non-empty 2-D matrix, got {m.shape}")
    if len(speaker_ids) != m.shape[0]:
        raise ValueError("one speaker id per row required")
    for spk in speaker_ids:
        if split.split_of(spk) != "train":
            raise LeakageError(f"row of speaker {spk!r} is in split "
                               f"{split.split_of(spk)!r}, not train")
    mean = m.mean(axis=0)
    std = m.std(axis=0, ddof=1) if m.shape[0] > 1 else np.zeros(m.shape[1])
    degenerate = std < 1e-12
    std = np.where(degenerate, 1.0, std)
    return NormStats(mean=mean, std=std, layout_id=layout_id,
                     n_train_rows=m.shape[0], degenerate=degenerate)


def apply_normalizer(stats: NormStats, rows: np.ndarray) -> np.ndarray:
    m = np.asarray(rows, dtype=np.float64)
    return (m - stats.mean) / stats.std


def unapply_normalizer(stats: NormStats, rows: np.ndarray) -> np.ndarray:
    m = np.asarray(rows, dtype=np.float64)
    return m * stats.std + stats.mean


# ------------------------------------------------------------------------ fusion

@dataclass(frozen=True)
class FusedSample:
    segment_id: str
    speaker_id: str
    x: np.ndarray  # length 4374
    y_engagement: float
    y_vocal: float


def fuse(segment_id: str, speaker_id: str, facial: np.ndarray,
         oculomotor: np.ndarray, acoustic: np.ndarray, text: np.ndarray,
         y_engagement: float, y_vocal: float) -> FusedSample:
    """Concatenate normalized modality vectors in the fixed fused order."""
    parts = {"facial": facial, "oculomotor": oculomotor,
             "acoustic": acoustic, "textual": text}
    x = np.zeros(FUSED_DIM)
    for name, vec in parts.items():
        sl = MODALITY_SLICES[name]
        v = np.asarray(vec, dtype=np.float64)
        expected = sl.stop - sl.start
        if v.shape != (expected,):
            raise ValueError(f"{name} vector must have length {expected}, got {v.shape}")
        x[sl] = v
    return FusedSample(segment_id=segment_id, speaker_id=speaker_id, x=x,
                       y_engagement=y_engagement, y_vocal=y_vocal)
