"""Typed error hierarchy shared by all pipeline stages.

Every recoverable failure raised by this package derives from
:class:`ProsodyneError` so the CLI can map domain errors to a single
exit code while preserving the specific failure kind for callers.
"""

from __future__ import annotations


class ProsodyneError(Exception):
    """Base class for all domain errors raised by this package."""


# ---------------------------------------------------------------- corpus I/O

class ParseError(ProsodyneError):
    """Input file is malformed (bad JSON, schema violation, bad CSV row)."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f" [{path}"
            if line is not None:
                loc += f":{line}"
            loc += "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class DanglingPath(ProsodyneError):
    """A manifest entry references a file that does not exist."""

    def __init__(self, segment_id: str, path: str):
        super().__init__(f"segment {segment_id!r} references missing file: {path}")
        self.segment_id = segment_id
        self.path = path


class DuplicateSegment(ProsodyneError):
    def __init__(self, segment_id: str):
        super().__init__(f"duplicate segment_id: {segment_id!r}")
        self.segment_id = segment_id


class UnsupportedCodec(ProsodyneError):
    """WAV container uses a codec other than PCM16 / IEEE float."""


class EmptyAudio(ProsodyneError):
    """Decoded audio holds zero samples."""


class BadFrame(ProsodyneError):
    """Landmark stream frame has wrong point count or non-finite values."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


class NonMonotonicTime(ProsodyneError):
    """Landmark frame timestamps are not strictly increasing."""


class LayoutMismatch(ProsodyneError):
    """Feature matrix file carries a different layout than expected."""

    def __init__(self, expected: str, found: str):
        super().__init__(f"expected layout {expected!r}, file holds {found!r}")
        self.expected = expected
        self.found = found


# ----------------------------------------------------------------- audio DSP

class AllSilence(ProsodyneError):
    """Voice-activity detection found no speech in the clip."""


class ClipTooShort(ProsodyneError):
    """Clip shorter than the 2-second analysis window."""


# ------------------------------------------------------------ visual features

class InsufficientFrames(ProsodyneError):
    """Landmark stream does not cover the requested 2-second window."""


class DegenerateEye(ProsodyneError):
    """Eye-corner landmarks are coincident; gaze undefined for the frame."""


# ------------------------------------------------------------------ text align

class CountMismatch(ProsodyneError):
    """Transcript segment count differs from embedding matrix row count."""


class BadTiming(ProsodyneError):
    """Transcript segment has start >= end."""


# --------------------------------------------------------------- dataset fusion

class UnknownSegment(ProsodyneError):
    def __init__(self, segment_id: str):
        super().__init__(f"segment {segment_id!r} not present in rating table")
        self.segment_id = segment_id


class DegenerateVariance(ProsodyneError):
    """Reliability statistic undefined because total variance is zero."""


class TooFewSpeakers(ProsodyneError):
    """Speaker-independent split needs at least three speakers."""


class LeakageError(ProsodyneError):
    """A non-training row reached normalizer fitting."""


class MissingModality(ProsodyneError):
    def __init__(self, segment_id: str, modality: str):
        super().__init__(f"segment {segment_id!r} lacks modality {modality!r}")
        self.segment_id = segment_id
        self.modality = modality


# --------------------------------------------------------------------- gbtree

class EmptyData(ProsodyneError):
    """Training matrix has no rows or no columns."""


class DimensionMismatch(ProsodyneError):
    """Input vector width differs from the model's feature count."""


class VersionMismatch(ProsodyneError):
    def __init__(self, found: str):
        super().__init__(f"unsupported model format version: {found!r}")
        self.found = found


class CorruptModel(ProsodyneError):
    """Model file is truncated or structurally invalid."""


# ------------------------------------------------------------------- hyperopt

class TooFewRows(ProsodyneError):
    """Cross-validation needs at least k rows."""


class ZeroBudget(ProsodyneError):
    """Optimization budget must be at least one trial."""


# ---------------------------------------------------------------- eval/report

class DegenerateTarget(ProsodyneError):
    """Target vector has zero variance; R^2 undefined."""


class DegenerateInput(ProsodyneError):
    """Correlation input is constant or too short."""


class UnknownSubset(ProsodyneError):
    def __init__(self, name: str):
        super().__init__(f"unknown ablation subset: {name!r}")
        self.name = name


class AlignmentError(ProsodyneError):
    """Prediction sets do not cover the same segment ids."""
