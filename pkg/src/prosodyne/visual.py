"""Facial-landmark geometry and oculomotor dynamics.

Converts 478-point landmark streams into the 3,780-dimension facial
segment vector (60 frames x 63 region descriptors) and the 7-dimension
oculomotor vector (fixation/saccade statistics from iris-based gaze).

The region map is a fixed, versioned assignment of canonical face-mesh
topology indices to seven anatomical regions. Its version string travels
in every output sidecar so downstream consumers can detect drift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LandmarkFrame
from .errors import InsufficientFrames

REGION_MAP_VERSION = "region-map-v1"

# Ordered landmark index lists per region (canonical 478-point topology).
# Order matters: consecutive-pair distances and triplet angles follow it.
REGION_MAP: dict[str, list[int]] = {
    "forehead": [21, 54, 103, 67, 109, 10, 338, 297, 332, 284, 251, 9, 151, 8],
    "eyes": [33, 7, 163, 144, 145, 153, 154, 155, 133, 173, 157, 158, 159, 160,
             161, 246, 362, 382, 381, 380, 374, 373, 390, 249, 263, 466, 388,
             387, 386, 385, 384, 398],
    "nose": [168, 6, 197, 195, 5, 4, 1, 2, 98, 97, 326, 327, 45, 275],
    "lips": [61, 146, 91, 181, 84, 17, 314, 405, 321, 375, 291, 409, 270, 269,
             267, 0, 37, 39, 40, 185],
    "cheeks": [50, 101, 118, 117, 123, 147, 187, 205, 36, 142, 280, 330, 347,
               346, 352, 376, 411, 425, 266, 371],
    "jaw": [132, 58, 172, 136, 150, 149, 176, 148, 152, 377, 400, 378, 365,
            397, 288, 361],
    "eyebrows": [70, 63, 105, 66, 107, 55, 65, 52, 53, 46, 336, 296, 334, 293,
                 300, 285, 295, 282, 283, 276],
}
REGION_ORDER = ["forehead", "eyes", "nose", "lips", "cheeks", "jaw", "eyebrows"]

DESCRIPTORS_PER_REGION = 9
FRAME_FEATURE_DIM = len(REGION_ORDER) * DESCRIPTORS_PER_REGION  # 63
SEGMENT_FRAMES = 60
SEGMENT_FPS = 30.0
FACIAL_DIM = SEGMENT_FRAMES * FRAME_FEATURE_DIM  # 3780

# Eye-corner and iris landmark indices (right, left).
_EYE_CORNERS = ((33, 133), (362, 263))
_IRIS = (tuple(range(468, 473)), tuple(range(473, 478)))

FIXATION_DISPERSION = 0.08
FIXATION_MIN_DURATION_S = 0.100
OCULOMOTOR_DIM = 7


def frame_features(frame: LandmarkFrame, prev: LandmarkFrame | None,
                   region_map: dict[str, list[int]] | None = None) -> np.ndarray:
    """63 per-frame descriptors: 9 per region in REGION_ORDER.

    Per region: centroid (x, y, z); std of point distance to centroid;
    mean/std of consecutive-pair distances; mean/std of triplet angles at
    the middle point (radians, 0 when degenerate); mean per-landmark
    displacement magnitude against ``prev`` (0 when prev is None).
    """
    region_map = region_map or REGION_MAP
    out = np.zeros(FRAME_FEATURE_DIM)
    for r, name in enumerate(REGION_ORDER):
        idx = region_map[name]
        pts = frame.pts[idx]
        base = r * DESCRIPTORS_PER_REGION
        centroid = pts.mean(axis=0)
        out[base:base + 3] = centroid
        out[base + 3] = np.std(np.linalg.norm(pts - centroid, axis=1))
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        out[base + 4] = seg.mean()
        out[base + 5] = seg.std()
        angles = _triplet_angles(pts)
        out[base + 6] = angles.mean()
        out[base + 7] = angles.std()
        if prev is not None:
            disp = np.linalg.norm(pts - prev.pts[idx], axis=1)
            out[base + 8] = disp.mean()
    return out


def _triplet_angles(pts: np.ndarray) -> np.ndarray:
    """Angle at the middle point of each consecutive index triplet."""
    a = pts[:-2] - pts[1:-1]
    b = pts[2:] - pts[1:-1]
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    dot = np.sum(a * b, axis=1)
    angles = np.arctan2(cross, dot)
    degenerate = (np.linalg.norm(a, axis=1) < 1e-12) | (np.linalg.norm(b, axis=1) < 1e-12)
    angles[degenerate] = 0.0
    return angles


def resample_to_grid(frames: list[LandmarkFrame], window_start_s: float
                     ) -> list[int]:
    """Nearest-frame source index per 30 fps grid slot over the 2 s window.

    The stream must cover the grid span (59/30 s) up to half a grid step
    of slack on each side; ties between equally distant frames go to the
    earlier frame.
    """
    if not frames:
        raise InsufficientFrames("empty landmark stream")
    grid = window_start_s + np.arange(SEGMENT_FRAMES) / SEGMENT_FPS
    slack = 0.5 / SEGMENT_FPS
    if frames[0].t > grid[0] + slack or frames[-1].t < grid[-1] - slack:
        raise InsufficientFrames(
            f"stream covers [{frames[0].t:.3f}, {frames[-1].t:.3f}] s, "
            f"grid needs [{grid[0]:.3f}, {grid[-1]:.3f}] s"
        )
    times = np.asarray([f.t for f in frames])
    pos = np.searchsorted(times, grid)
    chosen = []
    for g, p in zip(grid, pos):
        lo = max(p - 1, 0)
        hi = min(p, len(times) - 1)
        chosen.append(lo if abs(times[lo] - g) <= abs(times[hi] - g) else hi)
    return chosen


def segment_vector(frames: list[LandmarkFrame], window_start_s: float,
                   region_map: dict[str, list[int]] | None = None) -> np.ndarray:
    """3,780-dimension frame-major facial vector for one 2-second window."""
    chosen = resample_to_grid(frames, window_start_s)
    out = np.zeros(FACIAL_DIM)
    prev: LandmarkFrame | None = None
    for k, src in enumerate(chosen):
        frame = frames[src]
        out[k * FRAME_FEATURE_DIM:(k + 1) * FRAME_FEATURE_DIM] = frame_features(
            frame, prev, region_map
        )
        prev = frame
    return out


# ------------------------------------------------------------------ oculomotor

@dataclass(frozen=True)
class GazeSample:
    t: float
    gx: float
    gy: float


@dataclass(frozen=True)
class GazeSeries:
    samples: list[GazeSample]
    skipped_frames: int  # frames dropped for degenerate eye geometry


@dataclass(frozen=True)
class GazeEvent:
    kind: str  # "fixation" | "saccade"
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


def gaze_series(frames: list[LandmarkFrame]) -> GazeSeries:
    """Iris-center offset in the eye-corner frame, averaged over both eyes.

    Frames where either eye's corner distance collapses below 1e-6 are
    skipped and counted, not raised.
    """
    samples: list[GazeSample] = []
    skipped = 0
    for frame in frames:
        offsets = []
        ok = True
        for (c1, c2), iris_idx in zip(_EYE_CORNERS, _IRIS):
            p1 = frame.pts[c1, :2]
            p2 = frame.pts[c2, :2]
            width = float(np.linalg.norm(p1 - p2))
            if width < 1e-6:
                ok = False
                break
            mid = 0.5 * (p1 + p2)
            iris = frame.pts[list(iris_idx), :2].mean(axis=0)
            offsets.append((iris - mid) / width)
        if not ok:
            skipped += 1
            continue
        g = np.mean(offsets, axis=0)
        samples.append(GazeSample(t=frame.t, gx=float(g[0]), gy=float(g[1])))
    return GazeSeries(samples=samples, skipped_frames=skipped)


def _dispersion(gx: np.ndarray, gy: np.ndarray, i: int, j: int) -> float:
    seg_x = gx[i:j + 1]
    seg_y = gy[i:j + 1]
    return float(seg_x.max() - seg_x.min() + seg_y.max() - seg_y.min())


def detect_fixations(gaze: list[GazeSample]) -> list[GazeEvent]:
    """Dispersion-threshold (I-DT) segmentation; events tile the timeline."""
    if len(gaze) < 2:
        raise ValueError("detect_fixations requires at least 2 samples")
    t = np.asarray([s.t for s in gaze])
    gx = np.asarray([s.gx for s in gaze])
    gy = np.asarray([s.gy for s in gaze])
    n = len(gaze)
    fixations: list[tuple[int, int]] = []
    i = 0
    while i < n:
        j = i
        while j < n and t[j] - t[i] < FIXATION_MIN_DURATION_S - 1e-9:
            j += 1
        if j >= n:
            break
        if _dispersion(gx, gy, i, j) <= FIXATION_DISPERSION:
            while j + 1 < n and _dispersion(gx, gy, i, j + 1) <= FIXATION_DISPERSION:
                j += 1
            fixations.append((i, j))
            i = j + 1
        else:
            i += 1

    events: list[GazeEvent] = []
    cursor = t[0]
    for i, j in fixations:
        if t[i] > cursor:
            events.append(GazeEvent("saccade", float(cursor), float(t[i])))
        events.append(GazeEvent("fixation", float(t[i]), float(t[j])))
        cursor = t[j]
    if cursor < t[-1]:
        events.append(GazeEvent("saccade", float(cursor), float(t[-1])))
    return events


def oculomotor_vector(events: list[GazeEvent], gaze: list[GazeSample]) -> np.ndarray:
    """Seven aggregate gaze statistics for one segment.

    Layout: mean_fixation_duration_s, fixation_count, saccade_count,
    mean_gaze_step, std_gaze_step, mean_dispersion, std_dispersion.
    """
    t = np.asarray([s.t for s in gaze])
    gx = np.asarray([s.gx for s in gaze])
    gy = np.asarray([s.gy for s in gaze])

    fix = [e for e in events if e.kind == "fixation"]
    sac = [e for e in events if e.kind == "saccade"]
    durations = np.asarray([e.duration for e in fix])

    steps = np.hypot(np.diff(gx), np.diff(gy)) if len(gaze) >= 2 else np.zeros(0)

    dispersions = []
    for e in fix:
        mask = (t >= e.start - 1e-12) & (t <= e.end + 1e-12)
        if mask.any():
            dispersions.append(_dispersion(gx[mask], gy[mask], 0, int(mask.sum()) - 1))
    dispersions = np.asarray(dispersions)

    return np.array([
        durations.mean() if durations.size else 0.0,
        float(len(fix)),
        float(len(sac)),
        steps.mean() if steps.size else 0.0,
        steps.std() if steps.size else 0.0,
        dispersions.mean() if dispersions.size else 0.0,
        dispersions.std() if dispersions.size else 0.0,
    ])


def slice_gaze(series: GazeSeries, t0: float, t1: float) -> list[GazeSample]:
    return [s for s in series.samples if t0 - 1e-12 <= s.t <= t1 + 1e-12]
