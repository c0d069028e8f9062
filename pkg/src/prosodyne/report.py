"""Regression metrics, correlation analysis, ablation harness, figures.

The Pearson p-value uses a Student-t CDF evaluated through the
regularized incomplete beta function (Lentz continued fraction); no
statistics library is involved, keeping the quadrature oracle in the
test suite fully independent.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateInput,
    DegenerateTarget,
    UnknownSubset,
)
from .fusion import (
    MODALITY_SLICES,
    SplitAssignment,
    apply_normalizer,
    fit_normalizer,
)
from .gbtree import BoosterParams, fit


@dataclass(frozen=True)
class MetricSet:
    mse: float
    rmse: float
    mae: float
    r2: float
    n: int

    def to_dict(self) -> dict:
        return {"mse": self.mse, "rmse": self.rmse, "mae": self.mae,
                "r2": self.r2, "n": self.n}


def regression_metrics(y: np.ndarray, y_hat: np.ndarray) -> MetricSet:
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1 or len(y) < 2:
        raise ValueError(f"need equal-length 1-D arrays of >= 2, got {y.shape}, {y_hat.shape}")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 0.0:
        raise DegenerateTarget("target variance is zero; R^2 undefined")
    residual = y - y_hat
    mse = float(np.mean(residual ** 2))
    return MetricSet(
        mse=mse,
        rmse=math.sqrt(mse),
        mae=float(np.mean(np.abs(residual))),
        r2=1.0 - float(np.sum(residual ** 2)) / ss_tot,
        n=len(y),
    )


# ---------------------------------------------------------------- Student-t CDF

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz)."""
    max_it, eps, fpmin = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_it + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
             + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def pearson(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Sample Pearson r with a two-sided p from the t distribution."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 3:
        raise DegenerateInput(f"need equal-length 1-D arrays of >= 3, got {a.shape}")
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(np.sum(da ** 2)) * float(np.sum(db ** 2)))
    if denom <= 0.0:
        raise DegenerateInput("constant input; correlation undefined")
    r = float(np.sum(da * db)) / denom
    r = min(1.0, max(-1.0, r))
    df = len(a) - 2
    if 1.0 - r * r <= 0.0:
        return r, 0.0
    t2 = r * r * df / (1.0 - r * r)
    p = betainc_reg(df / 2.0, 0.5, df / (df + t2))
    return r, p


# -------------------------------------------------------------------- ablation

@dataclass(frozen=True)
class AblationRow:
    subset: str
    metrics: MetricSet
    n_rounds: int


@dataclass(frozen=True)
class AblationReport:
    rows: list[AblationRow]

    def to_dict(self) -> dict:
        return {r.subset: dict(r.metrics.to_dict(), n_rounds=r.n_rounds)
                for r in self.rows}

    def r2_of(self, subset: str) -> float:
        for r in self.rows:
            if r.subset == subset:
                return r.metrics.r2
        raise UnknownSubset(subset)


def ablation_run(x_raw: np.ndarray, y: np.ndarray, speaker_ids: list[str],
                 split: SplitAssignment, subsets: list[str],
                 params: BoosterParams | dict[str, BoosterParams],
                 ) -> AblationReport:
    """Train one booster per modality subset on shared splits.

    ``x_raw`` holds un-normalized fused rows; each subset slices its
    columns, refits the normalizer on the subset's training rows, trains
    with the shared protocol (validation-based early stopping), and
    evaluates on the shared test rows.
    """
    for name in subsets:
        if name not in MODALITY_SLICES:
            raise UnknownSubset(name)
    splits = np.asarray([split.split_of(s) for s in speaker_ids])
    train_mask = splits == "train"
    val_mask = splits == "validation"
    test_mask = splits == "test"
    train_speakers = [s for s, m in zip(speaker_ids, train_mask) if m]

    rows: list[AblationRow] = []
    for name in subsets:
        sl = MODALITY_SLICES[name]
        sub = x_raw[:, sl]
        stats = fit_normalizer(sub[train_mask], train_speakers, split,
                               layout_id=f"{name}-slice")
        normed = apply_normalizer(stats, sub)
        p = params[name] if isinstance(params, dict) else params
        booster, rep = fit(normed[train_mask], y[train_mask], p,
                           x_val=normed[val_mask], y_val=y[val_mask])
        pred = np.atleast_1d(booster.predict(normed[test_mask]))
        rows.append(AblationRow(subset=name,
                                metrics=regression_metrics(y[test_mask], pred),
                                n_rounds=booster.best_iteration + 1))
    return AblationReport(rows=rows)


# --------------------------------------------------------------------- figures

_SVG_W, _SVG_H = 640, 480
_MARGIN = 56.0
_AXIS_LO, _AXIS_HI = 1.0, 5.0


def _svg_xy(v: float, axis: str) -> float:
    frac = (v - _AXIS_LO) / (_AXIS_HI - _AXIS_LO)
    if axis == "x":
        return _MARGIN + frac * (_SVG_W - 2 * _MARGIN)
    return _SVG_H - _MARGIN - frac * (_SVG_H - 2 * _MARGIN)


def fitted_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Closed-form least-squares slope and intercept."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx = x - x.mean()
    denom = float(np.sum(dx ** 2))
    if denom <= 0.0:
        return 0.0, float(y.mean())
    slope = float(np.sum(dx * (y - y.mean()))) / denom
    return slope, float(y.mean() - slope * x.mean())


def scatter_figure(y: np.ndarray, y_hat: np.ndarray, path: str,
                   x_label: str = "actual", y_label: str = "predicted",
                   title: str = "") -> None:
    """Deterministic SVG scatter with the least-squares line on [1, 5] axes.

    Slope/intercept/R^2/RMSE travel in the <metadata> element so tests and
    tooling can read them back without parsing geometry.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if len(y) < 2 or y.shape != y_hat.shape:
        raise ValueError("scatter_figure needs >= 2 aligned points")
    metrics = regression_metrics(y, y_hat)
    slope, intercept = fitted_line(y, y_hat)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        "<metadata>"
        + (f'{{"slope": {slope!r}, "intercept": {intercept!r}, '
           f'"r2": {metrics.r2!r}, "rmse": {metrics.rmse!r}, "n": {metrics.n}}}')
        + "</metadata>",
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
    ]
    ax_l, ax_r = _svg_xy(_AXIS_LO, "x"), _svg_xy(_AXIS_HI, "x")
    ax_b, ax_t = _svg_xy(_AXIS_LO, "y"), _svg_xy(_AXIS_HI, "y")
    parts.append(f'<line x1="{ax_l:.2f}" y1="{ax_b:.2f}" x2="{ax_r:.2f}" y2="{ax_b:.2f}" stroke="black"/>')
    parts.append(f'<line x1="{ax_l:.2f}" y1="{ax_b:.2f}" x2="{ax_l:.2f}" y2="{ax_t:.2f}" stroke="black"/>')
    for tick in range(1, 6):
        tx = _svg_xy(float(tick), "x")
        ty = _svg_xy(float(tick), "y")
        parts.append(f'<line x1="{tx:.2f}" y1="{ax_b:.2f}" x2="{tx:.2f}" y2="{ax_b + 5:.2f}" stroke="black"/>')
        parts.append(f'<text x="{tx:.2f}" y="{ax_b + 18:.2f}" font-size="11" text-anchor="middle">{tick}</text>')
        parts.append(f'<line x1="{ax_l - 5:.2f}" y1="{ty:.2f}" x2="{ax_l:.2f}" y2="{ty:.2f}" stroke="black"/>')
        parts.append(f'<text x="{ax_l - 9:.2f}" y="{ty + 4:.2f}" font-size="11" text-anchor="end">{tick}</text>')
    for yv, pv in zip(y, y_hat):
        cx = _svg_xy(min(max(yv, _AXIS_LO), _AXIS_HI), "x")
        cy = _svg_xy(min(max(pv, _AXIS_LO), _AXIS_HI), "y")
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2" fill="steelblue" fill-opacity="0.55"/>')
    x0, x1 = _AXIS_LO, _AXIS_HI
    y0 = min(max(slope * x0 + intercept, _AXIS_LO), _AXIS_HI)
    y1 = min(max(slope * x1 + intercept, _AXIS_LO), _AXIS_HI)
    parts.append(
        f'<line x1="{_svg_xy(x0, "x"):.2f}" y1="{_svg_xy(y0, "y"):.2f}" '
        f'x2="{_svg_xy(x1, "x"):.2f}" y2="{_svg_xy(y1, "y"):.2f}" '
        f'stroke="crimson" stroke-width="1.5"/>'
    )
    note = f"R2={metrics.r2:.3f} RMSE={metrics.rmse:.3f} n={metrics.n}"
    parts.append(f'<text x="{_MARGIN + 6:.2f}" y="{_MARGIN - 14:.2f}" font-size="13">{note}</text>')
    if title:
        parts.append(f'<text x="{_SVG_W / 2:.2f}" y="20" font-size="14" text-anchor="middle">{title}</text>')
    parts.append(f'<text x="{_SVG_W / 2:.2f}" y="{_SVG_H - 12:.2f}" font-size="12" text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="16" y="{_SVG_H / 2:.2f}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 16 {_SVG_H / 2:.2f})">{y_label}</text>')
    parts.append("</svg>")
    blob = "\n".join(parts) + "\n"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(blob)
    os.replace(tmp, path)


# ---------------------------------------------------------- cross-model analysis

def dual_model_correlation(engagement_pred: dict[str, float],
                           vocal_pred: dict[str, float],
                           engagement_truth: dict[str, float],
                           vocal_truth: dict[str, float],
                           figure_path: str | None = None) -> dict:
    """Pearson r/p for the truth pair and the prediction pair on shared segments."""
    keys = set(engagement_pred)
    if not (keys == set(vocal_pred) == set(engagement_truth) == set(vocal_truth)):
        raise AlignmentError("prediction/truth segment sets differ")
    if not keys:
        raise AlignmentError("no shared segments")
    order = sorted(keys)
    ep = np.asarray([engagement_pred[k] for k in order])
    vp = np.asarray([vocal_pred[k] for k in order])
    et = np.asarray([engagement_truth[k] for k in order])
    vt = np.asarray([vocal_truth[k] for k in order])
    r_truth, p_truth = pearson(et, vt)
    r_pred, p_pred = pearson(ep, vp)
    if figure_path is not None:
        scatter_figure(vp, ep, figure_path, x_label="predicted vocal attractiveness",
                       y_label="predicted engagement",
                       title="prediction cross-correlation")
    return {
        "n": len(order),
        "truth": {"r": r_truth, "p": p_truth},
        "predictions": {"r": r_pred, "p": p_pred},
    }


def metrics_by_group(y: np.ndarray, y_hat: np.ndarray,
                     groups: list[str]) -> dict[str, dict]:
    """Per-group MetricSets; groups too small or constant are skipped."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    out: dict[str, dict] = {}
    for g in sorted(set(groups)):
        mask = np.asarray([gi == g for gi in groups])
        if mask.sum() < 2:
            continue
        try:
            out[g] = regression_metrics(y[mask], y_hat[mask]).to_dict()
        except DegenerateTarget:
            continue
    return out
