"""Hyperparameter search: 5-fold cross-validation objective and a
tree-structured Parzen estimator over the booster parameter space.

TPE protocol: the first 10 trials sample uniformly; afterwards the
history splits at the 0.25 objective quantile into good/bad sets,
per-parameter Parzen densities (Gaussian kernels, bandwidth =
range/sqrt(count); smoothed categorical counts for integers) score 24
candidates drawn from the good density, and the best-ratio candidate is
evaluated. Deterministic per seed; resumable from a trial history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TooFewRows, ZeroBudget
from .gbtree import BoosterParams, fit

N_STARTUP_TRIALS = 10
N_CANDIDATES = 24
GOOD_QUANTILE = 0.25


@dataclass(frozen=True)
class ParamSpec:
    name: str
    low: float
    high: float
    kind: str  # "uniform" | "loguniform" | "int"


@dataclass(frozen=True)
class SearchSpace:
    params: tuple[ParamSpec, ...]

    def names(self) -> list[str]:
        return [p.name for p in self.params]


def default_search_space() -> SearchSpace:
    return SearchSpace(params=(
        ParamSpec("eta", 0.01, 0.3, "loguniform"),
        ParamSpec("max_depth", 3, 15, "int"),
        ParamSpec("lambda_", 0.0, 10.0, "uniform"),
        ParamSpec("alpha", 0.0, 10.0, "uniform"),
        ParamSpec("gamma", 0.0, 1.0, "uniform"),
        ParamSpec("subsample", 0.5, 1.0, "uniform"),
        ParamSpec("colsample_bytree", 0.5, 1.0, "uniform"),
    ))


@dataclass
class Trial:
    params: dict
    objective: float
    fold_rmses: list[float] = field(default_factory=list)
    status: str = "ok"
    duration_s: float = 0.0

    def to_dict(self) -> dict:
        return {"params": self.params, "objective": self.objective,
                "fold_rmses": self.fold_rmses, "status": self.status,
                "duration_s": self.duration_s}

    @classmethod
    def from_dict(cls, d: dict) -> "Trial":
        return cls(params=dict(d["params"]), objective=float(d["objective"]),
                   fold_rmses=list(d.get("fold_rmses", [])),
                   status=str(d.get("status", "ok")),
                   duration_s=float(d.get("duration_s", 0.0)))


# ------------------------------------------------------------------- k-fold CV

def kfold_cv(x: np.ndarray, y: np.ndarray, params: BoosterParams, k: int = 5,
             seed: int = 0) -> tuple[float, list[float]]:
    """Mean and per-fold validation RMSE over a seeded k-fold partition."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n < k:
        raise TooFewRows(f"{n} rows cannot form {k} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, k)
    rmses: list[float] = []
    for i in range(k):
        val_idx = folds[i]
        train_idx = np.concatenate([folds[j] for j in range(k) if j != i])
        booster, _ = fit(x[train_idx], y[train_idx], params)
        pred = booster.predict(x[val_idx])
        pred = np.atleast_1d(pred)
        rmses.append(float(np.sqrt(np.mean((pred - y[val_idx]) ** 2))))
    return float(np.mean(rmses)), rmses


# ------------------------------------------------------------------------- TPE

def _to_unit(spec: ParamSpec, value: float) -> float:
    if spec.kind == "loguniform":
        return math.log(value)
    return float(value)


def _uniform_sample(spec: ParamSpec, rng: np.random.Generator) -> float | int:
    if spec.kind == "int":
        return int(rng.integers(int(spec.low), int(spec.high) + 1))
    if spec.kind == "loguniform":
        return float(np.exp(rng.uniform(math.log(spec.low), math.log(spec.high))))
    return float(rng.uniform(spec.low, spec.high))


def _kernel_logpdf(points: np.ndarray, bandwidth: float, value: float) -> float:
    z = (value - points) / bandwidth
    dens = np.exp(-0.5 * z * z) / (bandwidth * math.sqrt(2.0 * math.pi))
    return math.log(max(float(dens.mean()), 1e-300))


def _int_logpmf(points: np.ndarray, spec: ParamSpec, value: int) -> float:
    n_values = int(spec.high) - int(spec.low) + 1
    count = int(np.sum(points == value))
    return math.log((count + 1.0) / (len(points) + n_values))


def _sample_from_good(spec: ParamSpec, good: np.ndarray,
                      rng: np.random.Generator) -> float | int:
    if spec.kind == "int":
        n_values = int(spec.high) - int(spec.low) + 1
        values = np.arange(int(spec.low), int(spec.high) + 1)
        weights = np.array([np.sum(good == v) + 1.0 for v in values])
        weights /= weights.sum()
        return int(rng.choice(values, p=weights))
    lo, hi = _to_unit(spec, spec.low), _to_unit(spec, spec.high)
    bw = (hi - lo) / math.sqrt(len(good))
    center = float(good[rng.integers(len(good))])
    raw = rng.normal(center, bw)
    raw = min(max(raw, lo), hi)
    return float(np.exp(raw)) if spec.kind == "loguniform" else float(raw)


def tpe_optimize(objective, space: SearchSpace, budget: int, seed: int = 0,
                 history: list[Trial] | None = None) -> tuple[Trial, list[Trial]]:
    """Minimize ``objective(params_dict)``; returns (best trial, history).

    ``budget`` counts total trials including any resumed history.
    """
    if budget < 1:
        raise ZeroBudget(f"budget must be >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    history = list(history) if history else []

    while len(history) < budget:
        if len(history) < N_STARTUP_TRIALS:
            params = {p.name: _uniform_sample(p, rng) for p in space.params}
        else:
            params = _tpe_suggest(space, history, rng)
        value = float(objective(params))
        history.append(Trial(params=params, objective=value))

    best = min(history, key=lambda t: t.objective)
    return best, history


def _tpe_suggest(space: SearchSpace, history: list[Trial],
                 rng: np.random.Generator) -> dict:
    objectives = np.asarray([t.objective for t in history])
    n_good = max(1, int(round(GOOD_QUANTILE * len(history))))
    order = np.argsort(objectives, kind="stable")
    good_idx = set(order[:n_good].tolist())
    good = [history[i] for i in sorted(good_idx)]
    bad = [history[i] for i in range(len(history)) if i not in good_idx]

    per_param_good: dict[str, np.ndarray] = {}
    per_param_bad: dict[str, np.ndarray] = {}
    for spec in space.params:
        per_param_good[spec.name] = np.asarray(
            [_to_unit(spec, t.params[spec.name]) if spec.kind != "int"
             else t.params[spec.name] for t in good], dtype=np.float64)
        per_param_bad[spec.name] = np.asarray(
            [_to_unit(spec, t.params[spec.name]) if spec.kind != "int"
             else t.params[spec.name] for t in bad], dtype=np.float64)

    best_score = -np.inf
    best_candidate: dict = {}
    for _ in range(N_CANDIDATES):
        candidate = {p.name: _sample_from_good(p, per_param_good[p.name], rng)
                     for p in space.params}
        score = 0.0
        for spec in space.params:
            g_pts = per_param_good[spec.name]
            b_pts = per_param_bad[spec.name]
            if spec.kind == "int":
                score += _int_logpmf(g_pts, spec, candidate[spec.name])
                score -= _int_logpmf(b_pts, spec, candidate[spec.name])
            else:
                lo, hi = _to_unit(spec, spec.low), _to_unit(spec, spec.high)
                v = _to_unit(spec, candidate[spec.name])
                score += _kernel_logpdf(g_pts, (hi - lo) / math.sqrt(len(g_pts)), v)
                score -= _kernel_logpdf(b_pts, (hi - lo) / math.sqrt(len(b_pts)), v)
        if score > best_score:
            best_score = score
            best_candidate = candidate
    return best_candidate


def params_from_trial(trial_params: dict, **overrides) -> BoosterParams:
    """Build BoosterParams from a trial's sampled dict plus fixed settings."""
    merged = dict(trial_params)
    merged.update(overrides)
    return BoosterParams(**merged)
