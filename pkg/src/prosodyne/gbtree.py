"""Second-order gradient-boosted regression trees with exact greedy splits.

Squared-error objective halved so gradients are residuals and hessians
are 1 (H terms equal row counts). Split gain follows

    gain = 0.5 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda)
                  - (G_L+G_R)^2/(H_L+H_R+lambda)] - gamma

and leaf weights apply the L1 soft threshold

    w = -sign(G) * max(0, |G| - alpha) / (H + lambda)

scaled by the learning rate before storage. Thresholds sit at midpoints
between consecutive distinct sorted values; gain ties break toward the
lowest feature index, then the lowest threshold. Per-node covers (row
counts) are stored to support path-dependent TreeSHAP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from ._gbt_kernels import split_scan
from .errors import CorruptModel, DimensionMismatch, EmptyData, VersionMismatch

MODEL_FORMAT = "gbt-v1"


@dataclass(frozen=True)
class BoosterParams:
    eta: float = 0.3
    max_depth: int = 6
    lambda_: float = 1.0
    alpha: float = 0.0
    gamma: float = 0.0
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    min_child_weight: float = 1.0
    max_rounds: int = 2000
    early_stop_rounds: int = 50
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        for name in ("lambda_", "alpha", "gamma", "min_child_weight"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("subsample", "colsample_bytree"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BoosterParams":
        return cls(**d)


@dataclass
class Tree:
    """Flattened binary tree; feature == -1 marks leaves."""

    feature: np.ndarray    # int32
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64, leaf weight pre-scaled by eta
    cover: np.ndarray      # float64, training rows through the node
    gain: np.ndarray       # float64, realized split gain (internal nodes)
    stats: np.ndarray      # float64 (n_nodes, 4): G_L, H_L, G_R, H_R

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, x_matrix: np.ndarray) -> np.ndarray:
        cur = np.zeros(len(x_matrix), dtype=np.int64)
        while True:
            f = self.feature[cur]
            internal = f >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            node = cur[rows]
            go_left = x_matrix[rows, f[rows]] <= self.threshold[node]
            cur[rows] = np.where(go_left, self.left[node], self.right[node])
        return self.value[cur]

    def expected_value(self) -> float:
        leaves = self.feature < 0
        root_cover = self.cover[0]
        return float(np.sum(self.value[leaves] * self.cover[leaves]) / root_cover)


@dataclass
class TrainReport:
    train_rmse: list[float] = field(default_factory=list)
    val_rmse: list[float] = field(default_factory=list)
    best_iteration: int = -1
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "train_rmse": self.train_rmse,
            "val_rmse": self.val_rmse,
            "best_iteration": self.best_iteration,
            "stopped_early": self.stopped_early,
        }


@dataclass
class Booster:
    base_score: float
    trees: list[Tree]
    best_iteration: int
    feature_count: int
    params: BoosterParams

    def predict(self, x: np.ndarray) -> np.ndarray | float:
        """Score one vector or a matrix of rows through trees[0..best_iteration]."""
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        m = arr[None, :] if single else arr
        if m.shape[1] != self.feature_count:
            raise DimensionMismatch(
                f"input has {m.shape[1]} features, model expects {self.feature_count}"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("predict requires finite inputs")
        out = np.full(len(m), self.base_score, dtype=np.float64)
        for tree in self.trees[: self.best_iteration + 1]:
            out += tree.predict(m)
        return float(out[0]) if single else out


class _NodeTask:
    __slots__ = ("node_id", "depth", "sorted_rows", "sorted_vals", "g_total")

    def __init__(self, node_id, depth, sorted_rows, sorted_vals, g_total):
        self.node_id = node_id
        self.depth = depth
        self.sorted_rows = sorted_rows  # (d_sub, k) int32, rows sorted per feature
        self.sorted_vals = sorted_vals  # (d_sub, k) float32
        self.g_total = g_total          # float64 gradient sum over node rows


def fit(x: np.ndarray, y: np.ndarray, params: BoosterParams,
        x_val: np.ndarray | None = None, y_val: np.ndarray | None = None,
        ) -> tuple[Booster, TrainReport]:
    """Train a boosted ensemble; early-stops on validation RMSE when given."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise EmptyData(f"training matrix shape {x.shape}")
    n, d = x.shape
    if len(y) != n:
        raise DimensionMismatch(f"{n} rows vs {len(y)} targets")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(x)):
        raise ValueError("fit requires finite inputs")
    if n < 2:
        raise EmptyData("need at least 2 rows")
    has_val = x_val is not None
    if has_val:
        x_val = np.ascontiguousarray(x_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64)
        if x_val.ndim != 2 or x_val.shape[1] != d:
            raise DimensionMismatch(
                f"validation matrix has {x_val.shape[1] if x_val.ndim == 2 else '?'} "
                f"columns, expected {d}"
            )

    rng = np.random.default_rng(params.seed)
    base = float(np.mean(y))
    preds = np.full(n, base)
    preds_val = np.full(len(x_val), base) if has_val else None

    # one global presort reused by every tree
    order = np.argsort(x, axis=0, kind="stable").T.astype(np.int32)  # (d, n)
    order = np.ascontiguousarray(order)

    trees: list[Tree] = []
    report = TrainReport()
    best_val = np.inf
    best_iter = -1
    rounds_since_best = 0
    n_sub = max(1, int(round(params.subsample * n)))
    d_sub = max(1, int(round(params.colsample_bytree * d)))
    scratch_mask = np.zeros(n, dtype=bool)

    for _round in range(params.max_rounds):
        g = preds - y
        if params.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=n_sub, replace=False))
        else:
            rows = None
        if params.colsample_bytree < 1.0:
            feats = np.sort(rng.choice(d, size=d_sub, replace=False)).astype(np.int64)
        else:
            feats = np.arange(d, dtype=np.int64)

        tree, leaf_updates = _grow_tree(x, g, params, order, rows, feats, scratch_mask)
        if all(w == 0.0 for _ids, w in leaf_updates):
            # tree moves no prediction; with full sampling every later round
            # is identical, with sampling the next draw may still differ
            if params.subsample >= 1.0 and params.colsample_bytree >= 1.0:
                break
            continue
        for row_ids, w in leaf_updates:
            if w != 0.0:
                preds[row_ids] += w
        trees.append(tree)
        if has_val:
            preds_val += tree.predict(x_val)

        report.train_rmse.append(float(np.sqrt(np.mean((preds - y) ** 2))))
        if has_val:
            v = float(np.sqrt(np.mean((preds_val - y_val) ** 2)))
            report.val_rmse.append(v)
            if v < best_val:
                best_val = v
                best_iter = len(trees) - 1
                rounds_since_best = 0
            else:
                rounds_since_best += 1
                if rounds_since_best >= params.early_stop_rounds:
                    report.stopped_early = True
                    break

    best_iteration = best_iter if has_val and best_iter >= 0 else len(trees) - 1
    report.best_iteration = best_iteration
    booster = Booster(base_score=base, trees=trees, best_iteration=best_iteration,
                      feature_count=d, params=params)
    return booster, report


def _grow_tree(x, g, params, order, rows, feats, scratch_mask):
    """Grow one tree; returns (Tree, [(leaf row ids, leaf weight)])."""
    n = x.shape[0]
    if rows is None:
        root_rows = order[feats]  # (d_sub, n) shared view
        root_rows = np.ascontiguousarray(root_rows)
        k = n
        g_total = float(np.sum(g))
    else:
        scratch_mask[rows] = True
        sub = order[feats]
        keep = scratch_mask[sub]
        k = len(rows)
        root_rows = sub[keep].reshape(len(feats), k)
        scratch_mask[rows] = False
        g_total = float(np.sum(g[rows]))
    root_vals = np.ascontiguousarray(
        x[root_rows, feats[:, None]], dtype=np.float32
    )

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []
    cover: list[float] = []
    gain_log: list[float] = []
    stats: list[tuple[float, float, float, float]] = []
    leaf_updates: list[tuple[np.ndarray, float]] = []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        cover.append(0.0)
        gain_log.append(0.0)
        stats.append((0.0, 0.0, 0.0, 0.0))
        return len(feature) - 1

    def make_leaf(node_id, row_ids, g_sum, h_sum):
        w = _leaf_weight(g_sum, h_sum, params)
        value[node_id] = w * params.eta
        cover[node_id] = h_sum
        leaf_updates.append((row_ids.copy(), w * params.eta))

    root_id = new_node()
    queue = [_NodeTask(root_id, 0, root_rows, root_vals, g_total)]
    while queue:
        task = queue.pop()
        s_rows, s_vals = task.sorted_rows, task.sorted_vals
        k = s_rows.shape[1]
        cover[task.node_id] = float(k)
        if task.depth >= params.max_depth or k < 2:
            make_leaf(task.node_id, s_rows[0], task.g_total, float(k))
            continue

        gains, positions = split_scan(s_vals, g[s_rows], params.lambda_,
                                      params.gamma, params.min_child_weight)
        f_best = int(np.argmax(gains))
        if not np.isfinite(gains[f_best]):
            make_leaf(task.node_id, s_rows[0], task.g_total, float(k))
            continue
        pos = int(positions[f_best])
        # float64 bookkeeping for the accepted split
        g_left = float(np.sum(np.asarray(g[s_rows[f_best, :pos + 1]], dtype=np.float64)))
        h_left = float(pos + 1)
        g_right = task.g_total - g_left
        h_right = float(k - pos - 1)
        lam, gam = params.lambda_, params.gamma
        gain64 = 0.5 * (g_left ** 2 / (h_left + lam) + g_right ** 2 / (h_right + lam)
                        - task.g_total ** 2 / (k + lam)) - gam
        if gain64 <= 0.0:
            make_leaf(task.node_id, s_rows[0], task.g_total, float(k))
            continue

        lo_val = float(s_vals[f_best, pos])
        hi_val = float(s_vals[f_best, pos + 1])
        thr = lo_val + 0.5 * (hi_val - lo_val)
        if not (lo_val < thr <= hi_val) or thr == hi_val:
            thr = np.nextafter(hi_val, lo_val)  # degenerate midpoint on adjacent floats

        left_rows = s_rows[f_best, :pos + 1]
        scratch_mask[left_rows] = True
        keep = scratch_mask[s_rows]
        rows_l = s_rows[keep].reshape(len(feats), pos + 1)
        rows_r = s_rows[~keep].reshape(len(feats), k - pos - 1)
        vals_l = s_vals[keep].reshape(len(feats), pos + 1)
        vals_r = s_vals[~keep].reshape(len(feats), k - pos - 1)
        scratch_mask[left_rows] = False

        feature[task.node_id] = int(feats[f_best])
        threshold[task.node_id] = thr
        gain_log[task.node_id] = gain64
        stats[task.node_id] = (g_left, h_left, g_right, h_right)
        lid = new_node()
        rid = new_node()
        left[task.node_id] = lid
        right[task.node_id] = rid
        queue.append(_NodeTask(lid, task.depth + 1, rows_l, vals_l, g_left))
        queue.append(_NodeTask(rid, task.depth + 1, rows_r, vals_r, g_right))

    tree = Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
        cover=np.asarray(cover, dtype=np.float64),
        gain=np.asarray(gain_log, dtype=np.float64),
        stats=np.asarray(stats, dtype=np.float64),
    )
    return tree, leaf_updates


def _leaf_weight(g_sum: float, h_sum: float, params: BoosterParams) -> float:
    mag = max(0.0, abs(g_sum) - params.alpha)
    if mag == 0.0:
        return 0.0
    return -np.sign(g_sum) * mag / (h_sum + params.lambda_)


def predict(booster: Booster, x: np.ndarray) -> np.ndarray | float:
    return booster.predict(x)


# -------------------------------------------------------------------- TreeSHAP

def tree_shap(booster: Booster, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Path-dependent TreeSHAP attributions for one input.

    Returns (phi, base) with base + phi.sum() == predict(booster, x)
    within numerical tolerance; covers act as the background weights.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or len(arr) != booster.feature_count:
        raise DimensionMismatch(
            f"input length {arr.shape} vs feature_count {booster.feature_count}"
        )
    phi = np.zeros(booster.feature_count)
    base = booster.base_score
    for tree in booster.trees[: booster.best_iteration + 1]:
        base += tree.expected_value()
        _shap_tree(tree, arr, phi)
    return phi, float(base)


def _shap_tree(tree: Tree, x: np.ndarray, phi: np.ndarray) -> None:
    _shap_recurse(tree, x, phi, 0, [], 1.0, 1.0, -1)


def _shap_extend(m: list, pz: float, po: float, pi: int) -> list:
    out = [list(e) for e in m]
    out.append([pi, pz, po, 1.0 if not m else 0.0])
    l = len(out) - 1
    for i in range(l - 1, -1, -1):
        out[i + 1][3] += po * out[i][3] * (i + 1) / (l + 1)
        out[i][3] = pz * out[i][3] * (l - i) / (l + 1)
    return out


def _shap_unwound_sum(m: list, i: int) -> float:
    l = len(m) - 1
    one = m[i][2]
    zero = m[i][1]
    total = 0.0
    if one != 0.0:
        nxt = m[l][3]
        for j in range(l - 1, -1, -1):
            tmp = nxt * (l + 1) / ((j + 1) * one)
            total += tmp
            nxt = m[j][3] - tmp * zero * (l - j) / (l + 1)
    else:
        for j in range(l - 1, -1, -1):
            total += m[j][3] * (l + 1) / (zero * (l - j))
    return total


def _shap_unwind(m: list, i: int) -> list:
    l = len(m) - 1
    one = m[i][2]
    zero = m[i][1]
    out = [list(e) for e in m[:-1]]
    if one != 0.0:
        nxt = m[l][3]
        for j in range(l - 1, -1, -1):
            tmp = nxt * (l + 1) / ((j + 1) * one)
            nxt = m[j][3] - tmp * zero * (l - j) / (l + 1)
            out[j][3] = tmp
    else:
        for j in range(l - 1, -1, -1):
            out[j][3] = m[j][3] * (l + 1) / (zero * (l - j))
    for j in range(i, l):
        out[j][0] = m[j + 1][0]
        out[j][1] = m[j + 1][1]
        out[j][2] = m[j + 1][2]
    return out


def _shap_recurse(tree: Tree, x: np.ndarray, phi: np.ndarray, node: int,
                  m: list, pz: float, po: float, pi: int) -> None:
    m = _shap_extend(m, pz, po, pi)
    f = int(tree.feature[node])
    if f < 0:
        v = tree.value[node]
        for i in range(1, len(m)):
            w = _shap_unwound_sum(m, i)
            phi[m[i][0]] += w * (m[i][2] - m[i][1]) * v
        return
    hot, cold = ((tree.left[node], tree.right[node])
                 if x[f] <= tree.threshold[node]
                 else (tree.right[node], tree.left[node]))
    iz, io = 1.0, 1.0
    k = next((j for j in range(1, len(m)) if m[j][0] == f), None)
    if k is not None:
        iz, io = m[k][1], m[k][2]
        m = _shap_unwind(m, k)
    cov = tree.cover
    _shap_recurse(tree, x, phi, int(hot), m, iz * cov[hot] / cov[node], io, f)
    _shap_recurse(tree, x, phi, int(cold), m, iz * cov[cold] / cov[node], 0.0, f)


# ------------------------------------------------------------------- importance

def feature_importance(booster: Booster) -> np.ndarray:
    """Total realized split gain per feature over the used trees."""
    total = np.zeros(booster.feature_count)
    for tree in booster.trees[: booster.best_iteration + 1]:
        internal = tree.feature >= 0
        np.add.at(total, tree.feature[internal], tree.gain[internal])
    return total


# ------------------------------------------------------------------ persistence

def save(booster: Booster, path: str) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "base_score": booster.base_score,
        "best_iteration": booster.best_iteration,
        "feature_count": booster.feature_count,
        "params": booster.params.to_dict(),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
                "cover": t.cover.tolist(),
                "gain": t.gain.tolist(),
                "stats": t.stats.tolist(),
            }
            for t in booster.trees
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load(path: str) -> Booster:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "format" not in doc:
        raise CorruptModel(f"{path}: missing format field")
    if doc["format"] != MODEL_FORMAT:
        raise VersionMismatch(str(doc["format"]))
    try:
        trees = []
        for raw in doc["trees"]:
            t = Tree(
                feature=np.asarray(raw["feature"], dtype=np.int32),
                threshold=np.asarray(raw["threshold"], dtype=np.float64),
                left=np.asarray(raw["left"], dtype=np.int32),
                right=np.asarray(raw["right"], dtype=np.int32),
                value=np.asarray(raw["value"], dtype=np.float64),
                cover=np.asarray(raw["cover"], dtype=np.float64),
                gain=np.asarray(raw["gain"], dtype=np.float64),
                stats=np.asarray(raw["stats"], dtype=np.float64).reshape(-1, 4),
            )
            lengths = {len(t.feature), len(t.threshold), len(t.left), len(t.right),
                       len(t.value), len(t.cover), len(t.gain), len(t.stats)}
            if len(lengths) != 1:
                raise KeyError("inconsistent tree arrays")
            trees.append(t)
        booster = Booster(
            base_score=float(doc["base_score"]),
            trees=trees,
            best_iteration=int(doc["best_iteration"]),
            feature_count=int(doc["feature_count"]),
            params=BoosterParams.from_dict(doc["params"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"{path}: {exc}") from exc
    return booster
