"""Stage orchestration: deterministic, resumable pipeline over one corpus.

Each stage reads prior-stage artifacts from the output directory, writes
its own under fixed names, and records a summary with a content hash of
its inputs. Re-running a completed stage with unchanged inputs is a
no-op. All randomness flows from the single config seed, so two clean
runs with the same seed produce byte-identical models and reports.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import corpus as cio
from . import gbtree
from .audio import (
    acoustic_dimension_names,
    acoustic_vector,
    extract_window,
    f0_contour,
    preprocess,
    prosody_supplement,
    select_stable_window,
)
from .errors import ProsodyneError
from .fusion import (
    FUSED_DIM,
    MODALITY_SLICES,
    MIN_RATERS,
    RatingTable,
    SplitAssignment,
    apply_normalizer,
    cronbach_alpha,
    fit_normalizer,
    icc_1k,
    speaker_split,
)
from .report import (
    ablation_run,
    dual_model_correlation,
    metrics_by_group,
    regression_metrics,
    scatter_figure,
)
from .textalign import load_transcript, window_embedding
from .tuning import Trial, default_search_space, kfold_cv, params_from_trial, tpe_optimize
from .visual import (
    OCULOMOTOR_DIM,
    FACIAL_DIM,
    REGION_MAP_VERSION,
    detect_fixations,
    gaze_series,
    oculomotor_vector,
    segment_vector,
    slice_gaze,
)

log = logging.getLogger("prosodyne")

EXTRACT_VERSION = 1
STAGES = ("validate", "extract", "split", "fuse", "tune", "train", "eval",
          "ablate", "shap", "correlate", "report")
TARGETS = ("engagement", "vocal")

# fallback booster settings per target, used when the tune stage was skipped
DEFAULT_MODEL_PARAMS = {
    "engagement": dict(alpha=3.3977, lambda_=8.8721, eta=0.1457, max_depth=13,
                       colsample_bytree=0.6635, subsample=0.6789, gamma=0.0069),
    "vocal": dict(alpha=0.0, lambda_=7.93, eta=0.063, max_depth=9,
                  colsample_bytree=0.98, subsample=0.74, gamma=0.05),
}


@dataclass
class PipelineConfig:
    manifest: str
    out: str
    seed: int
    ratings: str | None = None
    target: str = "both"  # engagement | vocal | both
    budget: int = 40
    split_ratios: tuple[float, float, float] = (0.70, 0.15, 0.15)
    jobs: int = 1
    tune_objective: str = "validation"  # validation | cv5
    tune_max_rounds: int = 120
    tune_early_stop: int = 12
    final_max_rounds: int = 600
    final_early_stop: int = 40
    shap_sample: int = 24

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is required")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {self.split_ratios}")
        if self.target not in ("engagement", "vocal", "both"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.tune_objective not in ("validation", "cv5"):
            raise ValueError(f"unknown tune objective {self.tune_objective!r}")
        if self.ratings is None:
            self.ratings = os.path.join(os.path.dirname(os.path.abspath(self.manifest)),
                                        "ratings.csv")

    def targets(self) -> list[str]:
        return list(TARGETS) if self.target == "both" else [self.target]

    def fingerprint(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(d["split_ratios"])
        d.pop("jobs")  # parallelism never changes outputs
        return d

    def semantic_config(self) -> dict:
        """Knobs that shape results; excludes paths so reports stay
        byte-identical across output locations."""
        d = self.fingerprint()
        for k in ("manifest", "out", "ratings"):
            d.pop(k, None)
        return d


# ----------------------------------------------------------------- stage cache

def _hash_bytes(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(hashlib.sha256(c).digest())
    return h.hexdigest()


def _hash_files(paths: list[str]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(p.encode())
        with open(p, "rb") as fh:
            while True:
                block = fh.read(1 << 20)
                if not block:
                    break
                h.update(block)
    return h.hexdigest()


def _summary_path(cfg: PipelineConfig, stage: str) -> str:
    return os.path.join(cfg.out, f"stage_{stage}.json")


def _stage_cached(cfg: PipelineConfig, stage: str, input_hash: str) -> bool:
    path = _summary_path(cfg, stage)
    if not os.path.isfile(path):
        return False
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return False
    if doc.get("input_hash") != input_hash:
        return False
    return all(os.path.isfile(os.path.join(cfg.out, p)) for p in doc.get("outputs", []))


def _write_summary(cfg: PipelineConfig, stage: str, input_hash: str,
                   outputs: list[str], **extra) -> dict:
    doc = {"stage": stage, "input_hash": input_hash, "outputs": outputs, **extra}
    _dump_json(_summary_path(cfg, stage), doc)
    return doc


def _dump_json(path: str, doc) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _load_json(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _config_chunk(cfg: PipelineConfig, keys: list[str]) -> bytes:
    fp = cfg.fingerprint()
    return json.dumps({k: fp[k] for k in keys}, sort_keys=True).encode()


# -------------------------------------------------------------------- validate

def stage_validate(cfg: PipelineConfig) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    input_hash = _hash_files([cfg.manifest, cfg.ratings])
    if _stage_cached(cfg, "validate", input_hash):
        log.info("validate: cached")
        return _load_json(_summary_path(cfg, "validate"))
    manifest = cio.load_manifest(cfg.manifest)
    ratings = cio.read_ratings_csv(cfg.ratings)
    table = RatingTable(ratings)
    rated = set(table.segments())
    n_rated = sum(1 for e in manifest.entries if e.segment_id in rated)
    summary = _write_summary(
        cfg, "validate", input_hash, outputs=[],
        corpus_id=manifest.corpus_id,
        n_segments=len(manifest.entries),
        n_speakers=len({e.speaker_id for e in manifest.entries}),
        n_rated_segments=n_rated,
        n_rating_rows=len(ratings),
    )
    log.info("validate: %d segments, %d speakers", summary["n_segments"],
             summary["n_speakers"])
    return summary


# --------------------------------------------------------------------- extract

def _extract_one(entry: dict) -> dict:
    """Worker: full feature extraction for one manifest entry."""
    out = {
        "segment_id": entry["segment_id"],
        "speaker_id": entry["speaker_id"],
        "status": "ok",
        "acoustic_ok": False,
        "facial_ok": False,
        "oculo_ok": False,
        "text_ok": False,
        "flags": {},
        "acoustic": None,
        "facial": None,
        "oculo": None,
        "text": None,
        "window": None,
        "prosody": None,
    }
    try:
        clip = cio.read_wav(entry["audio_path"])
        pre = preprocess(clip)
        window = select_stable_window(pre.clip)
        seg = extract_window(pre.clip, window)
        vec = acoustic_vector(seg)
        contour = f0_contour(np.asarray(pre.clip.samples, dtype=np.float64),
                             pre.clip.sample_rate_hz)
        pros = prosody_supplement(pre, contour=contour)
        media_t0 = pre.trim_start_s + window.start_sample / pre.clip.sample_rate_hz
        out.update(
            acoustic=vec.values.tolist(),
            acoustic_ok=True,
            window={"start_sample": int(window.start_sample),
                    "media_t0": media_t0,
                    "stability_score": window.stability_score},
            prosody={"cq": pros.cq, "dtq": pros.dtq, "ci": pros.ci},
        )
        out["flags"].update(vec.flags)
    except ProsodyneError as exc:
        out["status"] = type(exc).__name__
        return out

    if entry.get("landmarks_path"):
        try:
            frames = cio.read_landmark_stream(entry["landmarks_path"])
            facial = segment_vector(frames, media_t0)
            out["facial"] = facial.tolist()
            out["facial_ok"] = True
            series = gaze_series(frames)
            gaze = slice_gaze(series, media_t0, media_t0 + 2.0)
            if len(gaze) >= 2:
                events = detect_fixations(gaze)
                out["oculo"] = oculomotor_vector(events, gaze).tolist()
                out["oculo_ok"] = True
            if series.skipped_frames:
                out["flags"]["gaze_skipped_frames"] = series.skipped_frames
        except ProsodyneError as exc:
            out["flags"]["facial_error"] = type(exc).__name__

    if entry.get("transcript_path") and entry.get("embedding_path"):
        try:
            transcript = load_transcript(entry["transcript_path"], entry["embedding_path"])
            emb = window_embedding(transcript, media_t0, media_t0 + 2.0)
            out["text"] = emb.values.tolist()
            out["text_ok"] = True
            if emb.no_text:
                out["flags"]["no_text"] = True
        except ProsodyneError as exc:
            out["flags"]["text_error"] = type(exc).__name__
    return out


def stage_extract(cfg: PipelineConfig) -> dict:
    manifest = cio.load_manifest(cfg.manifest)
    media = [cfg.manifest]
    for e in manifest.entries:
        media.append(e.audio_path)
        for p in (e.landmarks_path, e.embedding_path, e.transcript_path):
            if p:
                media.append(p)
    input_hash = _hash_bytes(
        _hash_files(media).encode(),
        json.dumps({"extract_version": EXTRACT_VERSION,
                    "region_map": REGION_MAP_VERSION}).encode(),
    )
    if _stage_cached(cfg, "extract", input_hash):
        log.info("extract: cached")
        return _load_json(_summary_path(cfg, "extract"))

    feat_dir = os.path.join(cfg.out, "features")
    os.makedirs(feat_dir, exist_ok=True)
    entries = [
        {"segment_id": e.segment_id, "speaker_id": e.speaker_id,
         "audio_path": e.audio_path, "landmarks_path": e.landmarks_path,
         "embedding_path": e.embedding_path, "transcript_path": e.transcript_path}
        for e in manifest.entries
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_extract_one, entries, chunksize=8))
    else:
        results = [_extract_one(e) for e in entries]

    n = len(results)
    acoustic = np.zeros((n, 203), dtype=np.float32)
    facial = np.zeros((n, FACIAL_DIM), dtype=np.float32)
    oculo = np.zeros((n, OCULOMOTOR_DIM), dtype=np.float32)
    text = np.zeros((n, 384), dtype=np.float32)
    index = []
    for i, r in enumerate(results):
        if r["acoustic"] is not None:
            acoustic[i] = r["acoustic"]
        if r["facial"] is not None:
            facial[i] = r["facial"]
        if r["oculo"] is not None:
            oculo[i] = r["oculo"]
        if r["text"] is not None:
            text[i] = r["text"]
        index.append({k: r[k] for k in
                      ("segment_id", "speaker_id", "status", "acoustic_ok",
                       "facial_ok", "oculo_ok", "text_ok", "flags", "window",
                       "prosody")})

    cio.write_feature_matrix(os.path.join(feat_dir, "acoustic.fmx"), acoustic,
                             "acoustic-203-v1")
    cio.write_feature_matrix(os.path.join(feat_dir, "facial.fmx"), facial,
                             "facial-3780-v1")
    cio.write_feature_matrix(os.path.join(feat_dir, "oculo.fmx"), oculo, "oculo-7-v1")
    cio.write_feature_matrix(os.path.join(feat_dir, "text.fmx"), text, "text-384-v1")
    _dump_json(os.path.join(feat_dir, "index.json"),
               {"region_map_version": REGION_MAP_VERSION, "segments": index})

    ok = sum(1 for r in results if r["acoustic_ok"])
    summary = _write_summary(
        cfg, "extract", input_hash,
        outputs=["features/acoustic.fmx", "features/facial.fmx",
                 "features/oculo.fmx", "features/text.fmx", "features/index.json"],
        n_segments=n, n_acoustic_ok=ok,
        n_facial_ok=sum(1 for r in results if r["facial_ok"]),
        n_excluded=sum(1 for r in results if r["status"] != "ok"),
    )
    log.info("extract: %d/%d segments ok", ok, n)
    return summary


# ----------------------------------------------------------------------- split

def stage_split(cfg: PipelineConfig) -> dict:
    input_hash = _hash_bytes(
        _hash_files([cfg.manifest, cfg.ratings]).encode(),
        _config_chunk(cfg, ["seed", "split_ratios"]),
    )
    if _stage_cached(cfg, "split", input_hash):
        log.info("split: cached")
        return _load_json(_summary_path(cfg, "split"))
    manifest = cio.load_manifest(cfg.manifest)
    table = RatingTable(cio.read_ratings_csv(cfg.ratings))
    rows = []
    for e in manifest.entries:
        if e.segment_id in set(table.segments()):
            agg = table.aggregate(e.segment_id)
            if agg.included:
                rows.append((e.segment_id, e.speaker_id, agg.y_engagement))
    split = speaker_split(rows, ratios=cfg.split_ratios, seed=cfg.seed)
    _dump_json(os.path.join(cfg.out, "split.json"), {
        "assignment": split.assignment,
        "seed": split.seed,
        "achieved_fractions": split.achieved_fractions,
        "ratios": list(cfg.split_ratios),
    })
    summary = _write_summary(cfg, "split", input_hash, outputs=["split.json"],
                             achieved_fractions=split.achieved_fractions)
    log.info("split: fractions %s", split.achieved_fractions)
    return summary


def _load_split(cfg: PipelineConfig) -> SplitAssignment:
    doc = _load_json(os.path.join(cfg.out, "split.json"))
    return SplitAssignment(assignment=doc["assignment"], seed=doc["seed"],
                           achieved_fractions=doc["achieved_fractions"])


# ------------------------------------------------------------------------ fuse

def stage_fuse(cfg: PipelineConfig) -> dict:
    feat_dir = os.path.join(cfg.out, "features")
    inputs = [os.path.join(feat_dir, f) for f in
              ("acoustic.fmx", "facial.fmx", "oculo.fmx", "text.fmx", "index.json")]
    inputs.append(os.path.join(cfg.out, "split.json"))
    inputs.append(cfg.ratings)
    input_hash = _hash_files(inputs)
    if _stage_cached(cfg, "fuse", input_hash):
        log.info("fuse: cached")
        return _load_json(_summary_path(cfg, "fuse"))

    index = _load_json(os.path.join(feat_dir, "index.json"))["segments"]
    acoustic = cio.read_feature_matrix(os.path.join(feat_dir, "acoustic.fmx"),
                                       "acoustic-203-v1")
    facial = cio.read_feature_matrix(os.path.join(feat_dir, "facial.fmx"),
                                     "facial-3780-v1")
    oculo = cio.read_feature_matrix(os.path.join(feat_dir, "oculo.fmx"), "oculo-7-v1")
    text = cio.read_feature_matrix(os.path.join(feat_dir, "text.fmx"), "text-384-v1")
    table = RatingTable(cio.read_ratings_csv(cfg.ratings))
    split = _load_split(cfg)
    rated = set(table.segments())

    fused_rows, fused_meta = [], []
    vocal_rows, vocal_meta = [], []
    for i, seg in enumerate(index):
        sid, spk = seg["segment_id"], seg["speaker_id"]
        if sid not in rated or spk not in split.assignment:
            continue
        agg = table.aggregate(sid)
        if not agg.included:
            continue
        if seg["acoustic_ok"]:
            vocal_rows.append(acoustic[i])
            vocal_meta.append({"segment_id": sid, "speaker_id": spk,
                               "y": agg.y_vocal})
        if (seg["acoustic_ok"] and seg["facial_ok"] and seg["oculo_ok"]
                and seg["text_ok"]):
            row = np.zeros(FUSED_DIM, dtype=np.float32)
            row[MODALITY_SLICES["facial"]] = facial[i]
            row[MODALITY_SLICES["oculomotor"]] = oculo[i]
            row[MODALITY_SLICES["acoustic"]] = acoustic[i]
            row[MODALITY_SLICES["textual"]] = text[i]
            fused_rows.append(row)
            fused_meta.append({"segment_id": sid, "speaker_id": spk,
                               "y_engagement": agg.y_engagement,
                               "y_vocal": agg.y_vocal})

    fused_dir = os.path.join(cfg.out, "fused")
    os.makedirs(fused_dir, exist_ok=True)
    fused_x = np.stack(fused_rows) if fused_rows else np.zeros((0, FUSED_DIM), np.float32)
    vocal_x = np.stack(vocal_rows) if vocal_rows else np.zeros((0, 203), np.float32)
    cio.write_feature_matrix(os.path.join(fused_dir, "fused_raw.fmx"), fused_x,
                             "fused-4374-v1")
    cio.write_feature_matrix(os.path.join(fused_dir, "vocal_raw.fmx"), vocal_x,
                             "acoustic-203-v1")

    def norm_block(x, meta):
        speakers = [m["speaker_id"] for m in meta]
        train = [j for j, s in enumerate(speakers) if split.split_of(s) == "train"]
        stats = fit_normalizer(x[train], [speakers[j] for j in train], split, "block")
        return {"mean": stats.mean.tolist(), "std": stats.std.tolist(),
                "n_train_rows": stats.n_train_rows,
                "degenerate": stats.degenerate.astype(int).tolist()}

    doc = {
        "engagement": {"segments": fused_meta,
                       "norm": norm_block(fused_x.astype(np.float64), fused_meta)
                       if fused_meta else None},
        "vocal": {"segments": vocal_meta,
                  "norm": norm_block(vocal_x.astype(np.float64), vocal_meta)
                  if vocal_meta else None},
    }
    _dump_json(os.path.join(fused_dir, "fused.json"), doc)
    summary = _write_summary(
        cfg, "fuse", input_hash,
        outputs=["fused/fused_raw.fmx", "fused/vocal_raw.fmx", "fused/fused.json"],
        n_engagement_rows=len(fused_meta), n_vocal_rows=len(vocal_meta),
    )
    log.info("fuse: %d engagement rows, %d vocal rows", len(fused_meta),
             len(vocal_meta))
    return summary


@dataclass
class _Dataset:
    x_raw: np.ndarray
    y: np.ndarray
    segment_ids: list[str]
    speaker_ids: list[str]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    split: SplitAssignment

    def normalized(self) -> np.ndarray:
        return (self.x_raw - self.norm_mean) / self.norm_std

    def masks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        splits = np.asarray([self.split.split_of(s) for s in self.speaker_ids])
        return splits == "train", splits == "validation", splits == "test"


def _load_dataset(cfg: PipelineConfig, target: str) -> _Dataset:
    fused_dir = os.path.join(cfg.out, "fused")
    doc = _load_json(os.path.join(fused_dir, "fused.json"))
    split = _load_split(cfg)
    if target == "engagement":
        x = cio.read_feature_matrix(os.path.join(fused_dir, "fused_raw.fmx"),
                                    "fused-4374-v1").astype(np.float64)
        meta = doc["engagement"]["segments"]
        norm = doc["engagement"]["norm"]
        y = np.asarray([m["y_engagement"] for m in meta])
    else:
        x = cio.read_feature_matrix(os.path.join(fused_dir, "vocal_raw.fmx"),
                                    "acoustic-203-v1").astype(np.float64)
        meta = doc["vocal"]["segments"]
        norm = doc["vocal"]["norm"]
        y = np.asarray([m["y"] for m in meta])
    return _Dataset(
        x_raw=x, y=y,
        segment_ids=[m["segment_id"] for m in meta],
        speaker_ids=[m["speaker_id"] for m in meta],
        norm_mean=np.asarray(norm["mean"]), norm_std=np.asarray(norm["std"]),
        split=split,
    )


# ------------------------------------------------------------------------ tune

def _tune_target(cfg: PipelineConfig, target: str) -> dict:
    ds = _load_dataset(cfg, target)
    xn = ds.normalized()
    train, val, _test = ds.masks()
    space = default_search_space()
    caps = dict(max_rounds=cfg.tune_max_rounds, early_stop_rounds=cfg.tune_early_stop,
                seed=cfg.seed)

    if cfg.tune_objective == "validation":
        def objective(params: dict) -> float:
            p = params_from_trial(params, **caps)
            booster, rep = gbtree.fit(xn[train], ds.y[train], p,
                                      x_val=xn[val], y_val=ds.y[val])
            if not rep.val_rmse:
                return float(np.sqrt(np.mean((ds.y[val] - booster.base_score) ** 2)))
            return rep.val_rmse[rep.best_iteration]
    else:
        def objective(params: dict) -> float:
            p = params_from_trial(params, **caps)
            mean_rmse, _folds = kfold_cv(xn[train], ds.y[train], p, k=5, seed=cfg.seed)
            return mean_rmse

    history_path = os.path.join(cfg.out, f"tune_{target}.json")
    history = None
    if os.path.isfile(history_path):
        prev = _load_json(history_path)
        history = [Trial.from_dict(t) for t in prev.get("trials", [])]
    best, trials = tpe_optimize(objective, space, budget=cfg.budget, seed=cfg.seed,
                                history=history)
    _dump_json(history_path, {
        "target": target,
        "objective": cfg.tune_objective,
        "best": best.to_dict(),
        "trials": [t.to_dict() for t in trials],
    })
    return {"target": target, "best_objective": best.objective,
            "best_params": best.params}


def stage_tune(cfg: PipelineConfig) -> dict:
    inputs = [os.path.join(cfg.out, "fused", f)
              for f in ("fused_raw.fmx", "vocal_raw.fmx", "fused.json")]
    inputs.append(os.path.join(cfg.out, "split.json"))
    input_hash = _hash_bytes(
        _hash_files(inputs).encode(),
        _config_chunk(cfg, ["seed", "budget", "target", "tune_objective",
                            "tune_max_rounds", "tune_early_stop"]),
    )
    if _stage_cached(cfg, "tune", input_hash):
        log.info("tune: cached")
        return _load_json(_summary_path(cfg, "tune"))
    results = {t: _tune_target(cfg, t) for t in cfg.targets()}
    summary = _write_summary(
        cfg, "tune", input_hash,
        outputs=[f"tune_{t}.json" for t in cfg.targets()],
        best={t: r["best_objective"] for t, r in results.items()},
    )
    log.info("tune: best objectives %s", summary["best"])
    return summary


def _final_params(cfg: PipelineConfig, target: str) -> gbtree.BoosterParams:
    tune_path = os.path.join(cfg.out, f"tune_{target}.json")
    caps = dict(max_rounds=cfg.final_max_rounds,
                early_stop_rounds=cfg.final_early_stop, seed=cfg.seed)
    if os.path.isfile(tune_path):
        best = _load_json(tune_path)["best"]["params"]
        return params_from_trial(best, **caps)
    return gbtree.BoosterParams(**DEFAULT_MODEL_PARAMS[target], **caps)


# ----------------------------------------------------------------------- train

def stage_train(cfg: PipelineConfig) -> dict:
    inputs = [os.path.join(cfg.out, "fused", f)
              for f in ("fused_raw.fmx", "vocal_raw.fmx", "fused.json")]
    inputs.append(os.path.join(cfg.out, "split.json"))
    for t in cfg.targets():
        p = os.path.join(cfg.out, f"tune_{t}.json")
        if os.path.isfile(p):
            inputs.append(p)
    input_hash = _hash_bytes(
        _hash_files(inputs).encode(),
        _config_chunk(cfg, ["seed", "target", "final_max_rounds", "final_early_stop"]),
    )
    if _stage_cached(cfg, "train", input_hash):
        log.info("train: cached")
        return _load_json(_summary_path(cfg, "train"))

    outputs = []
    rounds = {}
    for target in cfg.targets():
        ds = _load_dataset(cfg, target)
        xn = ds.normalized()
        train, val, _ = ds.masks()
        params = _final_params(cfg, target)
        booster, rep = gbtree.fit(xn[train], ds.y[train], params,
                                  x_val=xn[val], y_val=ds.y[val])
        model_rel = f"model_{target}.json"
        gbtree.save(booster, os.path.join(cfg.out, model_rel))
        _dump_json(os.path.join(cfg.out, f"train_report_{target}.json"),
                   dict(rep.to_dict(), params=params.to_dict()))
        outputs += [model_rel, f"train_report_{target}.json"]
        rounds[target] = rep.best_iteration + 1
        log.info("train %s: %d rounds used", target, rounds[target])
    return _write_summary(cfg, "train", input_hash, outputs=outputs, rounds=rounds)


# ------------------------------------------------------------------------ eval

def stage_eval(cfg: PipelineConfig) -> dict:
    inputs = [os.path.join(cfg.out, "fused", "fused.json"),
              os.path.join(cfg.out, "split.json")]
    for t in cfg.targets():
        inputs.append(os.path.join(cfg.out, f"model_{t}.json"))
    input_hash = _hash_files(inputs)
    if _stage_cached(cfg, "eval", input_hash):
        log.info("eval: cached")
        return _load_json(_summary_path(cfg, "eval"))

    doc = {}
    outputs = ["eval.json"]
    for target in cfg.targets():
        ds = _load_dataset(cfg, target)
        xn = ds.normalized()
        _train, _val, test = ds.masks()
        booster = gbtree.load(os.path.join(cfg.out, f"model_{target}.json"))
        pred = np.atleast_1d(booster.predict(xn[test]))
        metrics = regression_metrics(ds.y[test], pred)
        fig_rel = f"fig_{target}.svg"
        scatter_figure(ds.y[test], pred, os.path.join(cfg.out, fig_rel),
                       x_label=f"actual {target}", y_label=f"predicted {target}",
                       title=f"{target} model, test split")
        outputs.append(fig_rel)
        doc[target] = {
            "test_metrics": metrics.to_dict(),
            "n_test": int(test.sum()),
            "by_speaker": metrics_by_group(
                ds.y[test], pred,
                [s for s, m in zip(ds.speaker_ids, test) if m]),
        }
        log.info("eval %s: %s", target, metrics.to_dict())
    _dump_json(os.path.join(cfg.out, "eval.json"), doc)
    return _write_summary(cfg, "eval", input_hash, outputs=outputs,
                          r2={t: doc[t]["test_metrics"]["r2"] for t in doc})


# ---------------------------------------------------------------------- ablate

def stage_ablate(cfg: PipelineConfig) -> dict:
    inputs = [os.path.join(cfg.out, "fused", f) for f in ("fused_raw.fmx", "fused.json")]
    inputs.append(os.path.join(cfg.out, "split.json"))
    tune_path = os.path.join(cfg.out, "tune_engagement.json")
    if os.path.isfile(tune_path):
        inputs.append(tune_path)
    input_hash = _hash_bytes(
        _hash_files(inputs).encode(),
        _config_chunk(cfg, ["seed", "final_max_rounds", "final_early_stop"]),
    )
    if _stage_cached(cfg, "ablate", input_hash):
        log.info("ablate: cached")
        return _load_json(_summary_path(cfg, "ablate"))

    ds = _load_dataset(cfg, "engagement")
    params = _final_params(cfg, "engagement")
    subsets = ["facial", "oculomotor", "acoustic", "textual", "multimodal"]
    rep = ablation_run(ds.x_raw, ds.y, ds.speaker_ids, ds.split, subsets, params)
    _dump_json(os.path.join(cfg.out, "ablation.json"),
               {"subsets": rep.to_dict(), "params": params.to_dict()})
    summary = _write_summary(cfg, "ablate", input_hash, outputs=["ablation.json"],
                             r2={r.subset: r.metrics.r2 for r in rep.rows})
    log.info("ablate: %s", summary["r2"])
    return summary


# ------------------------------------------------------------------------ shap

def stage_shap(cfg: PipelineConfig) -> dict:
    inputs = [os.path.join(cfg.out, "fused", "fused.json"),
              os.path.join(cfg.out, "split.json")]
    for t in cfg.targets():
        inputs.append(os.path.join(cfg.out, f"model_{t}.json"))
    input_hash = _hash_bytes(_hash_files(inputs).encode(),
                             _config_chunk(cfg, ["shap_sample"]))
    if _stage_cached(cfg, "shap", input_hash):
        log.info("shap: cached")
        return _load_json(_summary_path(cfg, "shap"))

    acoustic_names = acoustic_dimension_names()
    doc = {}
    for target in cfg.targets():
        ds = _load_dataset(cfg, target)
        xn = ds.normalized()
        _train, _val, test = ds.masks()
        booster = gbtree.load(os.path.join(cfg.out, f"model_{target}.json"))
        rows = np.nonzero(test)[0][: cfg.shap_sample]
        phis = np.zeros((len(rows), booster.feature_count))
        worst_gap = 0.0
        for j, i in enumerate(rows):
            phi, base = gbtree.tree_shap(booster, xn[i])
            phis[j] = phi
            worst_gap = max(worst_gap,
                            abs(booster.predict(xn[i]) - (base + phi.sum())))
        mean_abs = np.abs(phis).mean(axis=0)
        top = np.argsort(-mean_abs)[:20]

        def dim_name(d: int) -> str:
            if target == "vocal":
                return acoustic_names[d]
            for mod, sl in MODALITY_SLICES.items():
                if mod != "multimodal" and sl.start <= d < sl.stop:
                    if mod == "acoustic":
                        return f"acoustic:{acoustic_names[d - sl.start]}"
                    return f"{mod}:{d - sl.start}"
            return str(d)

        entry = {
            "n_explained": len(rows),
            "local_accuracy_worst_gap": worst_gap,
            "top_dims": [{"dim": int(d), "name": dim_name(int(d)),
                          "mean_abs_phi": float(mean_abs[d])} for d in top],
        }
        if target == "engagement":
            entry["by_modality"] = {
                mod: float(np.abs(phis[:, sl]).sum(axis=1).mean())
                for mod, sl in MODALITY_SLICES.items() if mod != "multimodal"
            }
        doc[target] = entry
    _dump_json(os.path.join(cfg.out, "shap.json"), doc)
    return _write_summary(cfg, "shap", input_hash, outputs=["shap.json"])


# ------------------------------------------------------------------- correlate

def stage_correlate(cfg: PipelineConfig) -> dict:
    inputs = [os.path.join(cfg.out, "fused", "fused.json"),
              os.path.join(cfg.out, "split.json"),
              os.path.join(cfg.out, "model_engagement.json"),
              os.path.join(cfg.out, "model_vocal.json")]
    input_hash = _hash_files(inputs)
    if _stage_cached(cfg, "correlate", input_hash):
        log.info("correlate: cached")
        return _load_json(_summary_path(cfg, "correlate"))

    preds, truths = {}, {}
    for target in TARGETS:
        ds = _load_dataset(cfg, target)
        xn = ds.normalized()
        _train, _val, test = ds.masks()
        booster = gbtree.load(os.path.join(cfg.out, f"model_{target}.json"))
        p = np.atleast_1d(booster.predict(xn[test]))
        ids = [s for s, m in zip(ds.segment_ids, test) if m]
        preds[target] = dict(zip(ids, p.tolist()))
        truths[target] = {s: float(v) for s, v in
                          zip(ids, ds.y[test].tolist())}

    shared = sorted(set(preds["engagement"]) & set(preds["vocal"]))
    result = dual_model_correlation(
        {k: preds["engagement"][k] for k in shared},
        {k: preds["vocal"][k] for k in shared},
        {k: truths["engagement"][k] for k in shared},
        {k: truths["vocal"][k] for k in shared},
        figure_path=os.path.join(cfg.out, "fig_cross.svg"),
    )
    _dump_json(os.path.join(cfg.out, "correlation.json"), result)
    summary = _write_summary(cfg, "correlate", input_hash,
                             outputs=["correlation.json", "fig_cross.svg"],
                             r_pred=result["predictions"]["r"])
    log.info("correlate: %s", result)
    return summary


# --------------------------------------------------------------------- report

def stage_report(cfg: PipelineConfig) -> dict:
    artifact_names = ["eval.json", "ablation.json", "correlation.json", "shap.json"]
    inputs = [os.path.join(cfg.out, a) for a in artifact_names
              if os.path.isfile(os.path.join(cfg.out, a))]
    inputs += [os.path.join(cfg.out, "fused", "fused.json"),
               os.path.join(cfg.out, "split.json"), cfg.ratings]
    input_hash = _hash_files(inputs)
    if _stage_cached(cfg, "report", input_hash):
        log.info("report: cached")
        return _load_json(_summary_path(cfg, "report"))

    table = RatingTable(cio.read_ratings_csv(cfg.ratings))
    reliability = {}
    for outcome in ("engagement", "vocal_attractiveness"):
        block, raters, items = table.complete_block(outcome)
        entry = {"n_raters": len(raters), "n_items": len(items)}
        if len(raters) >= 2 and len(items) >= 2:
            try:
                entry["cronbach_alpha"] = cronbach_alpha(block)
            except Exception:
                entry["cronbach_alpha"] = None
            try:
                entry["icc_1k"] = icc_1k(block.T)
            except Exception:
                entry["icc_1k"] = None
        reliability[outcome] = entry

    fused_doc = _load_json(os.path.join(cfg.out, "fused", "fused.json"))
    split_doc = _load_json(os.path.join(cfg.out, "split.json"))
    doc = {
        "config": cfg.semantic_config(),
        "reliability": reliability,
        "dataset": {
            "engagement_rows": len(fused_doc["engagement"]["segments"]),
            "vocal_rows": len(fused_doc["vocal"]["segments"]),
            "split_fractions": split_doc["achieved_fractions"],
        },
    }
    for name in artifact_names:
        path = os.path.join(cfg.out, name)
        if os.path.isfile(path):
            doc[name.split(".")[0]] = _load_json(path)
    _dump_json(os.path.join(cfg.out, "report.json"), doc)
    summary = _write_summary(cfg, "report", input_hash, outputs=["report.json"])
    log.info("report: written")
    return summary


STAGE_FUNCS = {
    "validate": stage_validate,
    "extract": stage_extract,
    "split": stage_split,
    "fuse": stage_fuse,
    "tune": stage_tune,
    "train": stage_train,
    "eval": stage_eval,
    "ablate": stage_ablate,
    "shap": stage_shap,
    "correlate": stage_correlate,
    "report": stage_report,
}


def run_stage(cfg: PipelineConfig, stage: str) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    return STAGE_FUNCS[stage](cfg)
