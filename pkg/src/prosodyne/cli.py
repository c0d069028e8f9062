"""Command-line entry point.

Subcommands map 1:1 to pipeline stages; each reads prior artifacts from
the output directory and writes its own. Exit codes: 0 success, 1 domain
error, 2 usage error. ``PROSODYNE_LOG`` selects verbosity (debug, info,
warning; default info).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ProsodyneError
from .pipeline import STAGES, PipelineConfig, run_stage


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prosodyne",
        description="speaker-side multimodal feature extraction and "
                    "dual-target regression pipeline",
    )
    sub = parser.add_subparsers(dest="stage", required=True, metavar="stage")
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--manifest", help="corpus manifest path")
        p.add_argument("--ratings", help="ratings CSV path (default: sibling of manifest)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="pipeline seed (required)")
        p.add_argument("--budget", type=int, help="hyperopt trial budget")
        p.add_argument("--target", choices=["engagement", "vocal", "both"],
                       help="which model(s) to tune/train/evaluate")
        p.add_argument("--jobs", type=int, help="parallel workers for extraction")
        p.add_argument("--tune-objective", choices=["validation", "cv5"],
                       dest="tune_objective", help="inner objective for tuning")
    return parser


_CONFIG_KEYS = ("manifest", "ratings", "out", "seed", "budget", "target",
                "jobs", "tune_objective", "split_ratios", "tune_max_rounds",
                "tune_early_stop", "final_max_rounds", "final_early_stop",
                "shap_sample")


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    merged: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ProsodyneError(f"cannot read config {args.config}: {exc}") from exc
        for k, v in doc.items():
            if k not in _CONFIG_KEYS:
                raise ProsodyneError(f"unknown config key {k!r}")
            merged[k] = v
    for k in _CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    if "manifest" not in merged or "out" not in merged:
        raise ProsodyneError("both --manifest and --out are required "
                             "(via flags or config)")
    if "seed" not in merged:
        raise ProsodyneError("--seed is required")
    if "split_ratios" in merged:
        merged["split_ratios"] = tuple(merged["split_ratios"])
    return PipelineConfig(**merged)


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("PROSODYNE_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(name)s %(levelname).1s %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        summary = run_stage(cfg, args.stage)
    except ProsodyneError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    printable = {k: v for k, v in summary.items() if k != "input_hash"}
    print(json.dumps(printable, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
