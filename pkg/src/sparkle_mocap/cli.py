"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
failure. Errors are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .config import ConfigError, RunConfig, config_from_dict, load_config

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparkle-mocap", description="Synthetic motion-capture pipeline")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        if dataset:
            p.add_argument("dataset", type=Path, help="dataset directory")
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="frame-parallel workers")
        return p

    def solving(p):
        p.add_argument("--out", type=Path, help="output directory (default: inside the dataset)")
        p.add_argument("--oracle-labels", action="store_true", help="label clouds from ground truth on the fly")
        p.add_argument("--skip-refine", action="store_true", help="report the geometric initialization only")
        return p

    p = common(sub.add_parser("simulate", help="synthesize a dataset"), dataset=False)
    p.add_argument("--out", type=Path, required=True, help="dataset directory to write")
    p.add_argument("--views", type=int, help="use N evenly spaced horizontal views")
    common(sub.add_parser("label", help="generate ground-truth labels for every cloud"))
    common(sub.add_parser("fit", help="fit the joint-to-anchor mapping"))
    p = solving(common(sub.add_parser("solve", help="single-view reconstruction")))
    p.add_argument("--view", type=int, default=0, help="view index to solve")
    solving(common(sub.add_parser("fuse", help="multi-view fused reconstruction")))
    p = common(sub.add_parser("track", help="multi-person tracking on the scene"))
    p.add_argument("--out", type=Path)
    solving(common(sub.add_parser("ablate-occlusion", help="occlusion-ratio sweep")))
    p = sub.add_parser("eval", help="re-score saved results")
    p.add_argument("dataset", type=Path)
    p.add_argument("--results", type=Path, help="results directory (default: DATASET/solve)")
    p = sub.add_parser("verify", help="re-check manifest hashes")
    p.add_argument("dataset", type=Path)
    return ap


def _config(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif getattr(args, "dataset", None) is not None and (args.dataset / "config.json").is_file():
        cfg = config_from_dict(json.loads((args.dataset / "config.json").read_text()))
    else:
        cfg = RunConfig().validate()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "views", None) is not None:
        d["views"] = pipeline.view_ring(args.views)
    return config_from_dict(d)


def run(args) -> dict:
    if args.command == "verify":
        problems = pipeline.verify(args.dataset)
        return {"ok": not problems, "problems": problems}
    if args.command == "eval":
        return pipeline.cmd_eval(args.dataset, args.results)
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg = _config(args)
    if args.command == "simulate":
        m = pipeline.cmd_simulate(cfg, args.out, args.threads)
        return {"dataset": str(args.out), "frames": m.frames, "views": m.views, "files": len(m.files)}
    if args.command == "label":
        m = pipeline.cmd_label(args.dataset, cfg, args.threads)
        return {"files": len(m.files)}
    if args.command == "fit":
        m = pipeline.cmd_fit(args.dataset, cfg)
        return {"residual": m.residual, "frames": m.frames}
    if args.command == "track":
        return pipeline.cmd_track(args.dataset, cfg, args.out)
    refine = not args.skip_refine
    if args.command == "solve":
        rep = pipeline.cmd_solve(args.dataset, cfg, args.out, args.view, args.oracle_labels, refine, args.threads)
    elif args.command == "fuse":
        rep = pipeline.cmd_fuse(args.dataset, cfg, args.out, args.oracle_labels, refine, args.threads)
    else:
        rows = pipeline.cmd_ablate_occlusion(args.dataset, cfg, args.out, args.oracle_labels, refine, args.threads)
        return {"rows": [dict(zip(pipeline.OCCLUSION_COLUMNS, r)) for r in rows]}
    return {k: rep[k] for k in ("j_err_l", "v_err_l", "j_err_g", "v_err_g", "ang_err", "missing")}


def _fail(code: int, err: Exception) -> int:
    sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        out = run(args)
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as e:
        return _fail(EXIT_NUMERIC, e)
    except (ConfigError, ValueError, KeyError, OSError) as e:
        return _fail(EXIT_INVALID, e)
    sys.stdout.write(json.dumps(out, sort_keys=True) + "\n")
    if args.command == "verify" and not out["ok"]:
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
