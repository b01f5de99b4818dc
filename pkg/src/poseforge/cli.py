"""Command line: generate, evaluate, analyze, preview, sample-poses.

Results go to stdout as JSON, logs to stderr.  Exit codes: 0 success,
1 validation or usage error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import analysis, dataset, evaluation, formats
from .model import ModelError
from .render import BACKEND
from .sampler import Distribution, SamplerConfig, sample_poses

log = logging.getLogger("poseforge")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=1) + "\n")
    sys.stdout.flush()


def _load_cfg(args) -> dict:
    cfg = dataset.load_config(args.config) if args.config else dataset.resolve_config()
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None) is not None and args.command == "generate":
        cfg["output_dir"] = str(args.out)
    if getattr(args, "num_poses", None) is not None:
        cfg["num_poses"] = args.num_poses
    dataset.validate_config(cfg)
    return cfg


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    log.info("generating %d poses x %d views into %s (kernel: %s)",
             cfg["num_poses"], cfg["views_per_pose"], cfg["output_dir"], BACKEND)
    manifest = dataset.generate_dataset(cfg, workers=args.workers)
    _emit({
        "output_dir": str(cfg["output_dir"]),
        "num_samples": manifest["num_samples"],
        "skipped": len(manifest["skipped"]),
        "pose_seeds": manifest["pose_seeds"],
    })
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gts = evaluation.load_ground_truth(args.gt)
    dts = evaluation.load_detections(args.dt)
    thresholds = args.thresholds or evaluation.DEFAULT_THRESHOLDS
    result = evaluation.match_and_ap(dts, gts, thresholds=thresholds)
    _emit(evaluation.report_json(result))
    return EXIT_OK


def cmd_analyze(args) -> int:
    ref = analysis.load_pose_set(args.reference)
    query = analysis.load_pose_set(args.query)
    report = analysis.analyze(ref, query, k=args.k, rare_fraction=args.rare_fraction, seed=args.seed)
    _emit(report)
    return EXIT_OK


def cmd_preview(args) -> int:
    cfg = _load_cfg(args)
    try:
        p, v = (int(x) for x in args.index.split(","))
    except ValueError:
        raise UsageError("--index must look like P,V")
    if not (0 <= p < cfg["num_poses"] and 0 <= v < cfg["views_per_pose"]):
        raise UsageError(f"index {p},{v} outside the configured dataset")
    ctx = dataset.Context.build(cfg)
    sample = dataset.render_sample(ctx, p, v)
    if sample is None:
        raise ValueError(f"sample {p},{v} has no visible subject")
    formats.write_ppm(args.out, sample["rgb"])
    _emit({"out": str(args.out), "annotation": sample["annotation"].to_coco()})
    return EXIT_OK


def cmd_sample_poses(args) -> int:
    cfg = SamplerConfig(distribution=args.distribution, pose_variance=args.pose_variance, seed=args.seed)
    poses = sample_poses(cfg, args.n)
    analysis.save_pose_set(analysis.PoseSet(poses), args.out)
    _emit({"out": str(args.out), "n": int(len(poses)), "pose_variance": args.pose_variance})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poseforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a dataset")
    g.add_argument("--config", type=Path)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", type=Path)
    g.add_argument("--num-poses", type=int)
    g.add_argument("--workers", type=int, help="overrides config; POSEFORGE_THREADS overrides both")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="OKS AP of detections against ground truth")
    e.add_argument("--gt", type=Path, required=True)
    e.add_argument("--dt", type=Path, required=True)
    e.add_argument("--thresholds", type=float, nargs="+")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("analyze", help="rare-pose ratio of a query set against a reference set")
    a.add_argument("--reference", type=Path, required=True)
    a.add_argument("--query", type=Path, required=True)
    a.add_argument("--k", type=int, default=analysis.DEFAULT_K)
    a.add_argument("--rare-fraction", type=float, default=0.05)
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_analyze)

    p = sub.add_parser("preview", help="render a single sample")
    p.add_argument("--config", type=Path)
    p.add_argument("--index", required=True, help="P,V")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_preview)

    s = sub.add_parser("sample-poses", help="write a pose set file")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--pose-variance", type=float, default=1.0)
    s.add_argument("--distribution", default=Distribution.PAIR_OF_GAUSSIANS.value,
                   choices=[d.value for d in Distribution])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_sample_poses)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_INVALID
    except (ValueError, KeyError, ModelError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
