"""Command-line entry points.

Subcommands wrap the library one-to-one: ``simulate`` and ``compare`` run
the synthetic studies from a JSON config, ``calibrate`` solves a recorded
dataset, ``next-pose`` plans a placement for a saved session snapshot, and
``serve`` starts the REST service.  Outputs are written deterministically,
so identical inputs and seeds produce identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .errors import CalibrationError
from .geometry import BoardSpec, Pose, StereoRig
from .jacobians import ViewPair
from .pipeline import CalibrationDataset, calibrate
from .planner import SearchConfig, next_optimal_pose
from .simulate import (
    DEFAULT_SCHEMES,
    ExperimentConfig,
    benchtop_config,
    compare_strategies,
    run_convergence,
)


def _load_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _dump_json(obj: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_dict(_load_json(args.config))
    else:
        cfg = benchtop_config()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    report = run_convergence(cfg, progress=args.progress)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        report.to_csv(fh)
    if args.json_out:
        _dump_json(report.to_dict(), args.json_out)
    print(f"wrote {args.out}: {len(report.rows)} rows over {report.trials} trials")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    cfg = _experiment_config(args)
    schemes = tuple(args.schemes) if args.schemes else DEFAULT_SCHEMES
    report = compare_strategies(cfg, schemes=schemes, progress=args.progress)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        report.to_csv(fh)
    if args.json_out:
        _dump_json(report.to_dict(), args.json_out)
    print(f"wrote {args.out}: {len(report.rows)} scheme rows over {report.trials} trials")
    return 0


def _cmd_calibrate(args: argparse.Namespace) -> int:
    dataset = CalibrationDataset.from_dict(_load_json(args.dataset))
    result = calibrate(dataset, kernel=args.kernel)
    _dump_json(result.to_dict(), args.out)
    print(
        f"wrote {args.out}: {len(dataset.views)} views, "
        f"rms {result.rms_reproj:.4f} px, {result.iterations} iterations"
    )
    return 0


def _cmd_next_pose(args: argparse.Namespace) -> int:
    snapshot = _load_json(args.session)
    rig = StereoRig.from_dict(snapshot["rig"])
    board = BoardSpec.from_dict(snapshot["board"])
    views = [
        ViewPair(
            left_pixels=np.asarray(v["left_pixels"]),
            right_pixels=np.asarray(v["right_pixels"]),
            board=board,
            left_abs=Pose.from_dict(v["left_abs"]),
        )
        for v in snapshot["views"]
    ]
    search = SearchConfig.from_dict(snapshot.get("search", {}))
    if args.seed is not None:
        search = SearchConfig.from_dict({**search.to_dict(), "seed": args.seed})
    cand = next_optimal_pose(views, rig, board, search)
    _dump_json(cand.to_dict(), args.out)
    print(f"wrote {args.out}: trace {cand.trace:.6e}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import main as serve_main

    serve_main(port=args.port, data_dir=args.data_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calibguide",
        description="Covariance-guided pose planning for stereo extrinsic calibration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="error-versus-count convergence study")
    p.add_argument("--config", help="ExperimentConfig JSON (default: benchtop study)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--json-out", help="also write the report as JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--progress", action="store_true", help="log progress to stderr")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="capture-scheme comparison table")
    p.add_argument("--config", help="ExperimentConfig JSON (default: benchtop study)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--json-out", help="also write the report as JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--schemes", nargs="+", help="capture schemes (default: standard six)")
    p.add_argument("--progress", action="store_true", help="log progress to stderr")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("calibrate", help="solve a recorded dataset")
    p.add_argument("--dataset", required=True, help="CalibrationDataset JSON")
    p.add_argument("--out", required=True, help="output result JSON path")
    p.add_argument("--kernel", default="identity", help='"identity" or "huber:<delta>"')
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("next-pose", help="plan the next board placement")
    p.add_argument("--session", required=True, help="session snapshot JSON")
    p.add_argument("--out", required=True, help="output candidate JSON path")
    p.add_argument("--seed", type=int, help="override the search seed")
    p.set_defaults(func=_cmd_next_pose)

    p = sub.add_parser("serve", help="run the guidance REST service")
    p.add_argument("--port", type=int, help="port (default: CALIBGUIDE_PORT or 8000)")
    p.add_argument("--data-dir", help="session storage dir (default: CALIBGUIDE_DATA_DIR)")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CalibrationError as exc:
        json.dump(
            {"code": type(exc).__name__, "message": str(exc)}, sys.stderr, sort_keys=True
        )
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
