"""Command line entry point.

    fedistil run --config exp.json [--seed S] [--schedule dccr|constant|full]
                 [--rounds T] [--threads N] [--out DIR]
    fedistil project RUN_DIR [--out DIR] [--dims 2|3]
    fedistil report LOG [LOG ...] [--out DIR] [--target ACC]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import report
from .experiment import ConfigError, ExperimentConfig, build_simulation, parse_config, serialize
from .projector import export_trajectory, project_snapshots, render_svg

OUT_ROOT_ENV = "FEDISTIL_OUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("fedistil")


class SnapshotError(RuntimeError):
    pass


def resolve_out(cfg: ExperimentConfig) -> Path:
    if cfg.out is not None:
        return Path(cfg.out)
    root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
    return root / f"{cfg.schedule}_seed{cfg.seed}"


def write_snapshots(snapshots: dict[int, np.ndarray], probe_indices, out: Path) -> None:
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    rounds = sorted(snapshots)
    for r in rounds:
        np.save(snap_dir / f"round_{r:06d}.npy", snapshots[r])
    first = snapshots[rounds[0]]
    manifest = {
        "rounds": rounds,
        "devices": int(first.shape[0]),
        "probe_size": int(first.shape[1]),
        "num_outputs": int(first.shape[2]),
        "probe_indices": list(probe_indices),
    }
    (snap_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_snapshots(path) -> dict[int, np.ndarray]:
    """Read ``snapshots/`` (or a run directory containing it) back into memory."""
    path = Path(path)
    snap_dir = path / "snapshots" if (path / "snapshots").is_dir() else path
    manifest_path = snap_dir / "manifest.json"
    if not manifest_path.is_file():
        raise SnapshotError(f"no snapshot manifest in {snap_dir}")
    try:
        manifest = json.loads(manifest_path.read_text())
        rounds = [int(r) for r in manifest["rounds"]]
        shape = (manifest["devices"], manifest["probe_size"], manifest["num_outputs"])
    except (ValueError, KeyError, TypeError) as exc:
        raise SnapshotError(f"corrupt manifest {manifest_path}: {exc}") from exc
    out = {}
    for r in rounds:
        f = snap_dir / f"round_{r:06d}.npy"
        if not f.is_file():
            raise SnapshotError(f"missing snapshot {f}")
        try:
            arr = np.load(f, allow_pickle=False)
        except (ValueError, OSError) as exc:
            raise SnapshotError(f"corrupt snapshot {f}: {exc}") from exc
        if arr.shape != tuple(shape) or not np.all(np.isfinite(arr)):
            raise SnapshotError(f"corrupt snapshot {f}: shape {arr.shape}, expected {tuple(shape)}")
        out[r] = arr
    return out


def cmd_run(args) -> int:
    overrides = {"seed": args.seed, "schedule": args.schedule, "rounds": args.rounds, "out": args.out}
    cfg = parse_config(args.config, overrides)
    out = resolve_out(cfg)
    sim = build_simulation(cfg, threads=args.threads)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(serialize(cfg))
    with open(out / "metrics.jsonl", "w") as f:
        def on_round(metrics):
            for rec in metrics.records():
                report.write_record(f, rec)
        result = sim.run(on_round)
    write_snapshots(result.snapshots, result.probe_indices, out)
    if result.metrics:
        accs = " ".join(f"{a:.4f}" for a in result.metrics[-1].test_acc)
        print(f"final test accuracy per device: {accs}")
    print(f"total bytes transferred: {result.total_bytes}")
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_project(args) -> int:
    snapshots = load_snapshots(args.run_dir)
    run_dir = Path(args.run_dir)
    out = Path(args.out) if args.out else (run_dir.parent if run_dir.name == "snapshots" else run_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = project_snapshots(snapshots, out_dim=args.dims)
    export_trajectory(points, out / "trajectory.csv")
    render_svg(points, "device", out / "trajectory_by_device.svg")
    render_svg(points, "round", out / "trajectory_by_round.svg")
    print(f"{len(points)} trajectory points written to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    labels = args.labels or [report.default_label(p) for p in args.logs]
    if len(labels) != len(args.logs):
        raise ConfigError("--labels must give one label per log")
    curves = [report.build_curve(label, report.read_metrics(p), str(p)) for label, p in zip(labels, args.logs)]
    curves = [c for c in curves if c.rounds]
    if not curves:
        raise report.MetricsFormatError("no metrics records found")
    target = args.target if args.target is not None else report.matched_target(curves)
    rows = report.summary_rows(curves, target)
    out = Path(args.out) if args.out else Path(args.logs[0]).parent
    out.mkdir(parents=True, exist_ok=True)
    report.write_curves_csv(curves, out / "accuracy_vs_bytes.csv")
    table = report.format_table(rows, target)
    (out / "summary.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedistil", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate training and write metrics + snapshots")
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--seed", help="global seed, decimal or 0x-hex")
    p.add_argument("--schedule", choices=["dccr", "constant", "full"])
    p.add_argument("--rounds", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help=f"output directory (default ${OUT_ROOT_ENV}/<schedule>_seed<seed>)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("project", help="embed snapshots and draw trajectories")
    p.add_argument("run_dir")
    p.add_argument("--out")
    p.add_argument("--dims", type=int, choices=[2, 3], default=2)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("report", help="accuracy-vs-bytes summary of metrics logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--target", type=float, help="accuracy level for bytes-to-target (default: matched)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SnapshotError, report.MetricsFormatError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
