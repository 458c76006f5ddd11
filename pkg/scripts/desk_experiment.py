#!/usr/bin/env python3
"""Run the desk comparison end to end through the command line entry point.

Four runs share one config: DCCR, full sharing, a constant 20% share with the
same total byte budget as DCCR, and isolated training (no edges). Each run is
projected to 2-D trajectories, and all four logs go into one accuracy-vs-bytes
report whose target is the isolated accuracy plus 20 points.

    python3 scripts/desk_experiment.py --config configs/desk.json --out runs/desk
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from fedistil.cli import main as cli
from fedistil.experiment import parse_config, serialize
from fedistil.schedule import constant_schedule
from fedistil.topology import ring_lattice


def write(cfg, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize(cfg))
    return path


def last_bytes(run_dir: Path) -> int:
    with open(run_dir / "metrics.jsonl") as f:
        *_, line = f
    return json.loads(line)["cum_bytes"]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--config", default=str(Path(__file__).resolve().parent.parent / "configs" / "desk.json"))
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", help="override the config seed")
    ap.add_argument("--threads", default="1")
    args = ap.parse_args(argv)

    base = parse_config(args.config, {"seed": args.seed, "schedule": "dccr"})
    root = Path(args.out)
    runs = {
        "dccr": base,
        "full": replace(base, schedule="full"),
        "isolated": replace(base, topology="edges", edges=(), allow_disconnected=True),
    }
    for name, cfg in runs.items():
        cfg_path = write(replace(cfg, out=str(root / name)), root / "configs" / f"{name}.json")
        if cli(["run", "--config", str(cfg_path), "--threads", args.threads]) != 0:
            return 1

    # constant share at the byte budget DCCR actually spent
    edges = ring_lattice(base.devices, base.k).num_edges
    per_round = constant_schedule(base.fraction, base.shared_size)(0) * base.num_classes \
        * base.bytes_per_value * 2 * edges
    const = replace(base, schedule="constant", rounds=last_bytes(root / "dccr") // per_round,
                    out=str(root / "constant"))
    if cli(["run", "--config", str(write(const, root / "configs" / "constant.json")),
            "--threads", args.threads]) != 0:
        return 1

    names = ["dccr", "constant", "full", "isolated"]
    for name in names:
        if cli(["project", str(root / name)]) != 0:
            return 1
    # bytes-to-target at the isolated baseline's final mean accuracy plus 20 points
    iso = [json.loads(line) for line in open(root / "isolated" / "metrics.jsonl")]
    final_t = iso[-1]["t"]
    final = [r["test_acc"] for r in iso if r["t"] == final_t]
    target = sum(final) / len(final) + 0.20
    logs = [str(root / n / "metrics.jsonl") for n in names]
    return cli(["report", *logs, "--labels", *names, "--target", f"{target:.6f}", "--out", str(root)])


if __name__ == "__main__":
    sys.exit(main())
