#!/usr/bin/env python3
"""Re-check the desk thresholds over several seeds.

For each seed prints the consensus distance ratio (t=200 over t=10), the
smallest per-device gain over isolated training, and the trajectory radius
ratio for DCCR and for a constant 20% share at equal byte budget.

    python3 scripts/seed_sweep.py --seeds 0 1 2 7
"""
from __future__ import annotations

import argparse
from dataclasses import replace

import numpy as np

from fedistil.experiment import parse_config, run
from fedistil.projector import enclosing_radius, pairwise_distances, project_snapshots
from fedistil.schedule import constant_schedule
from fedistil.topology import ring_lattice


def mean_pairwise(snapshot) -> float:
    D = pairwise_distances([row.ravel() for row in snapshot])
    return float(D[np.triu_indices(len(snapshot), 1)].mean())


def radius_ratio(result, early: int = 10) -> float:
    points = project_snapshots(result.snapshots)
    last = max(result.snapshots)
    at = lambda r: np.array([p.coords for p in points if p.round == r])
    return enclosing_radius(at(last)) / enclosing_radius(at(early))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--config", default="configs/desk.json")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args(argv)
    base = parse_config(args.config)
    per_round = (constant_schedule(base.fraction, base.shared_size)(0) * base.num_classes
                 * base.bytes_per_value * 2 * ring_lattice(base.devices, base.k).num_edges)

    print(f"{'seed':>6} {'dist_ratio':>10} {'min_gain':>9} {'dccr_radius':>11} {'const_radius':>12}")
    for seed in args.seeds:
        cfg = replace(base, seed=seed, schedule="dccr")
        dccr = run(cfg)
        iso = run(replace(cfg, topology="edges", edges=(), allow_disconnected=True))
        const = run(replace(cfg, schedule="constant", rounds=dccr.total_bytes // per_round))
        snaps = dccr.snapshots
        dist = mean_pairwise(snaps[max(snaps)]) / mean_pairwise(snaps[10])
        gain = np.min(np.asarray(dccr.metrics[-1].test_acc) - np.asarray(iso.metrics[-1].test_acc))
        print(f"{seed:>6} {dist:>10.3f} {gain:>9.3f} {radius_ratio(dccr):>11.3f} {radius_ratio(const):>12.3f}")


if __name__ == "__main__":
    main()
