"""Summaries of metrics logs: accuracy against transferred bytes per scheme."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

METRIC_KEYS = ("t", "device", "local_loss", "distill_loss", "test_acc", "cum_bytes")


class MetricsFormatError(ValueError):
    pass


def write_record(f, record: dict) -> None:
    f.write(json.dumps({k: record[k] for k in METRIC_KEYS}) + "\n")


def read_metrics(path) -> list[dict]:
    """Parse a JSON-lines metrics log, reporting bad lines by number."""
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MetricsFormatError(f"{path}:{lineno}: not valid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise MetricsFormatError(f"{path}:{lineno}: expected a JSON object")
            missing = [k for k in METRIC_KEYS if k not in rec]
            if missing:
                raise MetricsFormatError(f"{path}:{lineno}: missing keys {missing}")
            for key in ("t", "device", "cum_bytes"):
                if not isinstance(rec[key], int) or isinstance(rec[key], bool):
                    raise MetricsFormatError(f"{path}:{lineno}: '{key}' must be an integer")
            if not isinstance(rec["test_acc"], (int, float)):
                raise MetricsFormatError(f"{path}:{lineno}: 'test_acc' must be a number")
            rec["_line"] = lineno
            records.append(rec)
    return records


@dataclass
class Curve:
    label: str
    rounds: list[int]
    accuracy: list[float]
    cum_bytes: list[int]

    def bytes_to(self, target: float) -> int | None:
        for acc, b in zip(self.accuracy, self.cum_bytes):
            if acc >= target:
                return b
        return None


def build_curve(label: str, records: Sequence[dict], source: str = "") -> Curve:
    """Mean test accuracy over devices per round, with the round's cumulative bytes.

    Raises if cumulative bytes ever decrease for a device.
    """
    last: dict[int, int] = {}
    by_round: dict[int, list[dict]] = {}
    for rec in records:
        dev = rec["device"]
        if dev in last and rec["cum_bytes"] < last[dev]:
            raise MetricsFormatError(
                f"{source}:{rec.get('_line', '?')}: cum_bytes decreased for device {dev}")
        last[dev] = rec["cum_bytes"]
        by_round.setdefault(rec["t"], []).append(rec)
    rounds = sorted(by_round)
    acc = [sum(r["test_acc"] for r in by_round[t]) / len(by_round[t]) for t in rounds]
    cum = [max(r["cum_bytes"] for r in by_round[t]) for t in rounds]
    for a, b in zip(cum, cum[1:]):
        if b < a:
            raise MetricsFormatError(f"{source}: cum_bytes decreases across rounds")
    return Curve(label, rounds, acc, cum)


def default_label(path) -> str:
    p = Path(path)
    return p.parent.name if p.name == "metrics.jsonl" and p.parent.name else p.stem


def matched_target(curves: Sequence[Curve]) -> float:
    """Highest accuracy every scheme reaches at some round."""
    return min(max(c.accuracy) for c in curves if c.accuracy)


def summary_rows(curves: Sequence[Curve], target: float) -> list[dict]:
    rows = []
    for c in curves:
        rows.append({
            "scheme": c.label,
            "rounds": len(c.rounds),
            "final_acc": c.accuracy[-1] if c.accuracy else float("nan"),
            "total_bytes": c.cum_bytes[-1] if c.cum_bytes else 0,
            "bytes_to_target": c.bytes_to(target),
        })
    # cheapest scheme at the target first; schemes that never reach it last
    rows.sort(key=lambda r: (r["bytes_to_target"] is None, r["bytes_to_target"] or 0, r["scheme"]))
    return rows


def format_table(rows: Sequence[dict], target: float) -> str:
    head = f"{'scheme':<20} {'rounds':>7} {'final_acc':>10} {'total_bytes':>14} {'bytes@' + format(target, '.3f'):>16}"
    lines = [head, "-" * len(head)]
    for r in rows:
        reached = "-" if r["bytes_to_target"] is None else str(r["bytes_to_target"])
        lines.append(f"{r['scheme']:<20} {r['rounds']:>7} {r['final_acc']:>10.4f} "
                     f"{r['total_bytes']:>14} {reached:>16}")
    return "\n".join(lines)


def write_curves_csv(curves: Sequence[Curve], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scheme", "round", "accuracy", "cum_bytes"])
        for c in curves:
            for t, a, b in zip(c.rounds, c.accuracy, c.cum_bytes):
                w.writerow([c.label, t, f"{a:.17g}", b])
