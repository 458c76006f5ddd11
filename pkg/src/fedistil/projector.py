"""Function-space trajectories.

A model is represented by its probability outputs on a fixed probe set,
flattened row after row. The Euclidean distance between two such vectors is
the empirical L2 distance between the two prediction functions on the probe
set, so any distance-based embedding of the vectors is an embedding of the
functions. Here that embedding is classical MDS, solved by power iteration
so the result is deterministic and free of LAPACK ordering quirks.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import nn
from .nn import Model
from .prng import SplitMix64

_MDS_START_SEED = 0x5EED_0F_3D5


@dataclass(frozen=True)
class TrajectoryPoint:
    device: int
    round: int
    coords: tuple[float, ...]


def vectorize_outputs(model: Model, probe_inputs: np.ndarray) -> np.ndarray:
    probe_inputs = np.asarray(probe_inputs, dtype=np.float64)
    if probe_inputs.ndim != 2 or probe_inputs.shape[0] == 0:
        raise ValueError("probe set must be a non-empty matrix")
    return nn.forward(model, probe_inputs).ravel()


def empirical_distance(model_a: Model, model_b: Model, probe_inputs: np.ndarray) -> float:
    """``sqrt(sum_x ||f_a(x) - f_b(x)||^2)`` over the probe inputs, computed per input."""
    pa = nn.forward(model_a, probe_inputs)
    pb = nn.forward(model_b, probe_inputs)
    return float(np.sqrt(np.sum(np.sum((pa - pb) ** 2, axis=1))))


def pairwise_distances(vectors) -> np.ndarray:
    """Symmetric Euclidean distance matrix with an exact zero diagonal."""
    V = np.asarray(vectors, dtype=np.float64)
    if V.ndim != 2:
        lengths = {len(v) for v in vectors}
        raise ValueError(f"all vectors must have the same length, got lengths {sorted(lengths)}")
    m = V.shape[0]
    D = np.zeros((m, m))
    for a in range(m):
        diff = V[a + 1:] - V[a]
        d = np.sqrt(np.sum(diff * diff, axis=1))
        D[a, a + 1:] = d
        D[a + 1:, a] = d
    return D


def _power_iteration(B: np.ndarray, start: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray]:
    v = start / np.linalg.norm(start)
    lam = 0.0
    for _ in range(max_iter):
        w = B @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        w /= norm
        # converge on direction, allowing a sign flip for negative eigenvalues
        if min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < tol:
            v = w
            break
        v = w
    lam = float(v @ B @ v)
    return lam, v


def classical_mds(dist: np.ndarray, out_dim: int = 2, tol: float = 1e-10,
                  max_iter: int = 10_000) -> np.ndarray:
    """Embed a distance matrix in ``out_dim`` dimensions.

    Double-centers the squared distances, then extracts the leading
    eigenpairs one at a time with power iteration and deflation.
    Non-positive eigenvalues give zero coordinates. Each column is flipped so
    that its largest-magnitude entry is positive.
    """
    D = np.asarray(dist, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(D).max(initial=0.0)))):
        raise ValueError("distance matrix must be symmetric")
    if np.any(D < 0):
        raise ValueError("distances must be non-negative")
    m = D.shape[0]
    coords = np.zeros((m, out_dim))
    if m == 0:
        return coords
    J = np.eye(m) - np.full((m, m), 1.0 / m)
    B = -0.5 * J @ (D * D) @ J
    B = 0.5 * (B + B.T)
    rng = SplitMix64(_MDS_START_SEED)
    scale = float(np.abs(B).max(initial=0.0))
    k = 0
    # power iteration finds the largest |eigenvalue|; negative ones are
    # deflated and skipped so the kept columns are the top positive ones
    for _ in range(m):
        if k == out_dim:
            break
        start = rng.f64_array(m) - 0.5
        lam, v = _power_iteration(B, start, tol, max_iter)
        if abs(lam) <= 1e-14 * scale or lam == 0.0:
            break
        B = B - lam * np.outer(v, v)
        if lam < 0.0:
            continue
        col = v * np.sqrt(lam)
        pivot = int(np.argmax(np.abs(col)))
        if col[pivot] < 0:
            col = -col
        coords[:, k] = col
        k += 1
    return coords


def enclosing_radius(points: np.ndarray) -> float:
    """Radius of the centroid-centered disc that contains every point."""
    P = np.asarray(points, dtype=np.float64)
    if P.shape[0] == 0:
        return 0.0
    return float(np.max(np.linalg.norm(P - P.mean(axis=0), axis=1)))


def project_snapshots(snapshots: dict[int, np.ndarray], out_dim: int = 2) -> list[TrajectoryPoint]:
    """Embed every (device, round) output matrix jointly.

    ``snapshots`` maps a round to an array ``(devices, probe, Y)``.
    """
    keys, vectors = [], []
    for r in sorted(snapshots):
        arr = snapshots[r]
        for dev in range(arr.shape[0]):
            keys.append((dev, r))
            vectors.append(arr[dev].ravel())
    if not vectors:
        return []
    coords = classical_mds(pairwise_distances(vectors), out_dim)
    points = [TrajectoryPoint(dev, r, tuple(float(c) for c in xy)) for (dev, r), xy in zip(keys, coords)]
    return sorted(points, key=lambda p: (p.device, p.round))


def export_trajectory(points: Sequence[TrajectoryPoint], path) -> None:
    dims = len(points[0].coords) if points else 2
    header = ["device", "round", "x", "y", "z"][: 2 + dims]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for p in sorted(points, key=lambda p: (p.device, p.round)):
            w.writerow([p.device, p.round, *(f"{c:.17g}" for c in p.coords)])


def read_trajectory(path) -> list[TrajectoryPoint]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    return [TrajectoryPoint(int(r[0]), int(r[1]), tuple(float(c) for c in r[2:])) for r in rows[1:]]


# ----------------------------------------------------------------------- SVG

CATEGORICAL = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
               "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
_SEQ_LIGHT = (0xDE, 0xEB, 0xF7)
_SEQ_DARK = (0x08, 0x30, 0x6B)


def sequential_color(frac: float) -> str:
    """Light blue at 0, dark navy at 1."""
    frac = min(max(frac, 0.0), 1.0)
    rgb = [round(a + (b - a) * frac) for a, b in zip(_SEQ_LIGHT, _SEQ_DARK)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def render_svg(points: Sequence[TrajectoryPoint], color_by: str, path,
               width: int = 640, height: int = 480) -> None:
    """Static SVG: one polyline per device plus a marker per snapshot and a legend."""
    if not points:
        raise ValueError("nothing to draw")
    if color_by not in ("device", "round"):
        raise ValueError("color_by must be 'device' or 'round'")
    pts = sorted(points, key=lambda p: (p.device, p.round))
    xy = np.array([p.coords[:2] for p in pts], dtype=np.float64)
    legend_w, margin = 130, 20
    plot_w, plot_h = width - legend_w - 2 * margin, height - 2 * margin
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    scale = min(plot_w / span[0], plot_h / span[1])
    cx = margin + (plot_w - scale * (hi[0] - lo[0])) / 2
    cy = margin + (plot_h - scale * (hi[1] - lo[1])) / 2

    def sx(x):
        return cx + scale * (x - lo[0])

    def sy(y):
        return height - (cy + scale * (y - lo[1]))

    rounds = sorted({p.round for p in pts})
    r_lo, r_hi = rounds[0], rounds[-1]

    def round_color(r):
        return sequential_color(0.0 if r_hi == r_lo else (r - r_lo) / (r_hi - r_lo))

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    devices = sorted({p.device for p in pts})
    for dev in devices:
        track = [(sx(p.coords[0]), sy(p.coords[1]), p.round) for p in pts if p.device == dev]
        stroke = CATEGORICAL[dev % len(CATEGORICAL)] if color_by == "device" else "#b0b0b0"
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y, _ in track)
        lines.append(f'<polyline class="trajectory" data-device="{dev}" points="{coords}" '
                     f'fill="none" stroke="{stroke}" stroke-width="1.5"/>')
        for x, y, r in track:
            fill = stroke if color_by == "device" else round_color(r)
            lines.append(f'<circle class="snapshot" data-device="{dev}" data-round="{r}" '
                         f'cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{fill}"/>')

    lx = width - legend_w + 10
    lines.append(f'<g class="legend" font-family="sans-serif" font-size="11">')
    if color_by == "device":
        lines.append(f'<text x="{lx}" y="{margin}">device</text>')
        for k, dev in enumerate(devices):
            y = margin + 16 * (k + 1)
            lines.append(f'<rect x="{lx}" y="{y - 9}" width="10" height="10" '
                         f'fill="{CATEGORICAL[dev % len(CATEGORICAL)]}"/>')
            lines.append(f'<text x="{lx + 16}" y="{y}">{escape(str(dev))}</text>')
    else:
        lines.append(f'<text x="{lx}" y="{margin}">round</text>')
        ticks = rounds if len(rounds) <= 6 else [rounds[int(round(q * (len(rounds) - 1)))]
                                                 for q in np.linspace(0, 1, 6)]
        for k, r in enumerate(ticks):
            y = margin + 16 * (k + 1)
            lines.append(f'<rect x="{lx}" y="{y - 9}" width="10" height="10" fill="{round_color(r)}"/>')
            lines.append(f'<text x="{lx + 16}" y="{y}">{r}</text>')
    lines.append("</g>")
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")
