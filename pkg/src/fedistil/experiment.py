"""Experiment configuration: a flat JSON document validated field by field.

Every key has a default taken from the 10-device ring-lattice setup (k=6,
1000 shared samples). A config file must still name its ``dataset``. Unknown
keys are rejected. Errors name the offending key and, when the config came from a
file, the line it sits on.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import data as data_mod
from .data import Dataset
from .engine import SimConfig, Simulation
from .prng import SplitMix64, parse_seed, sample_indices, stream_seed
from .schedule import DccrSchedule, constant_schedule, full_schedule
from .topology import Graph, from_edges, ring_lattice

TAG_TRAIN = (1 << 32) + 16
TAG_SHARED = (1 << 32) + 17
TAG_TEST = (1 << 32) + 18
TAG_LOCAL_CAP = (1 << 32) + 19

REQUIRED = ("dataset",)


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key is not None:
            where = f"'{key}'"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    devices: int = 10
    topology: str = "ring_lattice"
    k: int = 6
    edges: tuple[tuple[int, int], ...] | None = None
    allow_disconnected: bool = False
    num_classes: int = 10
    labels_per_device: int = 2
    shared_size: int = 1000
    # synthetic blobs
    input_dim: int = 2
    per_class_device: int = 100
    spread: float = 0.15
    test_per_class: int = 100
    # IDX files
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    local_size: int | None = None
    # model and optimisation
    hidden: tuple[int, ...] = (32,)
    rounds: int = 200
    lr: float = 0.05
    eps: float = 0.5
    local_epochs: int = 1
    batch_size: int = 20
    distill_batch_size: int = 50
    lr_decay_every: int = 0
    lr_decay_factor: float = 1.0
    shared_init: bool = False
    # sharing schedule
    schedule: str = "dccr"
    d: int = 100
    tau: int = 100
    fraction: float = 0.2
    step_scale: str = "degree"
    include_self: bool = False
    bytes_per_value: int = 4
    # run bookkeeping
    seed: int = 0
    snapshot_every: int = 10
    probe_size: int = 1000
    out: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["hidden"] = list(self.hidden)
        out["edges"] = None if self.edges is None else [list(e) for e in self.edges]
        return out


def serialize(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2) + "\n"


_INT = {"devices", "k", "num_classes", "labels_per_device", "shared_size", "input_dim",
        "per_class_device", "test_per_class", "rounds", "local_epochs", "batch_size",
        "distill_batch_size", "lr_decay_every", "d", "tau", "bytes_per_value",
        "snapshot_every", "probe_size"}
_OPT_INT = {"local_size"}
_FLOAT = {"spread", "lr", "eps", "lr_decay_factor", "fraction"}
_BOOL = {"allow_disconnected", "shared_init", "include_self"}
_OPT_STR = {"train_images", "train_labels", "test_images", "test_labels", "out"}
_CHOICES = {
    "dataset": ("synthetic", "idx"),
    "topology": ("ring_lattice", "edges"),
    "schedule": ("dccr", "constant", "full"),
    "step_scale": ("degree", "one"),
}


def _key_line(text: str | None, key: str) -> int | None:
    if text is None:
        return None
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _coerce(key: str, value: Any, fail):
    def is_int(v):
        return isinstance(v, int) and not isinstance(v, bool)

    if key in _INT:
        if not is_int(value):
            fail(f"expected an integer, got {type(value).__name__} {value!r}")
        return value
    if key in _OPT_INT:
        if value is not None and not is_int(value):
            fail(f"expected an integer or null, got {value!r}")
        return value
    if key in _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(f"expected a number, got {type(value).__name__} {value!r}")
        if not math.isfinite(value):
            fail("must be finite")
        return float(value)
    if key in _BOOL:
        if not isinstance(value, bool):
            fail(f"expected true or false, got {value!r}")
        return value
    if key in _OPT_STR:
        if value is not None and not isinstance(value, str):
            fail(f"expected a string or null, got {value!r}")
        return value
    if key in _CHOICES:
        if value not in _CHOICES[key]:
            fail(f"must be one of {list(_CHOICES[key])}, got {value!r}")
        return value
    if key == "seed":
        try:
            return parse_seed(value)
        except (TypeError, ValueError) as exc:
            fail(f"invalid seed: {exc}")
    if key == "hidden":
        if not isinstance(value, list) or not all(is_int(v) for v in value):
            fail(f"expected a list of integers, got {value!r}")
        return tuple(value)
    if key == "edges":
        if value is None:
            return None
        ok = isinstance(value, list) and all(
            isinstance(e, list) and len(e) == 2 and all(is_int(v) for v in e) for e in value)
        if not ok:
            fail("expected a list of [i, j] integer pairs")
        return tuple(tuple(e) for e in value)
    fail("unknown key")


def _validate(cfg: ExperimentConfig, fail_at) -> None:
    positive = ["devices", "num_classes", "labels_per_device", "shared_size", "input_dim",
                "per_class_device", "test_per_class", "batch_size", "distill_batch_size",
                "d", "tau", "bytes_per_value", "snapshot_every", "probe_size"]
    for key in positive:
        if getattr(cfg, key) < 1:
            fail_at(key, "must be >= 1")
    for key in ("rounds", "local_epochs", "lr_decay_every"):
        if getattr(cfg, key) < 0:
            fail_at(key, "must be >= 0")
    if cfg.lr <= 0:
        fail_at("lr", "learning rate must be > 0")
    if cfg.eps <= 0:
        fail_at("eps", "sharing rate must be > 0")
    if cfg.spread < 0:
        fail_at("spread", "must be >= 0")
    if cfg.lr_decay_factor <= 0:
        fail_at("lr_decay_factor", "must be > 0")
    if not 0 < cfg.fraction <= 1:
        fail_at("fraction", "must lie in (0, 1]")
    if any(h < 1 for h in cfg.hidden):
        fail_at("hidden", "hidden layer sizes must be >= 1")
    if cfg.labels_per_device > cfg.num_classes:
        fail_at("labels_per_device", "cannot exceed num_classes")
    if cfg.devices + cfg.labels_per_device - 1 < cfg.num_classes:
        fail_at("labels_per_device", "some classes would be claimed by no device")
    if cfg.schedule == "dccr" and cfg.d > cfg.shared_size:
        fail_at("d", f"exceeds shared_size={cfg.shared_size}")
    if cfg.topology == "ring_lattice":
        if cfg.k % 2:
            fail_at("k", f"ring lattice degree must be even, got {cfg.k}")
        if not 0 < cfg.k < cfg.devices:
            fail_at("k", f"ring lattice needs 0 < k < devices={cfg.devices}")
    else:
        if cfg.edges is None:
            fail_at("edges", "required when topology is 'edges'")
        try:
            from_edges(cfg.devices, cfg.edges)
        except ValueError as exc:
            fail_at("edges", str(exc))
    if cfg.dataset == "idx":
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if getattr(cfg, key) is None:
                fail_at(key, "required when dataset is 'idx'")
    if cfg.local_size is not None and cfg.local_size < cfg.batch_size:
        fail_at("local_size", "must be >= batch_size")


def config_from_dict(raw: dict, text: str | None = None, source: str = "config",
                     require: bool = True) -> ExperimentConfig:
    def fail_at(key, msg):
        raise ConfigError(msg, key, _key_line(text, key))

    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            fail_at(key, "unknown key")
    if require:
        for key in REQUIRED:
            if key not in raw:
                raise ConfigError(f"{source}: missing required key", key)
    values = {key: _coerce(key, value, lambda msg, key=key: fail_at(key, msg)) for key, value in raw.items()}
    cfg = ExperimentConfig(**values)
    _validate(cfg, fail_at)
    return cfg


def parse_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Load a JSON config file (if given) and apply flag overrides on top."""
    raw: dict = {}
    text = None
    source = "flags"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                              line=exc.lineno) from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            raw = {**raw, key: value}
    return config_from_dict(raw, text, source, require=path is not None)


# ---------------------------------------------------------------- building


def build_graph(cfg: ExperimentConfig) -> Graph:
    if cfg.topology == "ring_lattice":
        return ring_lattice(cfg.devices, cfg.k)
    return from_edges(cfg.devices, cfg.edges)


def build_schedule(cfg: ExperimentConfig):
    if cfg.schedule == "dccr":
        return DccrSchedule(cfg.d, cfg.tau, cfg.shared_size)
    if cfg.schedule == "constant":
        return constant_schedule(cfg.fraction, cfg.shared_size)
    return full_schedule(cfg.shared_size)


@dataclass
class ExperimentData:
    shards: list[Dataset]
    shared: Dataset
    test: Dataset


def build_data(cfg: ExperimentConfig) -> ExperimentData:
    """Local shards, shared pool and test set, all from the run seed.

    The shared pool is disjoint from the shards and from the test set.
    """
    C = cfg.num_classes
    if cfg.dataset == "synthetic":
        claims = np.bincount([c for i in range(cfg.devices)
                              for c in data_mod.device_labels(i, C, cfg.labels_per_device)], minlength=C)
        train = data_mod.synth_blobs(C, cfg.per_class_device * int(claims.max()), cfg.input_dim,
                                     cfg.spread, SplitMix64(stream_seed(cfg.seed, TAG_TRAIN)))
        pool = data_mod.synth_blobs(C, -(-cfg.shared_size // C), cfg.input_dim, cfg.spread,
                                    SplitMix64(stream_seed(cfg.seed, TAG_SHARED)))
        shared = data_mod.make_shared(pool, cfg.shared_size, SplitMix64(stream_seed(cfg.seed, TAG_SHARED, 1)))
        test = data_mod.synth_blobs(C, cfg.test_per_class, cfg.input_dim, cfg.spread,
                                    SplitMix64(stream_seed(cfg.seed, TAG_TEST)))
    else:
        pool = data_mod.load_idx(cfg.train_images, cfg.train_labels, C)
        test = data_mod.load_idx(cfg.test_images, cfg.test_labels, C)
        if cfg.shared_size > len(pool):
            raise ConfigError(f"only {len(pool)} training samples available", "shared_size")
        shared, train = data_mod.split_shared(pool, cfg.shared_size, SplitMix64(stream_seed(cfg.seed, TAG_SHARED)))
    shards = data_mod.partition_noniid(train, cfg.devices, cfg.labels_per_device)
    if cfg.local_size is not None:
        capped = []
        for i, shard in enumerate(shards):
            if len(shard) > cfg.local_size:
                keep = sorted(sample_indices(SplitMix64(stream_seed(cfg.seed, TAG_LOCAL_CAP, i)),
                                             len(shard), cfg.local_size))
                shard = shard.subset(keep)
            capped.append(shard)
        shards = capped
    for i, shard in enumerate(shards):
        if len(shard) < cfg.batch_size:
            raise ConfigError(f"device {i} holds {len(shard)} samples, fewer than batch_size", "batch_size")
    return ExperimentData(shards, shared, test)


def sim_config(cfg: ExperimentConfig) -> SimConfig:
    return SimConfig(
        layer_sizes=(cfg.input_dim if cfg.dataset == "synthetic" else 0, *cfg.hidden, cfg.num_classes),
        rounds=cfg.rounds,
        schedule=build_schedule(cfg),
        seed=cfg.seed,
        lr=cfg.lr,
        eps=cfg.eps,
        local_epochs=cfg.local_epochs,
        batch_size=cfg.batch_size,
        distill_batch_size=cfg.distill_batch_size,
        snapshot_every=cfg.snapshot_every,
        probe_size=cfg.probe_size,
        step_scale=cfg.step_scale,
        include_self=cfg.include_self,
        bytes_per_value=cfg.bytes_per_value,
        lr_decay_every=cfg.lr_decay_every,
        lr_decay_factor=cfg.lr_decay_factor,
        shared_init=cfg.shared_init,
        allow_disconnected=cfg.allow_disconnected,
    )


def build_simulation(cfg: ExperimentConfig, threads: int = 1) -> Simulation:
    data = build_data(cfg)
    sc = sim_config(cfg)
    if cfg.dataset == "idx":
        sc = replace(sc, layer_sizes=(data.shared.input_dim, *sc.layer_sizes[1:]))
    return Simulation(sc, build_graph(cfg), data.shards, data.shared, data.test, threads=threads)


def run(cfg: ExperimentConfig, threads: int = 1, on_round=None):
    return build_simulation(cfg, threads).run(on_round)
