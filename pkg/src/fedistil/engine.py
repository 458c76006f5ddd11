"""Round-synchronous simulation of decentralized federated distillation.

One round, for every device:

1. local SGD on its own shard (cross-entropy);
2. pick this round's subset of the shared pool from the shared key;
3. evaluate the model on the subset and send the probability rows to all
   neighbors;
4. average the neighbors' rows into targets and take SGD steps on the
   squared distance to those targets.

Devices share no mutable state, so steps 1, 3 and 4 may run on a thread pool.
Every cross-device reduction is done sequentially in ascending neighbor order,
which keeps results bitwise identical for any thread count.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import nn
from .data import Dataset
from .nn import Model
from .prng import SplitMix64, round_seed, select_subset, stream_seed
from .schedule import ConstantSchedule, DccrSchedule
from .topology import Graph, is_connected, neighbors

log = logging.getLogger(__name__)

# auxiliary stream tags; all >= 2**32 so they never collide with round indices
TAG_INIT = (1 << 32) + 1
TAG_SHUFFLE = (1 << 32) + 2
TAG_PROBE = (1 << 32) + 3


class ProtocolError(RuntimeError):
    """Devices disagreed on something the protocol requires them to share."""


@dataclass(frozen=True)
class DeviceState:
    id: int
    model: Model
    local_data: Dataset
    prng_state: int


@dataclass(frozen=True)
class RoundMessage:
    sender: int
    round: int
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError("message values must be a matrix")
        if v.shape[0] and not np.all(np.abs(v.sum(axis=1) - 1.0) <= 1e-9):
            raise ProtocolError(f"device {self.sender} sent rows that are not probability vectors")

    @property
    def num_values(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SimConfig:
    layer_sizes: tuple[int, ...]
    rounds: int
    schedule: DccrSchedule | ConstantSchedule
    seed: int = 0
    lr: float = 0.1
    eps: float = 0.01
    local_epochs: int = 1
    batch_size: int = 20
    distill_batch_size: int = 50
    snapshot_every: int = 10
    probe_size: int = 1000
    step_scale: str = "degree"
    include_self: bool = False
    bytes_per_value: int = 4
    lr_decay_every: int = 0
    lr_decay_factor: float = 1.0
    shared_init: bool = False
    allow_disconnected: bool = False

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.lr <= 0 or self.eps < 0:
            raise ValueError("lr must be > 0 and eps >= 0")
        if min(self.batch_size, self.distill_batch_size, self.snapshot_every, self.probe_size) < 1:
            raise ValueError("batch sizes, snapshot_every and probe_size must be >= 1")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be >= 0")
        if self.step_scale not in ("degree", "one"):
            raise ValueError("step_scale must be 'degree' or 'one'")
        if self.bytes_per_value < 1:
            raise ValueError("bytes_per_value must be >= 1")

    def lr_at(self, t: int) -> float:
        if self.lr_decay_every > 0:
            return self.lr * self.lr_decay_factor ** (t // self.lr_decay_every)
        return self.lr


@dataclass
class RoundMetrics:
    t: int
    local_loss: list
    distill_loss: list
    test_acc: list[float]
    cum_bytes: int

    def records(self) -> list[dict]:
        return [
            {
                "t": self.t,
                "device": i,
                "local_loss": self.local_loss[i],
                "distill_loss": self.distill_loss[i],
                "test_acc": self.test_acc[i],
                "cum_bytes": self.cum_bytes,
            }
            for i in range(len(self.test_acc))
        ]


@dataclass
class RunResult:
    metrics: list[RoundMetrics] = field(default_factory=list)
    # rounds completed -> array (devices, probe, Y)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    probe_indices: list[int] = field(default_factory=list)
    subsets: list[list[int]] = field(default_factory=list)
    devices: list[DeviceState] = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return self.metrics[-1].cum_bytes if self.metrics else 0

    def mean_accuracy(self) -> np.ndarray:
        return np.array([np.mean(m.test_acc) for m in self.metrics])


# ------------------------------------------------------------------ phases


def local_sgd_phase(device: DeviceState, lr: float, epochs: int,
                    batch_size: int) -> tuple[DeviceState, float | None]:
    """Shuffled minibatch SGD on the device's own shard.

    Each epoch draws a full permutation from the device stream; a trailing
    partial batch is used as is. Returns the new state and the mean
    minibatch loss (``None`` when no step was taken).
    """
    data = device.local_data
    n = len(data)
    if epochs == 0 or n == 0:
        return device, None
    if batch_size > n:
        raise ValueError(f"minibatch size {batch_size} exceeds local shard size {n}")
    rng = SplitMix64(device.prng_state)
    model = device.model
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads = nn.ce_grad(model, data.inputs[idx], data.labels[idx])
            model = nn.sgd_step(model, grads, lr)
            losses.append(loss)
    return replace(device, model=model, prng_state=rng.state), float(np.mean(losses))


def compute_distilled(device: DeviceState, shared_inputs: np.ndarray,
                      subset: Sequence[int], t: int) -> RoundMessage:
    if len(subset) == 0:
        values = np.zeros((0, device.model.num_outputs))
    else:
        values = nn.forward(device.model, shared_inputs[np.asarray(subset)])
    return RoundMessage(device.id, t, values)


def exchange(graph: Graph, messages: Sequence[RoundMessage]) -> list[list[RoundMessage]]:
    """Reliable synchronous delivery: inbox ``i`` holds the messages of ``neighbors(i)``."""
    if len(messages) != graph.num_nodes:
        raise ProtocolError("exactly one message per device is required")
    return [[messages[j] for j in neighbors(graph, i)] for i in range(graph.num_nodes)]


def aggregate_targets(inbox: Sequence[RoundMessage]) -> np.ndarray:
    """Elementwise mean of the inbox values, summed in inbox order."""
    if not inbox:
        raise ProtocolError("cannot aggregate an empty inbox")
    first = inbox[0]
    total = np.array(first.values, dtype=np.float64)
    for msg in inbox[1:]:
        if msg.round != first.round or msg.values.shape != first.values.shape:
            raise ProtocolError(
                f"message from device {msg.sender} (round {msg.round}, shape {msg.values.shape}) "
                f"is inconsistent with device {first.sender} (round {first.round}, shape {first.values.shape})"
            )
        total = total + msg.values
    return total / len(inbox)


def distill_phase(device: DeviceState, shared_rows: np.ndarray, targets: np.ndarray,
                  eps: float, degree: int, batch_size: int) -> tuple[DeviceState, float | None]:
    """SGD on the squared distance to the targets, step ``eps * degree``.

    Minibatches walk the subset in its ascending index order.
    """
    n = shared_rows.shape[0]
    if targets.shape[0] != n:
        raise ValueError(f"{n} shared rows but {targets.shape[0]} target rows")
    if n == 0:
        return device, None
    step = eps * degree
    model = device.model
    losses = []
    for start in range(0, n, batch_size):
        loss, grads = nn.distill_grad(model, shared_rows[start:start + batch_size],
                                      targets[start:start + batch_size])
        losses.append(loss)
        if step > 0:
            model = nn.sgd_step(model, grads, step)
    return replace(device, model=model), float(np.mean(losses))


def comm_bytes(t: int, schedule, num_outputs: int, graph: Graph, bytes_per_value: int = 4) -> int:
    """Network-wide bytes in round ``t``: every device sends its rows to every neighbor.

    Subset indices cost nothing because each device regenerates them.
    """
    return schedule(t) * num_outputs * bytes_per_value * 2 * graph.num_edges


# ------------------------------------------------------------------ driver


def init_devices(config: SimConfig, shards: Sequence[Dataset]) -> list[DeviceState]:
    """Per-device initial weights and shuffle stream.

    With ``shared_init`` every device takes key 0 for both, so two devices
    holding the same shard evolve identically.
    """
    devices = []
    for i, shard in enumerate(shards):
        key = 0 if config.shared_init else i
        model = nn.model_init(config.layer_sizes, SplitMix64(stream_seed(config.seed, TAG_INIT, key)))
        devices.append(DeviceState(i, model, shard, stream_seed(config.seed, TAG_SHUFFLE, key)))
    return devices


def probe_indices(config: SimConfig, shared_size: int) -> list[int]:
    return select_subset(stream_seed(config.seed, TAG_PROBE), shared_size,
                         min(config.probe_size, shared_size))


class Simulation:
    """Holds the static inputs of one run: graph, shards, shared pool, test set."""

    def __init__(self, config: SimConfig, graph: Graph, shards: Sequence[Dataset],
                 shared: Dataset, test: Dataset, threads: int = 1):
        if len(shards) != graph.num_nodes:
            raise ValueError(f"{len(shards)} shards for {graph.num_nodes} devices")
        if not is_connected(graph):
            if not config.allow_disconnected:
                raise ValueError("device graph is disconnected; set allow_disconnected to run anyway")
            log.warning("device graph is disconnected; consensus cannot span components")
        if shared.input_dim != config.layer_sizes[0] or test.input_dim != config.layer_sizes[0]:
            raise ValueError("dataset input width does not match the model input layer")
        if config.schedule(0) > len(shared) and config.rounds > 0:
            raise ValueError("schedule asks for more samples than the shared pool holds")
        self.config = config
        self.graph = graph
        self.shards = list(shards)
        self.shared = shared
        self.test = test
        self.threads = max(1, int(threads))

    def _map(self, pool, fn: Callable, items):
        if pool is None:
            return [fn(x) for x in items]
        return list(pool.map(fn, items))

    def _snapshot(self, devices: Sequence[DeviceState], probe_rows: np.ndarray) -> np.ndarray:
        return np.stack([nn.forward(d.model, probe_rows) for d in devices])

    def run(self, on_round: Callable[[RoundMetrics], None] | None = None) -> RunResult:
        cfg = self.config
        n_dev = self.graph.num_nodes
        m = len(self.shared)
        Y = cfg.layer_sizes[-1]
        nbrs = [neighbors(self.graph, i) for i in range(n_dev)]
        devices = init_devices(cfg, self.shards)

        result = RunResult()
        result.probe_indices = probe_indices(cfg, m)
        probe_rows = self.shared.inputs[np.asarray(result.probe_indices, dtype=np.int64)]
        result.snapshots[0] = self._snapshot(devices, probe_rows)

        pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        cum_bytes = 0
        try:
            for t in range(cfg.rounds):
                lr = cfg.lr_at(t)
                local = self._map(pool, lambda d: local_sgd_phase(d, lr, cfg.local_epochs, cfg.batch_size), devices)
                devices = [d for d, _ in local]
                local_losses = [loss for _, loss in local]

                # every device derives the subset on its own from the shared key
                count = cfg.schedule(t)
                key = round_seed(cfg.seed, t)
                selections = [select_subset(key, m, count) for _ in range(n_dev)]
                subset = selections[0]
                if any(s != subset for s in selections[1:]):
                    raise ProtocolError(f"devices selected different subsets in round {t}")
                result.subsets.append(subset)
                rows = self.shared.inputs[np.asarray(subset, dtype=np.int64)] if count else \
                    np.zeros((0, self.shared.input_dim))

                messages = self._map(pool, lambda d: compute_distilled(d, self.shared.inputs, subset, t), devices)
                inboxes = exchange(self.graph, messages)
                cum_bytes += sum(msg.num_values for inbox in inboxes for msg in inbox) * cfg.bytes_per_value

                def distill(i):
                    inbox = list(inboxes[i])
                    if not inbox:
                        return devices[i], None
                    if cfg.include_self:
                        inbox = sorted(inbox + [messages[i]], key=lambda msg: msg.sender)
                    targets = aggregate_targets(inbox)
                    degree = len(nbrs[i]) if cfg.step_scale == "degree" else 1
                    return distill_phase(devices[i], rows, targets, cfg.eps, degree, cfg.distill_batch_size)

                distilled = self._map(pool, distill, range(n_dev))
                devices = [d for d, _ in distilled]
                accs = self._map(pool, lambda d: nn.accuracy(d.model, self.test.inputs, self.test.labels), devices)

                metrics = RoundMetrics(t, local_losses, [loss for _, loss in distilled], accs, cum_bytes)
                result.metrics.append(metrics)
                if on_round is not None:
                    on_round(metrics)

                done = t + 1
                if done % cfg.snapshot_every == 0 or done == cfg.rounds:
                    result.snapshots[done] = self._snapshot(devices, probe_rows)
        finally:
            if pool is not None:
                pool.shutdown()
        result.devices = devices
        return result
