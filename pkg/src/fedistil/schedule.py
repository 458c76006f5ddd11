"""How many shared samples are distilled in round ``t``.

The growing schedule starts at ``d`` samples and adds ``d`` more every
``tau`` rounds, capped at the size of the shared pool. Constant schedules
use a fixed fraction of the pool every round; ``fraction=1`` is the
use-everything baseline.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal


@dataclass(frozen=True)
class DccrSchedule:
    d: int
    tau: int
    cap: int

    def __post_init__(self):
        if self.d < 1 or self.tau < 1 or self.cap < 1:
            raise ValueError("d, tau and cap must all be >= 1")
        if self.d > self.cap:
            raise ValueError(f"d={self.d} exceeds the shared pool size {self.cap}")

    def __call__(self, t: int) -> int:
        return n_d(self, t)


@dataclass(frozen=True)
class ConstantSchedule:
    count: int

    def __call__(self, t: int) -> int:
        return self.count


def n_d(schedule: DccrSchedule, t: int) -> int:
    """``min(d * (t // tau + 1), cap)``."""
    if t < 0:
        raise ValueError("round index must be >= 0")
    return min(schedule.d * (t // schedule.tau + 1), schedule.cap)


def constant_schedule(fraction: float, cap: int) -> ConstantSchedule:
    """``fraction * cap`` rounded half-up, never below one sample."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    count = int((Decimal(repr(fraction)) * cap).to_integral_value(rounding=ROUND_HALF_UP))
    return ConstantSchedule(max(1, min(count, cap)))


def full_schedule(cap: int) -> ConstantSchedule:
    return constant_schedule(1.0, cap)


def total_samples(schedule, rounds: int) -> int:
    """Sum of the per-round counts over rounds ``0 .. rounds-1``, in closed form."""
    if rounds <= 0:
        return 0
    if isinstance(schedule, ConstantSchedule):
        return schedule.count * rounds
    d, tau, cap = schedule.d, schedule.tau, schedule.cap
    full_blocks, rest = divmod(rounds, tau)
    # blocks b < cap // d have value d * (b + 1) <= cap; later blocks sit at cap
    growing = min(full_blocks, cap // d)
    total = tau * d * growing * (growing + 1) // 2 + tau * cap * (full_blocks - growing)
    return total + rest * min(d * (full_blocks + 1), cap)
