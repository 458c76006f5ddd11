"""Bit-exact SplitMix64 streams shared by every simulated device.

Devices never exchange the indices of the distillation subset. They each
rebuild it from a common 64-bit key, so the generator must produce the same
sequence on every platform and in every language. All arithmetic below is
unsigned 64-bit wrapping arithmetic plus shifts.

Two views of the same generator are provided:

* pure functions (``next_u64``, ``next_f64``) that take and return the state
  as a plain integer;
* :class:`SplitMix64`, a small stream object for callers that draw many
  values. Its vectorized draws are bit-identical to repeated scalar calls
  because the SplitMix64 state is a counter: the k-th state is
  ``seed + k * GAMMA mod 2**64``.
"""
from __future__ import annotations

import functools

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_F64_SCALE = 2.0**-53


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _MUL2) & MASK64
    return z ^ (z >> 31)


def next_u64(state: int) -> tuple[int, int]:
    """Advance ``state`` once and return ``(value, new_state)``."""
    state = (state + GAMMA) & MASK64
    return _mix(state), state


def next_f64(state: int) -> tuple[float, int]:
    """Uniform double in [0, 1) built from the top 53 bits of one u64 draw."""
    value, state = next_u64(state)
    return (value >> 11) * _F64_SCALE, state


def round_seed(global_seed: int, t: int) -> int:
    """Per-round key derived from the single shared key.

    The first output of the stream started at
    ``global_seed XOR (t * GAMMA mod 2**64)``.
    """
    state = (global_seed ^ ((t * GAMMA) & MASK64)) & MASK64
    return next_u64(state)[0]


def stream_seed(global_seed: int, tag: int, index: int = 0) -> int:
    """Key for an auxiliary stream (data generation, device shuffles, ...).

    Tags are kept at or above ``2**32`` so they never coincide with a round
    index fed to :func:`round_seed`.
    """
    return round_seed(round_seed(global_seed, tag), index)


def parse_seed(text: str | int) -> int:
    """Accept a decimal or 0x-prefixed hex seed and check it fits in u64."""
    if isinstance(text, bool):
        raise ValueError("seed must be an integer, not a boolean")
    if isinstance(text, int):
        value = text
    else:
        text = text.strip().lower()
        value = int(text, 16) if text.startswith("0x") else int(text, 10)
    if not 0 <= value <= MASK64:
        raise ValueError(f"seed {value} is outside the unsigned 64-bit range")
    return value


@functools.lru_cache(maxsize=64)
def _gamma_steps(n: int) -> np.ndarray:
    """``k * GAMMA mod 2**64`` for ``k = 1..n``: the state offsets of the next ``n`` draws."""
    out = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GAMMA)
    out.flags.writeable = False
    return out


@functools.lru_cache(maxsize=64)
def _fy_bounds(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Spans ``m - i`` and slot numbers ``i`` for an ``n``-step partial shuffle."""
    spans = np.arange(m, m - n, -1, dtype=np.uint64)
    slots = np.arange(n, dtype=np.uint64)
    spans.flags.writeable = slots.flags.writeable = False
    return spans, slots


_U30, _U27, _U31 = np.uint64(30), np.uint64(27), np.uint64(31)
_UMUL1, _UMUL2 = np.uint64(_MUL1), np.uint64(_MUL2)


def _mix_array(z: np.ndarray) -> np.ndarray:
    """Vectorised :func:`_mix`; overwrites and returns ``z``."""
    t = z >> _U30
    z ^= t
    z *= _UMUL1
    np.right_shift(z, _U27, out=t)
    z ^= t
    z *= _UMUL2
    np.right_shift(z, _U31, out=t)
    z ^= t
    return z


class SplitMix64:
    """A mutable SplitMix64 stream.

    The object owns nothing but its 64-bit state; ``copy()`` forks an
    independent stream at the current position.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def __repr__(self) -> str:
        return f"SplitMix64(state=0x{self.state:016X})"

    def copy(self) -> "SplitMix64":
        return SplitMix64(self.state)

    def u64(self) -> int:
        value, self.state = next_u64(self.state)
        return value

    def f64(self) -> float:
        value, self.state = next_f64(self.state)
        return value

    def u64_array(self, n: int) -> np.ndarray:
        """The next ``n`` outputs as a uint64 array (same values as ``n`` scalar draws)."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return np.zeros(0, dtype=np.uint64)
        # array uint64 arithmetic wraps silently, so no errstate guard is needed
        out = _mix_array(_gamma_steps(n) + np.uint64(self.state))
        self.state = (self.state + n * GAMMA) & MASK64
        return out

    def f64_array(self, n: int) -> np.ndarray:
        return (self.u64_array(n) >> np.uint64(11)).astype(np.float64) * _F64_SCALE

    def normal_array(self, n: int) -> np.ndarray:
        """Standard normal draws via Box-Muller, cosine branch only.

        Each value consumes exactly two u64 draws: ``u1`` then ``u2`` from
        consecutive positions. ``1 - u1`` lies in (0, 1] so the log is finite.
        """
        u = self.f64_array(2 * n).reshape(n, 2)
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        return radius * np.cos(2.0 * np.pi * u[:, 1])

    def uniform_array(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.f64_array(n)

    def permutation(self, m: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(m)``; consumes ``m`` draws."""
        return np.asarray(sample_indices(self, m, m), dtype=np.int64)


def sample_indices(stream: SplitMix64, m: int, n: int) -> list[int]:
    """First ``n`` slots of a partial Fisher-Yates shuffle of ``range(m)``.

    Consumes ``n`` draws. Slot ``i`` swaps with ``i + (draw mod (m - i))``;
    the modulo bias is at most ``m / 2**64``.
    """
    if n > m:
        raise ValueError(f"cannot select {n} samples from a pool of {m}")
    if n == 0:
        return []
    spans, slots = _fy_bounds(m, n)
    draws = stream.u64_array(n)
    np.remainder(draws, spans, out=draws)
    draws += slots
    targets = draws.tolist()
    a = list(range(m))
    for i, j in enumerate(targets):
        a[i], a[j] = a[j], a[i]
    del a[n:]
    return a


def select_subset(seed: int, m: int, n: int) -> list[int]:
    """Pick ``n`` distinct indices from ``range(m)``, returned in ascending order.

    Partial Fisher-Yates over a fresh stream seeded with ``seed``. Any two
    callers holding the same ``(seed, m, n)`` get the same list, which is what
    lets devices agree on the subset without exchanging it.
    """
    if n < 0 or m < 0:
        raise ValueError("pool size and count must be non-negative")
    if n > m:
        raise ValueError(f"cannot select {n} samples from a pool of {m}")
    if n == m:
        # sorting a full permutation always yields the identity
        return list(range(m))
    return sorted(sample_indices(SplitMix64(seed), m, n))
