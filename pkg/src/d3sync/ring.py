"""Gap-domain process: values on a ring with a rotating active edge.

The state is the vector of integer slot gaps between consecutive firings.  At
every event the two gaps joined by the active edge interact, keeping their
sum, and the edge then steps one position counter-clockwise (index minus one).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .quantizer import (
    check_alpha,
    interaction_distribution,
    sample_two_point,
    uniform_interaction,
)

__all__ = [
    "GapVector",
    "RingState",
    "Outcome",
    "InteractionOutcome",
    "interact",
    "interact_u",
    "uniform_interact",
    "run_uniform_variant",
    "trajectory",
    "classify",
    "is_tdm",
    "count_tdm_states",
    "range_of",
    "lyapunov",
    "sum_of_squares",
    "check_step",
]


@dataclass(frozen=True)
class GapVector:
    """Positive integer gaps (in slots) around the ring; they sum to ``L``."""

    gaps: tuple[int, ...]

    def __init__(self, gaps: Sequence[int]):
        values = tuple(int(g) for g in gaps)
        if len(values) < 2:
            raise ValueError("a ring needs at least two gaps")
        if any(g != v for g, v in zip(gaps, values)):
            raise ValueError(f"gaps must be integers, got {list(gaps)!r}")
        if min(values) < 1:
            raise ValueError(f"every gap must be at least one slot, got {values!r}")
        object.__setattr__(self, "gaps", values)

    def __len__(self) -> int:
        return len(self.gaps)

    def __iter__(self):
        return iter(self.gaps)

    def __getitem__(self, i):
        return self.gaps[i]

    @property
    def n(self) -> int:
        return len(self.gaps)

    @property
    def total(self) -> int:
        return sum(self.gaps)

    @property
    def ell(self) -> int:
        return self.total // self.n

    @property
    def r(self) -> int:
        return self.total % self.n

    def as_array(self) -> np.ndarray:
        return np.asarray(self.gaps, dtype=np.int64)


@dataclass(frozen=True)
class RingState:
    """Gap vector plus the active edge ``(v_e, v_{e+1})`` (0-based ``e``)."""

    gaps: GapVector
    active_edge: int = 0
    step: int = 0

    def __post_init__(self):
        if not isinstance(self.gaps, GapVector):
            object.__setattr__(self, "gaps", GapVector(self.gaps))
        object.__setattr__(self, "active_edge", int(self.active_edge) % self.gaps.n)

    @property
    def n(self) -> int:
        return self.gaps.n


class Outcome(str, enum.Enum):
    NULL = "null"
    SWAP = "swap"
    COMPRESSION = "compression"


@dataclass(frozen=True)
class InteractionOutcome:
    kind: Outcome
    edge: int
    before: tuple[int, int]
    after: tuple[int, int]


def classify(before: tuple[int, int], after: tuple[int, int]) -> Outcome:
    """Name the interaction that took the active pair from ``before`` to ``after``.

    Raises ``ValueError`` if the pair sum changed or the difference grew; no
    interaction can produce either.
    """
    b0, b1 = before
    a0, a1 = after
    if a0 + a1 != b0 + b1:
        raise ValueError(f"pair sum not conserved: {before} -> {after}")
    if (a0, a1) == (b0, b1):
        return Outcome.NULL
    if (a0, a1) == (b1, b0):
        return Outcome.SWAP
    if abs(a0 - a1) < abs(b0 - b1):
        return Outcome.COMPRESSION
    raise ValueError(f"pair difference increased: {before} -> {after}")


def _apply_k(state: RingState, k: int) -> tuple[RingState, InteractionOutcome]:
    g = list(state.gaps.gaps)
    n = len(g)
    i = state.active_edge
    j = (i + 1) % n
    before = (g[i], g[j])
    new_i = g[j] + k
    new_j = g[i] + g[j] - new_i
    g[i], g[j] = new_i, new_j
    kind = classify(before, (new_i, new_j))
    nxt = RingState(GapVector(g), (i - 1) % n, state.step + 1)
    return nxt, InteractionOutcome(kind, i, before, (new_i, new_j))


def interact_u(state: RingState, alpha: float, u: float) -> tuple[RingState, InteractionOutcome]:
    """One dithered interaction driven by the uniform variate ``u``."""
    g = state.gaps.gaps
    i = state.active_edge
    d = g[i] - g[(i + 1) % len(g)]
    k = sample_two_point(interaction_distribution(d, alpha), u)
    return _apply_k(state, k)


def interact(
    state: RingState, alpha: float, rng: np.random.Generator
) -> tuple[RingState, InteractionOutcome]:
    """Perform one interaction on the active edge and rotate the edge.

    The active pair ``(g_i, g_{i+1})`` becomes ``(g_{i+1} + k, g_i - k)`` with
    ``k`` drawn from :func:`~d3sync.quantizer.interaction_distribution`.
    Exactly one uniform is consumed from ``rng`` per call, whatever the pair.
    """
    return interact_u(state, alpha, rng.random())


def uniform_interact(state: RingState, alpha: float) -> tuple[RingState, InteractionOutcome]:
    """Interaction with nearest-level rounding in place of the dither."""
    g = state.gaps.gaps
    i = state.active_edge
    d = g[i] - g[(i + 1) % len(g)]
    return _apply_k(state, uniform_interaction(d, alpha))


def run_uniform_variant(state: RingState, alpha: float, steps: int = 1) -> RingState:
    """Apply ``steps`` deterministic uniform-quantizer interactions."""
    check_alpha(alpha)
    for _ in range(steps):
        state, _ = uniform_interact(state, alpha)
    return state


def trajectory(
    state: RingState, alpha: float, rng: np.random.Generator
) -> Iterator[tuple[RingState, InteractionOutcome]]:
    """Endless stream of ``(next_state, outcome)`` pairs."""
    check_alpha(alpha)
    while True:
        state, outcome = interact(state, alpha, rng)
        yield state, outcome


def _values(g) -> tuple[int, ...]:
    if isinstance(g, RingState):
        return g.gaps.gaps
    if isinstance(g, GapVector):
        return g.gaps
    return tuple(int(v) for v in g)


def range_of(g) -> int:
    v = _values(g)
    return max(v) - min(v)


def is_tdm(g) -> bool:
    """True when every gap is ``ell`` or ``ell + 1``."""
    return range_of(g) <= 1


def count_tdm_states(n: int, total: int) -> int:
    """Number of distinct TDM gap vectors for ``n`` nodes and ``total`` slots."""
    if n < 1 or total < n:
        raise ValueError(f"need 1 <= n <= total, got n={n}, total={total}")
    return math.comb(n, total % n)


def sum_of_squares(g) -> int:
    return sum(v * v for v in _values(g))


def lyapunov(g) -> float:
    """Squared distance of the gaps from their mean, in slot units."""
    v = _values(g)
    total = sum(v)
    return sum_of_squares(v) - total * total / len(v)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise AssertionError(msg)


def check_step(before: RingState, after: RingState, outcome: InteractionOutcome) -> None:
    """Check the per-interaction invariants; raises ``AssertionError`` on failure.

    Conservation of the total, the one-slot floor, contraction of the active
    pair, monotone range, and the Lyapunov step law (unchanged on null/swap,
    down by at least 2 on compression).
    """
    g0, g1 = before.gaps.gaps, after.gaps.gaps
    b, a = outcome.before, outcome.after
    _require(sum(g1) == sum(g0), f"total changed: {g0} -> {g1}")
    _require(min(g1) >= 1, f"gap below one slot: {g1}")
    _require(abs(a[0] - a[1]) <= abs(b[0] - b[1]), f"pair expanded: {b} -> {a}")
    _require(range_of(g1) <= range_of(g0), f"range grew: {g0} -> {g1}")
    drop = sum_of_squares(g0) - sum_of_squares(g1)
    if outcome.kind is Outcome.COMPRESSION:
        _require(drop >= 2, f"compression lowered V by {drop}")
    else:
        _require(drop == 0, f"{outcome.kind.value} changed V by {-drop}")
    _require(after.active_edge == (before.active_edge - 1) % before.n, "edge did not rotate")
