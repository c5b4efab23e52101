"""Event-driven simulation of the absolute-counter protocol.

Each node runs a modular counter on the slot grid.  The node whose counter
overflows fires and resets; the single node that fired just before it (its
follower in time) then moves its own counter toward the midpoint of its two
time-neighbours and dither-quantizes the result back onto the grid.  Counters
all share one rising edge, so the simulation jumps straight from one overflow
to the next.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .quantizer import SlotGrid, check_alpha, dither_distribution, sample_two_point
from .ring import GapVector, RingState

__all__ = [
    "CollisionError",
    "CounterFrame",
    "FiringEvent",
    "advance_to_next_firing",
    "apply_firing_update",
    "step",
    "run_events",
    "gaps_of",
    "follower_of",
    "cyclic_order",
    "ring_state_of",
]


class CollisionError(ValueError):
    """Two nodes hold the same counter value."""


def _distinct_mod(counters: np.ndarray, levels: int) -> bool:
    return len(np.unique(counters % levels)) == len(counters)


@dataclass
class CounterFrame:
    """Counters of ``N`` nodes, in slots.

    ``counters[v]`` lies in ``0..L``; the value ``L`` stands for a counter that
    is exactly at overflow (it is congruent to 0 but has not fired yet).
    ``order`` fixes the labelling of the gap ring: it lists node labels in
    increasing cyclic counter order starting from node 0 and is set once at
    construction, since firing order never changes.
    """

    counters: np.ndarray
    grid: SlotGrid
    clock: int = 0
    time: int = 0
    order: tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.counters = np.array(self.counters, dtype=np.int64)
        n = len(self.counters)
        L = self.grid.levels
        if n < 2:
            raise ValueError("need at least two nodes")
        if n > L:
            raise ValueError(f"{n} nodes cannot share {L} slots")
        if self.counters.min() < 0 or self.counters.max() > L:
            raise ValueError(f"counters must lie in 0..{L}")
        if not _distinct_mod(self.counters, L):
            raise CollisionError(f"duplicate counters {self.counters.tolist()}")
        if not self.order:
            self.order = cyclic_order(self.counters, L)

    @classmethod
    def from_counters(cls, counters: Sequence[int], levels: int) -> "CounterFrame":
        return cls(np.asarray(counters), SlotGrid(1.0, levels))

    @classmethod
    def random(cls, n: int, levels: int, rng: np.random.Generator) -> "CounterFrame":
        """Distinct counters drawn uniformly without replacement."""
        return cls(rng.choice(levels, size=n, replace=False), SlotGrid(1.0, levels))

    @property
    def n(self) -> int:
        return len(self.counters)

    @property
    def levels(self) -> int:
        return self.grid.levels


@dataclass(frozen=True)
class FiringEvent:
    firer: int
    time: int
    updated_node: int
    old_counter: int
    new_counter: int


def cyclic_order(counters: np.ndarray, levels: int) -> tuple[int, ...]:
    """Node labels by increasing counter (mod ``levels``), rotated to start at node 0."""
    c = np.asarray(counters) % levels
    ranked = [int(v) for v in np.argsort(c, kind="stable")]
    k = ranked.index(0)
    return tuple(ranked[k:] + ranked[:k])


def gaps_of(frame: CounterFrame) -> GapVector:
    """Gaps ``(psi_v - psi_prev(v)) mod L`` listed in ``frame.order``."""
    L = frame.levels
    c = frame.counters % L
    if not _distinct_mod(c, L):
        raise CollisionError(f"duplicate counters {frame.counters.tolist()}")
    order = frame.order
    n = len(order)
    return GapVector([int((c[order[p]] - c[order[p - 1]]) % L) for p in range(n)])


def _check_order(frame: CounterFrame) -> None:
    if cyclic_order(frame.counters, frame.levels) != frame.order:
        raise AssertionError("cyclic firing order changed")


def advance_to_next_firing(frame: CounterFrame) -> tuple[int, int]:
    """Jump to the next overflow; the firer's counter is reset to 0.

    Returns ``(firer, elapsed)`` where ``elapsed = L - max(counters)``.
    """
    c = frame.counters
    top = c.max()
    hits = np.flatnonzero(c == top)
    if len(hits) != 1 or not _distinct_mod(c, frame.levels):
        raise CollisionError(f"collision among counters {c.tolist()}")
    firer = int(hits[0])
    elapsed = int(frame.levels - top)
    c += elapsed
    c[firer] = 0
    frame.time += elapsed
    return firer, elapsed


def follower_of(frame: CounterFrame, firer: int) -> int:
    """Node whose own firing came right before ``firer``'s (lowest positive counter)."""
    c = frame.counters.astype(float)
    c[firer] = np.inf
    return int(np.argmin(c))


def _next_counter_above(frame: CounterFrame, node: int) -> int:
    """Counter of the node fired just before ``node``, unwrapped above it."""
    c = frame.counters
    L = frame.levels
    diff = (c - c[node]) % L
    diff[node] = L + 1
    nxt = int(np.argmin(diff))
    return int(c[node] + (diff[nxt] if diff[nxt] > 0 else L))


def apply_firing_update(
    frame: CounterFrame, firer: int, alpha: float, rng: np.random.Generator | float
) -> FiringEvent:
    """Follower update after ``firer`` has fired and reset.

    The follower ``i`` sets ``psi_i <- Q(alpha psi_i + (1 - alpha)/2 psi_{i+1})``
    with the dithered quantizer ``Q``; ``psi_{i-1} = 0`` since the firer just
    reset.  ``rng`` may also be a ready-made uniform variate.
    """
    alpha = check_alpha(alpha)
    if frame.counters[firer] != 0:
        raise ValueError(f"node {firer} has not just fired (counter {frame.counters[firer]})")
    i = follower_of(frame, firer)
    old = int(frame.counters[i])
    upper = _next_counter_above(frame, i)
    interim = alpha * old + (1.0 - alpha) / 2.0 * upper
    u = rng if isinstance(rng, float) else rng.random()
    grid = SlotGrid(frame.grid.delta, frame.levels + 1)
    new = sample_two_point(dither_distribution(interim, grid), u)
    frame.counters[i] = new
    frame.clock += 1
    return FiringEvent(firer=firer, time=frame.time, updated_node=i, old_counter=old, new_counter=new)


def step(frame: CounterFrame, alpha: float, rng) -> FiringEvent:
    """Advance to the next overflow and apply the follower update."""
    firer, _ = advance_to_next_firing(frame)
    return apply_firing_update(frame, firer, alpha, rng)


def run_events(
    frame: CounterFrame, alpha: float, rng: np.random.Generator, events: int, check_order: bool = True
) -> Iterator[FiringEvent]:
    for _ in range(events):
        ev = step(frame, alpha, rng)
        if check_order:
            _check_order(frame)
        yield ev


def ring_state_of(frame: CounterFrame) -> RingState:
    """Gap-domain state matching the frame, with the edge the next firing activates.

    Must be called at a point where the next overflow is unambiguous.
    """
    c = frame.counters
    firer = int(np.argmax(c))
    # the follower of the next firer is its successor in cyclic order
    pos = frame.order.index(firer)
    follower = frame.order[(pos + 1) % frame.n]
    return RingState(gaps_of(frame), frame.order.index(follower), 0)
