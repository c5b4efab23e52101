"""Quantizers on the slot grid and the exact two-point interaction kernel.

Dithered quantization rounds a real value to one of its two neighbouring
grid levels, picking each with probability proportional to proximity, so the
result is unbiased.  Because one interaction on the ring only ever quantizes a
scaled integer gap difference, its outcome law depends on nothing but that
integer difference and ``alpha``; :func:`interaction_distribution` returns it
in closed form and is the sampling kernel used everywhere else in the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SlotGrid",
    "DitherSample",
    "dither_distribution",
    "dither_quantize",
    "dither_sample",
    "dither_levels",
    "uniform_quantize",
    "interaction_distribution",
    "uniform_interaction",
    "sample_two_point",
    "check_alpha",
]

# Fractional parts closer than this to 0 or 1 are treated as grid points.
SNAP_TOL = 1e-12


@dataclass(frozen=True)
class SlotGrid:
    """Grid ``{0, delta, ..., (levels - 1) * delta}``."""

    delta: float = 1.0
    levels: int = 1

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta!r}")
        if int(self.levels) != self.levels or self.levels < 1:
            raise ValueError(f"levels must be a positive integer, got {self.levels!r}")

    def tau(self, j: int) -> float:
        return j * self.delta


@dataclass(frozen=True)
class DitherSample:
    """One literal draw of the dithered quantizer."""

    input: float
    output_level: int
    dither: float


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha!r}")
    return alpha


def _check_finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x!r}")
    return x


def _split(t: float) -> tuple[int, float]:
    """Integer part and fractional part of ``t`` with grid-point snapping."""
    j = math.floor(t)
    p = t - j
    if p < SNAP_TOL:
        return j, 0.0
    if p > 1.0 - SNAP_TOL:
        return j + 1, 0.0
    return j, p


def dither_distribution(x: float, grid: SlotGrid) -> list[tuple[int, float]]:
    """Exact law of the dithered quantizer at ``x`` as ``[(level, prob), ...]``.

    For ``tau_j <= x < tau_{j+1}`` the result is level ``j`` with probability
    ``1 - (x - tau_j) / delta`` and level ``j + 1`` with the remainder.  Levels
    are listed in increasing order.  Inputs beyond the ends of the grid
    quantize to the nearest end level.
    """
    x = _check_finite(x)
    top = grid.levels - 1
    t = x / grid.delta
    if t <= 0.0:
        return [(0, 1.0)]
    if t >= top:
        return [(top, 1.0)]
    j, p = _split(t)
    if p == 0.0:
        return [(j, 1.0)]
    return [(j, 1.0 - p), (j + 1, p)]


def sample_two_point(dist: list[tuple[int, float]], u: float) -> int:
    """Draw from a law with at most two support points using one uniform ``u``.

    The larger value is chosen iff ``u < P(larger)``.  Every sampler in the
    package uses this rule so that two processes fed the same uniforms make
    the same choices (the counter and ring simulations rely on this).
    """
    if len(dist) == 1:
        return dist[0][0]
    (lo, _), (hi, p_hi) = dist
    return hi if u < p_hi else lo


def dither_quantize(x: float, grid: SlotGrid, rng: np.random.Generator) -> int:
    """Dithered quantization of ``x``; returns the grid level index.

    Samples the exact two-point law with a single uniform draw.
    """
    return sample_two_point(dither_distribution(x, grid), rng.random())


def dither_sample(x: float, grid: SlotGrid, rng: np.random.Generator) -> DitherSample:
    """Literal dithered quantization: add ``v ~ U(-delta/2, delta/2)``, round.

    Kept only to cross-check :func:`dither_distribution` against the textbook
    construction.
    """
    x = _check_finite(x)
    v = (rng.random() - 0.5) * grid.delta
    level = math.floor((x + v) / grid.delta + 0.5)
    level = min(max(level, 0), grid.levels - 1)
    return DitherSample(input=x, output_level=int(level), dither=v)


def dither_levels(x: float, grid: SlotGrid, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent literal dithered quantizations of ``x`` (level indices).

    Same construction and stream usage as repeated :func:`dither_sample`.
    """
    x = _check_finite(x)
    v = (rng.random(size) - 0.5) * grid.delta
    level = np.floor((x + v) / grid.delta + 0.5).astype(np.int64)
    return np.clip(level, 0, grid.levels - 1)


def uniform_quantize(x: float, grid: SlotGrid) -> int:
    """Nearest grid level; exact half-way ties go toward +inf."""
    x = _check_finite(x)
    level = math.floor(x / grid.delta + 0.5)
    return int(min(max(level, 0), grid.levels - 1))


def interaction_distribution(d: int, alpha: float) -> list[tuple[int, float]]:
    """Law of ``k = g_i' - g_{i+1}`` for one interaction with difference ``d``.

    Parameters
    ----------
    d : int
        Gap difference ``g_i - g_{i+1}`` on the active edge, in slots.
    alpha : float
        Update inertia in ``(0, 1)``.

    Returns
    -------
    list of (k, p)
        At most two outcomes in increasing ``k``.  The new difference is
        ``2k - d``.  For ``d > 0`` with ``c = (1 + alpha) d / 2``,
        ``k = floor(c)`` w.p. ``1 - frac(c)`` and ``floor(c) + 1`` w.p.
        ``frac(c)``; negative ``d`` is the mirror image.
    """
    alpha = check_alpha(alpha)
    d = int(d)
    if d == 0:
        return [(0, 1.0)]
    c = (1.0 + alpha) * abs(d) / 2.0
    m, p = _split(c)
    p = min(max(p, 0.0), 1.0)
    if p == 0.0:
        return [(m if d > 0 else -m, 1.0)]
    if d > 0:
        return [(m, 1.0 - p), (m + 1, p)]
    return [(-(m + 1), p), (-m, 1.0 - p)]


def uniform_interaction(d: int, alpha: float) -> int:
    """Deterministic ``k`` when the dither is replaced by nearest rounding."""
    alpha = check_alpha(alpha)
    # the tolerance keeps float error from turning an exact tie into a round-down
    return math.floor((1.0 + alpha) * int(d) / 2.0 + 0.5 + SNAP_TOL)
