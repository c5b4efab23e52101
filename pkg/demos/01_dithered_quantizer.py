"""
Dithered quantization on the slot grid
======================================

Adding uniform dither before rounding turns a deterministic quantizer into
an unbiased one.  Here we sample it, then look at the two-point law that
governs a single interaction between neighbouring gaps.
"""

import numpy as np

from d3sync.quantizer import SlotGrid, dither_levels, dither_quantize, interaction_distribution, uniform_quantize

grid = SlotGrid(delta=1.0, levels=16)
rng = np.random.default_rng(0)

# A point a quarter of the way from level 5 to level 6
x = 5.25
draws = np.array([dither_quantize(x, grid, rng) for _ in range(50_000)])
print(f"x = {x}: P(5) = {np.mean(draws == 5):.3f}, P(6) = {np.mean(draws == 6):.3f}, mean = {draws.mean():.4f}")

# The literal construction (add v ~ U(-1/2, 1/2), round) agrees
literal = dither_levels(x, grid, rng, 50_000)
print(f"literal dither: P(5) = {np.mean(literal == 5):.3f}")

# Plain rounding always returns the same level, so it is biased
print(f"uniform quantizer: {uniform_quantize(x, grid)}")

# One interaction: the difference d between two gaps is shrunk by (1 + alpha)/2
# and dithered; k is how much of the pair the first gap keeps beyond its partner
for d in (1, 2, 3, 6):
    law = ", ".join(f"k={k}: {p:.2f}" for k, p in interaction_distribution(d, 0.2))
    print(f"d = {d}, alpha = 0.2 -> {law}")
