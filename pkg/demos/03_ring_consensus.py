"""
The equivalent ring process
===========================

In the gap domain the protocol is a consensus process on a ring whose
active edge steps backwards once per firing.  Each interaction is labelled
by how it changed the active pair; the Lyapunov value falls only when the
pair difference shrinks.
"""

import numpy as np

from d3sync.ring import GapVector, Outcome, RingState, interact, is_tdm, lyapunov, range_of, run_uniform_variant

rng = np.random.default_rng(3)
state = RingState(GapVector([1, 1, 2, 12, 3, 1]), active_edge=0)
print(f"start {state.gaps.gaps}  V = {lyapunov(state):.2f}  range = {range_of(state)}")

while not is_tdm(state):
    before = lyapunov(state)
    state, out = interact(state, 0.2, rng)
    if out.kind is Outcome.COMPRESSION:
        print(f"step {state.step:3d}: edge {out.edge} {out.before} -> {out.after}  "
              f"V {before:.2f} -> {lyapunov(state):.2f}")
print(f"absorbed into {state.gaps.gaps} after {state.step} interactions")

# Without dither, rounding can freeze a ring that is not TDM
stuck = run_uniform_variant(RingState([1, 2, 3, 2], 0), alpha=0.5, steps=1000)
print(f"uniform rounding from (1, 2, 3, 2): {stuck.gaps.gaps}, TDM = {is_tdm(stuck)}")
