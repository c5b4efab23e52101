"""
Firing counters and their gaps
==============================

Six nodes share a 16-slot frame.  Each runs a counter; the one that
overflows fires, and the node that fired just before it nudges its counter
toward the midpoint of its two neighbours.
"""

import numpy as np

from d3sync.counter_sim import CounterFrame, advance_to_next_firing, apply_firing_update, gaps_of, step
from d3sync.ring import is_tdm

frame = CounterFrame.from_counters([13, 14, 16, 4, 5, 10], levels=16)
print("counters:", frame.counters.tolist(), " gaps:", gaps_of(frame).gaps)

# Node 3 (index 2) is at overflow and fires first
firer, elapsed = advance_to_next_firing(frame)
print(f"node {firer + 1} fires after {elapsed} slots")

# Its follower (node 4, counter 4) moves toward 0.2*4 + 0.4*5 = 2.8
event = apply_firing_update(frame, firer, alpha=0.2, rng=np.random.default_rng(1))
print(f"node {event.updated_node + 1}: {event.old_counter} -> {event.new_counter}")

# Keep going until every node owns 2 or 3 slots (16 = 2*6 + 4)
rng = np.random.default_rng(2)
events = 1
while not is_tdm(gaps_of(frame)):
    step(frame, 0.2, rng)
    events += 1
print(f"TDM after {events} firings: gaps {gaps_of(frame).gaps}")
