"""
Monte Carlo experiments
=======================

Random starts are compared with the global bound, and worst-case starts
with the closed form.  Trials are reproducible from the seed alone.
"""

from d3sync.harness import ExperimentConfig, post_absorption_probe, run_experiment
from d3sync.markov import tbar_closed_form

# Random initial counters, ten nodes
for L in (20, 40, 60):
    s = run_experiment(ExperimentConfig(10, L, 0.2, trials=2000, seed=1), keep_records=False)
    print(f"L = {L}: mean {s.mean:7.1f} +- {s.stderr:4.1f}  max {s.max:5d}  bound {s.bound_eq13:9.0f}")

# Worst-case starts, cycling through all N(N-1) placements
for N in (4, 8):
    c = ExperimentConfig(N, 2 * N, 0.5, trials=N * (N - 1) * 200, seed=2, init_mode="worst-case")
    s = run_experiment(c, keep_records=False)
    print(f"N = {N}: mean {s.mean:.2f} +- {s.stderr:.2f}, closed form {tbar_closed_form(N, 0.5):.2f}")

# After absorption with L not divisible by N, the network keeps moving among TDM states
probe = post_absorption_probe(ExperimentConfig(6, 57, 0.2, seed=3), rounds=100)
print(f"L = 57: absorbed after {probe.absorbed_at} interactions, then visited {probe.distinct_tdm_states} TDM states")
