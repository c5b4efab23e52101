"""Slot-grid TDMA desynchronization with dithered updates: simulation and absorption-time analysis."""

__version__ = "0.1.0"

from .quantizer import (
    SlotGrid,
    dither_quantize,
    interaction_distribution,
    uniform_quantize,
)
from .ring import (
    GapVector,
    Outcome,
    RingState,
    classify,
    count_tdm_states,
    interact,
    is_tdm,
    lyapunov,
    range_of,
    run_uniform_variant,
)
from .counter_sim import CollisionError, CounterFrame, advance_to_next_firing, apply_firing_update, gaps_of
from .markov import (
    absorption_solve,
    absorption_upper_bound,
    build_outlier_chain,
    recursion_check,
    tbar_closed_form,
    worst_case_gap_vector,
)
from .harness import ExperimentConfig, post_absorption_probe, run_experiment, run_trial
