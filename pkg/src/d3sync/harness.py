"""Monte Carlo runs to absorption, summary statistics, and figure presets.

Every trial owns an independent random stream derived from the master seed
and the trial's key::

    np.random.SeedSequence(seed, spawn_key=stream_key + (trial_index,))

so a trial's outcome depends only on ``(config, trial_index)``, never on how
trials are batched or scheduled.  A trial consumes its stream in a fixed
order: first the initial counters (random mode only), then exactly one
uniform per interaction.

Two execution paths produce identical records: :func:`run_trial` steps one
trial through :func:`d3sync.ring.interact`, and :func:`run_batch` advances
many trials at once with numpy.  ``run_experiment`` uses the batch path
unless trajectories are requested.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import counter_sim
from .markov import OutlierChainState, absorption_upper_bound, placement, tbar_closed_form
from .quantizer import SNAP_TOL, check_alpha
from .ring import (
    GapVector,
    Outcome,
    RingState,
    check_step,
    count_tdm_states,
    interact,
    is_tdm,
    lyapunov,
    range_of,
)

__all__ = [
    "INIT_MODES",
    "ExperimentConfig",
    "TrialRecord",
    "ExperimentSummary",
    "ProbeResult",
    "Fig4Result",
    "stream",
    "default_cap",
    "initial_state",
    "run_trial",
    "run_batch",
    "run_experiment",
    "run_sweep",
    "summarize",
    "post_absorption_probe",
    "fig4",
    "fig5a_configs",
    "fig5b_configs",
    "fig5a",
    "fig5b",
]

INIT_MODES = ("random", "worst-case", "explicit")


def stream(seed: int, key: Sequence[int]) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def default_cap(n_nodes: int, n_slots: int, alpha: float) -> int:
    """Ten times the worst-case expected absorption bound, at least 1."""
    return max(1, math.ceil(10 * absorption_upper_bound(n_nodes, n_slots, alpha)))


@dataclass(frozen=True)
class ExperimentConfig:
    n_nodes: int
    n_slots: int
    alpha: float
    trials: int = 1
    seed: int = 0
    max_interactions: int | None = None
    init_mode: str = "random"
    initial_gaps: tuple[int, ...] | None = None
    initial_edge: int = 0
    record_trajectory: bool = False
    stream_key: tuple[int, ...] = ()

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.n_nodes < 2:
            raise ValueError("need at least two nodes")
        if self.n_nodes > self.n_slots:
            raise ValueError(f"N={self.n_nodes} exceeds L={self.n_slots}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.max_interactions is not None and self.max_interactions < 1:
            raise ValueError("max_interactions must be >= 1")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.init_mode == "worst-case":
            if self.n_slots % self.n_nodes or self.n_slots // self.n_nodes < 2:
                raise ValueError("worst-case mode needs L = ell * N with ell >= 2")
            if self.n_nodes < 3:
                raise ValueError("worst-case mode needs N >= 3")
        if self.init_mode == "explicit":
            if self.initial_gaps is None:
                raise ValueError("explicit mode needs initial_gaps")
            gv = GapVector(self.initial_gaps)
            if gv.n != self.n_nodes or gv.total != self.n_slots:
                raise ValueError("initial_gaps must have N entries summing to L")
            object.__setattr__(self, "initial_gaps", gv.gaps)

    @property
    def cap(self) -> int:
        if self.max_interactions is not None:
            return int(self.max_interactions)
        return default_cap(self.n_nodes, self.n_slots, self.alpha)

    @property
    def n_placements(self) -> int:
        return self.n_nodes * (self.n_nodes - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["initial_gaps"] = list(self.initial_gaps) if self.initial_gaps is not None else None
        d["stream_key"] = list(self.stream_key)
        d["resolved_cap"] = self.cap
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = {k: v for k, v in d.items() if k != "resolved_cap"}
        if d.get("initial_gaps") is not None:
            d["initial_gaps"] = tuple(d["initial_gaps"])
        d["stream_key"] = tuple(d.get("stream_key", ()))
        return cls(**d)


@dataclass
class TrialRecord:
    trial_index: int
    stream_id: tuple[int, ...]
    initial_gaps: tuple[int, ...]
    initial_edge: int
    interactions: int
    rounds: int
    absorbed: bool
    n_null: int
    n_swap: int
    n_compression: int
    final_gaps: tuple[int, ...]
    trajectory: list[dict] | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("stream_id", "initial_gaps", "final_gaps"):
            d[k] = list(d[k])
        if self.trajectory is None:
            d.pop("trajectory")
        return d


def initial_state(config: ExperimentConfig, trial_index: int, rng: np.random.Generator) -> RingState:
    """Starting ring state of a trial (draws from ``rng`` only in random mode)."""
    N, L = config.n_nodes, config.n_slots
    if config.init_mode == "random":
        frame = counter_sim.CounterFrame.random(N, L, rng)
        return RingState(counter_sim.gaps_of(frame), config.initial_edge)
    if config.init_mode == "worst-case":
        p = trial_index % config.n_placements
        state = OutlierChainState(p // N + 1, p % N)
        gaps, edge = placement(N, state, ell=L // N)
        return RingState(gaps, edge)
    return RingState(GapVector(config.initial_gaps), config.initial_edge)


def _rounds(interactions: int, n: int) -> int:
    return -(-interactions // n)


def _trajectory_row(state: RingState, outcome) -> dict:
    return {
        "step": state.step,
        "edge": outcome.edge if outcome is not None else state.active_edge,
        "outcome": outcome.kind.value if outcome is not None else "",
        "gaps": list(state.gaps.gaps),
        "V": lyapunov(state),
        "range": range_of(state),
    }


def run_trial(config: ExperimentConfig, trial_index: int = 0, check_invariants: bool = False) -> TrialRecord:
    """Run one trial until its gap vector is a TDM state or the cap is hit.

    ``interactions`` counts the interactions performed before the state first
    became TDM (0 if it started there).
    """
    key = config.stream_key + (trial_index,)
    rng = stream(config.seed, key)
    state = initial_state(config, trial_index, rng)
    start = state
    counts = {o: 0 for o in Outcome}
    traj = [_trajectory_row(state, None)] if config.record_trajectory else None
    cap = config.cap
    while not is_tdm(state) and state.step < cap:
        nxt, outcome = interact(state, config.alpha, rng)
        if check_invariants:
            check_step(state, nxt, outcome)
        counts[outcome.kind] += 1
        state = nxt
        if traj is not None:
            traj.append(_trajectory_row(state, outcome))
    return TrialRecord(
        trial_index=trial_index,
        stream_id=(config.seed,) + key,
        initial_gaps=start.gaps.gaps,
        initial_edge=start.active_edge,
        interactions=state.step,
        rounds=_rounds(state.step, config.n_nodes),
        absorbed=is_tdm(state),
        n_null=counts[Outcome.NULL],
        n_swap=counts[Outcome.SWAP],
        n_compression=counts[Outcome.COMPRESSION],
        final_gaps=state.gaps.gaps,
        trajectory=traj,
    )


def run_batch(
    config: ExperimentConfig,
    trial_indices: Sequence[int] | None = None,
    check_invariants: bool = False,
    block: int = 64,
) -> list[TrialRecord]:
    """Vectorized equivalent of ``[run_trial(config, t) for t in trial_indices]``.

    All trials advance in lock step.  Each keeps its own generator and draws
    uniforms in blocks, which yields the same sequence as one-at-a-time draws.
    """
    if trial_indices is None:
        trial_indices = range(config.trials)
    trial_indices = list(trial_indices)
    T, N, cap, alpha = len(trial_indices), config.n_nodes, config.cap, config.alpha
    rngs, G0, E0 = [], np.empty((T, N), np.int64), np.empty(T, np.int64)
    for r, t in enumerate(trial_indices):
        rng = stream(config.seed, config.stream_key + (t,))
        st = initial_state(config, t, rng)
        rngs.append(rng)
        G0[r] = st.gaps.gaps
        E0[r] = st.active_edge

    G, E = G0.copy(), E0.copy()
    steps = np.zeros(T, np.int64)
    n_null = np.zeros(T, np.int64)
    n_swap = np.zeros(T, np.int64)
    n_comp = np.zeros(T, np.int64)
    rng_span = G.max(axis=1) - G.min(axis=1)
    active = np.flatnonzero(rng_span > 1)
    U = np.empty((len(active), block))
    s = 0
    while len(active) and s < cap:
        col = s % block
        if col == 0:
            for r, t in enumerate(active):
                U[r] = rngs[t].random(block)
        g = G[active]
        e = E[active]
        rows = np.arange(len(active))
        e1 = (e + 1) % N
        a, b = g[rows, e], g[rows, e1]
        d = a - b
        c = (1.0 + alpha) * np.abs(d) / 2.0
        m = np.floor(c)
        p = c - m
        lo_snap = p < SNAP_TOL
        hi_snap = p > 1.0 - SNAP_TOL
        m = np.where(hi_snap, m + 1, m).astype(np.int64)
        p = np.where(lo_snap | hi_snap, 0.0, p)
        # larger k is chosen iff u < P(larger k); see sample_two_point
        p_larger = np.where(d > 0, p, 1.0 - p)
        take_larger = U[:, col] < p_larger
        k_pos = np.where(take_larger, m + 1, m)
        k_pos = np.where(p == 0.0, m, k_pos)
        k_neg = np.where(take_larger, -m, -(m + 1))
        k_neg = np.where(p == 0.0, -m, k_neg)
        k = np.where(d > 0, k_pos, np.where(d < 0, k_neg, 0))
        new_a = b + k
        new_b = a + b - new_a
        if check_invariants:
            sq_before = (g * g).sum(axis=1)
            span_before = g.max(axis=1) - g.min(axis=1)
        g[rows, e] = new_a
        g[rows, e1] = new_b
        is_null = new_a == a
        is_swap = (new_a == b) & (d != 0)
        is_comp = np.abs(new_a - new_b) < np.abs(d)
        if check_invariants:
            _batch_invariants(g, d, new_a, new_b, sq_before, span_before, is_null, is_swap, is_comp, config)
        n_null[active] += is_null
        n_swap[active] += is_swap
        n_comp[active] += is_comp
        G[active] = g
        E[active] = (e - 1) % N
        steps[active] += 1
        s += 1
        still = (g.max(axis=1) - g.min(axis=1)) > 1
        if not still.all():
            active = active[still]
            U = U[still]

    records = []
    for r, t in enumerate(trial_indices):
        span = int(G[r].max() - G[r].min())
        records.append(
            TrialRecord(
                trial_index=t,
                stream_id=(config.seed,) + config.stream_key + (t,),
                initial_gaps=tuple(int(v) for v in G0[r]),
                initial_edge=int(E0[r]),
                interactions=int(steps[r]),
                rounds=_rounds(int(steps[r]), N),
                absorbed=span <= 1,
                n_null=int(n_null[r]),
                n_swap=int(n_swap[r]),
                n_compression=int(n_comp[r]),
                final_gaps=tuple(int(v) for v in G[r]),
            )
        )
    return records


def _batch_invariants(g, d, new_a, new_b, sq_before, span_before, is_null, is_swap, is_comp, config):
    L = config.n_slots
    problems = []
    if (g.sum(axis=1) != L).any():
        problems.append("total not conserved")
    if (g.min(axis=1) < 1).any():
        problems.append("gap below one slot")
    if (np.abs(new_a - new_b) > np.abs(d)).any():
        problems.append("active pair expanded")
    if ((g.max(axis=1) - g.min(axis=1)) > span_before).any():
        problems.append("range increased")
    drop = sq_before - (g * g).sum(axis=1)
    if (drop[is_comp] < 2).any():
        problems.append("compression lowered V by less than 2")
    if (drop[~is_comp] != 0).any():
        problems.append("null/swap changed V")
    if ((is_null.astype(int) + is_swap + is_comp) != 1).any():
        problems.append("interaction not classified exactly once")
    if problems:
        raise AssertionError("; ".join(problems))


@dataclass
class ExperimentSummary:
    config: dict
    n_trials: int
    n_absorbed: int
    n_capped: int
    mean: float
    stderr: float | None
    min: int
    max: int
    mean_rounds: float
    histogram: dict
    outcome_totals: dict
    theory_eq41: float | None
    bound_eq13: float
    records: list[TrialRecord] = field(default_factory=list)

    def to_dict(self, include_records: bool = True) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "records"}
        if include_records:
            d["records"] = [r.to_dict() for r in self.records]
        return d


def _histogram(values: np.ndarray, bins: int = 20) -> dict:
    lo, hi = int(values.min()), int(values.max())
    nb = max(1, min(bins, hi - lo + 1))
    edges = np.linspace(lo, hi + 1, nb + 1)
    counts, _ = np.histogram(values, bins=edges)
    return {"edges": [float(x) for x in edges], "counts": [int(c) for c in counts]}


def summarize(config: ExperimentConfig, records: Sequence[TrialRecord], keep_records: bool = True) -> ExperimentSummary:
    records = sorted(records, key=lambda r: r.trial_index)
    x = np.array([r.interactions for r in records], dtype=float)
    n = len(x)
    stderr = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else None
    return ExperimentSummary(
        config=config.to_dict(),
        n_trials=n,
        n_absorbed=sum(r.absorbed for r in records),
        n_capped=sum(not r.absorbed for r in records),
        mean=float(x.mean()),
        stderr=stderr,
        min=int(x.min()),
        max=int(x.max()),
        mean_rounds=float(np.mean([r.rounds for r in records])),
        histogram=_histogram(x.astype(np.int64)),
        outcome_totals={
            "null": sum(r.n_null for r in records),
            "swap": sum(r.n_swap for r in records),
            "compression": sum(r.n_compression for r in records),
        },
        theory_eq41=tbar_closed_form(config.n_nodes, config.alpha),
        bound_eq13=absorption_upper_bound(config.n_nodes, config.n_slots, config.alpha),
        records=list(records) if keep_records else [],
    )


def run_experiment(
    config: ExperimentConfig, check_invariants: bool = False, keep_records: bool = True
) -> ExperimentSummary:
    """Run ``config.trials`` trials and aggregate them.

    In worst-case mode trial ``t`` starts from placement ``t mod N(N-1)``, so
    a multiple of ``N(N-1)`` trials weights every placement equally.
    """
    if config.record_trajectory:
        records = [run_trial(config, t, check_invariants) for t in range(config.trials)]
    else:
        records = run_batch(config, check_invariants=check_invariants)
    return summarize(config, records, keep_records)


def worker_count() -> int:
    env = os.environ.get("D3SYNC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(configs: Sequence[ExperimentConfig], **kwargs) -> list[ExperimentSummary]:
    """Run several experiments; results come back in input order."""
    workers = min(worker_count(), len(configs)) or 1
    if workers == 1:
        return [run_experiment(c, **kwargs) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_experiment(c, **kwargs), configs))


@dataclass
class ProbeResult:
    absorbed_at: int | None
    distinct_tdm_states: int
    visited: list[tuple[int, ...]]
    all_tdm: bool


def post_absorption_probe(config: ExperimentConfig, rounds: int, trial_index: int = 0) -> ProbeResult:
    """Keep interacting for ``rounds`` rounds after absorption; count TDM states seen.

    The absorbing state itself counts as the first visited state.
    """
    rng = stream(config.seed, config.stream_key + (trial_index,))
    state = initial_state(config, trial_index, rng)
    while not is_tdm(state) and state.step < config.cap:
        state, _ = interact(state, config.alpha, rng)
    if not is_tdm(state):
        return ProbeResult(None, 0, [], False)
    absorbed_at = state.step
    seen = {state.gaps.gaps: None}
    all_tdm = True
    for _ in range(rounds * config.n_nodes):
        state, _ = interact(state, config.alpha, rng)
        all_tdm &= is_tdm(state)
        seen.setdefault(state.gaps.gaps, None)
    return ProbeResult(absorbed_at, len(seen), list(seen), all_tdm)


# -- figure presets ----------------------------------------------------------


@dataclass
class Fig4Result:
    n_nodes: int
    n_slots: int
    alpha: float
    seed: int
    snapshots: list[dict]
    absorbed_event: int | None
    absorbed_round: int | None
    final_gaps: tuple[int, ...]
    n_tdm_states: int
    distinct_tdm_visited: int
    post_rounds: int
    all_visited_tdm: bool


def fig4(n_slots: int, n_nodes: int = 6, alpha: float = 0.2, seed: int = 0, post_rounds: int = 100) -> Fig4Result:
    """Run the firing-counter protocol from random counters to absorption and beyond.

    Snapshots of every counter are taken at the start and after each round of
    ``N`` firings.  ``final_gaps`` is the gap vector at absorption.
    """
    alpha = check_alpha(alpha)
    rng = stream(seed, (4, n_slots))
    frame = counter_sim.CounterFrame.random(n_nodes, n_slots, rng)
    cap = default_cap(n_nodes, n_slots, alpha)
    snapshots = []

    def snap(rnd: int) -> None:
        g = counter_sim.gaps_of(frame)
        node_gaps = [0] * n_nodes
        for pos, node in enumerate(frame.order):
            node_gaps[node] = g.gaps[pos]
        snapshots.append(
            {"round": rnd, "counters": [int(v) for v in frame.counters], "node_gaps": node_gaps, "tdm": is_tdm(g)}
        )

    snap(0)
    absorbed_event = 0 if is_tdm(counter_sim.gaps_of(frame)) else None
    events = 0
    while absorbed_event is None and events < cap:
        counter_sim.step(frame, alpha, rng)
        events += 1
        if is_tdm(counter_sim.gaps_of(frame)):
            absorbed_event = events
        if events % n_nodes == 0:
            snap(events // n_nodes)
    final = counter_sim.gaps_of(frame).gaps
    visited = {final: None}
    all_tdm = True
    if absorbed_event is not None:
        for _ in range(post_rounds * n_nodes):
            counter_sim.step(frame, alpha, rng)
            events += 1
            g = counter_sim.gaps_of(frame)
            all_tdm &= is_tdm(g)
            visited.setdefault(g.gaps, None)
            if events % n_nodes == 0:
                snap(events // n_nodes)
    return Fig4Result(
        n_nodes=n_nodes,
        n_slots=n_slots,
        alpha=alpha,
        seed=seed,
        snapshots=snapshots,
        absorbed_event=absorbed_event,
        absorbed_round=None if absorbed_event is None else _rounds(absorbed_event, n_nodes),
        final_gaps=final,
        n_tdm_states=count_tdm_states(n_nodes, n_slots),
        distinct_tdm_visited=len(visited) if absorbed_event is not None else 0,
        post_rounds=post_rounds,
        all_visited_tdm=all_tdm,
    )


def fig5a_configs(
    n_nodes: int = 10,
    slots: Sequence[int] = tuple(range(20, 61)),
    alpha: float = 0.2,
    trials: int = 5000,
    seed: int = 0,
) -> list[ExperimentConfig]:
    return [
        ExperimentConfig(n_nodes, L, alpha, trials=trials, seed=seed, init_mode="random", stream_key=(5, 1, L))
        for L in slots
    ]


def fig5b_configs(
    nodes: Sequence[int] = (4, 6, 8, 10, 12),
    alphas: Sequence[float] = (0.2, 0.5),
    trials_per_placement: int = 250,
    ell: int = 2,
    seed: int = 0,
) -> list[ExperimentConfig]:
    out = []
    for ai, a in enumerate(alphas):
        for N in nodes:
            out.append(
                ExperimentConfig(
                    N,
                    ell * N,
                    a,
                    trials=N * (N - 1) * trials_per_placement,
                    seed=seed,
                    init_mode="worst-case",
                    stream_key=(5, 2, ai, N),
                )
            )
    return out


def fig5a(**kwargs) -> list[dict]:
    """Random-start absorption times versus frame length, with the worst-case bound."""
    rows = []
    for s in run_sweep(fig5a_configs(**kwargs), keep_records=False):
        c = s.config
        rows.append(
            {
                "N": c["n_nodes"],
                "L": c["n_slots"],
                "alpha": c["alpha"],
                "n_trials": s.n_trials,
                "mc_mean": s.mean,
                "mc_stderr": s.stderr,
                "mc_max": s.max,
                "n_capped": s.n_capped,
                "bound_eq13": s.bound_eq13,
            }
        )
    return rows


def fig5b(**kwargs) -> list[dict]:
    """Worst-case absorption times versus N against the closed form."""
    rows = []
    for s in run_sweep(fig5b_configs(**kwargs), keep_records=False):
        c = s.config
        rows.append(
            {
                "N": c["n_nodes"],
                "alpha": c["alpha"],
                "n_trials": s.n_trials,
                "mc_mean": s.mean,
                "mc_stderr": s.stderr,
                "theory_eq41": s.theory_eq41,
                "n_capped": s.n_capped,
            }
        )
    return rows
