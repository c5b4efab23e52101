"""Expected time to the first compression from the two-outlier worst case.

Starting from gaps that all equal ``ell`` except one ``ell + 1`` and one
``ell - 1``, every interaction either moves an outlier, leaves the state
alone, or compresses the outliers into a TDM state.  The process is an
absorbing Markov chain on ``N (N - 1)`` transient configurations (relative
outlier position ``m`` times active-edge label ``n``) plus one absorbing
state.  This module

* builds that chain by running the interaction kernel on concrete gap vectors,
* solves it densely for expected steps to absorption,
* evaluates the closed-form average and its asymptotic constant, and
* replays the forward recursion for the per-state values and checks it
  against both the linear system it comes from and the dense solution.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .quantizer import check_alpha, interaction_distribution
from .ring import GapVector, is_tdm

__all__ = [
    "OutlierChainState",
    "OutlierChain",
    "AbsorptionSolution",
    "RecursionReport",
    "worst_case_gap_vector",
    "placement",
    "build_outlier_chain",
    "absorption_solve",
    "tbar_closed_form",
    "tbar_asymptotic_constant",
    "absorption_upper_bound",
    "recursion_variables",
    "variable_of_state",
    "recursion_check",
]


@dataclass(frozen=True, order=True)
class OutlierChainState:
    """``m``: position of the high outlier relative to the low one (1..N-1).

    ``n``: active-edge label; the edge entering the low outlier is 0 and
    labels count the edges in the order they will become active.
    """

    m: int
    n: int


ABSORBED = "absorbed"


def worst_case_gap_vector(n_nodes: int, ell: int, i: int, j: int) -> GapVector:
    """``ell + 1`` at position ``i``, ``ell - 1`` at ``j``, ``ell`` elsewhere (0-based)."""
    if ell < 2:
        raise ValueError("ell must be at least 2 so that ell - 1 >= 1")
    if i == j:
        raise ValueError("outlier positions must differ")
    g = [ell] * n_nodes
    g[i % n_nodes] = ell + 1
    g[j % n_nodes] = ell - 1
    return GapVector(g)


def placement(n_nodes: int, state: OutlierChainState, ell: int = 2, low: int = 0):
    """Concrete ``(gaps, active_edge)`` for a chain state, low outlier at ``low``."""
    high = (low + state.m) % n_nodes
    edge = (low - 1 - state.n) % n_nodes
    return worst_case_gap_vector(n_nodes, ell, high, low), edge


def _locate(gaps: tuple[int, ...], edge: int, ell: int) -> OutlierChainState:
    n = len(gaps)
    hi = [p for p, v in enumerate(gaps) if v == ell + 1]
    lo = [p for p, v in enumerate(gaps) if v == ell - 1]
    rest = [v for v in gaps if v != ell + 1 and v != ell - 1]
    if len(hi) != 1 or len(lo) != 1 or any(v != ell for v in rest):
        raise ValueError(f"state {gaps} is not a two-outlier configuration")
    j = lo[0]
    return OutlierChainState((hi[0] - j) % n, (j - 1 - edge) % n)


@dataclass
class OutlierChain:
    n_nodes: int
    alpha: float
    states: list[OutlierChainState]
    index: dict[OutlierChainState, int]
    transient: np.ndarray
    absorb: np.ndarray
    transitions: dict[OutlierChainState, list[tuple[object, float]]]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def matrix(self) -> np.ndarray:
        """Full stochastic matrix with the absorbing state last."""
        k = self.n_states
        P = np.zeros((k + 1, k + 1))
        P[:k, :k] = self.transient
        P[:k, k] = self.absorb
        P[k, k] = 1.0
        return P


def build_outlier_chain(n_nodes: int, alpha: float, ell: int = 2) -> OutlierChain:
    """Generate the chain by applying the interaction kernel to each configuration.

    The value of ``ell`` is immaterial (only gap differences matter); it is a
    parameter so tests can confirm exactly that.
    """
    alpha = check_alpha(alpha)
    if n_nodes < 3:
        raise ValueError("the outlier chain needs N >= 3")
    states = [OutlierChainState(m, n) for m in range(1, n_nodes) for n in range(n_nodes)]
    index = {s: k for k, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    absorb = np.zeros(len(states))
    transitions: dict[OutlierChainState, list[tuple[object, float]]] = {}
    for s in states:
        gv, e = placement(n_nodes, s, ell)
        g = list(gv.gaps)
        i, j = e, (e + 1) % n_nodes
        arcs: list[tuple[object, float]] = []
        for k, p in interaction_distribution(g[i] - g[j], alpha):
            h = list(g)
            h[i] = g[j] + k
            h[j] = g[i] + g[j] - h[i]
            if is_tdm(h):
                absorb[index[s]] += p
                arcs.append((ABSORBED, p))
            else:
                t = _locate(tuple(h), (e - 1) % n_nodes, ell)
                Q[index[s], index[t]] += p
                arcs.append((t, p))
        transitions[s] = arcs
    return OutlierChain(n_nodes, alpha, states, index, Q, absorb, transitions)


@dataclass
class AbsorptionSolution:
    states: list[OutlierChainState]
    expected_steps: np.ndarray
    mean: float
    max: float

    def value(self, state: OutlierChainState) -> float:
        return float(self.expected_steps[self.states.index(state)])


def absorption_solve(chain: OutlierChain) -> AbsorptionSolution:
    """Expected interactions to absorption from every transient state.

    Solves ``(I - Q) t = 1`` densely.  ``mean`` is the uniform average over the
    ``N (N - 1)`` configurations and ``max`` the worst one.
    """
    k = chain.n_states
    A = np.eye(k) - chain.transient
    try:
        t = np.linalg.solve(A, np.ones(k))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - nonsingular for alpha in (0, 1)
        raise RuntimeError("absorbing-chain system is singular") from exc
    return AbsorptionSolution(chain.states, t, float(t.mean()), float(t.max()))


def tbar_closed_form(n_nodes: int, alpha: float) -> float:
    """Closed-form mean interactions to the first compression, worst case.

    Defined for ``N >= 2``; at ``N = 2`` it reduces to ``1 / (1 - alpha)``.
    """
    a = check_alpha(alpha)
    N = float(n_nodes)
    if n_nodes < 2:
        raise ValueError("need N >= 2")
    num = (
        N**4 * (a + 1) ** 2
        + N**3 * (a + 1) ** 2
        + 12 * N**2 * (a - 1) ** 2
        - 24 * N * (a - 1) * (2 * a - 1)
        + 24 * (a - 1) ** 2
    )
    return num / (24 * N * (1 - a) * (1 + a))


def tbar_asymptotic_constant(alpha: float) -> float:
    """Leading coefficient of the ``N**3`` growth, ``(1 + alpha) / (24 (1 - alpha))``."""
    a = check_alpha(alpha)
    return (a + 1) / (24 * (1 - a))


def absorption_upper_bound(n_nodes: int, n_slots: int, alpha: float) -> float:
    """Worst-case expected interactions to a TDM state from any start.

    The largest possible Lyapunov value divided by the smallest drop per
    compression, times the worst expected wait per compression.
    """
    if n_slots < n_nodes:
        raise ValueError("need L >= N")
    return tbar_closed_form(n_nodes, alpha) * (n_slots - n_nodes) ** 2 * n_nodes / 8.0


# -- recursion over the symmetric half of the chain -------------------------


def variable_of_state(n_nodes: int, state: OutlierChainState) -> tuple:
    """Recursion variable carrying the expected time of ``state``.

    Returns ``("y", k)``, ``("x", k)`` or ``("z", k, l)``; ``z_k^l = l + x_k``.
    Row ``m`` reads: ``y_{N-1-m}``, the run for index ``m-1`` (``z`` values
    counting down then ``x``), ``y_{m-1}``, then the run for ``N-1-m``.
    """
    N = n_nodes
    m, n = state.m, state.n
    k = N - 1 - m
    kp = m - 1

    def run(idx: int, pos: int) -> tuple:
        length = N - 2 - idx
        if pos == length - 1:
            return ("x", idx)
        return ("z", idx, N - 3 - idx - pos)

    if n == 0:
        return ("y", k)
    if n <= k:
        return run(kp, n - 1)
    if n == k + 1:
        return ("y", kp)
    return run(k, n - k - 2)


@dataclass
class RecursionReport:
    n_nodes: int
    alpha: float
    x: np.ndarray
    y: np.ndarray
    residual_system: float
    residual_recursion: float
    residual_solver: float
    residual_closed_forms: float
    tbar_from_variables: float
    tbar_closed: float

    @property
    def max_residual(self) -> float:
        rel_tbar = abs(self.tbar_from_variables - self.tbar_closed) / self.tbar_closed
        return max(
            self.residual_system,
            self.residual_recursion,
            self.residual_solver,
            self.residual_closed_forms,
            rel_tbar,
        )


def _system_residual(N: int, a: float, x: np.ndarray, y: np.ndarray) -> float:
    rho = (1 - a) / 2
    scale = max(1.0, float(np.abs(x).max(initial=0)), float(np.abs(y).max()))
    res = [y[0] - a * y[N - 2] - 1]
    for k in range(N - 2):
        res.append(x[k] - (1 - rho) * y[k] - rho * x[N - k - 3] - (1 + k * rho))
    for k in range(1, N - 1):
        res.append(y[k] - rho * y[k - 1] - (1 - rho) * x[N - k - 2] - (k - (k - 1) * rho))
    return float(np.max(np.abs(res))) / scale


def recursion_variables(n_nodes: int, alpha: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Run the forward recursion from the two known ``y`` end values.

    Returns ``(x, y, inconsistency)`` where ``inconsistency`` is the largest
    scaled disagreement between two recursion steps that produce the same
    variable (the recursion over-determines a few entries near ``N/2``).
    """
    a = check_alpha(alpha)
    N = n_nodes
    rho = (1 - a) / 2
    x: dict[int, float] = {}
    y: dict[int, float] = {
        0: (a * (N - 2) * (N + 1) + 2) / (2 * (1 - a)),
        N - 2: N * (N - 1) / (2 * (1 - a)),
    }
    worst = 0.0

    def put(store: dict, idx: int, val: float) -> None:
        nonlocal worst
        if idx in store:
            worst = max(worst, abs(store[idx] - val) / max(1.0, abs(val)))
        else:
            store[idx] = val

    for k in range(1, N // 2 + 1):
        F = 1 + (k - 1) * rho
        D = (N - k - 1) * (2 * rho - 1) + F
        G = (N - k - 1) - (N - k - 2) * rho
        x_km1 = D / (2 * (1 - rho)) + (y[k - 1] + y[N - k - 1]) / 2
        put(x, k - 1, x_km1)
        x_km1 = x[k - 1]
        put(x, N - k - 2, (x_km1 - F - (1 - rho) * y[k - 1]) / rho)
        put(y, k, (k - (k - 1) * rho) + rho * y[k - 1] + (1 - rho) * x[N - k - 2])
        put(y, N - k - 2, (y[N - k - 1] - (1 - rho) * x_km1 - G) / rho)
    xs = np.array([x[k] for k in range(N - 2)])
    ys = np.array([y[k] for k in range(N - 1)])
    return xs, ys, worst


def _closed_form_residual(N: int, a: float, x: np.ndarray, y: np.ndarray) -> float:
    """Scaled residuals of the explicit formulas for x_0, increments and sums."""
    scale = max(1.0, float(np.abs(x).max()), float(np.abs(y).max()))
    res = []
    x0 = (N**2 * (a + 1) ** 2 + N * (3 * a * a - 6 * a - 1) - 10 * a * a + 4 * a + 6) / (
        4 * (1 + a) * (1 - a)
    )
    res.append(x[0] - x0)
    for k in range(1, N - 2):
        dx = (N**2 * (1 + a) - (2 * k + 1) * (1 + a) * N - 2 * a + 2) / (4 * (1 - a))
        res.append(x[k] - x[k - 1] - dx)
    for k in range(1, N - 1):
        dy = (N**2 * (a + 1) - N * ((2 * k + 3) * a + (2 * k - 1)) - 2 * a + 2) / (4 * (1 - a))
        res.append(y[k] - y[k - 1] - dy)
    sx = (N - 2) * x0 + (N - 2) * (N - 3) * (N * (N - 1) * (a + 1) + 6 * (1 - a)) / (24 * (1 - a))
    sy = (N - 1) * y[0] + (N - 1) * (N - 2) * (N * N * (a + 1) - 3 * N * (3 * a - 1) + 6 * (1 - a)) / (
        24 * (1 - a)
    )
    res.append((x.sum() - sx) / max(1, N))
    res.append((y.sum() - sy) / max(1, N))
    return float(np.max(np.abs(res))) / scale


def recursion_check(n_nodes: int, alpha: float, solution: AbsorptionSolution | None = None) -> RecursionReport:
    """Cross-check the recursion for the per-state expected times.

    All residuals are absolute errors divided by ``max(1, largest variable)``.
    """
    a = check_alpha(alpha)
    N = n_nodes
    if N < 3:
        raise ValueError("need N >= 3")
    x, y, inconsistency = recursion_variables(N, a)
    if solution is None:
        solution = absorption_solve(build_outlier_chain(N, a))
    scale = max(1.0, float(np.abs(solution.expected_steps).max()))
    worst = 0.0
    for s, t in zip(solution.states, solution.expected_steps):
        var = variable_of_state(N, s)
        if var[0] == "x":
            v = x[var[1]]
        elif var[0] == "y":
            v = y[var[1]]
        else:
            v = x[var[1]] + var[2]
        worst = max(worst, abs(v - t) / scale)
    zsum = sum(k * (k + 1) / 2 + (N - 2 - k) * x[k - 1] for k in range(1, N - 2))
    tbar_vars = 2 * (x.sum() + y.sum() + zsum) / (N * (N - 1))
    return RecursionReport(
        n_nodes=N,
        alpha=a,
        x=x,
        y=y,
        residual_system=_system_residual(N, a, x, y),
        residual_recursion=inconsistency,
        residual_solver=worst,
        residual_closed_forms=_closed_form_residual(N, a, x, y),
        tbar_from_variables=float(tbar_vars),
        tbar_closed=tbar_closed_form(N, a),
    )


def reachable_states(n_nodes: int, alpha: float, ell: int = 2) -> set:
    """Breadth-first closure of the chain from every worst-case placement."""
    chain = build_outlier_chain(n_nodes, alpha, ell)
    seen: set = set()
    queue = deque(chain.states)
    while queue:
        s = queue.popleft()
        if s in seen:
            continue
        seen.add(s)
        for t, _ in chain.transitions.get(s, []):
            if t not in seen and t != ABSORBED:
                queue.append(t)
            elif t == ABSORBED:
                seen.add(ABSORBED)
    return seen
