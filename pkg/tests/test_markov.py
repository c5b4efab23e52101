from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from d3sync.markov import (
    ABSORBED,
    OutlierChainState,
    absorption_solve,
    absorption_upper_bound,
    build_outlier_chain,
    placement,
    reachable_states,
    recursion_check,
    tbar_asymptotic_constant,
    tbar_closed_form,
    variable_of_state,
    worst_case_gap_vector,
)
from d3sync.quantizer import interaction_distribution
from d3sync.ring import RingState, interact_u, is_tdm, lyapunov, range_of

ALPHAS = [round(0.1 * k, 1) for k in range(1, 10)]


def closed_form_exact(N, a):
    """Same polynomial in exact rational arithmetic."""
    a, N = Fraction(a), Fraction(N)
    num = N**4 * (a + 1) ** 2 + N**3 * (a + 1) ** 2 + 12 * N**2 * (a - 1) ** 2 - 24 * N * (a - 1) * (2 * a - 1) + 24 * (a - 1) ** 2
    return num / (24 * N * (1 - a) * (1 + a))


class TestWorstCase:
    def test_example(self):
        assert worst_case_gap_vector(4, 3, 1, 3).gaps == (3, 4, 3, 2)
        assert worst_case_gap_vector(4, 3, 0, 2).gaps == (4, 3, 2, 3)

    @given(n=st.integers(3, 12), ell=st.integers(2, 9), data=st.data())
    def test_shape(self, n, ell, data):
        i = data.draw(st.integers(0, n - 1))
        j = data.draw(st.integers(0, n - 1).filter(lambda v: v != i))
        g = worst_case_gap_vector(n, ell, i, j)
        assert g.total == ell * n
        assert not is_tdm(g) and range_of(g) == 2
        assert lyapunov(g) == pytest.approx(2)

    def test_rejects(self):
        with pytest.raises(ValueError):
            worst_case_gap_vector(4, 1, 0, 1)
        with pytest.raises(ValueError):
            worst_case_gap_vector(4, 3, 2, 2)


class TestChain:
    @pytest.mark.parametrize("n", range(3, 9))
    def test_state_count_and_stochastic(self, n):
        chain = build_outlier_chain(n, 0.37)
        assert chain.n_states == n * (n - 1)
        P = chain.matrix()
        assert P.shape == (n * (n - 1) + 1,) * 2
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12, rtol=0)
        assert (P >= 0).all()

    def test_rejects_small_or_bad_alpha(self):
        with pytest.raises(ValueError):
            build_outlier_chain(2, 0.5)
        with pytest.raises(ValueError):
            build_outlier_chain(5, 1.0)

    @pytest.mark.parametrize("n", [3, 4, 7])
    @pytest.mark.parametrize("alpha", [0.2, 0.75])
    def test_arc_probabilities(self, n, alpha):
        chain = build_outlier_chain(n, alpha)
        absorbing = set()
        for s in chain.states:
            gaps, edge = placement(n, s)
            d = gaps[edge] - gaps[(edge + 1) % n]
            probs = sorted(p for _, p in chain.transitions[s])
            if abs(d) == 2:
                assert dict(chain.transitions[s])[ABSORBED] == pytest.approx(1 - alpha)
                assert probs == pytest.approx(sorted([alpha, 1 - alpha]))
                absorbing.add(s)
            elif abs(d) == 1:
                assert probs == pytest.approx(sorted([(1 - alpha) / 2, (1 + alpha) / 2]))
            else:
                assert probs == [1.0]
        # only the two placements with the edge spanning both adjacent outliers can absorb
        assert absorbing == {OutlierChainState(1, n - 1), OutlierChainState(n - 1, 0)}

    @pytest.mark.parametrize("n", [3, 4, 6])
    def test_edge_label_advances(self, n):
        chain = build_outlier_chain(n, 0.4)
        for s in chain.states:
            gaps, edge = placement(n, s)
            d = gaps[edge] - gaps[(edge + 1) % n]
            nulls = [t for t, _ in chain.transitions[s] if t != ABSORBED]
            if d == 0:
                assert nulls == [OutlierChainState(s.m, (s.n + 1) % n)]

    @pytest.mark.parametrize("n", range(3, 8))
    def test_closure_by_simulation(self, n):
        # walk the concrete ring dynamics from every placement, taking every kernel branch
        ell = 3
        frontier = [RingState(*placement(n, s, ell)) for s in build_outlier_chain(n, 0.3).states]
        seen = set()
        while frontier:
            st_ = frontier.pop()
            key = (st_.gaps.gaps, st_.active_edge)
            if key in seen:
                continue
            seen.add(key)
            if is_tdm(st_):
                continue
            assert sorted(st_.gaps.gaps) == [ell - 1] + [ell] * (n - 2) + [ell + 1]
            for u in (0.0, 0.999999):
                frontier.append(interact_u(st_, 0.3, u)[0])
        assert len([k for k in seen if not is_tdm(k[0])]) == n * n * (n - 1)
        assert reachable_states(n, 0.3) == set(build_outlier_chain(n, 0.3).states) | {ABSORBED}

    @pytest.mark.parametrize("n", [3, 5, 8])
    def test_independent_of_ell(self, n):
        a = build_outlier_chain(n, 0.6, ell=2).matrix()
        b = build_outlier_chain(n, 0.6, ell=7).matrix()
        assert np.array_equal(a, b)


class TestAbsorption:
    def test_n4_half(self):
        sol = absorption_solve(build_outlier_chain(4, 0.5))
        assert sol.mean == pytest.approx(10.75, rel=1e-12)
        assert tbar_closed_form(4, 0.5) == pytest.approx(774 / 72, rel=1e-15)

    def test_n3(self):
        sol = absorption_solve(build_outlier_chain(3, 0.2))
        assert abs(sol.mean - tbar_closed_form(3, 0.2)) / tbar_closed_form(3, 0.2) <= 1e-9

    @pytest.mark.parametrize("n", [3, 6, 11, 17])
    @pytest.mark.parametrize("alpha", [0.1, 0.45, 0.9])
    def test_solver_matches_closed_form(self, n, alpha):
        sol = absorption_solve(build_outlier_chain(n, alpha))
        assert sol.mean == pytest.approx(tbar_closed_form(n, alpha), rel=1e-9)
        assert sol.mean <= sol.max
        assert np.all(np.isfinite(sol.expected_steps)) and np.all(sol.expected_steps > 0)

    @pytest.mark.parametrize("n", [3, 5, 9])
    def test_closed_form_float_vs_exact(self, n):
        for a in ALPHAS:
            assert tbar_closed_form(n, a) == pytest.approx(float(closed_form_exact(n, a)), rel=1e-13)

    def test_two_nodes(self):
        assert tbar_closed_form(2, 0.3) == pytest.approx(1 / 0.7)
        with pytest.raises(ValueError):
            tbar_closed_form(1, 0.3)

    @pytest.mark.parametrize("n", range(3, 9))
    def test_symmetric_pairing(self, n):
        chain = build_outlier_chain(n, 0.3)
        sol = absorption_solve(chain)
        groups = defaultdict(list)
        for s in chain.states:
            groups[variable_of_state(n, s)].append(sol.value(s))
        assert all(len(v) == 2 for v in groups.values())
        assert all(abs(v[0] - v[1]) <= 1e-9 * max(v) for v in groups.values())
        half = sum(v[0] for v in groups.values())
        assert 2 * half / (n * (n - 1)) == pytest.approx(sol.mean, rel=1e-12)


class TestScaling:
    def test_asymptotic_constant(self):
        assert tbar_asymptotic_constant(0.2) == pytest.approx(0.0625)
        assert tbar_closed_form(1000, 0.2) / 1000**3 == pytest.approx(0.0625, rel=0.01)

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_ratio_converges(self, alpha):
        g = tbar_asymptotic_constant(alpha)
        ratios = [tbar_closed_form(n, alpha) / n**3 / g for n in (10, 100, 1000, 10000)]
        errs = [abs(r - 1) for r in ratios]
        assert errs == sorted(errs, reverse=True) and errs[-1] < 1e-3

    @pytest.mark.parametrize("n", [3, 4, 10, 25])
    def test_increasing_in_alpha(self, n):
        vals = [tbar_closed_form(n, a) for a in ALPHAS]
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestRecursion:
    def test_end_values(self):
        rep = recursion_check(5, 0.5)
        assert rep.y[0] == pytest.approx(11)
        assert rep.y[3] == pytest.approx(20)
        sol = absorption_solve(build_outlier_chain(5, 0.5))
        by_var = {variable_of_state(5, s): sol.value(s) for s in sol.states}
        assert by_var[("y", 0)] == pytest.approx(11)
        assert by_var[("y", 3)] == pytest.approx(20)

    @pytest.mark.parametrize("n", range(3, 16))
    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_residuals(self, n, alpha):
        rep = recursion_check(n, alpha)
        assert rep.residual_system <= 1e-9
        assert rep.residual_solver <= 1e-9
        assert rep.max_residual <= 1e-9
        assert rep.tbar_from_variables == pytest.approx(tbar_closed_form(n, alpha), rel=1e-9)


class TestBound:
    def test_tight_frame_is_zero(self):
        assert absorption_upper_bound(7, 7, 0.3) == 0.0

    def test_composition(self):
        assert absorption_upper_bound(10, 60, 0.2) == pytest.approx(tbar_closed_form(10, 0.2) * 2500 * 10 / 8)

    def test_rejects_short_frame(self):
        with pytest.raises(ValueError):
            absorption_upper_bound(5, 4, 0.3)

    def test_kernel_drives_chain(self):
        # compression probability on a two-slot difference comes straight from the kernel
        assert dict(interaction_distribution(2, 0.3))[1] == pytest.approx(0.7)
