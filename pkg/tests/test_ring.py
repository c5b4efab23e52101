import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from d3sync.ring import (
    GapVector,
    Outcome,
    RingState,
    check_step,
    classify,
    count_tdm_states,
    interact,
    interact_u,
    is_tdm,
    lyapunov,
    range_of,
    run_uniform_variant,
    trajectory,
    uniform_interact,
)


@st.composite
def ring_states(draw, max_n=8, max_gap=15):
    n = draw(st.integers(2, max_n))
    gaps = draw(st.lists(st.integers(1, max_gap), min_size=n, max_size=n))
    edge = draw(st.integers(0, n - 1))
    return RingState(GapVector(gaps), edge)


alphas = st.floats(min_value=0.01, max_value=0.99)


class TestGapVector:
    def test_derived_quantities(self):
        g = GapVector([10, 9, 10, 10, 9, 9])
        assert (g.n, g.total, g.ell, g.r) == (6, 57, 9, 3)

    @pytest.mark.parametrize("bad", [[0, 3], [3], [2.5, 2], [-1, 4]])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            GapVector(bad)

    def test_edge_wraps(self):
        assert RingState([1, 2, 3], active_edge=-1).active_edge == 2


class TestClassify:
    def test_examples(self):
        assert classify((5, 3), (5, 3)) is Outcome.NULL
        assert classify((4, 3), (3, 4)) is Outcome.SWAP
        assert classify((5, 3), (4, 4)) is Outcome.COMPRESSION

    def test_equal_pair_unchanged_is_null(self):
        assert classify((4, 4), (4, 4)) is Outcome.NULL

    def test_rejects_sum_change(self):
        with pytest.raises(ValueError):
            classify((5, 3), (5, 4))

    def test_rejects_expansion(self):
        with pytest.raises(ValueError):
            classify((4, 4), (5, 3))


class TestTdm:
    def test_examples(self):
        assert is_tdm([10] * 6)
        assert is_tdm([10, 9, 10, 9, 10, 9])
        assert not is_tdm([1, 2, 3, 2])

    def test_all_arrangements_of_three_tens_and_three_nines(self):
        for tens in itertools.combinations(range(6), 3):
            assert is_tdm([10 if i in tens else 9 for i in range(6)])

    def test_counts(self):
        assert count_tdm_states(6, 57) == 20
        assert count_tdm_states(6, 60) == 1

    def test_count_by_enumeration(self):
        found = [g for g in itertools.product(range(1, 7), repeat=4) if sum(g) == 6 and is_tdm(g)]
        assert len(found) == count_tdm_states(4, 6) == 6
        assert all(sorted(g) == [1, 1, 2, 2] for g in found)

    @pytest.mark.parametrize("n", range(2, 6))
    def test_count_matches_enumeration(self, n):
        for total in range(n, 3 * n + 1):
            found = sum(
                1 for g in itertools.product(range(1, total + 1), repeat=n) if sum(g) == total and is_tdm(g)
            )
            assert found == count_tdm_states(n, total)

    def test_count_rejects_bad(self):
        with pytest.raises(ValueError):
            count_tdm_states(5, 4)


class TestMeasures:
    def test_range(self):
        assert range_of([10, 10, 10]) == 0
        assert range_of([10, 9, 10]) == 1
        assert range_of([3, 1, 2, 4, 1, 5]) == 4

    def test_range_zero_iff_divisible(self):
        assert range_of([4, 4, 4]) == 0
        assert range_of([5, 4, 4]) == 1

    def test_lyapunov(self):
        assert lyapunov([10] * 6) == 0
        assert lyapunov([4, 2, 3, 3, 3]) == pytest.approx(2)
        assert lyapunov([3, 1]) == pytest.approx(2)
        assert (4 - 2) ** 2 * 2 / 4 == 2

    @given(st.lists(st.integers(1, 30), min_size=2, max_size=10))
    def test_lyapunov_bound(self, gaps):
        n, total = len(gaps), sum(gaps)
        assert 0 <= lyapunov(gaps) <= (total - n) ** 2 * n / 4 + 1e-9


class TestInteract:
    def test_equal_pair_is_null(self, rng):
        s = RingState([5, 5, 2], 0)
        for _ in range(50):
            nxt, out = interact(s, 0.4, rng)
            assert out.kind is Outcome.NULL and nxt.gaps == s.gaps

    def test_unit_difference_frequencies(self, rng):
        alpha, n = 0.3, 20000
        kinds = [interact(RingState([4, 3, 5], 0), alpha, rng)[1].kind for _ in range(n)]
        swaps = sum(k is Outcome.SWAP for k in kinds) / n
        assert set(kinds) <= {Outcome.NULL, Outcome.SWAP}
        assert abs(swaps - (1 - alpha) / 2) < 4 * np.sqrt(0.25 / n)

    def test_five_three(self):
        s = RingState([5, 3, 4], 0)
        up, out_up = interact_u(s, 0.5, 0.1)
        down, out_down = interact_u(s, 0.5, 0.9)
        assert up.gaps.gaps[:2] == (5, 3) and out_up.kind is Outcome.NULL
        assert down.gaps.gaps[:2] == (4, 4) and out_down.kind is Outcome.COMPRESSION

    def test_edge_rotates_down(self, rng):
        s = RingState([3, 1, 2, 4], 0)
        edges = []
        for _ in range(6):
            s, out = interact(s, 0.2, rng)
            edges.append(out.edge)
        assert edges == [0, 3, 2, 1, 0, 3]

    def test_wraparound_edge_pairs_last_with_first(self):
        s = RingState([2, 3, 6], 2)
        nxt, out = interact_u(s, 0.5, 0.99)
        assert out.before == (6, 2)
        assert nxt.gaps.gaps[1] == 3

    def test_one_uniform_per_interaction(self):
        a, b = np.random.default_rng(3), np.random.default_rng(3)
        s = RingState([1, 9, 4, 4], 0)
        for _ in range(20):
            s, _ = interact(s, 0.3, a)
            b.random()
        assert a.random() == b.random()

    def test_trajectory_generator(self, rng):
        it = trajectory(RingState([1, 9, 4, 4], 0), 0.3, rng)
        steps = [next(it)[0].step for _ in range(5)]
        assert steps == [1, 2, 3, 4, 5]


class TestUniformVariant:
    @pytest.mark.parametrize("alpha", [0.05, 0.2, 0.5, 0.8, 0.95])
    @pytest.mark.parametrize("edge", range(4))
    def test_non_tdm_fixed_point(self, alpha, edge):
        s = RingState([1, 2, 3, 2], edge)
        assert run_uniform_variant(s, alpha, 40).gaps.gaps == (1, 2, 3, 2)

    def test_equal_pair(self):
        assert run_uniform_variant(RingState([2, 2]), 0.5).gaps.gaps == (2, 2)

    def test_tie_pair(self):
        # the scaled difference is exactly 1.5; ties round toward +inf,
        # so (4, 2) stays put while the mirrored pair (2, 4) compresses
        nxt, out = uniform_interact(RingState([4, 2], 0), 0.5)
        assert nxt.gaps.gaps == (4, 2) and out.kind is Outcome.NULL
        nxt, out = uniform_interact(RingState([4, 2], 1), 0.5)
        assert out.before == (2, 4)
        assert nxt.gaps.gaps == (3, 3) and out.kind is Outcome.COMPRESSION


class TestInvariants:
    @given(s=ring_states(), alpha=alphas, seed=st.integers(0, 2**32))
    def test_invariant_suite_holds(self, s, alpha, seed):
        rng = np.random.default_rng(seed)
        for _ in range(150):
            nxt, out = interact(s, alpha, rng)
            check_step(s, nxt, out)
            b, a = out.before, out.after
            if abs(b[0] - b[1]) >= 2:
                assert max(a) <= max(b) and min(a) >= min(b)
            others = [i for i in range(s.n) if i not in (out.edge, (out.edge + 1) % s.n)]
            assert all(nxt.gaps[i] == s.gaps[i] for i in others)
            s = nxt

    @given(s=ring_states(), alpha=alphas, seed=st.integers(0, 2**32))
    def test_tdm_is_absorbing(self, s, alpha, seed):
        rng = np.random.default_rng(seed)
        n, total = s.n, s.gaps.total
        ell, r = divmod(total, n)
        order = rng.permutation(n)
        gaps = [ell + 1 if order[i] < r else ell for i in range(n)]
        if ell < 1:
            return
        state = RingState(gaps, s.active_edge)
        for _ in range(300):
            state, _ = interact(state, alpha, rng)
            assert is_tdm(state)

    @given(s=ring_states(max_n=6, max_gap=8), alpha=alphas, seed=st.integers(0, 2**32))
    def test_reaches_tdm(self, s, alpha, seed):
        rng = np.random.default_rng(seed)
        for _ in range(200000):
            if is_tdm(s):
                break
            s, _ = interact(s, alpha, rng)
        assert is_tdm(s)

    def test_check_step_detects_violations(self):
        before = RingState([3, 5, 2], 0)
        after = RingState([6, 2, 2], 2)
        fake = interact_u(before, 0.5, 0.0)[1]
        with pytest.raises(AssertionError):
            check_step(before, after, fake)
