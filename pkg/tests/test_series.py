import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwrate import (InsufficientData, PreconditionError, b_coeff, build_trail, build_trails,
                     burkholder_check, burkholder_constants, fit_rate, fixpoint_check,
                     increment_curve, increment_lp, moment_growth, run_population,
                     simulate_ensemble)
from brwrate.series import increment_l2_exact, surrogate_horizon, tail_l2_exact

from conftest import all_laws


def naive_series(W, a):
    """Direct double loops over the definitions."""
    N = len(W) - 1
    A, Ap, Ah, R = [], [], [], []
    for m in range(N):
        A.append(sum(math.exp(a * n) * (W[N] - W[n]) for n in range(m + 1)))
        Ap.append(sum(sum(math.exp(a * j) for j in range(k + 1)) * (W[k + 1] - W[k])
                      for k in range(m + 1)))
        Ah.append(sum(math.exp(a * k) * (W[k + 1] - W[k]) for k in range(m + 1)))
        R.append(sum(math.exp(2 * a * k) * (W[k + 1] - W[k]) ** 2 for k in range(m + 1)))
    return A, Ap, Ah, R


class TestCoefficients:
    def test_values(self):
        assert b_coeff(math.log(2), 3) == pytest.approx(15.0, rel=1e-14)
        assert b_coeff(0.3, 0) == 1.0
        assert b_coeff(1e-9, 4) == pytest.approx(5.0, rel=1e-8)

    def test_positive_a(self):
        with pytest.raises(PreconditionError):
            b_coeff(0.0, 3)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.01, 2.0), st.floats(0.001, 0.5), st.integers(1, 40))
    def test_strictly_increasing(self, a, da, n):
        # b_0 = 1 for every a, so strict growth in a starts at n = 1
        assert b_coeff(a + da, n) > b_coeff(a, n)
        assert b_coeff(a, n + 1) > b_coeff(a, n)

    def test_burkholder_constants(self):
        c2, C2 = burkholder_constants(2.0)
        assert c2 == pytest.approx(1 / (36 * math.sqrt(2)), rel=1e-14)
        assert C2 == pytest.approx(36 * math.sqrt(2), rel=1e-14)
        c, C = burkholder_constants(1.5)
        assert c == pytest.approx(0.5 / (18 * 1.5**1.5), rel=1e-14)
        assert c == pytest.approx(0.0151203, abs=5e-8)
        assert C == pytest.approx(46.7654, abs=5e-5)


class TestTrail:
    def test_degenerate_is_zero(self, degenerate):
        run = run_population(degenerate, 8, rng=0)
        tr = build_trail(run, 0.3)
        for arr in (tr.A, tr.A_prime, tr.A_hat, tr.R):
            assert np.all(arr == 0.0)

    def test_against_naive_loops(self, two_point):
        W = run_population(two_point, 7, rng=4).W
        tr = build_trail(W, 0.2)
        for got, want in zip((tr.A, tr.A_prime, tr.A_hat, tr.R), naive_series(W, 0.2)):
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)

    def test_identity_term_by_term(self, two_point):
        a = math.log(2)
        W = run_population(two_point, 3, rng=8).W
        tr = build_trail(W, a)
        for m in range(3):
            prev = tr.A_prime[m - 1] if m else 0.0
            assert tr.A[m] == pytest.approx(b_coeff(a, m) * (W[3] - W[m]) + prev,
                                            rel=1e-12, abs=1e-14)
        ea = math.exp(a)
        assert tr.A_prime[2] == pytest.approx((ea * tr.A_hat[2] - (W[3] - 1)) / (ea - 1),
                                              rel=1e-12, abs=1e-14)

    @pytest.mark.parametrize("name", list(all_laws()))
    def test_path_identity(self, name):
        ens = simulate_ensemble(all_laws()[name], 10, 1000, seed=2)
        tr = build_trails(ens.W, 0.15)
        assert np.all(np.abs(tr.identity_residual()) <= 1e-10 * (1 + np.abs(tr.A)))
        assert np.all(np.abs(tr.decomposition_residual()) <= 1e-10 * (1 + np.abs(tr.A_prime)))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 10.0), min_size=3, max_size=25), st.floats(0.01, 1.0))
    def test_identity_on_arbitrary_paths(self, W, a):
        tr = build_trails(np.array(W), a)
        assert np.all(np.abs(tr.identity_residual()) <= 1e-10 * (1 + np.abs(tr.A)))

    def test_short_path(self):
        with pytest.raises(PreconditionError):
            build_trails(np.ones(2), 0.1)


class TestFit:
    def test_noiseless(self):
        fit = fit_rate([(n, (2 / 3) ** n, 0.0) for n in range(8)])
        assert abs(fit.slope - math.log(2 / 3)) < 1e-12

    def test_weighted(self):
        rng = np.random.default_rng(0)
        vals = [(n, 0.5**n * (1 + 0.01 * rng.standard_normal()), 0.01 * 0.5**n)
                for n in range(10)]
        fit = fit_rate(vals, predicted=math.log(0.5))
        assert fit.matches(0.02) and fit.slope_stderr > 0

    def test_sparse_points_dropped(self):
        vals = [(n, 0.5**n, 0.0, 100) for n in range(5)] + [(5, 1.0, 0.0, 3)]
        fit = fit_rate(vals)
        assert fit.n_points == 5 and fit.fit_range == (0, 4)

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            fit_rate([(0, 1.0, 0.0), (1, 0.5, 0.0), (2, 0.0, 0.0), (3, 0.1, 0.0, 2)])


class TestIncrements:
    def test_exact_second_moments(self, uniform):
        assert increment_l2_exact(uniform, 3) == pytest.approx((1 / 6) * (2 / 3) ** 3)
        assert tail_l2_exact(uniform, 4) == pytest.approx(0.5 * (2 / 3) ** 4)
        assert tail_l2_exact(uniform, 2, horizon=3) == pytest.approx(increment_l2_exact(uniform, 2))

    def test_surrogate_horizon(self, uniform):
        N = surrogate_horizon(uniform, 6)
        assert (2 / 3) ** (N - 6) < 0.01 <= (2 / 3) ** (N - 7)

    @pytest.mark.parametrize("name", ["uniform", "poisson", "two_point"])
    def test_p2_increments(self, name):
        law = all_laws()[name]
        curve = increment_curve(law, 2.0, 0.1, 9, 10_000, seed=3)
        for c in curve:
            want = math.exp(0.2 * c.n) * increment_l2_exact(law, c.n)
            assert c.scaled_increment.within(want, k=3)

    def test_single_increment(self, two_point):
        inc = increment_lp(two_point, 2.0, 0.1, 0, 2000, seed=1, horizon=3)
        assert inc.scaled_increment.value == pytest.approx(0.25)

    def test_needs_p_above_one(self, uniform):
        with pytest.raises(PreconditionError):
            increment_curve(uniform, 1.0, 0.1, 4, 10)


class TestBurkholderAndFixpoint:
    def test_degenerate_zero(self, degenerate):
        res = burkholder_check(degenerate, 2.0, 0.1, 6, 50, seed=0)
        assert res.lower.value == res.middle.value == res.upper.value == 0.0
        assert res.verdict

    def test_sandwich(self, two_point):
        assert burkholder_check(two_point, 1.5, 0.1, 10, 3000, seed=4).verdict

    def test_fixpoint_degenerate(self, degenerate):
        res = fixpoint_check(degenerate, 2.0, 0.1, 6, 50, seed=0)
        assert np.all(res.lhs == 0) and np.all(res.rhs == 0) and res.pvalue == 1.0

    def test_fixpoint_two_point(self, two_point):
        res = fixpoint_check(two_point, 2.0, 0.1, 10, 5000, seed=6)
        assert res.pvalue > 0.001
        assert res.lhs_mean.within(0.0) and res.rhs_mean.within(0.0)


class TestGrowth:
    def test_bounded_when_mp_below_one(self, uniform):
        g = moment_growth(uniform, 2.0, 10, 5000, seed=1)
        assert g.bounded
        assert g.predicted_rate == pytest.approx(math.log(2 / 3))

    def test_needs_enough_generations(self, uniform):
        with pytest.raises(InsufficientData):
            moment_growth(uniform, 2.0, 3, 100, seed=1)

    def test_shared_ensemble(self, two_point):
        ens = simulate_ensemble(two_point, 8, 2000, seed=2)
        a = moment_growth(two_point, 2.0, 8, 0, ensemble=ens)
        b = moment_growth(two_point, 3.0, 8, 0, ensemble=ens)
        assert a.estimates[0].value == b.estimates[0].value == 1.0

    def test_envelope_is_exact_at_p2(self, two_point):
        # E W_n^2 = 1 + mu_2 (1 + m(2) + ... + m(2)^(n-1)), the envelope itself
        g = moment_growth(two_point, 2.0, 10, 20_000, seed=5)
        assert abs(g.exp_rate - g.predicted_rate) < 3 * g.exp_rate_stderr
        assert g.bounded

    def test_degenerate_is_flat(self, degenerate):
        g = moment_growth(degenerate, 2.0, 6, 50, seed=0)
        assert g.exp_rate == -math.inf and g.bounded and g.scale == 0.0

    def test_geometric_sum_continuous_at_zero(self):
        from brwrate.series import _geometric_sum
        n = np.arange(1, 8)
        np.testing.assert_allclose(_geometric_sum(n, 1e-10), _geometric_sum(n, 2e-9), rtol=1e-8)
        np.testing.assert_allclose(_geometric_sum(n, math.log(2)), 2.0**n - 1, rtol=1e-12)
