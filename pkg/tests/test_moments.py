import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwrate import (DiscreteTable, IidScaledUniform, LogNormalWeights, PreconditionError,
                     analyze, check_lp, check_main1, check_main2, find_q, find_theta, g_fn,
                     h_fn, predicted_rate)
from brwrate.moments import BoundaryWarning

from conftest import SIGMA2, all_laws

A_STAR_UNIFORM = 0.5 * math.log(1.5)


def m_lognormal(r):
    return 2 ** (1.0 - r) * math.exp(SIGMA2 * r * (r - 1.0) / 2.0)


class TestSpectralObjects:
    def test_lognormal_theta_gamma(self, lognormal):
        prof = find_theta(lognormal)
        assert prof.interior_min
        assert abs(prof.theta - 1.5) < 1e-6
        assert abs(prof.gamma - m_lognormal(1.5) ** (1 / 1.5)) < 1e-6
        assert abs(prof.gamma - 0.9258747) < 1e-6

    def test_lognormal_conjugate(self, lognormal):
        # p q = 2 log 2 / sigma2 for this family
        assert abs(find_q(find_theta(lognormal), 1.8) - 1.25) < 1e-6

    def test_theta_capped_at_two(self, uniform, two_point, poisson):
        for law in (uniform, two_point, poisson):
            prof = find_theta(law)
            assert prof.theta == 2.0 and not prof.interior_min
            assert math.isclose(prof.gamma, law.mean_measure(2.0) ** 0.5)

    def test_uniform_gamma(self, uniform):
        assert math.isclose(find_theta(uniform).gamma, math.sqrt(2 / 3))

    @pytest.mark.parametrize("name", list(all_laws()))
    def test_h_is_scaled_derivative_of_g(self, name):
        law = all_laws()[name]
        for r in np.linspace(1.05, 1.95, 10):
            d = 1e-6
            dg = (g_fn(law, r + d) - g_fn(law, r - d)) / (2 * d)
            assert math.isclose(dg, h_fn(law, r) / r**2, rel_tol=1e-5, abs_tol=1e-9)

    def test_theta_below_two_iff_h2_positive(self):
        for s2 in (0.3, 0.5, 2 * math.log(2) / 4.0 * 0.99, 0.7, 1.0):
            law = LogNormalWeights(2, s2)
            prof = find_theta(law)
            assert (prof.theta < 2) == (h_fn(law, 2.0) > 0)
            if prof.theta < 2:
                assert abs(h_fn(law, prof.theta)) < 1e-8
                assert abs(prof.theta - math.sqrt(2 * math.log(2) / s2)) < 1e-8

    def test_find_q_preconditions(self, lognormal, uniform):
        with pytest.raises(PreconditionError):
            find_q(find_theta(lognormal), 1.4)
        with pytest.raises(PreconditionError):
            find_q(find_theta(uniform), 2.5)

    def test_find_q_boundary(self):
        law = LogNormalWeights(2, 1.2)
        prof = find_theta(law)
        with pytest.warns(BoundaryWarning):
            assert find_q(prof, 1.9) == 1.0

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.35, 1.0), st.floats(0.05, 0.95))
    def test_conjugate_property(self, s2, frac):
        law = LogNormalWeights(2, s2)
        prof = find_theta(law)
        if not prof.interior_min:
            return
        p = prof.theta + frac * (2 - prof.theta)
        if g_fn(law, p) >= 0:
            return
        q = find_q(prof, p)
        assert 1 < q < prof.theta
        assert abs(law.mean_measure(q) ** (1 / q) - law.mean_measure(p) ** (1 / p)) < 1e-9


class TestPredictedRate:
    def test_uniform(self, uniform):
        assert abs(predicted_rate(uniform, 1.5, 2.0) - (2 / 3) ** 0.75) < 1e-12
        assert abs(predicted_rate(uniform, 1.5, 1.0) - 1.0) < 1e-12

    def test_two_point(self, two_point):
        assert abs(predicted_rate(two_point, 1.5, 2.0) - 0.6875**0.75) < 1e-12

    def test_lognormal_above_theta(self, lognormal):
        prof = find_theta(lognormal)
        mp = m_lognormal(1.8)
        assert math.isclose(predicted_rate(prof, 1.8, 1.9), mp, rel_tol=1e-12)
        assert math.isclose(predicted_rate(prof, 1.8, 1.1), m_lognormal(1.1) ** (1.8 / 1.1),
                            rel_tol=1e-12)

    def test_lognormal_below_theta(self, lognormal):
        prof = find_theta(lognormal)
        assert math.isclose(predicted_rate(prof, 1.3, 1.7), prof.gamma**1.3, rel_tol=1e-12)

    def test_continuity_at_junctions(self, lognormal):
        prof = find_theta(lognormal)
        p = 1.3
        left = lognormal.mean_measure(prof.theta) ** (p / prof.theta)
        assert abs(left - predicted_rate(prof, p, prof.theta)) < 1e-9
        p = 1.8
        q = find_q(prof, p)
        left = lognormal.mean_measure(q) ** (p / q)
        assert abs(left - predicted_rate(prof, p, q)) < 1e-9

    def test_preconditions(self, uniform, lognormal):
        with pytest.raises(PreconditionError):
            predicted_rate(uniform, 2.0, 1.5)
        with pytest.raises(PreconditionError):
            predicted_rate(uniform, 1.5, 2.5)


class TestCriteria:
    def test_lp(self, uniform, lognormal):
        assert check_lp(uniform, 2).lp_converges
        assert check_lp(lognormal, 2.0).lp_converges
        assert not check_lp(lognormal, 2.25).lp_converges
        assert not check_lp(lognormal, 2.5).lp_converges

    def test_main2_threshold(self, uniform):
        assert check_main2(uniform, 2, 0.15).main2
        assert not check_main2(uniform, 2, 0.25).main2
        assert math.isclose(check_main2(uniform, 2, A_STAR_UNIFORM).main2_margin, 0.0,
                            abs_tol=1e-12)

    def test_main2_uses_larger_root(self, lognormal):
        # p = 2.2 < 2.25: m(p)^{1/p} is the larger root
        rep = check_main2(lognormal, 2.2, 0.001)
        worst = max(m_lognormal(2) ** 0.5, m_lognormal(2.2) ** (1 / 2.2))
        assert math.isclose(rep.main2_margin, 1 - math.exp(0.001) * worst, rel_tol=1e-12)

    def test_main1_threshold(self, uniform):
        rep = check_main1(uniform, 1.5, 0.15)
        assert rep.main1_sufficient and rep.r_star == pytest.approx(2.0, abs=1e-9)
        assert not check_main1(uniform, 1.5, 0.25).main1_sufficient
        assert not check_main1(uniform, 1.5, 0.25).main1_necessary

    def test_main1_above_theta(self, lognormal):
        a_star = -math.log(m_lognormal(1.8)) / 1.8
        rep = check_main1(lognormal, 1.8, 0.9 * a_star)
        assert rep.main1_sufficient and rep.r_star == pytest.approx(1.8, abs=1e-6)
        assert rep.sharpened_verdict
        assert check_main1(lognormal, 1.8, 1.1 * a_star).sharpened_verdict is False

    def test_main1_boundary_flag(self, uniform):
        rep = check_main1(uniform, 1.5, A_STAR_UNIFORM)
        assert rep.main1_boundary and rep.main1_necessary and not rep.main1_sufficient

    def test_degenerate_flag(self, degenerate):
        assert check_lp(degenerate, 2).degenerate
        assert analyze(degenerate, 2, 0.1).degenerate

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(list(all_laws())), st.floats(1.01, 1.99), st.floats(0.001, 0.5))
    def test_sufficient_implies_necessary(self, name, p, a):
        rep = check_main1(all_laws()[name], p, a)
        assert not rep.main1_sufficient or rep.main1_necessary

    def test_input_checks(self, uniform):
        with pytest.raises(PreconditionError):
            check_main1(uniform, 2.0, 0.1)
        with pytest.raises(PreconditionError):
            check_main2(uniform, 1.5, 0.1)
        with pytest.raises(PreconditionError):
            check_main2(uniform, 2.0, 0.0)

    def test_analyze_report(self, lognormal):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rep = analyze(lognormal, 1.8, 0.01)
        d = rep.to_dict()
        for key in ("theta", "gamma", "q", "r_star", "main1_sufficient", "main1_margin"):
            assert key in d
        assert d["q"] == pytest.approx(1.25, abs=1e-6)
