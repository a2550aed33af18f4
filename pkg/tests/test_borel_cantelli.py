"""
Unit tests for S_M visit statistics.

Under the fair coin with V = C[0] and N = 1, S_M is Binomial(M, 1/2), so every
exact quantity has a closed form.
"""

import logging

import pytest
from scipy import stats

from config import CAPACITY
from engine.borel_cantelli import (
    borel_cantelli_stats, eps_bound, family_borel_cantelli, first_m_below_one,
)
from engine.errors import CapacityError
from services.selftest import bernoulli_model


V_ZERO = [(0, 0), (0, 1)]


class TestExactMode:
    """Tests for the dynamic-programming law of S_M."""

    def setup_method(self):
        self.measure = bernoulli_model().measure

    def test_binomial_law(self):
        report = borel_cantelli_stats(self.measure, V_ZERO, N=1, M=8, mode="exact")
        assert report.mode == "exact"
        assert report.v_mass == pytest.approx(0.5)
        assert report.gamma2 == pytest.approx(0.25)
        assert report.law == pytest.approx(stats.binom.pmf(range(9), 8, 0.5).tolist(), abs=1e-12)

    def test_small_visit_count_probability(self):
        report = borel_cantelli_stats(self.measure, V_ZERO, N=1, M=8, mode="exact")
        assert report.nu_u_eps == pytest.approx(9.0 / 256.0, abs=1e-12)
        # [M nu + 2 (M - 1) nu] / (M gamma2)^2 with no cluster contribution
        assert report.eps == pytest.approx(2.75, abs=1e-9)
        assert report.verdict

    def test_independent_visits_have_no_cluster_terms(self):
        report = borel_cantelli_stats(self.measure, V_ZERO, N=1, M=8, mode="exact")
        assert report.cluster[0] == pytest.approx(0.25)
        assert all(abs(x) < 1e-12 for x in report.cluster[1:])
        assert report.sigma_m == pytest.approx(2.0)
        assert report.chebyshev == pytest.approx(0.5)

    def test_vacuous_bound_is_flagged(self, caplog):
        with caplog.at_level(logging.WARNING, logger="engine.borel_cantelli"):
            report = borel_cantelli_stats(self.measure, V_ZERO, N=1, M=8, mode="exact")
        assert report.eps >= 1.0
        # 8 (3M - 2) / M^2 < 1 first at M = 24
        assert report.eps_below_one_at == 24
        assert "vacuous" in caplog.text

    def test_bound_below_one(self, caplog):
        with CAPACITY.override(exact_horizon=40), \
                caplog.at_level(logging.WARNING, logger="engine.borel_cantelli"):
            report = borel_cantelli_stats(self.measure, V_ZERO, N=1, M=24, mode="exact")
        assert report.eps == pytest.approx(8.0 * 70.0 / 576.0)
        assert report.eps < 1.0
        assert report.verdict
        assert "vacuous" not in caplog.text

    def test_first_m_below_one(self):
        assert eps_bound(23, 0.5, 0.25, 2, 0.0, 0.5) >= 1.0
        assert eps_bound(24, 0.5, 0.25, 2, 0.0, 0.5) < 1.0
        assert first_m_below_one(0.5, 0.25, 2, 0.0, 0.5) == 24
        # a cluster tail pushes the threshold out
        assert first_m_below_one(0.5, 0.25, 2, 1.0, 0.5) > 24
        with pytest.raises(ValueError):
            first_m_below_one(0.0, 0.25, 2, 0.0, 0.5)

    def test_horizon_cap(self):
        with pytest.raises(CapacityError):
            borel_cantelli_stats(self.measure, V_ZERO, N=1, M=30, mode="exact")
        with CAPACITY.override(exact_horizon=40):
            report = borel_cantelli_stats(self.measure, V_ZERO, N=1, M=30, mode="exact")
        assert sum(report.law) == pytest.approx(1.0)

    @pytest.mark.parametrize("kwargs", [{"mode": "fast"}, {"N": 0}, {"M": 0}])
    def test_rejects_bad_arguments(self, kwargs):
        args = {"N": 1, "M": 8, **kwargs}
        with pytest.raises(ValueError):
            borel_cantelli_stats(self.measure, V_ZERO, **args)

    def test_cylinders_must_share_a_length(self):
        with pytest.raises(ValueError):
            borel_cantelli_stats(self.measure, [(0,), (1, 0)], N=1, M=4)


class TestMonteCarloMode:
    """Tests for sampled estimates."""

    def test_estimate_matches_exact(self):
        measure = bernoulli_model().measure
        report = borel_cantelli_stats(measure, V_ZERO, N=1, M=8, mode="monte_carlo",
                                      samples=20000, seed=3)
        assert report.mode == "monte_carlo"
        assert report.samples == 20000
        assert report.nu_u_eps == pytest.approx(9.0 / 256.0, abs=0.01)
        low, high = report.ci
        assert low <= report.nu_u_eps <= high
        assert report.law == []

    def test_auto_switches_past_the_horizon(self):
        measure = bernoulli_model().measure
        report = borel_cantelli_stats(measure, V_ZERO, N=1, M=30, samples=2000)
        assert report.mode == "monte_carlo"

    def test_dependent_chain(self, depth2):
        measure = depth2.measure
        exact = borel_cantelli_stats(measure, [(0, 0)], N=2, M=6, mode="exact")
        sampled = borel_cantelli_stats(measure, [(0, 0)], N=2, M=6, mode="monte_carlo",
                                       samples=20000, seed=1)
        assert sampled.nu_u_eps == pytest.approx(exact.nu_u_eps, abs=0.02)


class TestFamilyStatistics:
    """Tests for V_b built from family cylinders."""

    def test_family_cylinders_cover_the_shift(self, family16):
        family, _ = family16
        report = family_borel_cantelli(family, 4)
        assert report.mode == "exact"
        assert report.v_mass == pytest.approx(1.0)
        assert report.nu_u_eps == pytest.approx(0.0, abs=1e-12)
        assert report.law[-1] == pytest.approx(1.0)
