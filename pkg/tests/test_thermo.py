"""
Unit tests for transfer matrices, pressure, P_f and Gibbs measures.

Closed forms: Pr(0) on the full 2-shift is log 2, on the golden mean log of the
golden ratio; Bernoulli potentials give product cylinder masses.
"""

import math

import numpy as np
import pytest

from config import CAPACITY
from engine.errors import CapacityError, NonPrimitiveError
from engine.thermo import (
    FlowModel, GibbsMeasure, RuelleOperator, build_transfer, eigenvalue_lipschitz_check,
    gibbs_cylinder, gibbs_envelopes, gibbs_property_report, gibbs_table, normalize_fa,
    pressure, pressure_truncation_report, rpf_solve, solve_pf, topological_entropy_sft,
)
from models.functions import DepthFn
from services.selftest import bernoulli_model


GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


class TestTransferMatrix:
    """Tests for block matrices and the Perron solve."""

    def test_zero_potential_perron_roots(self, full2, golden):
        assert rpf_solve(build_transfer(full2, DepthFn.constant(full2, 0.0))).lambda_ == pytest.approx(2.0, abs=1e-12)
        assert rpf_solve(build_transfer(golden, DepthFn.constant(golden, 0.0))).lambda_ == pytest.approx(GOLDEN_RATIO, abs=1e-12)

    def test_eigendata_normalization(self, golden):
        g = DepthFn.first_symbol(golden, [0.3, -0.2])
        solution = rpf_solve(build_transfer(golden, g))
        assert solution.nu_hat.values.sum() == pytest.approx(1.0)
        assert solution.nu_hat.values @ solution.h.values == pytest.approx(1.0)
        assert (solution.h.values > 0).all()

    def test_block_depth_follows_potential_depth(self, full2):
        g = DepthFn.constant(full2, 0.0, depth=3)
        assert build_transfer(full2, g).block_depth == 2

    def test_apply_matches_definition(self, full2):
        """(L_g h)(u) = sum_a e^{g(a.u)} h(a.u)."""
        g = DepthFn.first_symbol(full2, [0.1, -0.4])
        h = DepthFn.first_symbol(full2, [2.0, 3.0])
        out = RuelleOperator(g).apply(h)
        expected = math.exp(0.1) * 2.0 + math.exp(-0.4) * 3.0
        assert out((0,)) == pytest.approx(expected)
        assert out((1,)) == pytest.approx(expected)

    def test_block_state_cap(self, full2):
        with CAPACITY.override(block_state_cap=2):
            with pytest.raises(CapacityError):
                build_transfer(full2, DepthFn.constant(full2, 0.0))

    def test_complex_matrix_cannot_be_solved(self, full2):
        tau = DepthFn.constant(full2, 1.0)
        T = build_transfer(full2, DepthFn.constant(full2, 0.0), s=1j, roof=tau)
        with pytest.raises(NonPrimitiveError):
            rpf_solve(T)


class TestPressure:
    """Tests for pressure and the P_f root."""

    def test_topological_entropy(self, full2, golden):
        assert topological_entropy_sft(full2) == pytest.approx(math.log(2.0), abs=1e-12)
        assert topological_entropy_sft(golden) == pytest.approx(math.log(GOLDEN_RATIO), abs=1e-12)

    def test_bernoulli_potential_has_zero_pressure(self, full2):
        g = DepthFn.first_symbol(full2, [math.log(0.3), math.log(0.7)])
        assert pressure(full2, g) == pytest.approx(0.0, abs=1e-12)

    def test_solve_pf_constant_roof(self, full2):
        p = solve_pf(DepthFn.constant(full2, 0.0), DepthFn.constant(full2, 1.0))
        assert p == pytest.approx(math.log(2.0), abs=1e-10)

    def test_solve_pf_bernoulli_with_roof(self, bernoulli):
        """f = log 1/2 + tau gives Pr(f - tau) = 0, so P_f = 1."""
        assert bernoulli.p_f == pytest.approx(1.0, abs=1e-10)
        assert pressure(bernoulli.subshift, bernoulli.f - bernoulli.p_f * bernoulli.tau) == pytest.approx(0.0, abs=1e-10)

    def test_solve_pf_rejects_nonpositive_roof(self, full2):
        with pytest.raises(ValueError, match="strictly positive"):
            solve_pf(DepthFn.constant(full2, 0.0), DepthFn.first_symbol(full2, [1.0, 0.0]))

    def test_truncation_report_is_flat_for_depth_one_potential(self, full2):
        def potential(word):
            return math.log(0.3) if word[0] == 0 else math.log(0.7)
        report = pressure_truncation_report(full2, potential, [1, 2, 3])
        assert [k for k, _ in report] == [1, 2, 3]
        assert all(p == pytest.approx(0.0, abs=1e-12) for _, p in report)


class TestNormalization:
    """Tests for the normalized potentials f^(a)."""

    @pytest.mark.parametrize("a", [0.0, 0.05, -0.05])
    def test_normalized_operator_fixes_one(self, bernoulli, a):
        fa = normalize_fa(bernoulli.f, bernoulli.tau, a, bernoulli.p_f)
        ones = RuelleOperator(fa).apply(DepthFn.constant(bernoulli.subshift, 1.0))
        assert np.max(np.abs(ones.values - 1.0)) < 1e-12

    def test_depth_two_normalization(self, depth2):
        ones = depth2.markov_operator(0.0).apply(DepthFn.constant(depth2.subshift, 1.0))
        assert np.max(np.abs(ones.values - 1.0)) < 1e-12

    def test_eigenvalue_is_one_at_zero_offset(self, bernoulli):
        assert bernoulli.solution(0.0).lambda_ == pytest.approx(1.0, abs=1e-10)

    def test_eigenvalue_lipschitz_check(self, bernoulli):
        ratio = eigenvalue_lipschitz_check(bernoulli, [0.01, -0.01])
        assert 0.0 < ratio < 10.0
        assert eigenvalue_lipschitz_check(bernoulli, [0.0]) == 0.0


class TestGibbsMeasure:
    """Tests for cylinder masses of Gibbs measures."""

    def setup_method(self):
        self.measure = bernoulli_model(0.3, (1.0, 1.0)).measure

    def test_bernoulli_cylinder_masses(self):
        index = self.measure.subshift.words(5)
        expected = np.prod(np.where(index.words == 0, 0.3, 0.7), axis=1)
        assert np.max(np.abs(self.measure.masses(5) - expected)) < 1e-12

    def test_cylinder_lookup(self):
        assert gibbs_cylinder(self.measure, (0, 1, 0)) == pytest.approx(0.3 * 0.7 * 0.3)
        assert self.measure.cylinder((0, 1, 0)) == pytest.approx(self.measure.masses(3)[2])

    def test_inadmissible_cylinder_has_zero_mass(self, parry):
        assert parry.measure.cylinder((1, 1, 0)) == 0.0

    @pytest.mark.parametrize("depth", [1, 2, 3, 6])
    def test_masses_sum_to_one(self, depth2, depth):
        assert depth2.measure.masses(depth).sum() == pytest.approx(1.0, abs=1e-12)

    def test_shift_invariance(self, depth2):
        """Summing nu(C[a.w]) over a gives nu(C[w])."""
        measure = depth2.measure
        longer = measure.masses(4)
        index = depth2.subshift.words(4)
        tails = depth2.subshift.words(3).locate(index.words[:, 1:])
        summed = np.bincount(tails, weights=longer, minlength=len(measure.masses(3)))
        assert np.max(np.abs(summed - measure.masses(3))) < 1e-12

    def test_parry_measure_masses(self, parry):
        """The Parry measure gives nu[0] = phi^2 / (1 + phi^2)."""
        phi = GOLDEN_RATIO
        assert parry.measure.cylinder((0,)) == pytest.approx(phi ** 2 / (1.0 + phi ** 2), abs=1e-12)

    def test_integrate(self, full2):
        chi = DepthFn.indicator(full2, [(0, 0)])
        assert self.measure.integrate(chi) == pytest.approx(0.09)

    def test_explicit_block_masses_are_normalized(self, full2):
        measure = GibbsMeasure(DepthFn.constant(full2, math.log(0.5), depth=2), [2.0, 2.0])
        assert measure.masses(1).tolist() == [0.5, 0.5]


class TestGibbsEnvelopes:
    """Tests for the observed Gibbs-inequality constants."""

    @pytest.mark.parametrize("name", ["bernoulli", "depth2", "parry"])
    def test_spread_does_not_grow(self, request, name):
        model: FlowModel = request.getfixturevalue(name)
        g = model.f - model.p_f * model.tau
        envelopes, slope = gibbs_envelopes(model.measure, g, 8)
        assert len(envelopes) == 8
        assert all(0.0 < e.c1 <= e.c2 for e in envelopes)
        assert slope <= 0.01

    def test_bernoulli_ratios_are_one(self):
        model = bernoulli_model(0.3, (1.0, 1.0))
        g = model.f - model.p_f * model.tau
        c1, c2 = gibbs_property_report(model.measure, g, 6)
        assert c1 == pytest.approx(1.0)
        assert c2 == pytest.approx(1.0)

    def test_gibbs_table_shapes(self, depth2):
        g = depth2.f - depth2.p_f * depth2.tau
        index, masses, e_gm = gibbs_table(depth2.measure, g, 4)
        assert len(index) == len(masses) == len(e_gm) == 16
        assert (e_gm > 0).all()
