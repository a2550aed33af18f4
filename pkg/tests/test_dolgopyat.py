"""
Unit tests for the constant ledger, cylinder families, the metric D and N_J.

The fair-coin model with roof (1, sqrt 2) is used throughout: at b = 16 and
theta = 1/2 the family lives on the 16 cylinders of length 4.
"""

import logging
import math

import numpy as np
import pytest

from engine.dolgopyat import (
    ConstantLedger, apply_nj, build_family, cone_closure_check, cone_constant, cone_ke_test,
    damping_checks, iterate_nj, ledger_rates, metric_d, preimage_metric_check,
    random_cone_members, verify_family,
)
from engine.errors import FlatRoofError, NonPositiveError
from engine.thermo import FlowModel
from models.functions import DepthFn


class TestLedger:
    """Tests for the constant ledger."""

    def test_rates(self):
        a0, rho3, S0 = ledger_rates(0.05, 0.5, 4, math.log(2.0), 8.0, 2.0 / math.log(2.0))
        assert a0 > 0
        assert S0 == pytest.approx(math.exp(a0 * 4 * math.log(2.0)))
        assert rho3 < 1.0

    def test_rates_need_positive_t0(self):
        with pytest.raises(ValueError):
            ledger_rates(0.05, 0.5, 4, 0.0, 8.0, 1.0)

    def test_for_model(self, bernoulli):
        ledger = ConstantLedger.for_model(bernoulli, N=4, delta1=0.1)
        assert ledger.mu0 == pytest.approx(0.05)
        assert ledger.D1 == pytest.approx(2.0 / math.log(2.0))
        assert ledger.D2 == pytest.approx(math.log(2.0))
        assert ledger.E >= 1.0
        assert math.isnan(ledger.C10)

    @pytest.mark.parametrize("kwargs", [{"N": 0}, {"delta1": 0.0}, {"s_exp": 1.0}])
    def test_for_model_rejects_bad_constants(self, bernoulli, kwargs):
        with pytest.raises(ValueError):
            ConstantLedger.for_model(bernoulli, **kwargs)

    def test_iterations_need_family_constants(self, bernoulli):
        with pytest.raises(ValueError):
            ConstantLedger.for_model(bernoulli).iterations(16.0)

    def test_family_constants(self, family16):
        family, ledger = family16
        assert ledger.C10 >= 8.0
        assert ledger.d3 == family.d3
        assert 0.0 < ledger.rho3 < 1.0
        assert ledger.iterations(16.0) == math.ceil(ledger.k_tilde * math.log(16.0))
        assert ledger.as_dict()["C10"] == ledger.C10


class TestBuildFamily:
    """Tests for family construction."""

    def test_shape(self, family16):
        family, _ = family16
        assert family.s == 4
        assert len(family.cylinders) == 16
        assert family.depth == family.N + family.s + family.colength
        assert family.J
        assert all(i == 1 for i, _, _ in family.J)
        assert family.delta >= family.delta1

    def test_length_above_bound_is_flagged(self, bernoulli, caplog):
        # theta = 0.01, b = 8: s = 1 but D1 log|b| = log 8 / log 10 < 1
        model = FlowModel(bernoulli.f, bernoulli.tau, theta=0.01)
        ledger = ConstantLedger.for_model(model, N=4, delta1=0.1)
        with caplog.at_level(logging.WARNING, logger="engine.dolgopyat"):
            family = build_family(model, 8.0, ledger)
        assert family.s == 1
        assert "exceeds D1 log|b|" in caplog.text
        checks = verify_family(family, ledger.with_family_constants(family.d3, family.d4))
        assert not checks.lengths
        assert checks.diameters

    def test_invariants(self, family16):
        family, ledger = family16
        checks = verify_family(family, ledger)
        assert checks.all_hold
        assert family.omega.min() >= 1.0 - family.mu0 - 1e-15
        assert family.omega.max() <= 1.0

    def test_other_branch(self, family16):
        family, ledger = family16
        other = family.with_branch(2)
        assert all(i == 2 for i, _, _ in other.J)
        assert verify_family(other, ledger).all_hold
        with pytest.raises(ValueError):
            family.with_branch(3)

    def test_without_damping(self, family16):
        family, _ = family16
        plain = family.without_damping()
        assert plain.J == ()
        assert plain.omega.is_constant()
        assert plain.omega.max() == 1.0

    def test_small_frequency(self, bernoulli):
        with pytest.raises(ValueError):
            build_family(bernoulli, 5.0, ConstantLedger.for_model(bernoulli))

    def test_flat_roof(self, bernoulli_flat):
        ledger = ConstantLedger.for_model(bernoulli_flat, N=4)
        with pytest.raises(FlatRoofError):
            build_family(bernoulli_flat, 16.0, ledger)


class TestMetricAndCone:
    """Tests for D, the cone K_E and preimage contraction."""

    def test_metric_basics(self, family16):
        family, _ = family16
        L = family.gamma_length
        u = (0,) * (L + 3)
        assert metric_d(u, u, family) == 0.0
        assert metric_d((0,) + u[1:], (1,) + u[1:], family) == 1.0
        with pytest.raises(ValueError):
            metric_d(u, u[:-1], family)

    def test_metric_inside_damped_cylinder(self, family16):
        family, _ = family16
        w = family.w_j_words()[0]
        u = w + (0, 0, 0)
        v = w + (0, 0, 1)
        theta = family.model.theta.theta
        assert metric_d(u, v, family) == pytest.approx(theta ** 2)

    def test_preimages_contract(self, family16):
        family, _ = family16
        checked, violations = preimage_metric_check(family)
        assert checked > 0
        assert violations == 0

    def test_cone_members_fill_the_cone(self, family16):
        family, ledger = family16
        members = random_cone_members(family, ledger.E, 20, np.random.default_rng(0))
        assert len(members) == 20
        constants = [cone_constant(H, family) for H in members]
        varying = [c for c in constants if c > 0.0]
        # every tenth member is constant on each C'_m
        assert len(varying) == 18
        assert all(0.1 * ledger.E * (1.0 - 1e-9) <= c <= 0.95 * ledger.E * (1.0 + 1e-9)
                   for c in varying)
        assert all(cone_ke_test(H, family, ledger.E) for H in members)
        assert all(H.depth == family.gamma_length for H in members if cone_constant(H, family) > 0)

    def test_cone_members_are_reproducible(self, family16):
        family, ledger = family16
        first = random_cone_members(family, ledger.E, 3, np.random.default_rng(5))
        second = random_cone_members(family, ledger.E, 3, np.random.default_rng(5))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.values, b.values)

    def test_cone_members_reject_bad_constant(self, family16):
        family, _ = family16
        with pytest.raises(ValueError):
            random_cone_members(family, 0.0, 5, np.random.default_rng(0))

    def test_cone_needs_positive_functions(self, family16):
        family, ledger = family16
        H = DepthFn.constant(family.model.subshift, -1.0)
        with pytest.raises(NonPositiveError):
            cone_ke_test(H, family, ledger.E)

    def test_cone_closure(self, family16):
        family, ledger = family16
        members = random_cone_members(family, ledger.E, 25, np.random.default_rng(1))
        tested, passed = cone_closure_check(family, ledger.E, members)
        assert tested == 25
        assert passed == tested

    def test_closure_skips_functions_outside_the_cone(self, family16):
        family, ledger = family16
        members = random_cone_members(family, ledger.E, 4, np.random.default_rng(2))
        steep = [H for H in members if cone_constant(H, family) > 0][0]
        outside = steep.map(lambda v: v ** 40)
        assert not cone_ke_test(outside, family, ledger.E)
        tested, _ = cone_closure_check(family, ledger.E, [outside])
        assert tested == 0


class TestContractionOperator:
    """Tests for N_J and its inequalities."""

    def test_undamped_operator_preserves_one(self, family16):
        family, _ = family16
        one = DepthFn.constant(family.model.subshift, 1.0)
        out = apply_nj(one, family.without_damping())
        np.testing.assert_allclose(out.values, 1.0, atol=1e-12)

    def test_damping_lowers_values(self, family16):
        family, _ = family16
        out = apply_nj(DepthFn.constant(family.model.subshift, 1.0), family)
        assert out.max() <= 1.0 + 1e-12
        assert out.min() >= 1.0 - family.mu0 - 1e-12
        assert out.min() < 1.0

    def test_inequalities_hold_for_one(self, family16):
        family, ledger = family16
        report = damping_checks(DepthFn.constant(family.model.subshift, 1.0), family, ledger)
        assert report.all_hold
        assert report.mass_ratio <= ledger.C10 * (1.0 + 1e-12)

    def test_inequalities_hold_for_cone_members(self, family16):
        family, ledger = family16
        members = random_cone_members(family, ledger.E, 30, np.random.default_rng(3))
        reports = [damping_checks(H, family, ledger) for H in members]
        assert all(r.all_hold for r in reports)
        assert all(r.contraction_lhs < r.int_vb for r in reports)
        # members varying inside a cylinder change the integrals
        assert len({round(r.int_vb, 9) for r in reports}) > 1

    def test_inequalities_need_representative_set(self, family16):
        family, ledger = family16
        with pytest.raises(ValueError):
            damping_checks(DepthFn.constant(family.model.subshift, 1.0),
                           family.without_damping(), ledger)

    def test_iteration_decays(self, family16):
        family, ledger = family16
        curve = iterate_nj(family, ledger, steps=30)
        assert len(curve.values) == 31
        assert curve.values[0] == pytest.approx(1.0)
        assert all(y < x for x, y in zip(curve.values, curve.values[1:]))
        assert curve.required_steps == ledger.iterations(16.0)
        assert not curve.capped

    def test_undamped_iteration_is_flat(self, family16):
        family, ledger = family16
        curve = iterate_nj(family.without_damping(), ledger, steps=5)
        assert curve.values == pytest.approx([1.0] * 6, abs=1e-12)
