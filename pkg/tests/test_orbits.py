"""
Unit tests for periodic orbit enumeration, zeta functions and prime orbit counts.
"""

import cmath
import math

import pytest
from scipy import optimize

from config import CAPACITY
from engine.errors import CapacityError
from engine.orbits import (
    divisors, fixed_point_counts, flow_periods, li, log_sum_from_orbits, mobius,
    prime_orbit_count, primitive_counts, primitive_orbits, top_entropy, zeta_eval,
)
from models.functions import DepthFn


SQRT2 = math.sqrt(2.0)


class TestArithmetic:
    """Tests for divisors and the Mobius function."""

    def test_divisors(self):
        assert divisors(1) == [1]
        assert divisors(12) == [1, 2, 3, 4, 6, 12]
        assert divisors(13) == [1, 13]

    @pytest.mark.parametrize("n,expected", [(1, 1), (2, -1), (3, -1), (4, 0), (6, 1), (12, 0), (30, -1)])
    def test_mobius(self, n, expected):
        assert mobius(n) == expected


class TestOrbitCounts:
    """Tests for fixed point and primitive orbit counts."""

    def test_full_shift(self, full2):
        assert fixed_point_counts(full2, 5) == [2, 4, 8, 16, 32]
        assert primitive_counts(full2, 8) == [2, 1, 2, 3, 6, 9, 18, 30]

    def test_golden_mean(self, golden):
        assert fixed_point_counts(golden, 6) == [1, 3, 4, 7, 11, 18]
        assert primitive_counts(golden, 10) == [1, 1, 1, 1, 2, 2, 4, 5, 8, 11]

    @pytest.mark.parametrize("name", ["full2", "golden"])
    def test_enumeration_matches_mobius_counts(self, name, request):
        subshift = request.getfixturevalue(name)
        periods = [o.n for o in primitive_orbits(subshift, 12)]
        assert [periods.count(n) for n in range(1, 13)] == primitive_counts(subshift, 12)

    def test_representatives_are_least_rotations(self, full2):
        words = [o.word for o in primitive_orbits(full2, 3)]
        assert words == [(0,), (1,), (0, 1), (0, 0, 1), (0, 1, 1)]

    def test_golden_orbits_are_cyclically_admissible(self, golden):
        for orbit in primitive_orbits(golden, 9):
            cyclic = orbit.word + orbit.word[:1]
            assert golden.is_admissible(cyclic)

    def test_flow_periods(self, full2):
        roof = DepthFn.first_symbol(full2, [1.0, SQRT2])
        periods = flow_periods([(0, 1), (1, 1)], roof)
        assert periods.tolist() == pytest.approx([1.0 + SQRT2, 2.0 * SQRT2])
        orbits = primitive_orbits(full2, 2, roof)
        assert [o.flow_period for o in orbits] == pytest.approx([1.0, SQRT2, 1.0 + SQRT2])

    def test_depth_two_roof_reads_cyclically(self, full2):
        roof = DepthFn.from_table(full2, 2, {(0, 0): 1.0, (0, 1): 2.0, (1, 0): 3.0, (1, 1): 4.0})
        # 001 -> (0,0) + (0,1) + (1,0)
        assert flow_periods([(0, 0, 1)], roof).tolist() == pytest.approx([6.0])

    def test_orbit_cap(self, full2):
        with CAPACITY.override(orbit_cap=5):
            with pytest.raises(CapacityError):
                primitive_orbits(full2, 3)

    def test_rejects_empty_range(self, full2):
        with pytest.raises(ValueError):
            primitive_orbits(full2, 0)


class TestEntropy:
    """Tests for h_T."""

    def test_constant_roof(self, full2, golden):
        assert top_entropy(full2, DepthFn.constant(full2, 1.0)) == pytest.approx(math.log(2.0), abs=1e-8)
        golden_ratio = (1.0 + math.sqrt(5.0)) / 2.0
        assert top_entropy(golden, DepthFn.constant(golden, 2.0)) == pytest.approx(
            math.log(golden_ratio) / 2.0, abs=1e-8)

    def test_two_valued_roof(self, full2):
        oracle = optimize.brentq(lambda x: math.exp(-x) + math.exp(-x * SQRT2) - 1.0, 0.1, 1.0,
                                 xtol=1e-14)
        h = top_entropy(full2, DepthFn.first_symbol(full2, [1.0, SQRT2]))
        assert h == pytest.approx(oracle, abs=1e-6)


class TestZeta:
    """Tests for truncated zeta evaluations."""

    def test_constant_roof_closed_form(self, full2):
        value = zeta_eval(full2, DepthFn.constant(full2, 1.0), 1.0, 30)
        oracle = 1.0 / (1.0 - 2.0 * math.exp(-1.0))
        assert abs(value.determinant_value - oracle) < 1e-12
        assert abs(value.partial_product - oracle) < 1e-3
        expected_log = sum((2.0 * math.exp(-1.0)) ** n / n for n in range(1, 31))
        assert abs(value.log_partial - expected_log) < 1e-12
        assert not value.divergent

    def test_trace_sum_matches_orbit_sum(self, golden):
        roof = DepthFn.first_symbol(golden, [1.0, SQRT2])
        s = 0.5 + 0.3j
        value = zeta_eval(golden, roof, s, 10)
        orbit_sum = log_sum_from_orbits(primitive_orbits(golden, 10, roof), s, 10)
        assert abs(value.log_partial - orbit_sum) < 1e-10

    def test_divergence_is_flagged(self, full2):
        value = zeta_eval(full2, DepthFn.constant(full2, 1.0), 0.5, 8)
        assert value.divergent
        assert not cmath.isnan(value.determinant_value)

    def test_product_needs_positive_real_part(self, full2):
        value = zeta_eval(full2, DepthFn.constant(full2, 1.0), -0.5 + 1.0j, 6)
        assert cmath.isnan(value.partial_product)
        assert value.divergent

    def test_rejects_empty_truncation(self, full2):
        with pytest.raises(ValueError):
            zeta_eval(full2, DepthFn.constant(full2, 1.0), 1.0, 0)


class TestPrimeOrbitCount:
    """Tests for pi(lambda) against li."""

    def test_li(self):
        assert li(2.0) == 0.0
        assert li(10.0) == pytest.approx(5.12043, abs=1e-4)

    def test_constant_roof_counts(self, full2):
        table = prime_orbit_count(DepthFn.constant(full2, 1.0), 4.0, 4)
        assert [row[1] for row in table.rows] == [2, 3, 5, 8]
        assert table.orbits == 8
        assert table.h_top == pytest.approx(math.log(2.0), abs=1e-8)
        assert math.isnan(table.rows[0][2])

    def test_two_valued_roof_ratio(self, full2):
        table = prime_orbit_count(DepthFn.first_symbol(full2, [1.0, SQRT2]), 12.0, 6)
        assert len(table.rows) == 6
        assert [row[0] for row in table.rows] == pytest.approx([2.0, 4.0, 6.0, 8.0, 10.0, 12.0])
        pis = [row[1] for row in table.rows]
        assert pis == sorted(pis)
        assert 0.8 <= table.rows[-1][3] <= 1.2

    @pytest.mark.parametrize("lambda_max,steps", [(0.0, 4), (-1.0, 4), (4.0, 0)])
    def test_rejects_bad_grid(self, full2, lambda_max, steps):
        with pytest.raises(ValueError):
            prime_orbit_count(DepthFn.constant(full2, 1.0), lambda_max, steps)
