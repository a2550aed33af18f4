"""
Shared fixtures: reference subshifts and flow models with known closed forms.
"""

import json
import math

import pytest

from engine.dolgopyat import ConstantLedger, build_family
from models.functions import DepthFn
from models.subshift import Subshift
from services.selftest import bernoulli_model, depth2_model, golden_mean_parry


SQRT2 = math.sqrt(2.0)


@pytest.fixture
def full2() -> Subshift:
    return Subshift.full_shift(2)


@pytest.fixture
def golden() -> Subshift:
    return Subshift.golden_mean()


@pytest.fixture
def bernoulli():
    """Fair coin with roof (1, sqrt 2); P_f = 1."""
    return bernoulli_model()


@pytest.fixture
def bernoulli_flat():
    """Fair coin with the constant roof 1."""
    return bernoulli_model(roof=(1.0, 1.0))


@pytest.fixture
def depth2():
    return depth2_model()


@pytest.fixture
def parry():
    return golden_mean_parry()


@pytest.fixture(scope="module")
def family16():
    """Family and ledger of the fair-coin model at b = 16 (s = 4)."""
    model = bernoulli_model()
    ledger = ConstantLedger.for_model(model, N=4, delta1=0.1)
    family = build_family(model, 16.0, ledger)
    return family, ledger.with_family_constants(family.d3, family.d4)


@pytest.fixture
def write_json(tmp_path):
    """Write a JSON document under tmp_path and return its path."""
    def write(name: str, payload) -> str:
        path = tmp_path / name
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        return path
    return write


def first_symbol(subshift: Subshift, *values: float) -> DepthFn:
    return DepthFn.first_symbol(subshift, list(values))
