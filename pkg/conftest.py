import pytest

from app.engine.core.gf2 import BitVec, Rng
from app.engine.core.models import KeyPair, Params
from app.engine.hhb_engine import HHBEngine


@pytest.fixture
def small_params() -> Params:
    """k=8 at the default r / eps / u"""
    return Params.build(k=8).validate()


@pytest.fixture
def noiseless_params() -> Params:
    return Params.build(k=8, eps=0.0).validate()


@pytest.fixture
def small_keys() -> KeyPair:
    # both keys carry zeros and ones so every attack branch is exercised
    return KeyPair(s=BitVec.from_str("10110010"), y=BitVec.from_str("01101001"))


@pytest.fixture
def rng() -> Rng:
    return Rng(20240501, 7)


@pytest.fixture
def engine() -> HHBEngine:
    return HHBEngine()
