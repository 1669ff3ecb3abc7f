import math

import pytest

from mvcontract import LqParams, from_case

# Reference instance used throughout: the bounded closed-loop corner point.
REF_KWARGS = dict(a=1.0, b=1.0, sigma=1.0, alpha=0.2, beta=1.0, T=0.03)


@pytest.fixture
def ref_params():
    return LqParams(**REF_KWARGS)


@pytest.fixture
def corner_triple():
    return from_case("iv", 0.1, math.pi / 2)
