import numpy as np
import pytest

from msfusion.tensor import Tensor, make_rng


@pytest.fixture
def rng():
    return make_rng(42)


@pytest.fixture
def feature_map(rng):
    return Tensor(rng.uniform(-2.0, 2.0, (2, 4, 6, 6)))


def uniform(rng, shape, dtype=np.float64, lo=-2.0, hi=2.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, shape).astype(dtype))
