import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_spd(rng, c, cond=10.0):
    """Random SPD matrix with eigenvalues spread over ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((c, c)))
    vals = np.exp(rng.uniform(0, np.log(cond), c))
    return (Q * vals) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
