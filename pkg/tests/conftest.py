import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_spd(rng, n, cond=1e3):
    """SPD matrix with a controlled condition number."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.logspace(0, np.log10(cond), n)
    rng.shuffle(eig)
    return (Q * eig) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
