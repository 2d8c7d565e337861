from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from mvgattack.gauss import GaussianJoint, Partition

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def random_spd(rng: np.random.Generator, n: int, cond: float = 50.0) -> np.ndarray:
    """SPD matrix with eigenvalues log-uniform on [1, cond] in a random basis."""
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), n))
    S = (Qm * eig) @ Qm.T
    return 0.5 * (S + S.T)


def random_joint(rng: np.random.Generator, n: int, nz: int, shuffle: bool = True) -> GaussianJoint:
    idx = rng.permutation(n) if shuffle else np.arange(n)
    part = Partition(tuple(idx[: n - nz]), tuple(idx[n - nz:]))
    return GaussianJoint(rng.normal(0.0, 1.0, n), random_spd(rng, n), part)


def bivariate(rho: float = 0.5) -> GaussianJoint:
    """``(Y, Z)`` with unit variances, zero means and correlation ``rho``."""
    return GaussianJoint(np.zeros(2), np.array([[1.0, rho], [rho, 1.0]]), Partition((0,), (1,)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
