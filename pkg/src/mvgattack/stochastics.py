"""Seeded samplers for the distributions the attacks need.

Every sampler takes a :class:`numpy.random.Generator`. Reproducible
substreams come from :class:`SeededStream`, which derives independent
generators from ``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`
spawn keys, so results do not depend on how work is split across tasks.

Matrix samplers accept ``size`` and then return a stacked batch with the
matrix dimensions last.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SamplingError, SingularMatrixError
from .gauss import cholesky, spd_inverse


@dataclass(frozen=True)
class SeededStream:
    seed: int
    stream_id: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed))
        sid = self.stream_id
        if isinstance(sid, (int, np.integer)):
            sid = (int(sid),)
        object.__setattr__(self, "stream_id", tuple(int(i) for i in sid))

    def rng(self) -> np.random.Generator:
        """A fresh generator; calling twice gives identical draws."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, i: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_id + (int(i),))


@dataclass(frozen=True, eq=False)
class NIWParams:
    mu0: np.ndarray
    kappa: float
    psi: np.ndarray
    nu: float

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        n = mu0.shape[0]
        if psi.shape != (n, n):
            raise ValueError("psi must be n x n")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.nu > n - 1:
            raise ValueError(f"nu must exceed n - 1 = {n - 1}")
        if np.max(np.abs(psi - psi.T)) > 1e-10 * max(np.max(np.abs(psi)), 1e-300):
            raise ValueError("psi must be symmetric")
        cholesky(psi)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "psi", 0.5 * (psi + psi.T))
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def dim(self) -> int:
        return self.mu0.shape[0]


def _batch_shape(size) -> tuple[int, ...]:
    if size is None:
        return ()
    return (size,) if np.isscalar(size) else tuple(size)


def mvn_sample(mean, cov, rng: np.random.Generator, size=None) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    L = cholesky(np.asarray(cov, dtype=float))
    eps = rng.standard_normal(_batch_shape(size) + mean.shape)
    return mean + eps @ L.T


def _bartlett_factor(n: int, dof: float, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Lower-triangular ``A`` with ``A A'`` ~ W(I, dof)."""
    A = np.zeros(shape + (n, n))
    rows, cols = np.tril_indices(n, -1)
    A[..., rows, cols] = rng.standard_normal(shape + (rows.size,))
    diag = np.sqrt(rng.chisquare(dof - np.arange(n), size=shape + (n,)))
    A[..., np.arange(n), np.arange(n)] = diag
    return A


def wishart_sample(scale, dof: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Bartlett construction: ``W = L A A' L'`` with ``scale = L L'``."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    n = scale.shape[0]
    if not dof > n - 1:
        raise ValueError(f"Wishart dof must exceed n - 1 = {n - 1}, got {dof}")
    L = cholesky(scale)
    LA = L @ _bartlett_factor(n, dof, rng, _batch_shape(size))
    W = LA @ np.swapaxes(LA, -1, -2)
    return 0.5 * (W + np.swapaxes(W, -1, -2))


def inv_wishart_sample(psi, nu: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """``Sigma ~ IW(psi, nu)`` as the inverse of ``W(psi^{-1}, nu)``.

    ``n - 1 < nu <= n + 1`` is allowed even though the mean is then undefined.
    """
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    n = psi.shape[0]
    if not nu > n - 1:
        raise ValueError(f"inverse-Wishart nu must exceed n - 1 = {n - 1}, got {nu}")
    W = wishart_sample(spd_inverse(psi), nu, rng, size=size)
    L = np.linalg.cholesky(W)
    Linv = np.linalg.inv(L)
    S = np.swapaxes(Linv, -1, -2) @ Linv
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def niw_sample(p: NIWParams, rng: np.random.Generator, size=None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``Sigma ~ IW(psi, nu)`` then ``mu ~ N(mu0, Sigma / kappa)``."""
    shape = _batch_shape(size)
    covs = inv_wishart_sample(p.psi, p.nu, rng, size=size)
    Ls = np.linalg.cholesky(covs)
    eps = rng.standard_normal(shape + (p.dim,))
    means = p.mu0 + np.einsum("...ij,...j->...i", Ls, eps) / np.sqrt(p.kappa)
    return means, covs


def inv_gamma_sample(shape: float, scale: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Shape/scale inverse-gamma: mean ``scale / (shape - 1)`` for shape > 1."""
    if not (shape > 0 and scale > 0):
        raise ValueError("inverse-gamma shape and scale must be positive")
    return scale / rng.gamma(shape, 1.0, size=size)


def ggt_covariance(n: int, rng: np.random.Generator, max_tries: int = 100) -> np.ndarray:
    """``G G'`` for an ``n x n`` standard-normal ``G``, redrawn until PD."""
    if n < 1:
        raise ValueError("n must be at least 1")
    for _ in range(max_tries):
        G = rng.standard_normal((n, n))
        S = G @ G.T
        S = 0.5 * (S + S.T)
        try:
            cholesky(S)
        except SingularMatrixError:
            continue
        eig = np.linalg.eigvalsh(S)
        if eig[0] > 1e-12 * eig[-1]:
            return S
    raise SamplingError(f"no positive definite G G' in {max_tries} draws")
