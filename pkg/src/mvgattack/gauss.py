"""Moment and canonical Gaussian algebra.

A :class:`GaussianJoint` is the decisionmaker's model: a mean, a covariance and
a split of the coordinates into latent ``Y`` and evidentiary ``Z`` variables.
The split may be non-contiguous; blocks are always extracted with explicit
index lists, so ``(Y then Z)`` is the internal ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import DimensionError, InvalidJointError, SingularMatrixError

SYM_RTOL = 1e-10
PD_RTOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, raising SingularMatrixError instead of LinAlgError."""
    try:
        return linalg.cholesky(a, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrixError(f"matrix is not positive definite: {exc}") from None


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix through its Cholesky factor."""
    L = cholesky(a)
    inv = linalg.cho_solve((L, True), np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return linalg.cho_solve((cholesky(a), True), b)


def spd_logdet(a: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(cholesky(a)))))


@dataclass(frozen=True)
class Partition:
    """Index sets of latent (``y_idx``) and evidentiary (``z_idx``) variables."""

    y_idx: tuple[int, ...]
    z_idx: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "y_idx", tuple(int(i) for i in self.y_idx))
        object.__setattr__(self, "z_idx", tuple(int(i) for i in self.z_idx))
        problems = self.problems()
        if problems:
            raise InvalidJointError("; ".join(problems))

    def problems(self, n: int | None = None) -> list[str]:
        out = []
        if not self.y_idx or not self.z_idx:
            out.append("partition blocks must be non-empty")
        if len(set(self.y_idx)) != len(self.y_idx) or len(set(self.z_idx)) != len(self.z_idx):
            out.append("partition contains duplicate indices")
        if set(self.y_idx) & set(self.z_idx):
            out.append("partition blocks overlap")
        if n is not None and sorted(self.y_idx + self.z_idx) != list(range(n)):
            out.append(f"partition does not cover 0..{n - 1}")
        return out

    @property
    def ny(self) -> int:
        return len(self.y_idx)

    @property
    def nz(self) -> int:
        return len(self.z_idx)

    @property
    def n(self) -> int:
        return self.ny + self.nz

    @property
    def order(self) -> np.ndarray:
        """Permutation taking the stored ordering to ``(Y then Z)``."""
        return np.array(self.y_idx + self.z_idx, dtype=int)

    @classmethod
    def contiguous(cls, ny: int, nz: int) -> "Partition":
        return cls(tuple(range(ny)), tuple(range(ny, ny + nz)))


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    reasons: tuple[str, ...]
    symmetry_defect: float
    min_eigenvalue: float
    max_eigenvalue: float
    partition_ok: bool


def validate(mean, cov, partition: Partition, pd_tol: float = PD_RTOL) -> ValidationReport:
    """Check the joint's invariants without raising.

    ``pd_tol`` is relative to the largest eigenvalue so that the check behaves
    the same regardless of the units of the data.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    reasons = []
    n = mean.shape[0] if mean.ndim == 1 else -1
    if mean.ndim != 1 or cov.shape != (n, n):
        return ValidationReport(False, ("dimension mismatch",), np.nan, np.nan, np.nan, False)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        return ValidationReport(False, ("non-finite entries",), np.nan, np.nan, np.nan, False)

    scale = max(float(np.max(np.abs(cov))), np.finfo(float).tiny)
    sym_defect = float(np.max(np.abs(cov - cov.T))) / scale
    if sym_defect > SYM_RTOL:
        reasons.append("asymmetric")
    eig = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    lo, hi = float(eig[0]), float(eig[-1])
    if not (hi > 0 and lo > pd_tol * hi):
        reasons.append("not PD")
    part_problems = partition.problems(n)
    reasons.extend(part_problems)
    return ValidationReport(not reasons, tuple(reasons), sym_defect, lo, hi, not part_problems)


@dataclass(frozen=True, eq=False)
class GaussianJoint:
    """Moment-form joint ``N(mean, cov)`` over ``(Y, Z)``.

    Construction validates and raises :class:`InvalidJointError`; the stored
    covariance is the exact symmetrization of the input.
    """

    mean: np.ndarray
    cov: np.ndarray
    partition: Partition
    pd_tol: float = field(default=PD_RTOL, repr=False)

    def __post_init__(self):
        report = validate(self.mean, self.cov, self.partition, self.pd_tol)
        if not report.ok:
            raise InvalidJointError(", ".join(report.reasons))
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "cov", _frozen(0.5 * (cov + cov.T)))

    @classmethod
    def from_blocks(cls, y_idx: Sequence[int], z_idx: Sequence[int], mean, cov) -> "GaussianJoint":
        return cls(np.asarray(mean, float), np.asarray(cov, float), Partition(tuple(y_idx), tuple(z_idx)))

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    def _block(self, rows, cols) -> np.ndarray:
        return self.cov[np.ix_(rows, cols)]

    @property
    def mu_y(self) -> np.ndarray:
        return self.mean[list(self.partition.y_idx)]

    @property
    def mu_z(self) -> np.ndarray:
        return self.mean[list(self.partition.z_idx)]

    @property
    def sigma_yy(self) -> np.ndarray:
        p = self.partition
        return self._block(p.y_idx, p.y_idx)

    @property
    def sigma_yz(self) -> np.ndarray:
        p = self.partition
        return self._block(p.y_idx, p.z_idx)

    @property
    def sigma_zz(self) -> np.ndarray:
        p = self.partition
        return self._block(p.z_idx, p.z_idx)

    @cached_property
    def gain(self) -> np.ndarray:
        """``Sigma_YZ Sigma_ZZ^{-1}``, the sensitivity of the conditional mean to z."""
        return spd_solve(self.sigma_zz, self.sigma_yz.T).T

    @cached_property
    def conditional_cov(self) -> np.ndarray:
        """Schur complement ``Sigma / Sigma_ZZ``; independent of the evidence."""
        s = self.sigma_yy - self.gain @ self.sigma_yz.T
        s = 0.5 * (s + s.T)
        s.setflags(write=False)
        return s

    @cached_property
    def precision_zz(self) -> np.ndarray:
        return spd_inverse(self.sigma_zz)

    def permuted(self, perm: Sequence[int]) -> "GaussianJoint":
        """Same distribution with coordinates reordered so new[i] = old[perm[i]]."""
        perm = np.asarray(perm, dtype=int)
        inv = np.argsort(perm)
        p = self.partition
        return GaussianJoint(
            self.mean[perm],
            self.cov[np.ix_(perm, perm)],
            Partition(tuple(int(inv[i]) for i in p.y_idx), tuple(int(inv[i]) for i in p.z_idx)),
        )


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    """``C(lam, eta, xi)`` with ``lam = Sigma^{-1}``, ``eta = lam mu``."""

    lam: np.ndarray
    eta: np.ndarray
    xi: float


@dataclass(frozen=True, eq=False)
class ConditionalGaussian:
    mean: np.ndarray
    cov: np.ndarray


def to_canonical(j: GaussianJoint) -> CanonicalForm:
    lam = spd_inverse(j.cov)
    eta = lam @ j.mean
    xi = -0.5 * float(j.mean @ eta) - 0.5 * j.n * np.log(2 * np.pi) - 0.5 * spd_logdet(j.cov)
    return CanonicalForm(_frozen(lam), _frozen(eta), float(xi))


def to_moment(c: CanonicalForm) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(mean, cov)``; the caller attaches a partition if needed."""
    lam = np.asarray(c.lam, dtype=float)
    cov = spd_inverse(0.5 * (lam + lam.T))
    mean = spd_solve(lam, np.asarray(c.eta, dtype=float))
    return mean, cov


def condition(j: GaussianJoint, z) -> ConditionalGaussian:
    """Distribution of ``Y | Z = z``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (j.partition.nz,):
        raise DimensionError(f"evidence has shape {z.shape}, expected ({j.partition.nz},)")
    mean = j.mu_y + j.gain @ (z - j.mu_z)
    return ConditionalGaussian(mean, j.conditional_cov)


def marginal_z(j: GaussianJoint) -> tuple[np.ndarray, np.ndarray]:
    return j.mu_z.copy(), j.sigma_zz.copy()


def kl_gaussians(p: tuple, q: tuple) -> float:
    """``KL(N(p) || N(q))`` for ``p = (mean, cov)`` and ``q = (mean, cov)``.

    Full trace / log-det / Mahalanobis formula; no shortcut for equal
    covariances.
    """
    mp, sp = (np.atleast_1d(np.asarray(a, dtype=float)) for a in p)
    mq, sq = (np.atleast_1d(np.asarray(a, dtype=float)) for a in q)
    sp, sq = np.atleast_2d(sp), np.atleast_2d(sq)
    k = mp.shape[0]
    if mq.shape != (k,) or sp.shape != (k, k) or sq.shape != (k, k):
        raise DimensionError("KL arguments have inconsistent dimensions")
    Lq = cholesky(sq)
    Lp = cholesky(sp)
    # tr(Sq^{-1} Sp) = ||Lq^{-1} Lp||_F^2
    M = linalg.solve_triangular(Lq, Lp, lower=True)
    d = linalg.solve_triangular(Lq, mq - mp, lower=True)
    logdet_q = 2.0 * np.sum(np.log(np.diag(Lq)))
    logdet_p = 2.0 * np.sum(np.log(np.diag(Lp)))
    kl = 0.5 * (np.sum(M * M) + d @ d - k + logdet_q - logdet_p)
    return max(float(kl), 0.0)


def log_ratio_to_mode(j: GaussianJoint, z) -> float:
    """``ln f_Z(z) / f_Z(mu_Z)`` under the joint's marginal over Z (always <= 0)."""
    d = np.asarray(z, dtype=float) - j.mu_z
    return -0.5 * float(d @ j.precision_zz @ d)
