"""Curvature of the weighted objective as a function of ``u1``.

``H(u1) = u1/|phi1*| Q - (1 - u1)/|phi2*| A`` is affine in ``u1`` with a PSD
and a negative definite part, so its eigenvalues are nondecreasing in ``u1``:
the objective is concave up to some transition point, indefinite in between,
and convex beyond a second one. Weyl's inequalities give conservative
closed-form bounds on both points; the brute-force scan estimates them.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DegenerateNormalization, SamplingError, SingularMatrixError
from .gauss import GaussianJoint, Partition
from .stochastics import ggt_covariance, inv_wishart_sample

SPEC_RTOL = 1e-10
GRID_STEP = 0.005


class Curvature(str, enum.Enum):
    CONCAVE = "concave"
    CONVEX = "convex"
    INDEFINITE = "indefinite"


def _spec_tol(eig: np.ndarray) -> float:
    return SPEC_RTOL * max(float(np.max(np.abs(eig))), np.finfo(float).tiny) if eig.size else 0.0


def classify_matrix(H) -> Curvature:
    H = np.asarray(H, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    tol = _spec_tol(eig)
    if eig[-1] <= tol:
        return Curvature.CONCAVE
    if eig[0] >= -tol:
        return Curvature.CONVEX
    return Curvature.INDEFINITE


def classify(problem) -> Curvature:
    return classify_matrix(problem.H)


def spectrum(M) -> np.ndarray:
    """Eigenvalues of a symmetric matrix in non-ascending order."""
    M = np.asarray(M, dtype=float)
    return np.linalg.eigvalsh(0.5 * (M + M.T))[::-1]


def _transition(rho, zeta, phi1_star, phi2_star):
    a = np.asarray(zeta) / abs(phi2_star)
    return a / (np.asarray(rho) / abs(phi1_star) + a)


def weyl_bounds_from_spectra(rho, zeta, phi1_star: float, phi2_star: float) -> tuple[float, float]:
    """``(u1-, u1+)`` from the spectra of ``Q`` and ``Sigma_ZZ^{-1}``.

    ``u1 <= u1-`` guarantees a concave objective and ``u1 >= u1+`` a convex one.
    Both are clamped into [0, 1].
    """
    for name, s in (("phi1", phi1_star), ("phi2", phi2_star)):
        if not np.isfinite(s) or s == 0:
            raise DegenerateNormalization(f"{name}* must be nonzero to form the bounds")
    rho = np.sort(np.maximum(np.asarray(rho, dtype=float), 0.0))[::-1]
    zeta = np.sort(np.asarray(zeta, dtype=float))[::-1]
    k = rho.shape[0]
    m = np.arange(1, k + 1)[:, None]
    n = np.arange(1, k + 1)[None, :]
    t = _transition(rho[:, None], zeta[None, :], phi1_star, phi2_star)
    lower_pairs = (m + n - 1 >= 1) & (m + n - 1 <= k)
    upper_pairs = (m + n - k >= 1) & (m + n - k <= k)
    u_minus = float(np.min(t[lower_pairs]))
    u_plus = float(np.max(t[upper_pairs]))
    return float(np.clip(u_minus, 0.0, 1.0)), float(np.clip(u_plus, 0.0, 1.0))


def weyl_bounds(dis, det, phi1_star: float, phi2_star: float) -> tuple[float, float]:
    return weyl_bounds_from_spectra(spectrum(dis.Q), spectrum(det.A), phi1_star, phi2_star)


def _grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.linspace(0.0, 1.0, n + 1)


def h_spectra(Q, A, phi1_star, phi2_star, u1s) -> np.ndarray:
    """Ascending eigenvalues of ``H(u1)`` for each ``u1``, shape (len(u1s), k)."""
    u1s = np.asarray(u1s, dtype=float)[:, None, None]
    H = u1s / abs(phi1_star) * Q - (1.0 - u1s) / abs(phi2_star) * A
    return np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2)))


def _is_concave(Q, A, p1, p2, u) -> bool:
    e = h_spectra(Q, A, p1, p2, [u])[0]
    return bool(e[-1] <= _spec_tol(e))


def _is_convex(Q, A, p1, p2, u) -> bool:
    e = h_spectra(Q, A, p1, p2, [u])[0]
    return bool(e[0] >= -_spec_tol(e))


def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    """Boundary of a monotone predicate with ``pred(lo) != pred(hi)``; returns the side where it holds at ``lo``."""
    want = pred(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pred(mid) == want:
            lo = mid
        else:
            hi = mid
    return lo


def brute_force_transition_matrices(
    Q, A, phi1_star, phi2_star, step: float = GRID_STEP, refine: bool = True, refine_tol: float = 1e-9,
) -> tuple[float, float]:
    """Estimates ``(u1~-, u1~+)`` of the last concave and first convex ``u1``.

    The grid brackets both transitions. Without refinement the grid points
    themselves are returned: the last concave one and the first convex one.
    Grid points overestimate the indefinite interval by up to two steps in
    total, so by default each bracket is narrowed by bisection, which is valid
    because the classification is monotone in ``u1``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    u = _grid(step)
    eig = h_spectra(Q, A, phi1_star, phi2_star, u)
    tol = np.array([_spec_tol(e) for e in eig])
    concave = eig[:, -1] <= tol
    convex = eig[:, 0] >= -tol

    if concave.all():
        u_minus = 1.0
    else:
        first_bad = int(np.argmin(concave))
        if first_bad == 0:
            u_minus = 0.0
        elif refine:
            u_minus = _bisect(lambda x: _is_concave(Q, A, phi1_star, phi2_star, x),
                              float(u[first_bad - 1]), float(u[first_bad]), refine_tol)
        else:
            u_minus = float(u[first_bad - 1])

    if not convex.any():
        u_plus = 1.0
    else:
        first_good = int(np.argmax(convex))
        if first_good == 0 or not refine:
            u_plus = float(u[first_good])
        else:
            # bisect from the convex side so the returned point is convex
            u_plus = 1.0 - _bisect(lambda x: _is_convex(Q, A, phi1_star, phi2_star, 1.0 - x),
                                   1.0 - float(u[first_good]), 1.0 - float(u[first_good - 1]), refine_tol)
    return u_minus, u_plus


def brute_force_transition(dis, det, phi1_star, phi2_star, step: float = GRID_STEP, refine: bool = True) -> tuple[float, float]:
    return brute_force_transition_matrices(dis.Q, det.A, phi1_star, phi2_star, step, refine)


@dataclass
class ConvexityReport:
    rho: np.ndarray
    zeta: np.ndarray
    lambda_h: np.ndarray
    classification: Curvature
    u1_minus: float
    u1_plus: float
    u1_tilde_minus: float | None = None
    u1_tilde_plus: float | None = None

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.tolist(),
            "zeta": self.zeta.tolist(),
            "lambda_h": self.lambda_h.tolist(),
            "classification": self.classification.value,
            "u1_minus": self.u1_minus,
            "u1_plus": self.u1_plus,
            "u1_tilde_minus": self.u1_tilde_minus,
            "u1_tilde_plus": self.u1_tilde_plus,
        }


def analyze(components, u1: float, brute_force: bool = False, step: float = GRID_STEP,
            refine: bool = True) -> ConvexityReport:
    """Full report for a :class:`~mvgattack.objective.ComponentObjectives` at ``u1``."""
    dis, det = components.dis, components.det
    problem = components.problem(u1)
    u_m, u_p = weyl_bounds(dis, det, components.phi1_star, components.phi2_star)
    rep = ConvexityReport(
        spectrum(dis.Q), spectrum(det.A), spectrum(problem.H), classify(problem), u_m, u_p,
    )
    if brute_force:
        rep.u1_tilde_minus, rep.u1_tilde_plus = brute_force_transition(
            dis, det, components.phi1_star, components.phi2_star, step, refine)
    return rep


# ---------------------------------------------------------------------------
# Overcoverage study
# ---------------------------------------------------------------------------


@dataclass
class OvercoverageSummary:
    sampler: str
    n: int
    nz: int
    phi1_star: float
    phi2_star: float
    overcoverage: np.ndarray
    bracket_violations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def median(self) -> float:
        return float(np.median(self.overcoverage))

    @property
    def q25(self) -> float:
        return float(np.percentile(self.overcoverage, 25))

    @property
    def q75(self) -> float:
        return float(np.percentile(self.overcoverage, 75))

    def csv_row(self) -> list:
        return [self.sampler, self.n, self.nz, self.phi1_star, self.phi2_star,
                f"{self.median:.6f}", f"{self.q25:.6f}", f"{self.q75:.6f}"]


CSV_HEADER = ["sampler", "n", "nz", "phi1_star", "phi2_star", "median", "q25", "q75"]


SAMPLER_IDS = {"ggt": 0, "iw": 1}


def _sample_cov(sampler: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if sampler == "ggt":
        return ggt_covariance(n, rng)
    if sampler == "iw":
        # nu = |Y| + |Z| = n, so the mean does not exist; only draws are used
        return inv_wishart_sample(np.eye(n), float(n), rng)
    raise ValueError(f"unknown sampler {sampler!r}")


def coefficients_at_zero(cov: np.ndarray, nz: int):
    """``Q`` and ``A`` for ``mu = 0``, ``z' = 0`` with ``Z`` the last ``nz`` coordinates."""
    from .objective import build_detection, build_disruption

    n = cov.shape[0]
    j = GaussianJoint(np.zeros(n), cov, Partition.contiguous(n - nz, nz))
    return build_disruption(j, np.zeros(nz)), build_detection(j)


def overcoverage_study(
    sampler: Literal["ggt", "iw"],
    n: int,
    nz: int,
    phi1_star: float,
    phi2_star: float,
    trials: int,
    seed: int = 0,
    step: float = GRID_STEP,
    max_retries: int = 20,
    refine: bool = True,
) -> OvercoverageSummary:
    """Per trial: ``(u1+ - u1-) - (u1~+ - u1~-)`` on a freshly sampled covariance.

    Trial ``i`` draws from its own substream, so results do not depend on the
    order trials are run in.
    """
    from .stochastics import SeededStream

    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 1 <= nz < n:
        raise ValueError("need 1 <= |Z| < n")
    if sampler not in SAMPLER_IDS:
        raise ValueError(f"unknown sampler {sampler!r}")
    root = SeededStream(seed, (SAMPLER_IDS[sampler], n, nz))
    over = np.empty(trials)
    violations = 0
    for i in range(trials):
        rng = root.child(i).rng()
        for _ in range(max_retries):
            try:
                cov = _sample_cov(sampler, n, rng)
                dis, det = coefficients_at_zero(cov, nz)
                break
            except (SingularMatrixError, SamplingError, ValueError):
                continue
        else:
            raise SamplingError(f"trial {i}: sampler failed {max_retries} times")
        um, up = weyl_bounds(dis, det, phi1_star, phi2_star)
        tm, tp = brute_force_transition(dis, det, phi1_star, phi2_star, step, refine)
        if um > tm + step or tp > up + step:
            violations += 1
        over[i] = (up - um) - (tp - tm)
    return OvercoverageSummary(sampler, n, nz, phi1_star, phi2_star, over, violations)
