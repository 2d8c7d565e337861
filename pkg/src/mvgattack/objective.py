"""Disruption and detection-risk objectives and the white-box quadratic.

The attacker maximizes ``w1 * phi1(z) + w2 * phi2(z)`` over a box, where

* ``phi1(z) = z'Qz + v'z`` is twice the KL divergence between the true and the
  corrupted conditional of ``Y``, up to the constant ``c``;
* ``phi2(z) = -z'Az + 2 z'b`` with ``A = Sigma_ZZ^{-1}``, ``b = A mu_Z`` is the
  log-ratio of the marginal density of ``Z`` at ``z`` to its mode, up to scale
  and a constant.

Everything here is a plain quadratic in ``z``; the solvers only ever see ``H``
and ``g`` of an :class:`AttackProblem`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateNormalization, DimensionError
from .gauss import GaussianJoint, condition, kl_gaussians, spd_inverse, spd_solve, to_canonical

WEIGHT_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class DisruptionCoefficients:
    Q: np.ndarray
    v: np.ndarray
    c: float

    def kl(self, z) -> float:
        """KL divergence from the true conditional to the one induced by ``z``."""
        z = np.asarray(z, dtype=float)
        return 0.5 * float(z @ self.Q @ z + self.v @ z + self.c)


@dataclass(frozen=True, eq=False)
class DetectionCoefficients:
    A: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class BoxRegion:
    """Axis-aligned feasible region ``lower <= z <= upper``.

    Fully degenerate boxes (``lower == upper``) are accepted; they pin the
    attack to a single point, which is useful as a sanity case.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box has lower > upper in some coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def around(cls, center, half_width) -> "BoxRegion":
        center = np.asarray(center, dtype=float)
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), center.shape)
        return cls(center - hw, center + hw)

    @classmethod
    def relative(cls, center, q: float) -> "BoxRegion":
        """Half-width ``q * |center_i|`` per coordinate."""
        center = np.asarray(center, dtype=float)
        return cls.around(center, q * np.abs(center))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def has_interior(self) -> bool:
        return bool(np.any(self.upper > self.lower))

    def contains(self, z, atol: float = 1e-12) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lower - atol) and np.all(z <= self.upper + atol))

    def project(self, z) -> np.ndarray:
        return np.clip(np.asarray(z, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class ObjectiveWeights:
    u1: float
    u2: float
    phi1_star: float
    phi2_star: float
    w1: float
    w2: float
    phi1_exact: bool = True
    phi2_exact: bool = True


@dataclass(frozen=True, eq=False)
class AttackProblem:
    """``max_{z in region} z'Hz + g'z`` plus the provenance needed for reporting."""

    H: np.ndarray
    g: np.ndarray
    region: BoxRegion
    z_true: np.ndarray
    weights: ObjectiveWeights
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        g = np.asarray(self.g, dtype=float)
        z = np.asarray(self.z_true, dtype=float)
        k = g.shape[0]
        if H.shape != (k, k) or z.shape != (k,) or self.region.dim != k:
            raise DimensionError("attack problem fields have inconsistent dimensions")
        object.__setattr__(self, "H", 0.5 * (H + H.T))
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "z_true", z)

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ self.H @ z + self.g @ z)

    def gradient(self, z) -> np.ndarray:
        return 2.0 * self.H @ np.asarray(z, dtype=float) + self.g

    def to_dict(self) -> dict:
        w = self.weights
        return {
            "H": self.H.tolist(),
            "g": self.g.tolist(),
            "region": {"lower": self.region.lower.tolist(), "upper": self.region.upper.tolist()},
            "z_true": self.z_true.tolist(),
            "weights": {
                "u1": w.u1, "u2": w.u2, "phi1_star": w.phi1_star, "phi2_star": w.phi2_star,
                "w1": w.w1, "w2": w.w2, "phi1_exact": w.phi1_exact, "phi2_exact": w.phi2_exact,
            },
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackProblem":
        return cls(
            np.asarray(d["H"], dtype=float),
            np.asarray(d["g"], dtype=float),
            BoxRegion(d["region"]["lower"], d["region"]["upper"]),
            np.asarray(d["z_true"], dtype=float),
            ObjectiveWeights(**d["weights"]),
            dict(d.get("meta", {})),
        )


def build_disruption(j: GaussianJoint, z_true) -> DisruptionCoefficients:
    """Coefficients of ``KL(P_{Y|z'} || P_{Y|z}) = (z'Qz + v'z + c) / 2``.

    Uses the precision blocks ``Lam_YY``, ``Lam_YZ`` and ``eta_Y``. With
    ``d = mu_{Y|z'} - Lam_YY^{-1} eta_Y`` the constant
    ``mu'Lam_YY mu - 2 eta_Y'mu + eta_Y'Lam_YY^{-1} eta_Y`` equals ``d'Lam_YY d``,
    which is evaluated in that factored form to avoid cancellation.
    """
    z_true = np.asarray(z_true, dtype=float)
    cf = to_canonical(j)
    p = j.partition
    y, zi = list(p.y_idx), list(p.z_idx)
    lam_yy = cf.lam[np.ix_(y, y)]
    lam_yz = cf.lam[np.ix_(y, zi)]
    eta_y = cf.eta[y]
    mu_cond = condition(j, z_true).mean

    lam_yy_inv_lam_yz = spd_solve(lam_yy, lam_yz)
    Q = lam_yz.T @ lam_yy_inv_lam_yz
    Q = 0.5 * (Q + Q.T)
    d = mu_cond - spd_solve(lam_yy, eta_y)
    v = 2.0 * (lam_yz.T @ d)
    c = float(d @ lam_yy @ d)
    return DisruptionCoefficients(Q, v, c)


def build_detection(j: GaussianJoint) -> DetectionCoefficients:
    A = spd_inverse(j.sigma_zz)
    return DetectionCoefficients(A, A @ j.mu_z)


def phi1(d: DisruptionCoefficients, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != d.v.shape:
        raise DimensionError("z does not match the disruption coefficients")
    return float(z @ d.Q @ z + d.v @ z)


def phi2(d: DetectionCoefficients, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != d.b.shape:
        raise DimensionError("z does not match the detection coefficients")
    return float(-z @ d.A @ z + 2.0 * z @ d.b)


def normalize_weights(
    u1: float,
    phi1_star: float,
    phi2_star: float,
    *,
    weight_eps: float = WEIGHT_EPS,
    phi1_exact: bool = True,
    phi2_exact: bool = True,
) -> ObjectiveWeights:
    """``w_k = u_k / |phi*_k|`` with ``u2 = 1 - u1``.

    ``u1`` may sit on either end of [0, 1]; a component with zero raw weight
    gets ``w = 0`` and its ``phi*`` is not checked.
    """
    u1 = float(u1)
    if not 0.0 <= u1 <= 1.0:
        raise ValueError(f"u1 must lie in [0, 1], got {u1}")
    u2 = 1.0 - u1
    ws = []
    for name, u, star in (("phi1", u1, phi1_star), ("phi2", u2, phi2_star)):
        if u == 0.0:
            ws.append(0.0)
            continue
        if not np.isfinite(star) or abs(star) <= weight_eps:
            raise DegenerateNormalization(f"|{name}*| = {abs(star):.3g} <= {weight_eps:g}")
        ws.append(u / abs(star))
    return ObjectiveWeights(u1, u2, float(phi1_star), float(phi2_star), ws[0], ws[1], phi1_exact, phi2_exact)


def assemble_wb(
    dis: DisruptionCoefficients,
    det: DetectionCoefficients,
    weights: ObjectiveWeights,
    region: BoxRegion,
    z_true,
    meta: dict | None = None,
) -> AttackProblem:
    k = dis.v.shape[0]
    if dis.Q.shape != (k, k) or det.A.shape != (k, k) or det.b.shape != (k,):
        raise DimensionError("disruption and detection coefficients disagree in dimension")
    H = weights.w1 * dis.Q - weights.w2 * det.A
    g = weights.w1 * dis.v + 2.0 * weights.w2 * det.b
    return AttackProblem(H, g, region, np.asarray(z_true, dtype=float), weights, dict(meta or {}))


def eval_kl_to_truth(j_true: GaussianJoint, z_true, z) -> float:
    p = condition(j_true, z_true)
    q = condition(j_true, z)
    return kl_gaussians((p.mean, p.cov), (q.mean, q.cov))


@dataclass(frozen=True, eq=False)
class ComponentObjectives:
    """Both objective components over one region, ready to be weighted.

    This is the "problem family" swept by the Pareto front: every ``u1``
    yields an :class:`AttackProblem` from the same ``phi*`` values.
    """

    dis: DisruptionCoefficients
    det: DetectionCoefficients
    region: BoxRegion
    z_true: np.ndarray
    phi1_star: float
    phi2_star: float
    phi1_exact: bool = True
    phi2_exact: bool = True
    meta: dict = field(default_factory=dict)

    def weights(self, u1: float, weight_eps: float = WEIGHT_EPS) -> ObjectiveWeights:
        return normalize_weights(
            u1, self.phi1_star, self.phi2_star, weight_eps=weight_eps,
            phi1_exact=self.phi1_exact, phi2_exact=self.phi2_exact,
        )

    def problem(self, u1: float, weight_eps: float = WEIGHT_EPS) -> AttackProblem:
        return assemble_wb(self.dis, self.det, self.weights(u1, weight_eps), self.region, self.z_true, self.meta)
