"""Grey-box attacks: priors over the joint, SAA and stochastic gradient ascent.

A prior only has to produce batches of ``(means, covs)`` over one fixed
partition. Everything downstream works on stacked arrays so that ``J`` in the
tens of thousands stays cheap.

Per-sample coefficients use the gain form ``K = Sigma_YZ Sigma_ZZ^{-1}`` and the
Schur complement ``S``: ``Q = K'S^{-1}K``, ``v = -2 Q z'`` and ``c = z''Qz'``.
This is algebraically the canonical-form construction in
:func:`mvgattack.objective.build_disruption`, computed along a different path.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np

from .errors import SamplingError
from .gauss import GaussianJoint, Partition, spd_inverse
from .objective import (
    AttackProblem,
    BoxRegion,
    ComponentObjectives,
    DetectionCoefficients,
    DisruptionCoefficients,
    ObjectiveWeights,
)
from .solvers import SolveConfig, SolveReport, single_objective_optimum, solve_white_box
from .stochastics import NIWParams, SeededStream, niw_sample

CHUNK = 2048


class Prior(Protocol):
    partition: Partition

    def sample_batch(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True, eq=False)
class PointMassPrior:
    """The white-box case: every draw is the same joint."""

    joint: GaussianJoint

    @property
    def partition(self) -> Partition:
        return self.joint.partition

    def sample_batch(self, rng, size):
        means = np.broadcast_to(self.joint.mean, (size, self.joint.n)).copy()
        covs = np.broadcast_to(self.joint.cov, (size, self.joint.n, self.joint.n)).copy()
        return means, covs

    def to_dict(self) -> dict:
        p = self.partition
        return {"type": "point-mass", "mean": self.joint.mean.tolist(), "cov": self.joint.cov.tolist(),
                "y_idx": list(p.y_idx), "z_idx": list(p.z_idx)}


@dataclass(frozen=True, eq=False)
class NIWPrior:
    params: NIWParams
    partition: Partition

    def __post_init__(self):
        probs = self.partition.problems(self.params.dim)
        if probs:
            raise ValueError("; ".join(probs))

    def sample_batch(self, rng, size):
        return niw_sample(self.params, rng, size=size)

    def to_dict(self) -> dict:
        p = self.params
        return {"type": "niw", "mu0": p.mu0.tolist(), "kappa": p.kappa, "psi": p.psi.tolist(), "nu": p.nu,
                "y_idx": list(self.partition.y_idx), "z_idx": list(self.partition.z_idx)}


def sample_joints(prior: Prior, stream: SeededStream, size: int) -> list[GaussianJoint]:
    """Validated joints; mostly for tests and small studies."""
    means, covs = prior.sample_batch(stream.rng(), size)
    return [GaussianJoint(m, c, prior.partition) for m, c in zip(means, covs)]


@dataclass(frozen=True, eq=False)
class SampledCoefficients:
    """Stacked per-sample coefficients; leading axis is the sample index."""

    Q: np.ndarray
    v: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return self.Q.shape[0]


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def sampled_coefficients(means, covs, partition: Partition, z_true) -> SampledCoefficients:
    means = np.asarray(means, dtype=float)
    covs = np.asarray(covs, dtype=float)
    if means.ndim == 1:
        means, covs = means[None], covs[None]
    y, z = list(partition.y_idx), list(partition.z_idx)
    z_true = np.asarray(z_true, dtype=float)
    s_yy = covs[:, y][:, :, y]
    s_yz = covs[:, y][:, :, z]
    s_zz = covs[:, z][:, :, z]
    try:
        Lz = np.linalg.cholesky(s_zz)
    except np.linalg.LinAlgError:
        raise SamplingError("a sampled Sigma_ZZ is not positive definite") from None
    eye_z = np.broadcast_to(np.eye(len(z)), s_zz.shape)
    Lz_inv = np.linalg.solve(Lz, eye_z)
    A = _sym(np.swapaxes(Lz_inv, -1, -2) @ Lz_inv)
    b = np.einsum("jab,jb->ja", A, means[:, z])
    K = s_yz @ A
    S = _sym(s_yy - K @ np.swapaxes(s_yz, -1, -2))
    try:
        Ls = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SamplingError("a sampled conditional covariance is not positive definite") from None
    W = np.linalg.solve(Ls, K)
    Q = _sym(np.swapaxes(W, -1, -2) @ W)
    Qz = Q @ z_true
    v = -2.0 * Qz
    c = Qz @ z_true
    return SampledCoefficients(Q, v, c, A, b)


def expected_niw_coefficients(p: NIWParams, partition: Partition) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``(E[Q], E[Sigma_ZZ^{-1}])`` under an NIW prior.

    Requires ``nu > |Y| + |Z| - 1``.
    """
    ny, nz = partition.ny, partition.nz
    if not p.nu > ny + nz - 1:
        raise ValueError(f"nu must exceed |Y| + |Z| - 1 = {ny + nz - 1}")
    y, z = list(partition.y_idx), list(partition.z_idx)
    omega = spd_inverse(p.psi)
    o_zy = omega[np.ix_(z, y)]
    o_yy = omega[np.ix_(y, y)]
    o_zz = omega[np.ix_(z, z)]
    EQ = (p.nu - ny) * o_zy @ np.linalg.solve(o_yy, o_zy.T) + ny * o_zz
    EA = (p.nu - ny) * spd_inverse(p.psi[np.ix_(z, z)])
    return _sym(EQ), _sym(EA)


@dataclass
class AveragedCoefficients:
    dis: DisruptionCoefficients
    det: DetectionCoefficients
    J: int
    sampling_seconds: float
    h_eig_extremes: tuple[np.ndarray, np.ndarray] | None = None


def average_coefficients(prior: Prior, z_true, J: int, stream: SeededStream, chunk: int = CHUNK,
                         keep=None) -> AveragedCoefficients:
    """Means of ``Q_j, v_j, c_j, A_j, b_j`` over ``J`` draws.

    Draws come in chunks of ``chunk`` from substreams ``stream.child(i)``, so the
    result does not depend on how chunks are scheduled. ``keep``, when given,
    is called with each chunk's :class:`SampledCoefficients`.
    """
    if J < 1:
        raise ValueError("J must be at least 1")
    t0 = time.perf_counter()
    sums = None
    for i, start in enumerate(range(0, J, chunk)):
        size = min(chunk, J - start)
        means, covs = prior.sample_batch(stream.child(i).rng(), size)
        sc = sampled_coefficients(means, covs, prior.partition, z_true)
        if keep is not None:
            keep(sc)
        part = [np.sum(a, axis=0) for a in (sc.Q, sc.v, sc.c, sc.A, sc.b)]
        sums = part if sums is None else [s + p for s, p in zip(sums, part)]
    Q, v, c, A, b = (s / J for s in sums)
    elapsed = time.perf_counter() - t0
    return AveragedCoefficients(
        DisruptionCoefficients(_sym(Q), v, float(c)), DetectionCoefficients(_sym(A), b), J, elapsed,
    )


def saa_components(prior: Prior, z_true, region: BoxRegion, J: int, stream: SeededStream,
                   cfg: SolveConfig | None = None) -> tuple[ComponentObjectives, AveragedCoefficients]:
    """Sample-average components with ``phi*`` found on the averaged objectives."""
    cfg = cfg or SolveConfig()
    avg = average_coefficients(prior, z_true, J, stream)
    p1, c1 = single_objective_optimum("phi1", avg.dis, region, cfg)
    p2, c2 = single_objective_optimum("phi2", avg.det, region, cfg)
    comp = ComponentObjectives(
        avg.dis, avg.det, region, np.asarray(z_true, float), p1, p2, c1, c2,
        {"setting": "grey-box", "J": J, "seed": stream.seed},
    )
    return comp, avg


def saa_assemble(prior: Prior, z_true, u1: float, region: BoxRegion, J: int, stream: SeededStream,
                 cfg: SolveConfig | None = None) -> AttackProblem:
    comp, _ = saa_components(prior, z_true, region, J, stream, cfg)
    return comp.problem(u1, (cfg or SolveConfig()).weight_eps)


def solve_saa(prior: Prior, z_true, u1: float, region: BoxRegion, J: int,
              cfg: SolveConfig | None = None, stream: SeededStream | None = None,
              truth: GaussianJoint | None = None, require_certified: bool = False) -> SolveReport:
    cfg = cfg or SolveConfig()
    stream = stream or SeededStream(cfg.seed)
    t0 = time.perf_counter()
    comp, avg = saa_components(prior, z_true, region, J, stream, cfg)
    problem = comp.problem(u1, cfg.weight_eps)
    setup = time.perf_counter() - t0
    rep = solve_white_box(problem, cfg, truth, require_certified)
    rep.method = f"SAA({J})"
    rep.extras.update(J=J, sampling_seconds=avg.sampling_seconds, normalization_seconds=setup - avg.sampling_seconds,
                      solve_seconds=rep.wall_time_seconds, seed=stream.seed)
    return rep


def sga_gradient_sample(coeffs: SampledCoefficients | tuple, z, weights: ObjectiveWeights, j: int = 0) -> np.ndarray:
    """Gradient of one sampled objective ``w1 phi1_j + w2 phi2_j`` at ``z``.

    ``coeffs`` is either stacked coefficients (sample ``j`` is used) or a
    ``(DisruptionCoefficients, DetectionCoefficients)`` pair.
    """
    z = np.asarray(z, dtype=float)
    if isinstance(coeffs, SampledCoefficients):
        Q, v, A, b = coeffs.Q[j], coeffs.v[j], coeffs.A[j], coeffs.b[j]
    else:
        dis, det = coeffs
        Q, v, A, b = dis.Q, dis.v, det.A, det.b
    return 2.0 * (weights.w1 * Q - weights.w2 * A) @ z + weights.w1 * v + 2.0 * weights.w2 * b


SGAVariant = Literal["basic", "adagrad", "rmsprop", "adam"]


@dataclass
class SGAConfig:
    variant: SGAVariant = "adam"
    alpha: float = 0.001
    eps: float = 1e-8
    tau1: float = 0.9
    tau2: float = 0.9
    stop_delta: float = 1e-4
    max_iters: int = 100_000
    seed: int = 0
    norm_samples: int = 1000
    batch: int = 256

    def __post_init__(self):
        if self.variant not in ("basic", "adagrad", "rmsprop", "adam"):
            raise ValueError(f"unknown SGA variant {self.variant!r}")
        if not (self.alpha > 0 and self.eps > 0):
            raise ValueError("alpha and eps must be positive")
        if not (0 < self.tau1 < 1 and 0 < self.tau2 < 1):
            raise ValueError("tau1 and tau2 must lie in (0, 1)")
        if not self.stop_delta >= 0 or self.max_iters < 1 or self.batch < 1:
            raise ValueError("invalid stopping rule or batch size")

    def hyperparams(self) -> dict:
        out = {"alpha": self.alpha}
        if self.variant != "basic":
            out["eps"] = self.eps
        if self.variant in ("rmsprop", "adam"):
            out["tau1"] = self.tau1
        if self.variant == "adam":
            out["tau2"] = self.tau2
        return out


@dataclass
class SGATrace:
    z: list = field(default_factory=list)


def solve_sga(prior: Prior, z_true, u1: float, region: BoxRegion, cfg: SGAConfig | None = None,
              stream: SeededStream | None = None, components: ComponentObjectives | None = None,
              truth: GaussianJoint | None = None, trace: SGATrace | None = None,
              solve_cfg: SolveConfig | None = None) -> SolveReport:
    """Projected stochastic gradient ascent from the true evidence.

    One joint is drawn per iteration. The weights come from ``components`` (an
    SAA normalization); when absent they are built from ``cfg.norm_samples``
    draws on a separate substream. The reported objective is that of the
    averaged problem, so it is comparable with SAA rows.
    """
    cfg = cfg or SGAConfig()
    stream = stream or SeededStream(cfg.seed)
    if components is None:
        components, _ = saa_components(prior, z_true, region, cfg.norm_samples, stream.child(0), solve_cfg)
    weights = components.weights(u1)
    eval_problem = components.problem(u1)
    iter_stream = stream.child(1)

    t0 = time.perf_counter()
    z = region.project(z_true)
    k = z.shape[0]
    R = np.zeros(k)
    m = np.zeros(k)
    coeffs = None
    it = 0
    converged = False
    while it < cfg.max_iters:
        pos = it % cfg.batch
        if pos == 0:
            means, covs = prior.sample_batch(iter_stream.child(it // cfg.batch).rng(), cfg.batch)
            coeffs = sampled_coefficients(means, covs, prior.partition, z_true)
        it += 1
        r = sga_gradient_sample(coeffs, z, weights, pos)
        if cfg.variant == "basic":
            nrm = np.linalg.norm(r)
            step = cfg.alpha * r / nrm if nrm > 0 else np.zeros(k)
        elif cfg.variant == "adagrad":
            R += r * r
            step = cfg.alpha * r / np.sqrt(R + cfg.eps)
        elif cfg.variant == "rmsprop":
            R = cfg.tau1 * R + (1.0 - cfg.tau1) * r * r
            step = cfg.alpha * r / np.sqrt(R + cfg.eps)
        else:
            m = cfg.tau2 * m + (1.0 - cfg.tau2) * r
            R = cfg.tau1 * R + (1.0 - cfg.tau1) * r * r
            m_hat = m / (1.0 - cfg.tau2 ** it)
            R_hat = R / (1.0 - cfg.tau1 ** it)
            step = cfg.alpha * m_hat / np.sqrt(R_hat + cfg.eps)
        z_new = region.project(z + step)
        moved = float(np.linalg.norm(z_new - z))
        z = z_new
        if trace is not None:
            trace.z.append(z.copy())
        if moved <= cfg.stop_delta:
            converged = True
            break
    elapsed = time.perf_counter() - t0

    rep = SolveReport(z, eval_problem.objective(z), f"SGA-{cfg.variant}", False, it, elapsed)
    rep.extras.update(
        u1=weights.u1, w1=weights.w1, w2=weights.w2, phi1_star=weights.phi1_star, phi2_star=weights.phi2_star,
        phi_exact=bool(weights.phi1_exact and weights.phi2_exact), converged=converged,
        hyperparams=cfg.hyperparams(), seed=stream.seed,
    )
    if truth is not None:
        from .gauss import condition, log_ratio_to_mode
        from .objective import eval_kl_to_truth

        rep.extras["kl_to_truth"] = eval_kl_to_truth(truth, np.asarray(z_true, float), z)
        rep.extras["log_ratio"] = log_ratio_to_mode(truth, z)
        rep.extras["modal_estimate"] = condition(truth, z).mean
    return rep
