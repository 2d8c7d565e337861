"""Box-constrained maximization of ``z'Hz + g'z``.

Three routes, picked by the curvature of ``H``:

* concave: projected gradient ascent with backtracking, accelerated by an
  active-set Newton step on the free coordinates; certified when the
  projected-gradient residual drops below ``grad_tol``;
* convex: the maximum sits on a vertex, so all ``2^k`` vertices are scored
  (certified) while ``k <= vertex_enum_limit``;
* anything else: multi-start local ascent from scrambled-Sobol interior
  points, the truth and the box center, each finished by exact coordinate
  ascent. Never certified.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import linalg
from scipy.stats import qmc

from .convexity import Curvature, classify_matrix
from .errors import CertificationError, DegenerateNormalization, VertexLimitError
from .gauss import GaussianJoint, condition, log_ratio_to_mode
from .objective import (
    WEIGHT_EPS,
    AttackProblem,
    BoxRegion,
    ComponentObjectives,
    DetectionCoefficients,
    DisruptionCoefficients,
    build_detection,
    build_disruption,
    eval_kl_to_truth,
)


@dataclass
class SolveConfig:
    max_iters: int = 20000
    grad_tol: float = 1e-10
    step_rule: Literal["fixed", "backtracking"] = "backtracking"
    starts: int | None = None
    vertex_enum_limit: int = 16
    seed: int = 0
    weight_eps: float = WEIGHT_EPS

    def __post_init__(self):
        if self.max_iters < 1 or self.grad_tol <= 0 or self.vertex_enum_limit < 0:
            raise ValueError("solver counts and tolerances must be positive")
        if self.starts is not None and self.starts < 1:
            raise ValueError("starts must be positive")
        if self.step_rule not in ("fixed", "backtracking"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")

    def n_starts(self, k: int) -> int:
        return self.starts if self.starts is not None else max(20, 4 * k)


@dataclass
class SolveReport:
    z_star: np.ndarray
    objective: float
    method: str
    certified: bool
    iterations: int
    wall_time_seconds: float
    classification: str | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "z_star": np.asarray(self.z_star).tolist(),
            "objective": self.objective,
            "method": self.method,
            "certified": self.certified,
            "iterations": self.iterations,
            "wall_time_seconds": self.wall_time_seconds,
            "classification": self.classification,
            **{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.extras.items()},
        }


def project_box(z, region: BoxRegion) -> np.ndarray:
    return region.project(z)


def _quad(H, g, z) -> float:
    return float(z @ H @ z + g @ z)


def _residual(H, g, z, lo, hi) -> float:
    grad = 2.0 * H @ z + g
    return float(np.linalg.norm(z - np.clip(z + grad, lo, hi)))


def _lipschitz(H) -> float:
    return 2.0 * float(np.max(np.abs(np.linalg.eigvalsh(H)))) if H.size else 0.0


def _face_step(H, g, z, lo, hi, grad, f):
    """Second-order step on the free face; returns ``(z, f)`` or None.

    A strictly concave face gets a projected Newton step with backtracking.
    Otherwise the face has a direction of nonnegative curvature; along it
    (signed to ascend) the objective is convex and increasing, so the step
    runs to the first bound it meets.
    """
    at_lo = (z <= lo) & (grad <= 0)
    at_hi = (z >= hi) & (grad >= 0)
    free = ~(at_lo | at_hi) & (hi > lo)
    if not free.any():
        return None
    F = np.flatnonzero(free)
    HFF = H[np.ix_(F, F)]
    w, V = np.linalg.eigh(HFF)
    scale = max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    if w[-1] < -1e-12 * scale:
        d = np.zeros_like(z)
        d[F] = linalg.solve(-2.0 * HFF, grad[F], assume_a="pos")
        step = 1.0
        for _ in range(30):
            zn = np.clip(z + step * d, lo, hi)
            fn = _quad(H, g, zn)
            if fn > f:
                return zn, fn
            step *= 0.5
        return None
    d = np.zeros_like(z)
    d[F] = V[:, -1]
    if grad @ d < 0:
        d = -d
    with np.errstate(divide="ignore", invalid="ignore"):
        room = np.where(d > 0, (hi - z) / d, np.where(d < 0, (lo - z) / d, np.inf))
    s_max = float(np.min(room[F]))
    if not np.isfinite(s_max) or s_max <= 0:
        return None
    zn = np.clip(z + s_max * d, lo, hi)
    fn = _quad(H, g, zn)
    return (zn, fn) if fn > f else None


def _coordinate_ascent(H, g, z, lo, hi, sweeps: int = 200) -> np.ndarray:
    """Exact one-dimensional maximization cycled over coordinates."""
    z = z.copy()
    k = z.shape[0]
    for _ in range(sweeps):
        improved = False
        for i in range(k):
            if hi[i] <= lo[i]:
                continue
            a = H[i, i]
            b = 2.0 * (H[i] @ z - a * z[i]) + g[i]
            cands = [lo[i], hi[i]]
            if a < 0:
                cands.append(min(max(-b / (2.0 * a), lo[i]), hi[i]))
            vals = [a * t * t + b * t for t in cands]
            best = cands[int(np.argmax(vals))]
            cur = a * z[i] * z[i] + b * z[i]
            if max(vals) > cur + 1e-15 * (1.0 + abs(cur)):
                z[i] = best
                improved = True
        if not improved:
            break
    return z


def _ascend(H, g, region: BoxRegion, z0, cfg: SolveConfig, polish: bool = True):
    """Local projected ascent; returns (z, iterations, converged).

    Each iteration first tries a second-order step on the free face (see
    :func:`_face_step`), then falls back to a projected gradient step with
    Armijo backtracking.
    """
    lo, hi = region.lower, region.upper
    z = np.clip(np.asarray(z0, dtype=float), lo, hi)
    f = _quad(H, g, z)
    L = _lipschitz(H)
    if L == 0.0:
        z = np.where(g > 0, hi, np.where(g < 0, lo, z))
        return z, 1, True
    t = 1.0 / L
    for it in range(1, cfg.max_iters + 1):
        grad = 2.0 * H @ z + g
        if np.linalg.norm(z - np.clip(z + grad, lo, hi)) <= cfg.grad_tol:
            return z, it, True
        if polish:
            nxt = _face_step(H, g, z, lo, hi, grad, f)
            if nxt is not None:
                z, f = nxt
                continue
        if cfg.step_rule == "fixed":
            zn = np.clip(z + t * grad, lo, hi)
            fn = _quad(H, g, zn)
        else:
            step = t
            while True:
                zn = np.clip(z + step * grad, lo, hi)
                d = zn - z
                fn = _quad(H, g, zn)
                # sufficient ascent for an L-smooth objective
                if fn >= f + grad @ d - (d @ d) / (2.0 * step) - 1e-14 * (1.0 + abs(f)) or step < 1e-300:
                    break
                step *= 0.5
            t = min(2.0 * step, 1e6 / L)
        if fn < f:
            zn, fn = z, f
        z, f = zn, fn
    return z, cfg.max_iters, False


def maximize_concave(H, g, region: BoxRegion, cfg: SolveConfig | None = None, z0=None) -> SolveReport:
    """Global maximum of a concave quadratic over a box."""
    cfg = cfg or SolveConfig()
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    t0 = time.perf_counter()
    start = region.center if z0 is None else z0
    z, iters, ok = _ascend(H, g, region, start, cfg)
    return SolveReport(z, _quad(H, g, z), "concave-pga", bool(ok), iters, time.perf_counter() - t0)


def _vertex_bits(k: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(bool)


def maximize_by_vertices(H, g, region: BoxRegion, cfg: SolveConfig | None = None) -> SolveReport:
    """Score every vertex. Sign patterns are ordered lexicographically with
    coordinate 0 most significant and ``lower`` before ``upper``; the first
    maximal pattern wins ties."""
    cfg = cfg or SolveConfig()
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    k = g.shape[0]
    if k > cfg.vertex_enum_limit:
        raise VertexLimitError(f"|Z| = {k} exceeds the vertex enumeration limit {cfg.vertex_enum_limit}")
    t0 = time.perf_counter()
    total = 1 << k
    chunk = 1 << 14
    vals = np.empty(total)
    for s in range(0, total, chunk):
        bits = _vertex_bits(k, s, min(s + chunk, total))
        V = np.where(bits, region.upper, region.lower)
        vals[s:s + bits.shape[0]] = np.einsum("ij,jk,ik->i", V, H, V) + V @ g
    best = float(vals.max())
    i = int(np.flatnonzero(vals >= best - 1e-12 * (1.0 + abs(best)))[0])
    z = np.where(_vertex_bits(k, i, i + 1)[0], region.upper, region.lower)
    return SolveReport(z, _quad(H, g, z), "vertex-enumeration", True, total, time.perf_counter() - t0)


def _start_points(region: BoxRegion, n: int, seed: int) -> np.ndarray:
    k = region.dim
    m = max(0, int(np.ceil(np.log2(max(n, 1)))))
    u = qmc.Sobol(d=k, scramble=True, seed=np.random.default_rng(seed)).random_base2(m)[:n]
    return region.lower + u * region.width


def maximize_multistart(
    H, g, region: BoxRegion, cfg: SolveConfig | None = None, z_true=None,
) -> SolveReport:
    cfg = cfg or SolveConfig()
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    t0 = time.perf_counter()
    starts = [region.center]
    if z_true is not None:
        starts.append(region.project(z_true))
    starts.extend(_start_points(region, cfg.n_starts(region.dim), cfg.seed))
    best_z, best_f, total_iters = None, -np.inf, 0
    for s in starts:
        z, iters, _ = _ascend(H, g, region, s, cfg)
        z = _coordinate_ascent(H, g, z, region.lower, region.upper)
        z, more, _ = _ascend(H, g, region, z, cfg)
        total_iters += iters + more
        f = _quad(H, g, z)
        if f > best_f:
            best_z, best_f = z, f
    curv = classify_matrix(H)
    return SolveReport(
        best_z, best_f, "multistart", curv is Curvature.CONCAVE, total_iters,
        time.perf_counter() - t0, curv.value, {"starts": len(starts)},
    )


def single_objective_optimum(
    which: Literal["phi1", "phi2"],
    coeffs: DisruptionCoefficients | DetectionCoefficients,
    region: BoxRegion,
    cfg: SolveConfig | None = None,
) -> tuple[float, bool]:
    """``phi*_k``: the best value of one component alone over the region."""
    cfg = cfg or SolveConfig()
    if which == "phi2":
        rep = maximize_concave(-coeffs.A, 2.0 * coeffs.b, region, cfg)
    elif which == "phi1":
        if region.dim <= cfg.vertex_enum_limit:
            rep = maximize_by_vertices(coeffs.Q, coeffs.v, region, cfg)
        else:
            rep = maximize_multistart(coeffs.Q, coeffs.v, region, cfg)
            rep.certified = False
    else:
        raise ValueError(f"unknown objective {which!r}")
    if abs(rep.objective) <= cfg.weight_eps:
        raise DegenerateNormalization(f"|{which}*| = {abs(rep.objective):.3g} is too small to normalize by")
    return rep.objective, rep.certified


def white_box_components(
    joint: GaussianJoint, z_true, region: BoxRegion, cfg: SolveConfig | None = None,
) -> ComponentObjectives:
    """Both components for a known joint, with their single-objective optima."""
    cfg = cfg or SolveConfig()
    dis = build_disruption(joint, z_true)
    det = build_detection(joint)
    p1, c1 = single_objective_optimum("phi1", dis, region, cfg)
    p2, c2 = single_objective_optimum("phi2", det, region, cfg)
    return ComponentObjectives(dis, det, region, np.asarray(z_true, float), p1, p2, c1, c2, {"setting": "white-box"})


def solve_quadratic(problem: AttackProblem, cfg: SolveConfig | None = None) -> SolveReport:
    """Dispatch on curvature without any truth-model reporting."""
    cfg = cfg or SolveConfig()
    curv = classify_matrix(problem.H)
    if curv is Curvature.CONCAVE:
        rep = maximize_concave(problem.H, problem.g, problem.region, cfg, z0=problem.region.project(problem.z_true))
    elif curv is Curvature.CONVEX and problem.dim <= cfg.vertex_enum_limit:
        rep = maximize_by_vertices(problem.H, problem.g, problem.region, cfg)
    else:
        rep = maximize_multistart(problem.H, problem.g, problem.region, cfg, z_true=problem.z_true)
        rep.certified = False
    rep.classification = curv.value
    # the truth is feasible, so never return anything worse than it
    if problem.region.contains(problem.z_true):
        f_true = problem.objective(problem.z_true)
        if f_true > rep.objective:
            rep.z_star, rep.objective = problem.z_true.copy(), f_true
    rep.objective = problem.objective(rep.z_star)
    return rep


def solve_white_box(
    problem: AttackProblem,
    cfg: SolveConfig | None = None,
    truth: GaussianJoint | None = None,
    require_certified: bool = False,
) -> SolveReport:
    """Solve Problem WB; with ``truth`` also report KL, plausibility and modal shift."""
    rep = solve_quadratic(problem, cfg)
    w = problem.weights
    rep.extras.update(
        u1=w.u1, w1=w.w1, w2=w.w2, phi1_star=w.phi1_star, phi2_star=w.phi2_star,
        phi_exact=bool(w.phi1_exact and w.phi2_exact),
    )
    if truth is not None:
        rep.extras["kl_to_truth"] = eval_kl_to_truth(truth, problem.z_true, rep.z_star)
        rep.extras["log_ratio"] = log_ratio_to_mode(truth, rep.z_star)
        rep.extras["modal_estimate"] = condition(truth, rep.z_star).mean
        rep.extras["modal_estimate_true"] = condition(truth, problem.z_true).mean
    if require_certified and not rep.certified:
        raise CertificationError(
            f"no certified solution: objective is {rep.classification} "
            f"and |Z| = {problem.dim} (vertex limit {(cfg or SolveConfig()).vertex_enum_limit})"
        )
    return rep
