"""Baselines, Pareto sweeps, evaluation rows and the application pipelines."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError
from .gauss import GaussianJoint, Partition, condition, log_ratio_to_mode
from .greybox import NIWPrior, SGAConfig, saa_components, solve_sga
from .models import (
    LGSSMSpec,
    RegressionSpec,
    build_lgssm_prior,
    build_regression_prior,
    fit_mle,
    lgssm_evidence,
    lgssm_unroll,
    load_csv,
    regression_to_joint,
)
from .objective import AttackProblem, BoxRegion, ComponentObjectives, eval_kl_to_truth
from .solvers import SolveConfig, solve_white_box, white_box_components
from .stochastics import NIWParams, SeededStream

DEFAULT_U1_GRID = (0.01,) + tuple(round(0.05 * i, 2) for i in range(1, 20)) + (0.99,)


def rn_baseline(z_true, region: BoxRegion, stream: SeededStream) -> np.ndarray:
    """Uniform noise on ``[lower - z', upper - z']`` added to ``z'``."""
    z_true = np.asarray(z_true, dtype=float)
    if not region.contains(z_true):
        raise ValueError("the true evidence must lie in the region")
    u = stream.rng().random(z_true.shape[0])
    noise = (region.lower - z_true) + u * region.width
    return region.project(z_true + noise)


@dataclass
class ParetoPoint:
    u1: float
    z: np.ndarray
    disruption: float
    risk: float
    objective: float
    certified: bool
    nondominated: bool = True


def nondominated_mask(disruption, risk) -> np.ndarray:
    """True where no other point has at least the disruption and at most the
    risk, strictly better in one of the two."""
    d = np.asarray(disruption, dtype=float)
    r = np.asarray(risk, dtype=float)
    better_eq = (d[None, :] >= d[:, None]) & (r[None, :] <= r[:, None])
    strict = (d[None, :] > d[:, None]) | (r[None, :] < r[:, None])
    return ~np.any(better_eq & strict, axis=1)


def pareto_sweep(components: ComponentObjectives, truth: GaussianJoint, u1_grid=DEFAULT_U1_GRID,
                 cfg: SolveConfig | None = None) -> list[ParetoPoint]:
    """Solve the weighted problem on every grid value with fixed ``phi*``.

    Disruption is the KL divergence under ``truth``; risk is the negative
    log-ratio of the corrupted evidence's density to the marginal mode.
    """
    cfg = cfg or SolveConfig()
    pts = []
    for u1 in u1_grid:
        if not 0.0 < u1 < 1.0:
            raise ValueError(f"sweep values must lie in (0, 1), got {u1}")
        rep = solve_white_box(components.problem(u1, cfg.weight_eps), cfg)
        z = rep.z_star
        pts.append(ParetoPoint(
            float(u1), z, eval_kl_to_truth(truth, components.z_true, z), -log_ratio_to_mode(truth, z),
            rep.objective, rep.certified,
        ))
    mask = nondominated_mask([p.disruption for p in pts], [p.risk for p in pts])
    for p, keep in zip(pts, mask):
        p.nondominated = bool(keep)
    return pts


PARETO_HEADER = ["u1", "disruption", "risk", "objective", "certified", "nondominated"]


def pareto_csv(points: list[ParetoPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    k = points[0].z.shape[0] if points else 0
    w.writerow(PARETO_HEADER + [f"z{i + 1}" for i in range(k)])
    for p in points:
        w.writerow([_fmt(p.u1), _fmt(p.disruption), _fmt(p.risk), _fmt(p.objective), int(p.certified),
                    int(p.nondominated)] + [_fmt(x) for x in p.z])
    return buf.getvalue()


@dataclass
class EvaluationRow:
    attack: str
    variant: str
    z: np.ndarray
    objective: float
    wb_objective: float
    kl_to_truth: float
    log_ratio: float
    wall_time_seconds: float | None
    hyperparams: dict = field(default_factory=dict)
    seed: int | None = None
    modal_estimate: np.ndarray | None = None
    certified: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["z"] = self.z.tolist()
        d["modal_estimate"] = None if self.modal_estimate is None else self.modal_estimate.tolist()
        return d


def evaluate_attack(truth: GaussianJoint, z_true, z, problem: AttackProblem, wb_problem: AttackProblem | None = None,
                    attack: str = "", variant: str = "-", wall_time: float | None = None,
                    hyperparams: dict | None = None, seed: int | None = None, certified: bool = False) -> EvaluationRow:
    """Score ``z`` under the problem it was solved for and under the truth model.

    ``objective`` comes from ``problem``; ``wb_objective`` from ``wb_problem``
    (the white-box objective) so rows from different settings can be compared.
    """
    z = np.asarray(z, dtype=float)
    if not problem.region.contains(z):
        raise ValueError("attack vector lies outside the feasible region")
    wb = wb_problem if wb_problem is not None else problem
    return EvaluationRow(
        attack, variant, z, problem.objective(z), wb.objective(z),
        eval_kl_to_truth(truth, z_true, z), log_ratio_to_mode(truth, z), wall_time,
        dict(hyperparams or {}), seed, condition(truth, z).mean, certified,
    )


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


TIMING_COLUMN = "wall_time_seconds"


def table_csv(rows: list[EvaluationRow], extra_cols: dict | None = None) -> str:
    """Table-shaped CSV, one row per attack; the timing column is last."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    k = rows[0].z.shape[0] if rows else 0
    extra_cols = extra_cols or {}
    w.writerow(list(extra_cols) + ["attack", "variant", "hyperparams"] + [f"z{i + 1}" for i in range(k)]
               + ["objective", "wb_objective", "kl_to_truth", "log_ratio", "certified", "seed", TIMING_COLUMN])
    for r in rows:
        hp = ";".join(f"{key}={_fmt(v)}" for key, v in r.hyperparams.items()) or "-"
        w.writerow([extra_cols[c] for c in extra_cols] + [r.attack, r.variant, hp] + [_fmt(x) for x in r.z]
                   + [_fmt(r.objective), _fmt(r.wb_objective), _fmt(r.kl_to_truth), _fmt(r.log_ratio),
                      int(r.certified), "" if r.seed is None else r.seed,
                      "" if r.wall_time_seconds is None else f"{r.wall_time_seconds:.6f}"])
    return buf.getvalue()


def strip_timing(csv_text: str) -> str:
    """Drop the timing column, for reproducibility comparisons."""
    rows = list(csv.reader(io.StringIO(csv_text)))
    if not rows or TIMING_COLUMN not in rows[0]:
        return csv_text
    i = rows[0].index(TIMING_COLUMN)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow(r[:i] + r[i + 1:])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# application pipelines
# ---------------------------------------------------------------------------


@dataclass
class AppConfig:
    app: str
    model: dict
    prior: dict
    region: dict
    z_true: list | None = None
    observations: list | None = None
    u1: float = 0.5
    u1_list: list | None = None
    q_list: list | None = None
    saa_J: list = field(default_factory=lambda: [25, 100, 500, 2500, 10000])
    sga: list = field(default_factory=list)
    sga_max_iters: int = 5000
    sga_norm_J: int | None = None
    rn_draws: int = 1
    pareto: bool = False
    seed: int = 0
    solver: dict = field(default_factory=dict)
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "AppConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise SchemaError(f"unknown config keys {sorted(unknown)}")
        if d.get("app") not in ("zhvi", "loan", "lgssm"):
            raise SchemaError("config 'app' must be one of zhvi, loan, lgssm")
        out = cls(**{**d, "base_dir": str(base_dir)})
        if out.app != "lgssm" and out.z_true is None:
            raise SchemaError("config needs z_true")
        return out

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q


def fit_regression(data, target: str, predictors: list[str] | None = None) -> RegressionSpec:
    """Least squares for the coefficients, 1/N residual variance, MLE predictor model."""
    predictors = predictors or [c for c in data.columns if c != target]
    X = data.rows[:, list(data.index(predictors))]
    y = data.rows[:, data.index([target])[0]]
    N, k = X.shape
    if N < k + 2:
        raise DataError(f"need at least {k + 2} rows for a regression on {k} predictors")
    D = np.column_stack([np.ones(N), X])
    coef, *_ = np.linalg.lstsq(D, y, rcond=None)
    resid = y - D @ coef
    mu = X.mean(axis=0)
    Xc = X - mu
    return RegressionSpec(coef[0], coef[1:], float(resid @ resid / N), mu, Xc.T @ Xc / N)


def build_truth(cfg: AppConfig):
    """``(joint, regression spec or None, lgssm spec or None)`` from the model section."""
    m = cfg.model
    kind = m.get("kind")
    if kind == "mle":
        data = load_csv(cfg.path(m["data"]))
        y_idx = data.index(m["y_columns"])
        z_idx = tuple(i for i in range(len(data.columns)) if i not in y_idx)
        return fit_mle(data, Partition(y_idx, z_idx)), None, None
    if kind == "regression":
        data = load_csv(cfg.path(m["data"]))
        spec = fit_regression(data, m["target"], m.get("predictors"))
        return regression_to_joint(spec), spec, None
    if kind == "lgssm":
        spec = LGSSMSpec(**m.get("spec", {}))
        return lgssm_unroll(spec), None, spec
    raise SchemaError(f"unknown model kind {kind!r}")


def build_prior(cfg: AppConfig, joint: GaussianJoint, reg: RegressionSpec | None, ss: LGSSMSpec | None):
    p = cfg.prior
    kind = p.get("type")
    if kind == "niw":
        return NIWPrior(NIWParams(joint.mean, p.get("kappa", 5.0), joint.cov, p["nu"]), joint.partition)
    if kind == "regression":
        if reg is None:
            raise SchemaError("a regression prior needs a regression model")
        return build_regression_prior(reg, p.get("kappa", 5.0), p["nu"], p.get("ig_shape", 4.0),
                                      p.get("ig_scale", 2.0), p.get("beta_cov_scale", 1.0))
    if kind == "lgssm":
        if ss is None:
            raise SchemaError("an LG-SSM prior needs an LG-SSM model")
        return build_lgssm_prior(ss, p.get("mean_var", 1.0), p.get("var_shape", 2.0), p.get("var_floor", 1e-8))
    raise SchemaError(f"unknown prior type {kind!r}")


def build_region(spec: dict, z_true: np.ndarray) -> BoxRegion:
    if "lower" in spec and "upper" in spec:
        return BoxRegion(spec["lower"], spec["upper"])
    if "half_width" in spec:
        return BoxRegion.around(z_true, spec["half_width"])
    if "relative" in spec:
        return BoxRegion.relative(z_true, spec["relative"])
    raise SchemaError("region needs lower/upper, half_width or relative")


@dataclass
class AppResult:
    tables: dict
    bundle: dict


def _cell(cfg: AppConfig, joint, prior, z_true, region, u1, solve_cfg, stream: SeededStream,
          with_sga: bool = True, with_pareto: bool = False) -> tuple[list[EvaluationRow], dict]:
    """WB, SAA over J, SGA over the hyperparameter list, RN and the truth row."""
    rows: list[EvaluationRow] = []
    extra: dict = {}
    t0 = time.perf_counter()
    comp = white_box_components(joint, z_true, region, solve_cfg)
    wb_problem = comp.problem(u1)
    wb = solve_white_box(wb_problem, solve_cfg, joint)
    wb_time = time.perf_counter() - t0
    rows.append(evaluate_attack(joint, z_true, wb.z_star, wb_problem, wb_problem, "WB", "-", wb_time,
                                {}, cfg.seed, wb.certified))
    extra["wb"] = {"classification": wb.classification, "method": wb.method, "certified": wb.certified,
                   "phi1_star": comp.phi1_star, "phi2_star": comp.phi2_star,
                   "phi1_exact": comp.phi1_exact, "phi2_exact": comp.phi2_exact}
    if with_pareto:
        extra["pareto"] = pareto_sweep(comp, joint, DEFAULT_U1_GRID, solve_cfg)

    saa_comp = None
    for i, J in enumerate(cfg.saa_J):
        t0 = time.perf_counter()
        gcomp, avg = saa_components(prior, z_true, region, int(J), stream.child(1).child(i), solve_cfg)
        problem = gcomp.problem(u1)
        rep = solve_white_box(problem, solve_cfg)
        elapsed = time.perf_counter() - t0
        rows.append(evaluate_attack(joint, z_true, rep.z_star, problem, wb_problem, "SAA", "-", elapsed,
                                    {"J": int(J)}, cfg.seed, rep.certified))
        saa_comp = gcomp
    if with_sga and cfg.sga:
        if cfg.sga_norm_J is not None or saa_comp is None:
            J = cfg.sga_norm_J or 1000
            saa_comp, _ = saa_components(prior, z_true, region, J, stream.child(2), solve_cfg)
        for i, h in enumerate(cfg.sga):
            sga_cfg = SGAConfig(max_iters=cfg.sga_max_iters, seed=cfg.seed, **h)
            rep = solve_sga(prior, z_true, u1, region, sga_cfg, stream.child(3).child(i), components=saa_comp)
            problem = saa_comp.problem(u1)
            rows.append(evaluate_attack(joint, z_true, rep.z_star, problem, wb_problem, "SGA", sga_cfg.variant,
                                        rep.wall_time_seconds, sga_cfg.hyperparams(), cfg.seed))
    for d in range(cfg.rn_draws):
        t0 = time.perf_counter()
        z = rn_baseline(z_true, region, stream.child(4).child(d))
        rows.append(evaluate_attack(joint, z_true, z, wb_problem, wb_problem, "RN", "-",
                                    time.perf_counter() - t0, {"draw": d}, cfg.seed))
    rows.append(evaluate_attack(joint, z_true, z_true, wb_problem, wb_problem, "truth", "-", None, {}, cfg.seed))
    return rows, extra


def run_application(cfg: AppConfig) -> AppResult:
    """Run one application end to end and return its tables and JSON bundle."""
    solve_cfg = SolveConfig(seed=cfg.seed, **cfg.solver)
    stream = SeededStream(cfg.seed)
    joint, reg, ss = build_truth(cfg)
    prior = build_prior(cfg, joint, reg, ss)
    tables: dict[str, str] = {}
    bundle: dict = {"app": cfg.app, "seed": cfg.seed, "n": joint.n, "nz": joint.partition.nz, "cells": []}

    if cfg.app == "lgssm":
        z_true = lgssm_evidence(cfg.observations) if cfg.observations is not None else lgssm_evidence()
        all_rows, path_rows = [], []
        for qi, q in enumerate(cfg.q_list or [cfg.region.get("relative", 0.25)]):
            region = BoxRegion.relative(z_true, q)
            for ui, u1 in enumerate(cfg.u1_list or [cfg.u1]):
                rows, extra = _cell(cfg, joint, prior, z_true, region, u1, solve_cfg,
                                    stream.child(100 + qi).child(ui), with_sga=False)
                for r in rows:
                    all_rows.append(({"q": _fmt(q), "u1": _fmt(u1)}, r))
                    if r.attack in ("WB", "SAA", "truth"):
                        path_rows.append((q, u1, r))
                bundle["cells"].append({"q": q, "u1": u1, **extra["wb"],
                                        "rows": [r.to_dict() for r in rows]})
        tables["table.csv"] = _join_tables(all_rows)
        tables["paths.csv"] = _paths_csv(path_rows, ss.horizon)
    else:
        z_true = np.asarray(cfg.z_true, dtype=float)
        region = build_region(cfg.region, z_true)
        rows, extra = _cell(cfg, joint, prior, z_true, region, cfg.u1, solve_cfg, stream, True, cfg.pareto)
        tables["table.csv"] = table_csv(rows)
        if "pareto" in extra:
            tables["pareto.csv"] = pareto_csv(extra["pareto"])
        bundle["cells"].append({"u1": cfg.u1, **extra["wb"], "rows": [r.to_dict() for r in rows]})
    return AppResult(tables, bundle)


def _join_tables(tagged: list) -> str:
    out = []
    for i, (tags, row) in enumerate(tagged):
        text = table_csv([row], tags).splitlines()
        out.extend(text if i == 0 else text[1:])
    return "\n".join(out) + "\n"


def _paths_csv(rows: list, horizon: int) -> str:
    """Long-format corrupted paths: one line per (q, u1, attack, t)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["q", "u1", "attack", "J", "t", "z1", "z2"])
    for q, u1, r in rows:
        path = r.z.reshape(horizon + 1, 2)
        for t, (a, b) in enumerate(path):
            w.writerow([_fmt(q), _fmt(u1), r.attack, r.hyperparams.get("J", ""), t, _fmt(a), _fmt(b)])
    return buf.getvalue()


def write_result(result: AppResult, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in result.tables.items():
        p = out_dir / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    p = out_dir / "bundle.json"
    p.write_text(json.dumps(result.bundle, indent=2, default=_json_default) + "\n", encoding="utf-8")
    written.append(p)
    return written


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, ParetoPoint):
        return {"u1": o.u1, "z": o.z.tolist(), "disruption": o.disruption, "risk": o.risk,
                "objective": o.objective, "certified": o.certified, "nondominated": o.nondominated}
    raise TypeError(f"cannot serialize {type(o).__name__}")
