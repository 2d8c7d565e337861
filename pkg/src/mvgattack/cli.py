"""Command-line interface.

Tables go out as CSV and reports as JSON. Errors go to stderr as one JSON
object ``{"error": <kind>, "message": <text>}`` with exit status 2 for usage
and input problems and 1 for failures while solving.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from .bench import (
    DEFAULT_U1_GRID,
    AppConfig,
    fit_regression,
    pareto_csv,
    pareto_sweep,
    rn_baseline,
    run_application,
    strip_timing,
    write_result,
)
from .convexity import CSV_HEADER, GRID_STEP, analyze, overcoverage_study
from .errors import CertificationError, MVGAttackError, SchemaError
from .gauss import Partition
from .greybox import SGAConfig, solve_saa, solve_sga
from .models import fit_mle, lgssm_unroll, load_csv, regression_to_joint
from .solvers import SolveConfig, solve_white_box, white_box_components
from .stochastics import SeededStream

CONFIG_DIR = Path(__file__).resolve().parent / "data" / "configs"

# exit statuses
EXIT_INPUT = 2
EXIT_FAILURE = 1


class CLIError(Exception):
    def __init__(self, kind: str, message: str, status: int = EXIT_INPUT):
        super().__init__(message)
        self.kind = kind
        self.status = status


class _Parser(argparse.ArgumentParser):
    """Usage errors become the same JSON error object as everything else."""

    def error(self, message):
        raise CLIError("UsageError", f"{self.prog}: {message}")


def _globals() -> argparse.ArgumentParser:
    g = _Parser(add_help=False)
    s = argparse.SUPPRESS
    g.add_argument("--seed", type=int, default=s, help="root seed (default 0)")
    g.add_argument("--model", default=s, help="model file (JSON)")
    g.add_argument("--prior", default=s, help="prior file (JSON)")
    g.add_argument("--region", default=s, help="region file (JSON) with z_true and the box")
    g.add_argument("--u1", type=float, default=s, help="disruption preference in [0, 1] (default 0.5)")
    g.add_argument("--out", default=s, help="output file or directory; stdout when omitted")
    g.add_argument("--certify", action="store_true", default=s,
                   help="fail unless the solution is certified optimal")
    return g


def _opt(args, name, default=None):
    return getattr(args, name, default)


def _need(args, name: str):
    v = _opt(args, name)
    if v is None:
        raise CLIError("UsageError", f"--{name.replace('_', '-')} is required for this command")
    return v


def _solver_cfg(args) -> SolveConfig:
    kw = {"seed": _opt(args, "seed", 0)}
    if _opt(args, "starts") is not None:
        kw["starts"] = args.starts
    if _opt(args, "max_iters") is not None:
        kw["max_iters"] = args.max_iters
    return SolveConfig(**kw)


def _model(args):
    return mio.load_model(_need(args, "model"))


def _region(args):
    return mio.load_region(_need(args, "region"))


def _emit_json(args, obj) -> None:
    mio.write_json(obj, _opt(args, "out"))


def _emit_text(args, text: str) -> None:
    mio.write_text(text, _opt(args, "out"))


# ---------------------------------------------------------------------------
# attack
# ---------------------------------------------------------------------------


def cmd_attack_wb(args) -> None:
    cfg = _solver_cfg(args)
    if _opt(args, "problem"):
        problem = mio.load_problem(args.problem)
        truth = mio.load_model(args.model) if _opt(args, "model") else None
    else:
        truth = _model(args)
        z_true, region = _region(args)
        comp = white_box_components(truth, z_true, region, cfg)
        problem = comp.problem(_opt(args, "u1", 0.5), cfg.weight_eps)
    rep = solve_white_box(problem, cfg, truth, bool(_opt(args, "certify", False)))
    _emit_json(args, {"seed": cfg.seed, "report": rep.to_dict(), "problem": problem.to_dict()})


def cmd_attack_saa(args) -> None:
    cfg = _solver_cfg(args)
    truth = mio.load_model(args.model) if _opt(args, "model") else None
    prior = mio.load_prior(_need(args, "prior"), truth)
    z_true, region = _region(args)
    rep = solve_saa(prior, z_true, _opt(args, "u1", 0.5), region, args.j, cfg, SeededStream(cfg.seed), truth,
                    bool(_opt(args, "certify", False)))
    _emit_json(args, {"seed": cfg.seed, "prior": prior.to_dict(), "report": rep.to_dict()})


def cmd_attack_sga(args) -> None:
    if _opt(args, "certify"):
        raise CLIError("CertificationError", "stochastic gradient ascent never certifies optimality",
                       EXIT_FAILURE)
    cfg = _solver_cfg(args)
    truth = mio.load_model(args.model) if _opt(args, "model") else None
    prior = mio.load_prior(_need(args, "prior"), truth)
    z_true, region = _region(args)
    sga = SGAConfig(variant=args.variant, alpha=args.alpha, eps=args.eps, tau1=args.tau1, tau2=args.tau2,
                    stop_delta=args.stop_delta, max_iters=args.sga_iters, seed=cfg.seed,
                    norm_samples=args.norm_j)
    rep = solve_sga(prior, z_true, _opt(args, "u1", 0.5), region, sga, SeededStream(cfg.seed), truth=truth,
                    solve_cfg=cfg)
    _emit_json(args, {"seed": cfg.seed, "prior": prior.to_dict(), "report": rep.to_dict()})


# ---------------------------------------------------------------------------
# analyze / sweep / baseline
# ---------------------------------------------------------------------------


def cmd_analyze_convexity(args) -> None:
    cfg = _solver_cfg(args)
    joint = _model(args)
    z_true, region = _region(args)
    comp = white_box_components(joint, z_true, region, cfg)
    rep = analyze(comp, _opt(args, "u1", 0.5), args.brute_force, args.step)
    _emit_json(args, {"seed": cfg.seed, "u1": _opt(args, "u1", 0.5), "phi1_star": comp.phi1_star,
                      "phi2_star": comp.phi2_star, **rep.to_dict()})


def cmd_analyze_overcoverage(args) -> None:
    seed = _opt(args, "seed", 0)
    lines = [",".join(CSV_HEADER)]
    for sampler in args.sampler:
        for n, nz in args.sizes:
            for p1 in args.phi1:
                for p2 in args.phi2:
                    s = overcoverage_study(sampler, n, nz, p1, p2, args.trials, seed, args.step)
                    lines.append(",".join(str(x) for x in s.csv_row()))
    _emit_text(args, "\n".join(lines) + "\n")


def cmd_sweep_pareto(args) -> None:
    cfg = _solver_cfg(args)
    joint = _model(args)
    z_true, region = _region(args)
    comp = white_box_components(joint, z_true, region, cfg)
    _emit_text(args, pareto_csv(pareto_sweep(comp, joint, args.grid, cfg)))


def cmd_baseline_rn(args) -> None:
    seed = _opt(args, "seed", 0)
    z_true, region = _region(args)
    root = SeededStream(seed)
    draws = [rn_baseline(z_true, region, root.child(d)).tolist() for d in range(args.draws)]
    _emit_json(args, {"seed": seed, "z_true": z_true.tolist(), "draws": draws})


# ---------------------------------------------------------------------------
# build-model
# ---------------------------------------------------------------------------


def _columns(text: str | None) -> list[str] | None:
    return [c.strip() for c in text.split(",") if c.strip()] if text else None


def cmd_build_mle(args) -> None:
    data = load_csv(args.data)
    y_idx = data.index(_columns(args.y_columns))
    z_idx = tuple(i for i in range(len(data.columns)) if i not in y_idx)
    joint = fit_mle(data, Partition(y_idx, z_idx))
    _emit_json(args, {**mio.model_to_dict(joint), "columns": list(data.columns)}
               if args.with_columns else mio.model_to_dict(joint))


def cmd_build_regression(args) -> None:
    if args.spec:
        spec = mio.regression_spec_from_dict(mio.read_json(args.spec))
    elif args.data and args.target:
        spec = fit_regression(load_csv(args.data), args.target, _columns(args.predictors))
    else:
        raise CLIError("UsageError", "give --spec, or --data together with --target")
    if args.spec_out:
        mio.write_json(mio.regression_spec_to_dict(spec), args.spec_out)
    _emit_json(args, mio.model_to_dict(regression_to_joint(spec)))


def cmd_build_lgssm(args) -> None:
    spec = mio.lgssm_spec_from_dict(mio.read_json(args.spec) if args.spec else {})
    _emit_json(args, mio.model_to_dict(lgssm_unroll(spec)))


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def resolve_config(name: str) -> Path:
    """A bundled config name (``zhvi``, ``loan``, ``lgssm``) or a path."""
    p = Path(name)
    if p.suffix == ".json" or p.exists():
        return p
    bundled = CONFIG_DIR / f"{name}.json"
    if bundled.exists():
        return bundled
    known = sorted(q.stem for q in CONFIG_DIR.glob("*.json"))
    raise CLIError("SchemaError", f"no config {name!r}; bundled configs are {known}")


def cmd_bench_run(args) -> None:
    path = resolve_config(args.config)
    d = mio.read_json(path)
    if _opt(args, "seed") is not None:
        d = {**d, "seed": args.seed}
    cfg = AppConfig.from_dict(d, base_dir=path.resolve().parent)
    result = run_application(cfg)
    out = _opt(args, "out")
    if out is None:
        for name, text in result.tables.items():
            sys.stdout.write(f"# {name}\n")
            sys.stdout.write(strip_timing(text) if args.no_timing else text)
        return
    written = write_result(result, out)
    print(json.dumps({"app": cfg.app, "seed": cfg.seed, "written": [str(p) for p in written]}))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _sizes(text: str) -> list[tuple[int, int]]:
    out = []
    for part in text.split(","):
        try:
            n, nz = part.split(":")
            out.append((int(n), int(nz)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected n:nz pairs like 4:2,6:3, got {text!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    g = _globals()
    ap = _Parser(prog="mvgattack", description="Disruption attacks on conditional inference in Gaussian models.",
                 parents=[g])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def leaf(parent, name, fn, help_text):
        p = parent.add_parser(name, parents=[g], help=help_text, description=help_text)
        p.set_defaults(func=fn)
        return p

    def solver_opts(p):
        p.add_argument("--starts", type=int, help="multistart count for indefinite objectives")
        p.add_argument("--max-iters", type=int, help="iteration cap for the deterministic solvers")

    attack = sub.add_parser("attack", help="solve an attack problem").add_subparsers(
        dest="mode", required=True, parser_class=_Parser)
    p = leaf(attack, "wb", cmd_attack_wb, "white-box attack on a known joint")
    p.add_argument("--problem", help="solve a saved problem file instead of --model/--region")
    solver_opts(p)
    p = leaf(attack, "gb-saa", cmd_attack_saa, "grey-box attack by sample averaging")
    p.add_argument("--j", type=int, default=1000, help="number of sampled joints")
    solver_opts(p)
    p = leaf(attack, "gb-sga", cmd_attack_sga, "grey-box attack by stochastic gradient ascent")
    p.add_argument("--variant", choices=["basic", "adagrad", "rmsprop", "adam"], default="adam")
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--tau1", type=float, default=0.9)
    p.add_argument("--tau2", type=float, default=0.9)
    p.add_argument("--stop-delta", type=float, default=1e-4)
    p.add_argument("--sga-iters", type=int, default=100_000, help="iteration cap")
    p.add_argument("--norm-j", type=int, default=1000, help="samples used to normalize the weights")
    solver_opts(p)

    analyze_p = sub.add_parser("analyze", help="curvature analysis").add_subparsers(
        dest="mode", required=True, parser_class=_Parser)
    p = leaf(analyze_p, "convexity", cmd_analyze_convexity, "spectra, bounds and classification as JSON")
    p.add_argument("--brute-force", action="store_true", help="also scan u1 for the transition points")
    p.add_argument("--step", type=float, default=GRID_STEP)
    solver_opts(p)
    p = leaf(analyze_p, "overcoverage", cmd_analyze_overcoverage, "overcoverage of the bounds as CSV")
    p.add_argument("--sampler", nargs="+", choices=["ggt", "iw"], default=["ggt", "iw"])
    p.add_argument("--sizes", type=_sizes, default=[(4, 2), (6, 3), (8, 4)], help="n:nz pairs")
    p.add_argument("--phi1", type=_floats, default=[1.0, 10.0])
    p.add_argument("--phi2", type=_floats, default=[1.0, 10.0])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--step", type=float, default=GRID_STEP)

    sweep = sub.add_parser("sweep", help="sweeps over u1").add_subparsers(
        dest="mode", required=True, parser_class=_Parser)
    p = leaf(sweep, "pareto", cmd_sweep_pareto, "white-box Pareto sweep as CSV")
    p.add_argument("--grid", type=_floats, default=list(DEFAULT_U1_GRID))
    solver_opts(p)

    build = sub.add_parser("build-model", help="emit a model file").add_subparsers(
        dest="mode", required=True, parser_class=_Parser)
    p = leaf(build, "mle", cmd_build_mle, "maximum-likelihood joint from a CSV table")
    p.add_argument("--data", required=True)
    p.add_argument("--y-columns", required=True, help="comma-separated latent columns")
    p.add_argument("--with-columns", action="store_true", help="add the column names to the output")
    p = leaf(build, "regression", cmd_build_regression, "joint implied by a linear regression")
    p.add_argument("--spec", help="regression spec JSON")
    p.add_argument("--data")
    p.add_argument("--target")
    p.add_argument("--predictors", help="comma-separated predictor columns (default: all others)")
    p.add_argument("--spec-out", help="also write the fitted regression spec here")
    p = leaf(build, "lgssm", cmd_build_lgssm, "unrolled state-space joint")
    p.add_argument("--spec", help="LG-SSM spec JSON (default: the tracking example)")

    bench = sub.add_parser("bench", help="application pipelines").add_subparsers(
        dest="mode", required=True, parser_class=_Parser)
    p = leaf(bench, "run", cmd_bench_run, "run a bundled or custom application config")
    p.add_argument("--config", required=True, help="zhvi, loan, lgssm or a path to a config JSON")
    p.add_argument("--no-timing", action="store_true", help="drop the timing column when printing")

    base = sub.add_parser("baseline", help="baselines").add_subparsers(
        dest="mode", required=True, parser_class=_Parser)
    p = leaf(base, "rn", cmd_baseline_rn, "uniform random noise within the box")
    p.add_argument("--draws", type=int, default=1)
    return ap


def _fail(kind: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return status


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except CLIError as e:
        return _fail(e.kind, str(e), e.status)
    except CertificationError as e:
        return _fail(type(e).__name__, str(e), EXIT_FAILURE)
    except (MVGAttackError, ValueError, KeyError, OSError, np.linalg.LinAlgError) as e:
        kind = type(e).__name__
        return _fail(kind, str(e), EXIT_INPUT if isinstance(e, (SchemaError, OSError, KeyError)) else EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
