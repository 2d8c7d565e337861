"""JSON files exchanged with the command line.

Every loader validates against a JSON schema first and then lets the domain
constructors check what a schema cannot express (square covariances, positive
definiteness, partitions that cover every index).
"""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import SchemaError
from .gauss import GaussianJoint, Partition
from .greybox import NIWPrior, PointMassPrior
from .models import (
    LGSSMSpec,
    RegressionSpec,
    build_lgssm_prior,
    build_regression_prior,
)
from .objective import AttackProblem, BoxRegion
from .stochastics import NIWParams

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_IDX = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {"mean": _VEC, "cov": _MAT, "y_idx": _IDX, "z_idx": _IDX},
    "required": ["mean", "cov", "y_idx", "z_idx"],
    "additionalProperties": False,
}

REGION_SCHEMA = {
    "type": "object",
    "properties": {
        "z_true": _VEC,
        "lower": _VEC,
        "upper": _VEC,
        "half_width": {"oneOf": [_NUM, _VEC]},
        "relative": {"type": "number", "minimum": 0},
    },
    "required": ["z_true"],
    "oneOf": [
        {"required": ["lower", "upper"]},
        {"required": ["half_width"]},
        {"required": ["relative"]},
    ],
    "additionalProperties": False,
}

REGRESSION_SCHEMA = {
    "type": "object",
    "properties": {"beta0": _NUM, "beta": _VEC, "sigma2": _NUM, "mu_z": _VEC, "sigma_zz": _MAT},
    "required": ["beta0", "beta", "sigma2", "mu_z", "sigma_zz"],
    "additionalProperties": False,
}

LGSSM_SCHEMA = {
    "type": "object",
    "properties": {
        "horizon": {"type": "integer", "minimum": 0},
        "dt": _NUM,
        "init_means": _VEC,
        "init_vars": _VEC,
        "trans_vars": _VEC,
        "obs_vars": _VEC,
    },
    "additionalProperties": False,
}

PRIOR_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "oneOf": [
        {
            "properties": {
                "type": {"const": "niw"}, "mu0": _VEC, "kappa": _NUM, "psi": _MAT, "nu": _NUM,
                "y_idx": _IDX, "z_idx": _IDX,
            },
            "required": ["mu0", "kappa", "psi", "nu"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "point-mass"}, "mean": _VEC, "cov": _MAT, "y_idx": _IDX, "z_idx": _IDX,
            },
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "regression"}, "spec": REGRESSION_SCHEMA, "kappa": _NUM, "nu": _NUM,
                "ig_shape": _NUM, "ig_scale": _NUM, "beta_cov_scale": _NUM,
            },
            "required": ["spec"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "type": {"const": "lgssm"}, "spec": LGSSM_SCHEMA, "mean_var": _NUM, "var_shape": _NUM,
                "var_floor": _NUM, "uncertain": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    ],
}


def check(instance: Any, schema: dict, what: str) -> None:
    """Raise :class:`SchemaError` naming the first offending location."""
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(instance), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise SchemaError(f"{what}: {where}: {e.message}")


def read_json(source) -> Any:
    """Parse a path, ``-`` for stdin, or pass through an already-parsed object."""
    if isinstance(source, (dict, list)):
        return source
    try:
        if str(source) == "-":
            return json.load(sys.stdin)
        return json.loads(Path(source).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{source}: not valid JSON ({e.msg} at line {e.lineno})") from None
    except OSError as e:
        raise SchemaError(f"{source}: {e.strerror}") from None


def json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=json_default, allow_nan=True) + "\n"


def write_text(text: str, out=None) -> None:
    """Write to ``out`` (creating parents) or to stdout when ``out`` is None or ``-``."""
    if out is None or str(out) == "-":
        sys.stdout.write(text)
        return
    p = Path(out)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def write_json(obj, out=None) -> None:
    write_text(dumps(obj), out)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def model_to_dict(joint: GaussianJoint) -> dict:
    p = joint.partition
    return {"mean": joint.mean.tolist(), "cov": joint.cov.tolist(), "y_idx": list(p.y_idx), "z_idx": list(p.z_idx)}


def model_from_dict(d: dict) -> GaussianJoint:
    check(d, MODEL_SCHEMA, "model file")
    n = len(d["mean"])
    if len(d["cov"]) != n or any(len(r) != n for r in d["cov"]):
        raise SchemaError(f"model file: cov must be {n} x {n}")
    return GaussianJoint.from_blocks(d["y_idx"], d["z_idx"], d["mean"], d["cov"])


def load_model(source) -> GaussianJoint:
    return model_from_dict(read_json(source))


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


def region_from_dict(d: dict) -> tuple[np.ndarray, BoxRegion]:
    """``(z_true, region)``; the box is given explicitly or relative to ``z_true``."""
    check(d, REGION_SCHEMA, "region file")
    z = np.asarray(d["z_true"], dtype=float)
    if "lower" in d:
        region = BoxRegion(d["lower"], d["upper"])
    elif "half_width" in d:
        region = BoxRegion.around(z, d["half_width"])
    else:
        region = BoxRegion.relative(z, d["relative"])
    if region.dim != z.shape[0]:
        raise SchemaError(f"region file: box has {region.dim} coordinates but z_true has {z.shape[0]}")
    return z, region


def load_region(source) -> tuple[np.ndarray, BoxRegion]:
    return region_from_dict(read_json(source))


def region_to_dict(z_true, region: BoxRegion) -> dict:
    return {"z_true": np.asarray(z_true, float).tolist(), "lower": region.lower.tolist(),
            "upper": region.upper.tolist()}


# ---------------------------------------------------------------------------
# Specs and priors
# ---------------------------------------------------------------------------


def regression_spec_from_dict(d: dict) -> RegressionSpec:
    check(d, REGRESSION_SCHEMA, "regression spec")
    return RegressionSpec(d["beta0"], d["beta"], d["sigma2"], d["mu_z"], d["sigma_zz"])


def regression_spec_to_dict(s: RegressionSpec) -> dict:
    return {"beta0": s.beta0, "beta": s.beta.tolist(), "sigma2": s.sigma2, "mu_z": s.mu_z.tolist(),
            "sigma_zz": s.sigma_zz.tolist()}


def lgssm_spec_from_dict(d: dict) -> LGSSMSpec:
    check(d, LGSSM_SCHEMA, "LG-SSM spec")
    return LGSSMSpec(**d)


def _partition(d: dict, model: GaussianJoint | None, n: int, what: str) -> Partition:
    if "y_idx" in d and "z_idx" in d:
        return Partition(d["y_idx"], d["z_idx"])
    if model is not None and model.n == n:
        return model.partition
    raise SchemaError(f"{what}: y_idx and z_idx are required without a matching model")


def prior_from_dict(d: dict, model: GaussianJoint | None = None):
    """Build a prior; ``model`` supplies defaults a prior file may omit."""
    check(d, PRIOR_SCHEMA, "prior file")
    kind = d["type"]
    if kind == "niw":
        params = NIWParams(d["mu0"], d["kappa"], d["psi"], d["nu"])
        return NIWPrior(params, _partition(d, model, params.dim, "niw prior"))
    if kind == "point-mass":
        if "mean" in d:
            return PointMassPrior(GaussianJoint(np.asarray(d["mean"], float), np.asarray(d["cov"], float),
                                                _partition(d, model, len(d["mean"]), "point-mass prior")))
        if model is None:
            raise SchemaError("point-mass prior: give mean/cov or a model file")
        return PointMassPrior(model)
    if kind == "regression":
        spec = regression_spec_from_dict(d["spec"])
        return build_regression_prior(spec, d.get("kappa", 5.0), d.get("nu"), d.get("ig_shape", 4.0),
                                      d.get("ig_scale", 2.0), d.get("beta_cov_scale", 1.0))
    spec = lgssm_spec_from_dict(d.get("spec", {}))
    return build_lgssm_prior(spec, d.get("mean_var", 1.0), d.get("var_shape", 2.0), d.get("var_floor", 1e-8),
                             d.get("uncertain", True))


def load_prior(source, model: GaussianJoint | None = None):
    return prior_from_dict(read_json(source), model)


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------


def load_problem(source) -> AttackProblem:
    d = read_json(source)
    try:
        return AttackProblem.from_dict(d)
    except (KeyError, TypeError) as e:
        raise SchemaError(f"problem file: missing or malformed field {e}") from None
