import json

import numpy as np
import pytest

from conftest import random_joint
from mvgattack.errors import SchemaError
from mvgattack.greybox import NIWPrior, PointMassPrior
from mvgattack.io import (
    dumps,
    load_model,
    load_prior,
    load_problem,
    load_region,
    model_from_dict,
    model_to_dict,
    prior_from_dict,
    read_json,
    region_from_dict,
    region_to_dict,
    regression_spec_from_dict,
    regression_spec_to_dict,
)
from mvgattack.models import LGSSMPrior, RegressionPrior, RegressionSpec
from mvgattack.objective import BoxRegion
from mvgattack.solvers import white_box_components


@pytest.fixture
def joint(rng):
    return random_joint(rng, 4, 2)


def test_model_round_trip(joint, tmp_path):
    path = tmp_path / "m.json"
    path.write_text(dumps(model_to_dict(joint)))
    back = load_model(path)
    np.testing.assert_array_equal(back.mean, joint.mean)
    np.testing.assert_array_equal(back.cov, joint.cov)
    assert back.partition == joint.partition


@pytest.mark.parametrize(
    "mutate, match",
    [
        (lambda d: d.update(extra=1), "Additional properties"),
        (lambda d: d.pop("z_idx"), "z_idx"),
        (lambda d: d["cov"].pop(), "cov must be"),
        (lambda d: d.update(mean="x"), "mean"),
    ],
)
def test_model_rejections(joint, mutate, match):
    d = model_to_dict(joint)
    mutate(d)
    with pytest.raises(SchemaError, match=match):
        model_from_dict(d)


def test_read_json_errors(tmp_path):
    with pytest.raises(SchemaError, match="No such file"):
        read_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError, match="not valid JSON"):
        read_json(bad)


def test_region_variants():
    z = np.array([1.0, -2.0])
    _, explicit = region_from_dict({"z_true": z.tolist(), "lower": [0, -3], "upper": [2, -1]})
    _, absolute = region_from_dict({"z_true": z.tolist(), "half_width": 1.0})
    _, per_coord = region_from_dict({"z_true": z.tolist(), "half_width": [1.0, 1.0]})
    for r in (absolute, per_coord):
        np.testing.assert_allclose(r.lower, explicit.lower)
        np.testing.assert_allclose(r.upper, explicit.upper)
    _, rel = region_from_dict({"z_true": z.tolist(), "relative": 0.5})
    np.testing.assert_allclose(rel.lower, [0.5, -3.0])
    np.testing.assert_allclose(rel.upper, [1.5, -1.0])


def test_region_round_trip(tmp_path):
    z = np.array([0.0, 1.0, 2.0])
    region = BoxRegion.around(z, 0.25)
    path = tmp_path / "r.json"
    path.write_text(json.dumps(region_to_dict(z, region)))
    z2, r2 = load_region(path)
    np.testing.assert_array_equal(z2, z)
    np.testing.assert_array_equal(r2.lower, region.lower)


@pytest.mark.parametrize(
    "d",
    [
        {"z_true": [0.0]},
        {"z_true": [0.0], "half_width": 1.0, "relative": 0.1},
        {"z_true": [0.0], "lower": [-1.0]},
        {"z_true": [0.0, 1.0], "lower": [-1.0], "upper": [1.0]},
    ],
)
def test_region_rejections(d):
    with pytest.raises(SchemaError):
        region_from_dict(d)


def test_niw_prior_round_trip(joint):
    d = {"type": "niw", "mu0": joint.mean.tolist(), "kappa": 2.0, "psi": joint.cov.tolist(), "nu": 8.0}
    prior = prior_from_dict(d, joint)
    assert isinstance(prior, NIWPrior) and prior.partition == joint.partition
    again = prior_from_dict(prior.to_dict())
    assert again.to_dict() == prior.to_dict()


def test_niw_prior_needs_partition(joint):
    d = {"type": "niw", "mu0": joint.mean.tolist(), "kappa": 2.0, "psi": joint.cov.tolist(), "nu": 8.0}
    with pytest.raises(SchemaError, match="y_idx and z_idx"):
        prior_from_dict(d)


def test_point_mass_prior_from_model_or_inline(joint):
    from_model = prior_from_dict({"type": "point-mass"}, joint)
    assert isinstance(from_model, PointMassPrior) and from_model.joint is joint
    inline = prior_from_dict(from_model.to_dict())
    np.testing.assert_array_equal(inline.joint.cov, joint.cov)
    with pytest.raises(SchemaError, match="model file"):
        prior_from_dict({"type": "point-mass"})


def test_regression_and_lgssm_priors():
    spec = RegressionSpec(1.0, [0.5, -0.2], 0.3, [0.0, 1.0], [[1.0, 0.2], [0.2, 2.0]])
    d = regression_spec_to_dict(spec)
    back = regression_spec_from_dict(d)
    np.testing.assert_array_equal(back.sigma_zz, spec.sigma_zz)
    reg = prior_from_dict({"type": "regression", "spec": d, "kappa": 3.0})
    assert isinstance(reg, RegressionPrior) and reg.predictors.kappa == 3.0
    lg = prior_from_dict({"type": "lgssm", "spec": {"horizon": 1}, "uncertain": False})
    assert isinstance(lg, LGSSMPrior) and not lg.uncertain and lg.truth.horizon == 1


@pytest.mark.parametrize(
    "d",
    [
        {"type": "gamma"},
        {"type": "niw", "mu0": [0.0]},
        {"type": "regression"},
        {"type": "lgssm", "spec": {"horizon": -1}},
        {"type": "lgssm", "bogus": 1},
    ],
)
def test_prior_rejections(d):
    with pytest.raises(SchemaError):
        prior_from_dict(d)


def test_prior_from_file(joint, tmp_path):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"type": "point-mass"}))
    assert isinstance(load_prior(path, joint), PointMassPrior)


def test_problem_round_trip(joint, tmp_path):
    z = joint.mean[list(joint.partition.z_idx)]
    problem = white_box_components(joint, z, BoxRegion.around(z, 0.5)).problem(0.5)
    path = tmp_path / "problem.json"
    path.write_text(dumps(problem.to_dict()))
    back = load_problem(path)
    np.testing.assert_allclose(back.H, problem.H, rtol=0, atol=0)
    assert back.objective(z) == pytest.approx(problem.objective(z), rel=1e-15)
    with pytest.raises(SchemaError, match="problem file"):
        load_problem({"H": [[1.0]]})
