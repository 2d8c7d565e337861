import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spd
from mvgattack.errors import DataError, InvalidJointError
from mvgattack.gauss import GaussianJoint, Partition, condition, validate
from mvgattack.models import (
    DataMatrix,
    LGSSMSpec,
    RegressionPrior,
    RegressionSpec,
    build_lgssm_prior,
    build_regression_prior,
    fit_mle,
    lgssm_evidence,
    lgssm_simulate,
    lgssm_unroll,
    load_csv,
    regression_to_joint,
)
from mvgattack.stochastics import NIWParams, SeededStream, mvn_sample

DATA = __import__("pathlib").Path(__file__).resolve().parents[1] / "src" / "mvgattack" / "data"


def _rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def _random_spec(rng, k):
    return RegressionSpec(rng.normal(), rng.normal(size=k), float(rng.uniform(0.1, 3.0)), rng.normal(size=k),
                          random_spd(rng, k))


# --- CSV ------------------------------------------------------------------

def test_load_small_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n3.5,-4\n", encoding="utf-8")
    d = load_csv(p)
    assert d.columns == ("a", "b")
    np.testing.assert_array_equal(d.rows, [[1, 2], [3.5, -4]])


@pytest.mark.parametrize("body, needle", [
    ("a,b\n1,2\n3,\n", "row 2, column 'b'"),
    ("a,b\n1,x\n", "row 1, column 'b'"),
    ("a,b\n1,2,3\n", "row 1 has 3 cells"),
    ("a,a\n1,2\n", "duplicate"),
    ("a,b\n", "no data rows"),
    ("", "empty file"),
    ("a,b\n1,nan\n", "non-finite"),
])
def test_load_csv_diagnostics(tmp_path, body, needle):
    p = tmp_path / "d.csv"
    p.write_text(body, encoding="utf-8")
    with pytest.raises(DataError, match=needle):
        load_csv(p)


def test_bundled_tables_ingest():
    z = load_csv(DATA / "zhvi.csv")
    assert z.shape[1] == 15 and z.shape[0] > 16
    loan = load_csv(DATA / "loan.csv")
    assert loan.columns[-1] == "interest_rate" and loan.shape[1] == 8
    y = z.index(["Yuma", "Cochise", "Apache", "LaPaz"])
    j = fit_mle(z, Partition(y, tuple(i for i in range(15) if i not in y)))
    assert j.partition.nz == 11


def test_unknown_column():
    with pytest.raises(DataError):
        DataMatrix(np.zeros((2, 2)), ("a", "b")).index(["c"])


# --- MLE ------------------------------------------------------------------

def test_mle_uses_one_over_n():
    rows = np.array([[0.0, 1.0], [2.0, 0.0], [1.0, 4.0], [3.0, 3.0]])
    j = fit_mle(DataMatrix(rows, ("a", "b")), Partition((0,), (1,)))
    X = rows - rows.mean(axis=0)
    np.testing.assert_allclose(j.cov, X.T @ X / 4)


def test_mle_repeated_rows_degenerate():
    rows = np.tile([1.0, 2.0], (10, 1))
    with pytest.raises(InvalidJointError, match="degenerate"):
        fit_mle(DataMatrix(rows, ("a", "b")), Partition((0,), (1,)))


def test_mle_perfect_correlation_degenerate():
    x = np.arange(10.0)
    with pytest.raises(InvalidJointError):
        fit_mle(DataMatrix(np.column_stack([x, 2 * x + 1]), ("a", "b")), Partition((0,), (1,)))


def test_mle_too_few_rows():
    with pytest.raises(DataError):
        fit_mle(DataMatrix(np.eye(3)[:2], ("a", "b", "c")), Partition((0,), (1, 2)))


def test_mle_consistency():
    rng = np.random.default_rng(0)
    S = random_spd(rng, 3, cond=5)
    m = np.array([1.0, -2.0, 3.0])
    x = mvn_sample(m, S, SeededStream(1).rng(), size=100_000)
    j = fit_mle(DataMatrix(x, ("a", "b", "c")), Partition((0,), (1, 2)))
    assert np.all(np.abs(j.mean - m) < 0.02 * np.abs(m))
    assert _rel_fro(j.cov, S) < 0.02


# --- regression -----------------------------------------------------------

def test_regression_zero_beta_independent():
    spec = RegressionSpec(3.0, np.zeros(2), 0.5, np.array([1.0, 2.0]), np.eye(2))
    j = regression_to_joint(spec)
    assert j.mean[2] == 3.0 and j.cov[2, 2] == 0.5
    np.testing.assert_array_equal(j.cov[2, :2], 0.0)


def test_regression_scalar_substitution():
    j = regression_to_joint(RegressionSpec(0.0, [1.0], 1.0, [0.0], [[1.0]]))
    np.testing.assert_allclose(j.cov, [[1.0, 1.0], [1.0, 2.0]])
    assert j.partition.y_idx == (1,) and j.partition.z_idx == (0,)


@given(st.integers(0, 2**32 - 1))
def test_regression_round_trip(seed):
    rng = np.random.default_rng(seed)
    spec = _random_spec(rng, int(rng.integers(1, 7)))
    j = regression_to_joint(spec)
    z = rng.normal(size=spec.nz)
    c = condition(j, z)
    assert c.mean[0] == pytest.approx(spec.beta0 + spec.beta @ z, abs=1e-10 * (1 + abs(c.mean[0])))
    assert c.cov[0, 0] == pytest.approx(spec.sigma2, abs=1e-10 * (1 + spec.sigma2))


@pytest.mark.parametrize("kw", [dict(sigma2=0.0), dict(beta=np.zeros(3)), dict(sigma_zz=-np.eye(2))])
def test_regression_spec_validation(kw):
    args = dict(beta0=0.0, beta=np.zeros(2), sigma2=1.0, mu_z=np.zeros(2), sigma_zz=np.eye(2))
    args.update(kw)
    with pytest.raises(Exception):
        RegressionSpec(**args)


def test_regression_prior_samples_validate_and_reproduce():
    rng = np.random.default_rng(2)
    prior = build_regression_prior(_random_spec(rng, 3), kappa=5, nu=9, ig_shape=4, ig_scale=2)
    m1, c1 = prior.sample_batch(SeededStream(0).rng(), 100)
    m2, c2 = prior.sample_batch(SeededStream(0).rng(), 100)
    assert np.array_equal(m1, m2) and np.array_equal(c1, c2)
    assert all(validate(m, c, prior.partition).ok for m, c in zip(m1, c1))


def test_regression_prior_collapses_without_spread():
    rng = np.random.default_rng(3)
    spec = _random_spec(rng, 2)
    # huge kappa, nu and IG shape concentrate every draw on the centering spec
    nu, shape = 1e9, 1e9
    prior = RegressionPrior(NIWParams(spec.mu_z, 1e12, spec.sigma_zz * (nu - 3), nu), shape,
                            spec.sigma2 * (shape - 1), np.concatenate([[spec.beta0], spec.beta]), 0.0)
    means, covs = prior.sample_batch(SeededStream(1).rng(), 20)
    j = regression_to_joint(spec)
    assert np.abs(means - j.mean).max() < 1e-3
    assert np.abs(covs - j.cov).max() < 1e-3 * np.abs(j.cov).max()


def test_regression_prior_partition():
    prior = build_regression_prior(_random_spec(np.random.default_rng(4), 4))
    assert prior.partition.y_idx == (4,) and prior.predictors.nu == 6.0


# --- LG-SSM ---------------------------------------------------------------

def test_lgssm_first_sensor_variance():
    j = lgssm_unroll(LGSSMSpec(horizon=0))
    spec = LGSSMSpec(horizon=0)
    i = spec.node("Z1", 0)
    assert j.cov[i, i] == pytest.approx(0.05)


def test_lgssm_unit_transition_covariance():
    spec = LGSSMSpec(horizon=2)
    j = lgssm_unroll(spec)
    a, b = spec.node("Y1", 1), spec.node("Y1", 0)
    assert j.cov[a, b] == pytest.approx(j.cov[b, b])


def test_lgssm_matches_simulation():
    spec = LGSSMSpec(horizon=3)
    j = lgssm_unroll(spec)
    x = lgssm_simulate(spec, SeededStream(0).rng(), 100_000)
    assert _rel_fro(np.cov(x.T, bias=True), j.cov) < 0.03
    assert np.abs(x.mean(axis=0) - j.mean).max() < 0.05


@pytest.mark.parametrize("h", [0, 1, 5, 10])
def test_lgssm_joint_pd(h):
    spec = LGSSMSpec(horizon=h)
    j = lgssm_unroll(spec)
    assert j.n == 6 * (h + 1) and j.partition.nz == 2 * (h + 1)
    assert np.linalg.eigvalsh(j.cov)[0] > 0


def test_lgssm_spec_validation():
    with pytest.raises(ValueError):
        LGSSMSpec(obs_vars=(0.04, 0.0))
    with pytest.raises(ValueError):
        LGSSMSpec(horizon=-1)
    with pytest.raises(ValueError):
        LGSSMSpec(init_means=(0.0, 0.0))


def test_lgssm_prior_samples_validate():
    prior = build_lgssm_prior(LGSSMSpec(horizon=4))
    means, covs = prior.sample_batch(SeededStream(2).rng(), 200)
    assert all(validate(m, c, prior.partition).ok for m, c in zip(means, covs))


def test_lgssm_prior_without_uncertainty_is_white_box():
    spec = LGSSMSpec(horizon=3)
    prior = build_lgssm_prior(spec, uncertain=False)
    means, covs = prior.sample_batch(SeededStream(3).rng(), 4)
    j = lgssm_unroll(spec)
    np.testing.assert_allclose(means, np.broadcast_to(j.mean, means.shape), atol=1e-12)
    np.testing.assert_allclose(covs, np.broadcast_to(j.cov, covs.shape), atol=1e-12)


def test_lgssm_prior_variances_correct_in_expectation():
    # IG(2, s) draws have mean s; compare the sampled sensor-noise variance to 0.04 robustly
    spec = LGSSMSpec(horizon=0)
    prior = build_lgssm_prior(spec, mean_var=0.0)
    _, covs = prior.sample_batch(SeededStream(4).rng(), 200_000)
    i, y = spec.node("Z1", 0), spec.node("Y1", 0)
    obs = covs[:, i, i] - covs[:, y, y]
    assert np.median(obs.reshape(100, -1).mean(axis=1)) == pytest.approx(0.04, rel=0.05)


def test_lgssm_evidence_interleaves():
    z = lgssm_evidence()
    assert z.shape == (22,)
    assert (z[0], z[1], z[2], z[-2], z[-1]) == (0.1, 0.2, 1.9, 19.9, 10.2)
    with pytest.raises(ValueError):
        lgssm_evidence([[1.0, 2.0]])
