"""Decisionmaker joints and attacker priors for the three applications.

* an MVG fitted by maximum likelihood to a data table;
* a linear regression of one target on Gaussian predictors, lifted to the
  joint over ``(Z, Y)``;
* a constant-velocity state-space model in two dimensions, unrolled over a
  finite horizon into one joint over all states and sensor readings.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, InvalidJointError
from .gauss import GaussianJoint, Partition, cholesky
from .stochastics import NIWParams, inv_gamma_sample, niw_sample


@dataclass(frozen=True, eq=False)
class DataMatrix:
    rows: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.shape[1] != len(self.columns):
            raise DataError(f"{rows.shape[1]} data columns but {len(self.columns)} names")
        if not np.all(np.isfinite(rows)):
            r, c = np.argwhere(~np.isfinite(rows))[0]
            raise DataError(f"non-finite value at row {r + 1}, column {self.columns[c]!r}")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "columns", tuple(self.columns))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def index(self, names: Sequence[str]) -> tuple[int, ...]:
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise DataError(f"unknown columns {missing}")
        return tuple(self.columns.index(n) for n in names)


def load_csv(path) -> DataMatrix:
    """Strict CSV reader: header row, every cell numeric.

    Rows are numbered from 1 for the first data line.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or any(h == "" for h in header):
            raise DataError(f"{path}: header has an empty column name")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        rows = []
        for r, line in enumerate(reader, start=1):
            if not line or all(c.strip() == "" for c in line):
                continue
            if len(line) != len(header):
                raise DataError(f"{path}: row {r} has {len(line)} cells, expected {len(header)}")
            vals = []
            for name, cell in zip(header, line):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"{path}: missing value at row {r}, column {name!r}")
                try:
                    x = float(cell)
                except ValueError:
                    raise DataError(f"{path}: non-numeric value {cell!r} at row {r}, column {name!r}") from None
                if not np.isfinite(x):
                    raise DataError(f"{path}: non-finite value at row {r}, column {name!r}")
                vals.append(x)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return DataMatrix(np.array(rows), tuple(header))


def fit_mle(data: DataMatrix, partition: Partition) -> GaussianJoint:
    """Sample mean and the 1/N sample covariance."""
    N, n = data.shape
    if N < n + 1:
        raise DataError(f"need at least {n + 1} rows to fit {n} variables, got {N}")
    mean = data.rows.mean(axis=0)
    X = data.rows - mean
    cov = X.T @ X / N
    try:
        return GaussianJoint(mean, cov, partition)
    except InvalidJointError as exc:
        raise InvalidJointError(f"fitted covariance is degenerate: {exc}") from None


# ---------------------------------------------------------------------------
# regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RegressionSpec:
    beta0: float
    beta: np.ndarray
    sigma2: float
    mu_z: np.ndarray
    sigma_zz: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        mu_z = np.atleast_1d(np.asarray(self.mu_z, dtype=float))
        szz = np.atleast_2d(np.asarray(self.sigma_zz, dtype=float))
        k = beta.shape[0]
        if mu_z.shape != (k,) or szz.shape != (k, k):
            raise ValueError("beta, mu_z and sigma_zz disagree in dimension")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        cholesky(0.5 * (szz + szz.T))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu_z", mu_z)
        object.__setattr__(self, "sigma_zz", 0.5 * (szz + szz.T))
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def nz(self) -> int:
        return self.beta.shape[0]


def regression_partition(nz: int) -> Partition:
    """Predictors first, the target last."""
    return Partition((nz,), tuple(range(nz)))


def _regression_moments(beta0, beta, sigma2, mu_z, szz):
    """Batched joint moments over ``(Z, Y)``; all inputs carry a leading sample axis."""
    k = beta.shape[-1]
    s_zy = np.einsum("jab,jb->ja", szz, beta)
    s_yy = sigma2 + np.einsum("ja,ja->j", beta, s_zy)
    mean = np.concatenate([mu_z, (beta0 + np.einsum("ja,ja->j", beta, mu_z))[:, None]], axis=1)
    cov = np.zeros(beta.shape[:1] + (k + 1, k + 1))
    cov[:, :k, :k] = szz
    cov[:, :k, k] = s_zy
    cov[:, k, :k] = s_zy
    cov[:, k, k] = s_yy
    return mean, cov


def regression_to_joint(spec: RegressionSpec) -> GaussianJoint:
    mean, cov = _regression_moments(
        np.array([spec.beta0]), spec.beta[None], np.array([spec.sigma2]), spec.mu_z[None], spec.sigma_zz[None],
    )
    return GaussianJoint(mean[0], cov[0], regression_partition(spec.nz))


@dataclass(frozen=True, eq=False)
class RegressionPrior:
    """NIW belief on the predictors, IG on the noise variance and a normal on
    the coefficients whose covariance is ``beta_cov_scale * sigma2 * I``."""

    predictors: NIWParams
    ig_shape: float
    ig_scale: float
    beta_center: np.ndarray
    beta_cov_scale: float = 1.0

    def __post_init__(self):
        bc = np.atleast_1d(np.asarray(self.beta_center, dtype=float))
        if bc.shape != (self.predictors.dim + 1,):
            raise ValueError("beta_center must hold (beta0, beta) for every predictor")
        if not (self.ig_shape > 0 and self.ig_scale > 0):
            raise ValueError("inverse-gamma shape and scale must be positive")
        if not self.beta_cov_scale >= 0:
            raise ValueError("beta_cov_scale must be nonnegative")
        object.__setattr__(self, "beta_center", bc)

    @property
    def partition(self) -> Partition:
        return regression_partition(self.predictors.dim)

    def sample_batch(self, rng, size):
        mu_z, szz = niw_sample(self.predictors, rng, size=size)
        sigma2 = inv_gamma_sample(self.ig_shape, self.ig_scale, rng, size=size)
        eps = rng.standard_normal((size, self.beta_center.shape[0]))
        coef = self.beta_center + eps * np.sqrt(self.beta_cov_scale * sigma2)[:, None]
        return _regression_moments(coef[:, 0], coef[:, 1:], sigma2, mu_z, szz)

    def to_dict(self) -> dict:
        p = self.predictors
        return {"type": "regression", "mu0": p.mu0.tolist(), "kappa": p.kappa, "psi": p.psi.tolist(), "nu": p.nu,
                "ig_shape": self.ig_shape, "ig_scale": self.ig_scale,
                "beta_center": self.beta_center.tolist(), "beta_cov_scale": self.beta_cov_scale}


def build_regression_prior(spec: RegressionSpec, kappa: float = 5.0, nu: float | None = None,
                           ig_shape: float = 4.0, ig_scale: float = 2.0, beta_cov_scale: float = 1.0) -> RegressionPrior:
    """Beliefs centered on ``spec``: NIW with ``mu0 = mu_z`` and ``psi = sigma_zz``."""
    nu = spec.nz + 2.0 if nu is None else nu
    niw = NIWParams(spec.mu_z, kappa, spec.sigma_zz, nu)
    center = np.concatenate([[spec.beta0], spec.beta])
    return RegressionPrior(niw, ig_shape, ig_scale, center, beta_cov_scale)


# ---------------------------------------------------------------------------
# state-space model
# ---------------------------------------------------------------------------

SLICE = ("Y1", "Y2", "Ydot1", "Ydot2", "Z1", "Z2")
N_SLICE = len(SLICE)


@dataclass(frozen=True)
class LGSSMSpec:
    """Constant-velocity model; defaults are the tracking example's values."""

    horizon: int = 10
    dt: float = 1.0
    init_means: tuple[float, ...] = (0.0, 0.0, 2.0, 1.0)
    init_vars: tuple[float, ...] = (0.01, 0.01, 0.25, 0.0625)
    trans_vars: tuple[float, ...] = (0.01, 0.01, 0.025, 0.025)
    obs_vars: tuple[float, ...] = (0.04, 0.04)

    def __post_init__(self):
        for name, n in (("init_means", 4), ("init_vars", 4), ("trans_vars", 4), ("obs_vars", 2)):
            val = tuple(float(x) for x in getattr(self, name))
            if len(val) != n:
                raise ValueError(f"{name} needs {n} values")
            object.__setattr__(self, name, val)
        if int(self.horizon) != self.horizon or self.horizon < 0:
            raise ValueError("horizon must be a nonnegative integer")
        object.__setattr__(self, "horizon", int(self.horizon))
        if min(self.init_vars + self.trans_vars + self.obs_vars) <= 0:
            raise ValueError("all variances must be positive")
        if not np.isfinite(self.dt):
            raise ValueError("dt must be finite")

    @property
    def n(self) -> int:
        return N_SLICE * (self.horizon + 1)

    def node(self, name: str, t: int) -> int:
        return N_SLICE * t + SLICE.index(name)

    def node_names(self) -> list[str]:
        return [f"{s}_{t}" for t in range(self.horizon + 1) for s in SLICE]

    def partition(self) -> Partition:
        z = [self.node(s, t) for t in range(self.horizon + 1) for s in ("Z1", "Z2")]
        y = [i for i in range(self.n) if i not in set(z)]
        return Partition(tuple(y), tuple(z))

    def noise_variances(self) -> np.ndarray:
        d = np.empty(self.n)
        for t in range(self.horizon + 1):
            base = N_SLICE * t
            d[base:base + 4] = self.init_vars if t == 0 else self.trans_vars
            d[base + 4:base + 6] = self.obs_vars
        return d

    def intercepts(self) -> np.ndarray:
        b = np.zeros(self.n)
        b[:4] = self.init_means
        return b

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "dt": self.dt, "init_means": list(self.init_means),
                "init_vars": list(self.init_vars), "trans_vars": list(self.trans_vars),
                "obs_vars": list(self.obs_vars)}


def lgssm_coefficients(spec: LGSSMSpec) -> np.ndarray:
    """Strictly lower-triangular ``B`` with ``x = B x + b + noise``."""
    B = np.zeros((spec.n, spec.n))
    for t in range(spec.horizon + 1):
        for k in (1, 2):
            B[spec.node(f"Z{k}", t), spec.node(f"Y{k}", t)] = 1.0
            if t > 0:
                B[spec.node(f"Y{k}", t), spec.node(f"Y{k}", t - 1)] = 1.0
                B[spec.node(f"Y{k}", t), spec.node(f"Ydot{k}", t - 1)] = spec.dt
                B[spec.node(f"Ydot{k}", t), spec.node(f"Ydot{k}", t - 1)] = 1.0
    return B


def _unroll_batch(spec: LGSSMSpec, intercepts: np.ndarray, variances: np.ndarray):
    B = lgssm_coefficients(spec)
    M = np.linalg.inv(np.eye(spec.n) - B)
    means = intercepts @ M.T
    covs = np.einsum("ia,ja,ka->kij", M, M, variances, optimize=True)
    return means, 0.5 * (covs + np.swapaxes(covs, -1, -2))


def lgssm_unroll(spec: LGSSMSpec) -> GaussianJoint:
    """Joint over every node, ordered by time slice then ``SLICE``.

    ``Z`` is the set of sensor readings, ``Y`` every position and velocity.
    """
    means, covs = _unroll_batch(spec, spec.intercepts()[None], spec.noise_variances()[None])
    return GaussianJoint(means[0], covs[0], spec.partition())


def lgssm_simulate(spec: LGSSMSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Trajectories drawn node by node from the recursion; shape ``(size, n)``."""
    x = np.zeros((size, spec.n))
    sd = np.sqrt(spec.noise_variances())
    for t in range(spec.horizon + 1):
        for s in SLICE:
            i = spec.node(s, t)
            e = rng.standard_normal(size) * sd[i]
            k = s[-1]
            if s.startswith("Z"):
                x[:, i] = x[:, spec.node(f"Y{k}", t)] + e
            elif t == 0:
                x[:, i] = spec.init_means[SLICE.index(s)] + e
            elif s.startswith("Ydot"):
                x[:, i] = x[:, spec.node(s, t - 1)] + e
            else:
                x[:, i] = x[:, spec.node(s, t - 1)] + spec.dt * x[:, spec.node(f"Ydot{k}", t - 1)] + e
    return x


@dataclass(frozen=True, eq=False)
class LGSSMPrior:
    """Normal beliefs on the initial means, IG(shape, true variance) on every
    variance, with sampled variances floored at ``var_floor``."""

    truth: LGSSMSpec
    mean_var: float = 1.0
    var_shape: float = 2.0
    var_floor: float = 1e-8
    uncertain: bool = True

    def __post_init__(self):
        if not (self.mean_var >= 0 and self.var_shape > 0 and self.var_floor > 0):
            raise ValueError("invalid LG-SSM prior hyperparameters")

    @property
    def partition(self) -> Partition:
        return self.truth.partition()

    def sample_batch(self, rng, size):
        spec = self.truth
        b = np.broadcast_to(spec.intercepts(), (size, spec.n)).copy()
        d_true = spec.noise_variances()
        if not self.uncertain:
            return _unroll_batch(spec, b, np.broadcast_to(d_true, (size, spec.n)))
        b[:, :4] += np.sqrt(self.mean_var) * rng.standard_normal((size, 4))
        # one draw per distinct variance parameter, shared over time
        params = np.array(spec.init_vars + spec.trans_vars + spec.obs_vars)
        draws = np.maximum(params / rng.gamma(self.var_shape, 1.0, size=(size, params.size)), self.var_floor)
        d = np.empty((size, spec.n))
        for t in range(spec.horizon + 1):
            base = N_SLICE * t
            d[:, base:base + 4] = draws[:, 0:4] if t == 0 else draws[:, 4:8]
            d[:, base + 4:base + 6] = draws[:, 8:10]
        return _unroll_batch(spec, b, d)

    def to_dict(self) -> dict:
        return {"type": "lgssm", "truth": self.truth.to_dict(), "mean_var": self.mean_var,
                "var_shape": self.var_shape, "var_floor": self.var_floor, "uncertain": self.uncertain}


def build_lgssm_prior(truth: LGSSMSpec, mean_var: float = 1.0, var_shape: float = 2.0,
                      var_floor: float = 1e-8, uncertain: bool = True) -> LGSSMPrior:
    return LGSSMPrior(truth, mean_var, var_shape, var_floor, uncertain)


TABLE_OBS = (
    (0.1, 1.9, 3.8, 6.1, 7.9, 10.1, 12.2, 13.9, 15.9, 18.1, 19.9),
    (0.2, 1.1, 2.3, 3.1, 4.2, 5.1, 5.9, 7.1, 8.2, 9.4, 10.2),
)


def lgssm_evidence(obs=TABLE_OBS) -> np.ndarray:
    """Interleave per-sensor series into the joint's Z order ``(Z1_0, Z2_0, Z1_1, ...)``."""
    a = np.asarray(obs, dtype=float)
    if a.ndim != 2 or a.shape[0] != 2:
        raise ValueError("observations must be two equal-length series")
    return a.T.reshape(-1)
