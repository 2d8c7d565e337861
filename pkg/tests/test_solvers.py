import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import bivariate, random_joint, random_spd
from mvgattack.errors import CertificationError, DegenerateNormalization, VertexLimitError
from mvgattack.objective import BoxRegion, ComponentObjectives, build_detection, build_disruption, normalize_weights
from mvgattack.solvers import (
    SolveConfig,
    maximize_by_vertices,
    maximize_concave,
    maximize_multistart,
    project_box,
    single_objective_optimum,
    solve_quadratic,
    solve_white_box,
    white_box_components,
)


def _grid_max_2d(H, g, region, m=401):
    xs = np.linspace(region.lower[0], region.upper[0], m)
    ys = np.linspace(region.lower[1], region.upper[1], m)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z = np.stack([X.ravel(), Y.ravel()], axis=1)
    vals = np.einsum("ij,jk,ik->i", Z, H, Z) + Z @ g
    i = int(np.argmax(vals))
    return vals[i], Z[i]


def _grid_max_nd(H, g, region, m):
    axes = [np.linspace(lo, hi, m) for lo, hi in zip(region.lower, region.upper)]
    Z = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    return float(np.max(np.einsum("ij,jk,ik->i", Z, H, Z) + Z @ g))


# --- projection -----------------------------------------------------------

def test_projection_basics():
    r = BoxRegion([-1.0, 0.0], [1.0, 2.0])
    np.testing.assert_array_equal(project_box([0.5, 1.0], r), [0.5, 1.0])
    np.testing.assert_array_equal(project_box(r.upper + 1, r), r.upper)


@given(st.integers(0, 2**32 - 1))
def test_projection_is_nearest_point_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    r = BoxRegion([-1.0, -0.5], [0.5, 1.0])
    z = rng.normal(0, 2, 2)
    p = project_box(z, r)
    np.testing.assert_array_equal(project_box(p, r), p)
    xs = np.linspace(-1.0, 0.5, 151)
    ys = np.linspace(-0.5, 1.0, 151)
    G = np.stack(np.meshgrid(xs, ys, indexing="ij"), -1).reshape(-1, 2)
    assert np.linalg.norm(z - p) <= np.min(np.linalg.norm(G - z, axis=1)) + 1e-12


# --- concave --------------------------------------------------------------

def test_concave_1d_boundary():
    rep = maximize_concave([[-1.0]], [2.0], BoxRegion([-1.0], [1.0]))
    assert rep.z_star[0] == pytest.approx(1.0) and rep.objective == pytest.approx(1.0) and rep.certified


def test_concave_1d_interior():
    rep = maximize_concave([[-1.0]], [0.5], BoxRegion([-1.0], [1.0]))
    assert rep.z_star[0] == pytest.approx(0.25) and rep.objective == pytest.approx(0.0625)


@given(st.integers(0, 2**32 - 1))
def test_concave_2d_matches_grid(seed):
    rng = np.random.default_rng(seed)
    # eigenvalues <= 5 keep the grid's own rounding error under 1e-4
    H = -random_spd(rng, 2, cond=20) / 4.0
    g = rng.normal(0, 3, 2)
    r = BoxRegion([-1.0, -1.0], [1.0, 1.0])
    rep = maximize_concave(H, g, r)
    best, _ = _grid_max_2d(H, g, r)
    assert rep.certified
    assert rep.objective >= best - 1e-12
    assert rep.objective - best <= 1e-4
    # fixed-point certificate
    grad = 2 * H @ rep.z_star + g
    assert np.linalg.norm(rep.z_star - r.project(rep.z_star + grad)) <= SolveConfig().grad_tol * 10


def test_concave_fixed_step_rule():
    rng = np.random.default_rng(1)
    H = -random_spd(rng, 3)
    g = rng.normal(size=3)
    r = BoxRegion.around(np.zeros(3), 1.0)
    a = maximize_concave(H, g, r, SolveConfig(step_rule="fixed"))
    b = maximize_concave(H, g, r)
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_concave_iteration_cap_returns_uncertified():
    rng = np.random.default_rng(2)
    H = -random_spd(rng, 6, cond=1e4)
    g = rng.normal(size=6) * 100
    rep = maximize_concave(H, g, BoxRegion.around(np.zeros(6), 10.0), SolveConfig(max_iters=1, grad_tol=1e-14))
    assert not rep.certified and rep.iterations == 1


# --- vertices -------------------------------------------------------------

def test_vertices_1d():
    rep = maximize_by_vertices([[1.0]], [0.0], BoxRegion([-1.0], [2.0]))
    assert rep.z_star[0] == 2.0 and rep.objective == 4.0 and rep.certified


def test_vertices_tie_is_lexicographically_smallest():
    rep = maximize_by_vertices(np.eye(2), np.zeros(2), BoxRegion([-1.0, -1.0], [1.0, 1.0]))
    np.testing.assert_array_equal(rep.z_star, [-1.0, -1.0])
    assert rep.objective == 2.0


def test_vertex_limit():
    with pytest.raises(VertexLimitError):
        maximize_by_vertices(np.eye(5), np.zeros(5), BoxRegion.around(np.zeros(5), 1.0), SolveConfig(vertex_enum_limit=4))


def test_vertices_agree_with_multistart_on_convex():
    rng = np.random.default_rng(3)
    for _ in range(50):
        H = random_spd(rng, 6)
        g = rng.normal(size=6)
        r = BoxRegion(-rng.random(6), rng.random(6))
        v = maximize_by_vertices(H, g, r)
        m = maximize_multistart(H, g, r)
        assert v.objective >= m.objective - 1e-9
        assert abs(v.objective - m.objective) <= 1e-6
        assert np.all((v.z_star == r.lower) | (v.z_star == r.upper))


# --- multistart -----------------------------------------------------------

def test_multistart_matches_concave():
    rng = np.random.default_rng(4)
    H = -random_spd(rng, 4)
    g = rng.normal(size=4)
    r = BoxRegion.around(np.zeros(4), 0.7)
    a = maximize_multistart(H, g, r)
    b = maximize_concave(H, g, r)
    assert a.objective == pytest.approx(b.objective, abs=1e-6)
    assert a.certified


def test_multistart_indefinite_saddle():
    H = np.diag([1.0, -1.0])
    r = BoxRegion([-1.0, -1.0], [1.0, 1.0])
    rep = maximize_multistart(H, np.zeros(2), r)
    best, _ = _grid_max_2d(H, np.zeros(2), r)
    assert rep.objective == pytest.approx(best, abs=1e-6)
    assert abs(rep.z_star[0]) == pytest.approx(1.0) and rep.z_star[1] == pytest.approx(0.0, abs=1e-6)
    assert not rep.certified


def test_more_starts_never_worse():
    rng = np.random.default_rng(5)
    M = rng.normal(size=(5, 5))
    H = 0.5 * (M + M.T)
    g = rng.normal(size=5)
    r = BoxRegion.around(np.zeros(5), 1.0)
    # Sobol points for 2^k starts are a prefix of those for 2^(k+1)
    f = [maximize_multistart(H, g, r, SolveConfig(starts=s)).objective for s in (4, 8, 16, 32)]
    assert all(b >= a - 1e-12 for a, b in zip(f, f[1:]))


@given(st.integers(0, 2**32 - 1))
def test_multistart_3d_indefinite_vs_grid(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 3))
    H = 0.5 * (M + M.T)
    g = rng.normal(size=3)
    r = BoxRegion.around(np.zeros(3), 1.0)
    rep = maximize_multistart(H, g, r)
    assert rep.objective >= _grid_max_nd(H, g, r, 41) - 1e-9
    assert r.contains(rep.z_star)


# --- single objectives ----------------------------------------------------

def test_phi2_star_at_mode():
    rng = np.random.default_rng(6)
    j = random_joint(rng, 5, 3)
    det = build_detection(j)
    r = BoxRegion.around(j.mu_z, 1.0)
    val, cert = single_objective_optimum("phi2", det, r)
    assert cert and val == pytest.approx(j.mu_z @ np.linalg.solve(j.sigma_zz, j.mu_z), rel=1e-9)


def test_phi1_star_linear_case():
    from mvgattack.objective import DisruptionCoefficients

    v = np.array([1.0, -2.0, 0.5])
    r = BoxRegion([-1.0, -3.0, 0.0], [2.0, 1.0, 4.0])
    val, cert = single_objective_optimum("phi1", DisruptionCoefficients(np.zeros((3, 3)), v, 0.0), r)
    assert cert and val == pytest.approx(np.sum(np.maximum(v * r.lower, v * r.upper)))


def test_phi1_star_bivariate_vs_grid():
    j = bivariate(0.5)
    zt = np.array([0.4])
    dis = build_disruption(j, zt)
    r = BoxRegion.around(zt, 0.15)
    val, _ = single_objective_optimum("phi1", dis, r)
    zs = np.linspace(r.lower[0], r.upper[0], 401)
    grid = np.max(dis.Q[0, 0] * zs ** 2 + dis.v[0] * zs)
    assert val == pytest.approx(grid, abs=1e-4)


def test_phi_star_degenerate():
    from mvgattack.objective import DisruptionCoefficients

    with pytest.raises(DegenerateNormalization):
        single_objective_optimum("phi1", DisruptionCoefficients(np.zeros((1, 1)), np.zeros(1), 0.0),
                                 BoxRegion([-1.0], [1.0]))


def test_phi1_star_above_vertex_limit_is_uncertified():
    rng = np.random.default_rng(7)
    j = random_joint(rng, 8, 5)
    dis = build_disruption(j, j.mu_z)
    _, cert = single_objective_optimum("phi1", dis, BoxRegion.around(j.mu_z, 0.5), SolveConfig(vertex_enum_limit=3))
    assert not cert


# --- white box ------------------------------------------------------------

def test_degenerate_box_returns_truth():
    rng = np.random.default_rng(8)
    j = random_joint(rng, 4, 2)
    zt = j.mu_z + 0.3
    dis, det = build_disruption(j, zt), build_detection(j)
    r = BoxRegion(zt, zt)
    p = ComponentObjectives(dis, det, r, zt, 1.0, 1.0).problem(0.5)
    rep = solve_white_box(p, truth=j)
    np.testing.assert_array_equal(rep.z_star, zt)
    assert rep.extras["kl_to_truth"] == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_white_box_feasible_and_beats_truth(seed, u1):
    rng = np.random.default_rng(seed)
    j = random_joint(rng, 5, 3)
    zt = j.mu_z + rng.normal(0, 0.3, 3)
    comp = white_box_components(j, zt, BoxRegion.around(zt, 0.5))
    p = comp.problem(u1)
    rep = solve_white_box(p, truth=j)
    assert p.region.contains(rep.z_star)
    assert rep.objective >= p.objective(zt) - 1e-10
    assert rep.objective == pytest.approx(p.objective(rep.z_star), abs=1e-10)
    assert rep.extras["kl_to_truth"] >= 0 and rep.extras["log_ratio"] <= 0


def test_white_box_2d_vs_grid():
    rng = np.random.default_rng(9)
    j = random_joint(rng, 4, 2)
    zt = j.mu_z.copy()
    comp = white_box_components(j, zt, BoxRegion.around(zt, 0.4))
    for u1 in (0.1, 0.5, 0.9):
        p = comp.problem(u1)
        rep = solve_white_box(p)
        best, _ = _grid_max_2d(p.H, p.g, p.region)
        assert rep.objective >= best - 1e-9
        if rep.certified:
            assert rep.objective - best <= 1e-4


def test_certify_flag_raises_on_indefinite():
    H = np.diag([1.0, -1.0])
    from mvgattack.objective import AttackProblem

    p = AttackProblem(H, np.zeros(2), BoxRegion.around(np.zeros(2), 1.0), np.zeros(2),
                      normalize_weights(0.5, 1.0, 1.0))
    with pytest.raises(CertificationError):
        solve_white_box(p, require_certified=True)


def test_solver_deterministic():
    rng = np.random.default_rng(10)
    M = rng.normal(size=(6, 6))
    from mvgattack.objective import AttackProblem

    p = AttackProblem(0.5 * (M + M.T), rng.normal(size=6), BoxRegion.around(np.zeros(6), 1.0), np.zeros(6),
                      normalize_weights(0.5, 1.0, 1.0))
    a, b = solve_quadratic(p, SolveConfig(seed=3)), solve_quadratic(p, SolveConfig(seed=3))
    np.testing.assert_array_equal(a.z_star, b.z_star)
    assert a.iterations == b.iterations


@pytest.mark.parametrize("kw", [dict(max_iters=0), dict(grad_tol=0.0), dict(starts=0), dict(step_rule="x")])
def test_solve_config_validation(kw):
    with pytest.raises(ValueError):
        SolveConfig(**kw)


def test_report_json_fields():
    rep = maximize_concave([[-1.0]], [0.5], BoxRegion([-1.0], [1.0]))
    d = rep.to_dict()
    assert d["method"] == "concave-pga" and d["z_star"] == [pytest.approx(0.25)]
