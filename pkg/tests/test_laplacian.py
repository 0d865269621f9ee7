import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse
from scipy.io import mmread
from scipy.optimize import minimize

from hemiembed import laplacian as lp
from hemiembed.pixelgraph import build_neighborhoods
from hemiembed.render import sample_hemisphere


def random_feasible(seed, m=4, n=12):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    w0 = np.maximum(rng.normal(size=n), 0)
    return A, A @ w0


def slsqp_min_norm(A, b):
    n = A.shape[1]
    res = minimize(lambda w: w @ w, np.full(n, 0.1), jac=lambda w: 2 * w, method="SLSQP",
                   bounds=[(0, None)] * n,
                   constraints=[{"type": "eq", "fun": lambda w: A @ w - b, "jac": lambda w: A}],
                   options={"ftol": 1e-14, "maxiter": 1000})
    return res.x


@pytest.mark.parametrize("seed", range(8))
def test_min_norm_nonneg_matches_slsqp(seed):
    A, b = random_feasible(seed)
    sol = lp.min_norm_nonneg(sparse.csr_matrix(A), b)
    assert sol.converged
    ref = slsqp_min_norm(A, b)
    np.testing.assert_allclose(sol.w, ref, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_min_norm_nonneg_kkt(seed):
    A, b = random_feasible(seed, m=5, n=20)
    sol = lp.min_norm_nonneg(A, b)
    assert sol.converged
    assert np.all(sol.w >= 0)
    assert np.abs(A @ sol.w - b).max() <= 1e-10 * max(1, np.abs(b).max())
    # Stationarity: w is the positive part of A^T y for a multiplier y.
    S = sol.w > 1e-9
    y, *_ = np.linalg.lstsq(A[:, S].T, sol.w[S], rcond=None)
    np.testing.assert_allclose(A[:, S].T @ y, sol.w[S], atol=1e-6)
    assert np.all(A[:, ~S].T @ y <= 1e-6)


def test_min_norm_nonneg_infeasible():
    A = np.array([[1.0, 1.0]])
    sol = lp.min_norm_nonneg(A, np.array([-1.0]))
    assert not sol.converged


def test_row_feasibility_by_angular_gap():
    ring = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
    assert lp._row_feasible(ring)
    # Shifting the ring up leaves the center outside the hull of its top three points.
    assert not lp._row_feasible(ring[:3] + [0.0, 0.5])
    assert not lp._row_feasible(np.array([[1, 0], [1, 1], [2, 0.5]], dtype=float))
    assert not lp._row_feasible(ring[:2])


@pytest.fixture(scope="module")
def hemi_instance():
    P = sample_hemisphere(600, 5)
    g = build_neighborhoods(P, 20)
    charts = lp.geodesic_charts(g, P)
    bnd = np.argsort(P[:, 2])[:30]
    return P, g, charts, bnd


def test_geodesic_charts_preserve_angles(hemi_instance):
    P, g, charts, _ = hemi_instance
    for p in (0, 100, 400):
        off = charts.offsets(g, p)
        ang = np.arccos(np.clip(P[g.neighbors(p)] @ P[p], -1, 1))
        np.testing.assert_allclose(np.linalg.norm(off, axis=1), ang, atol=1e-12)


def test_pca_charts_are_isometric_on_planar_data(rng):
    xy = rng.uniform(size=(200, 2))
    # Embed the plane in 3-d with an arbitrary rotation.
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    x = np.column_stack([xy, np.zeros(200)]) @ Q.T
    g = build_neighborhoods(x, 10)
    charts = lp.build_charts(g)
    for p in (3, 50, 150):
        off = charts.offsets(g, p)
        true = xy[g.neighbors(p)] - xy[p]
        np.testing.assert_allclose(off @ off.T, true @ true.T, atol=1e-12)


@pytest.mark.parametrize("mode", ["constant", "inverse-r-squared"])
def test_weight_program_invariants(hemi_instance, mode):
    P, g, charts, bnd = hemi_instance
    sol = lp.solve_weights(g, charts, bnd, row_sum=mode)
    W = sol.W
    for key, val in sol.constraints.items():
        assert val <= 1e-8, key
    assert abs(W - W.T).max() == 0
    assert W.min() >= 0
    L = lp.graph_laplacian(W)
    np.testing.assert_allclose(L @ np.ones(g.size), 0, atol=1e-12)
    assert np.linalg.eigvalsh(L.toarray()).min() >= -1e-9
    rows = sol.rows
    np.testing.assert_allclose(np.asarray(W.sum(axis=1)).ravel()[rows], sol.targets[rows], atol=1e-8)
    assert len(np.intersect1d(sol.rows, bnd)) == 0


def test_row_targets():
    charts = lp.TangentCharts(np.zeros((2, 2)), np.zeros((0, 2)), np.array([0.5, 2.0]),
                              np.zeros(2, dtype=bool))
    np.testing.assert_allclose(lp.row_targets(charts), [1, 1])
    np.testing.assert_allclose(lp.row_targets(charts, "inverse-r-squared"), [4, 0.25])
    with pytest.raises(ValueError):
        lp.row_targets(charts, "linear")


def test_equator_direction_is_perpendicular_to_gradient(rng):
    off = rng.normal(size=(12, 2))
    g = np.array([0.6, -0.8])
    d = lp.equator_direction(off, 3.0 + off @ g)
    assert abs(d @ g) < 1e-12
    assert abs(np.linalg.norm(d) - 1) < 1e-12


def test_equator_direction_flat_raises(rng):
    with pytest.raises(lp.WeightSolveError):
        lp.equator_direction(rng.normal(size=(6, 2)), np.full(6, 2.0))


def test_neumann_rows_and_operators(hemi_instance):
    P, g, charts, bnd = hemi_instance
    sol = lp.solve_weights(g, charts, bnd)
    z = np.where(np.isin(np.arange(g.size), bnd), 0.0, P[:, 2])
    nr = lp.neumann_rows(g, charts, bnd, z, sol.targets)
    assert len(nr.fallback) == 0
    rows = nr.rows.tocsr()
    assert rows.min() >= 0
    np.testing.assert_allclose(np.asarray(rows.sum(axis=1)).ravel()[bnd], sol.targets[bnd], atol=1e-8)
    lap = lp.assemble(sol.W, bnd, nr)
    np.testing.assert_allclose(lap.L_N @ np.ones(lap.L_N.shape[0]), 0, atol=1e-10)
    assert abs(lap.L_N - lap.L_N.T).max() < 1e-12
    assert np.linalg.eigvalsh(lap.L_N.toarray()).min() > -1e-9
    assert np.linalg.eigvalsh(lap.L_D.toarray()).min() > 0
    assert len(np.intersect1d(lap.interior, bnd)) == 0


def test_largest_piece():
    W = sparse.csr_matrix(np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], float))
    np.testing.assert_array_equal(lp.largest_piece(W, np.arange(4)), [0, 1])


def test_matrix_market_round_trip(tmp_path, hemi_instance):
    P, g, charts, bnd = hemi_instance
    sol = lp.solve_weights(g, charts, bnd)
    lap = lp.assemble(sol.W, bnd)
    lp.dump_matrix_market(lap, tmp_path)
    assert abs(sparse.csr_matrix(mmread(tmp_path / "L_D.mtx")) - lap.L_D).max() < 1e-14
