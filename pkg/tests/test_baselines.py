import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hemiembed.baselines import (
    chordal_distances,
    isomap_embed,
    lle_embed,
    lle_weights,
    mean_angle_error,
    procrustes_align,
)
from hemiembed.comparison import exact_geodesic_table, score
from hemiembed.equator import EmbeddingError, GeodesicTable
from hemiembed.pixelgraph import build_neighborhoods
from hemiembed.render import sample_hemisphere


def random_rotation(rng):
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q *= np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


def test_chordal_distances():
    np.testing.assert_allclose(chordal_distances([0.0, np.pi / 2, np.pi], 1.0), [0, np.sqrt(2), 2])
    np.testing.assert_allclose(chordal_distances(2 * np.pi, 3.0), 3 * np.sqrt(3))


def test_isomap_chordal_recovers_exact_hemisphere():
    P = sample_hemisphere(400, 2)
    table = exact_geodesic_table(P)
    emb = isomap_embed(table, chordal=True)
    err, ang = score(emb.points, P)
    assert err < 0.02
    assert ang < 1.0
    # Plain Isomap flattens the dome and does measurably worse.
    assert score(isomap_embed(table).points, P)[0] > err


def test_isomap_rejects_zero_distances():
    with pytest.raises(EmbeddingError):
        isomap_embed(GeodesicTable(np.zeros((4, 4)), np.arange(4), 0), chordal=True)


def test_lle_weights_match_per_row_lstsq(rng):
    x = rng.normal(size=(40, 3))
    g = build_neighborhoods(x, 6)
    nbrs = [g.neighbors(p) for p in range(g.size)]
    W = lle_weights(x, nbrs, reg=1e-3).toarray()
    for p in (0, 7, 21):
        Z = x[nbrs[p]] - x[p]
        G = Z @ Z.T
        G += np.eye(len(G)) * 1e-3 * np.trace(G)
        w = np.linalg.solve(G, np.ones(len(G)))
        np.testing.assert_allclose(W[p, nbrs[p]], w / w.sum(), rtol=1e-8)
    np.testing.assert_allclose(W.sum(axis=1)[[len(n) > 0 for n in nbrs]], 1)


def test_lle_unrolls_planar_grid():
    y, x = np.mgrid[0:15, 0:15].astype(float)
    pts = np.column_stack([x.ravel(), y.ravel(), 0.1 * np.sin(x.ravel() / 3)])
    g = build_neighborhoods(pts, 8)
    emb = lle_embed(g, dim=2, reg=1e-3, points=pts)
    # The 2-d coordinates are a linear image of the grid coordinates.
    A = np.column_stack([x.ravel(), y.ravel(), np.ones(x.size)])
    for col in emb.points.T:
        fit = A @ np.linalg.lstsq(A, col, rcond=None)[0]
        assert np.corrcoef(fit, col)[0, 1] > 0.99


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0), st.booleans())
def test_procrustes_undoes_similarity(seed, scale, reflect):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(30, 3))
    R = random_rotation(rng)
    if reflect:
        R = R @ np.diag([1, 1, -1])
    X = (Y @ R.T) * scale + rng.normal(size=3)
    fit = procrustes_align(X, Y)
    assert fit.error < 1e-9
    np.testing.assert_allclose(fit.aligned, Y, atol=1e-9)
    assert fit.scale == pytest.approx(1 / scale)


def test_procrustes_matches_scipy_disparity(rng):
    from scipy.spatial import procrustes
    X, Y = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    fit = procrustes_align(X, Y)
    _, mapped, disparity = procrustes(Y, X)
    # scipy standardizes the target; map its result back to Y's frame.
    Yc = Y - Y.mean(axis=0)
    back = mapped * np.linalg.norm(Yc) + Y.mean(axis=0)
    np.testing.assert_allclose(fit.aligned, back, atol=1e-10)
    assert disparity == pytest.approx(np.sum((fit.aligned - Y) ** 2) / np.sum(Yc ** 2))


def test_procrustes_argument_checks():
    with pytest.raises(ValueError):
        procrustes_align(np.zeros((4, 3)), np.zeros((5, 3)))
    line = np.outer(np.arange(5.0), [1, 0, 0])
    with pytest.raises(ValueError):
        procrustes_align(line, line)


def test_score_is_invariant_to_prerotation(rng):
    P = sample_hemisphere(200, 4)
    noisy = P + 0.02 * rng.normal(size=P.shape)
    R = random_rotation(rng)
    a = score(noisy, P)
    b = score(3.0 * noisy @ R.T - 1.0, P)
    assert a[0] == pytest.approx(b[0], rel=1e-9)
    assert a[1] == pytest.approx(b[1], rel=1e-9)


def test_mean_angle_error_known_tilt(rng):
    n = sample_hemisphere(100, 1)
    assert mean_angle_error(n, n) == pytest.approx(0.0, abs=1e-6)
    t = np.deg2rad(10.0)
    # Normals perpendicular to the rotation axis all move by the full angle.
    phi = np.linspace(-1.2, 1.2, 50)
    n = np.column_stack([np.zeros(50), np.sin(phi), np.cos(phi)])
    R = np.array([[1, 0, 0], [0, np.cos(t), -np.sin(t)], [0, np.sin(t), np.cos(t)]])
    assert mean_angle_error(n @ R.T, n) == pytest.approx(10.0, abs=1e-9)


def test_mean_angle_error_random_normals():
    # Independent uniform directions sit 90 degrees apart on average.
    rng = np.random.default_rng(0)
    a = rng.normal(size=(200_000, 3))
    b = rng.normal(size=(200_000, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    assert mean_angle_error(a, b) == pytest.approx(90.0, abs=0.3)


def test_mean_angle_error_with_mask():
    est = np.zeros((2, 2, 3))
    est[..., 2] = 1
    truth = est.copy()
    truth[0, 0] = [1, 0, 0]
    mask = np.array([[False, True], [True, True]])
    assert mean_angle_error(est, truth, mask) == 0.0
    assert mean_angle_error(est, truth) == pytest.approx(22.5)
    with pytest.raises(ValueError):
        mean_angle_error(est, truth, np.zeros((2, 2), dtype=bool))
