"""Reference embedders and the metrics used to compare them.

Isomap (plain and with geodesics converted to hemisphere chords), LLE,
similarity Procrustes alignment, and mean angular error between normals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .equator import EmbeddingError, GeodesicTable, classical_mds
from .spectral import smallest_eigenpairs


@dataclass(frozen=True)
class Embedding3D:
    points: np.ndarray
    method: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.points)):
            raise EmbeddingError("embedding has non-finite coordinates")


def chordal_distances(d: np.ndarray, radius: float) -> np.ndarray:
    """Chord lengths ``sqrt(2 r^2 (1 - cos(d / r)))`` of arcs of length ``d``
    on a sphere of radius ``r``."""
    d = np.asarray(d, dtype=float)
    return np.sqrt(np.maximum(2.0 * radius ** 2 * (1.0 - np.cos(d / radius)), 0.0))


def isomap_embed(table: GeodesicTable, chordal: bool = False, dim: int = 3) -> Embedding3D:
    """Classical MDS of geodesic distances.

    In chordal mode the sphere radius is taken as ``d_max / pi`` (the longest
    geodesic spans half a great circle), so the longest path maps to a
    diameter.
    """
    d = table.dist
    if chordal:
        r = table.d_max / np.pi
        if r <= 0:
            raise EmbeddingError("all geodesic distances are zero")
        d = chordal_distances(d, r)
    pts, _ = classical_mds(d, dim)
    return Embedding3D(pts, "isomap-chordal" if chordal else "isomap")


def lle_weights(x: np.ndarray, neighbors: list, reg: float = 1e-9) -> sparse.csr_matrix:
    """Affine reconstruction weights of each point from its neighbors.

    Solves ``G w = 1`` for the local Gram matrix ``G`` with ``reg * trace(G)``
    added to the diagonal, using the minimum-norm solution when ``G`` stays
    singular, then rescales ``w`` to sum to one.
    """
    n = len(x)
    rows, cols, vals = [], [], []
    for p in range(n):
        nb = np.asarray(neighbors[p])
        if len(nb) == 0:
            continue
        Z = x[nb] - x[p]
        G = Z @ Z.T
        G = G + np.eye(len(nb)) * reg * max(np.trace(G), 1e-300)
        w = np.linalg.lstsq(G, np.ones(len(nb)), rcond=None)[0]
        w /= w.sum()
        rows.append(np.full(len(nb), p))
        cols.append(nb)
        vals.append(w)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))


def lle_embed(graph, dim: int = 3, reg: float = 1e-9, points: np.ndarray | None = None) -> Embedding3D:
    """Locally linear embedding over the graph's neighbor lists.

    ``points`` defaults to the graph's vectors. Coordinates are the
    eigenvectors of ``(I - W)^T (I - W)`` after the constant one.
    """
    x = graph.vectors if points is None else np.asarray(points, dtype=float)
    neighbors = [graph.neighbors(p) for p in range(graph.size)]
    W = lle_weights(x, neighbors, reg)
    E = sparse.identity(graph.size, format="csr") - W
    M = (E.T @ E).tocsr()
    # Near-exact reconstructions leave (I - W) with a sizable null space, on
    # which ARPACK stalls; give up early and let the dense fallback decide.
    eig = smallest_eigenpairs(M, dim + 1, max_iter=500)
    return Embedding3D(eig.vectors[:, 1:dim + 1] * np.sqrt(graph.size), "lle")


@dataclass(frozen=True)
class ProcrustesResult:
    aligned: np.ndarray
    error: float
    rotation: np.ndarray
    scale: float
    translation: np.ndarray


def procrustes_align(source, target: np.ndarray) -> ProcrustesResult:
    """Best similarity map (rotation or reflection, uniform scale, shift) of
    ``source`` onto ``target``; ``error`` is the mean point distance."""
    X = source.points if isinstance(source, Embedding3D) else np.asarray(source, dtype=float)
    Y = np.asarray(target, dtype=float)
    if X.shape != Y.shape:
        raise ValueError("source and target must have the same shape")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    sv = np.linalg.svd(Xc, compute_uv=False)
    if len(X) < 3 or len(sv) < 2 or sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise ValueError("need at least 3 non-collinear points")
    U, S, Vt = np.linalg.svd(Xc.T @ Yc)
    R = U @ Vt
    s = S.sum() / np.sum(Xc * Xc)
    aligned = s * Xc @ R + my
    err = float(np.linalg.norm(aligned - Y, axis=1).mean())
    return ProcrustesResult(aligned, err, R, float(s), my - s * mx @ R)


def mean_angle_error(est, truth, mask: np.ndarray | None = None) -> float:
    """Mean angle in degrees between corresponding unit normals.

    Accepts arrays of shape ``(..., 3)`` or objects with ``normals`` and
    ``mask`` attributes; with image-shaped arrays, ``mask`` selects pixels.
    """
    if hasattr(est, "normals"):
        mask = est.mask if mask is None else mask
        est = est.normals
    if hasattr(truth, "normals"):
        truth = truth.normals
    est, truth = np.asarray(est, dtype=float), np.asarray(truth, dtype=float)
    if mask is not None:
        est, truth = est[mask], truth[mask]
    est, truth = est.reshape(-1, 3), truth.reshape(-1, 3)
    if len(est) == 0:
        raise ValueError("no pixels to compare")
    cos = np.clip(np.sum(est * truth, axis=1), -1.0, 1.0)
    return float(np.rad2deg(np.arccos(cos)).mean())
