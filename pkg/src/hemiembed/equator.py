"""Equator (hemisphere rim) detection by geodesic flattening and hull peeling.

Shortest-path distances over the neighbor graph are pushed through a
``tan`` transform that stretches long distances, so that an MDS embedding
of a hemisphere opens up into a disc whose outer rings are the rim.
Successive convex hulls of that disc are peeled off until enough points
have been labeled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.sparse.linalg import eigsh
from scipy.spatial import ConvexHull, QhullError

log = logging.getLogger(__name__)

# Above this size the top MDS eigenpairs come from Lanczos instead of a
# dense reduction.
DENSE_MDS_LIMIT = 1500


class EmbeddingError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeodesicTable:
    """All-pairs shortest paths over the kept nodes.

    ``nodes`` are indices into the graph the table was built from (the
    largest connected component); ``dropped`` counts the nodes left out.
    """

    dist: np.ndarray
    nodes: np.ndarray
    dropped: int = 0

    @property
    def d_max(self) -> float:
        return float(self.dist.max(initial=0.0))

    @property
    def connected(self) -> bool:
        return self.dropped == 0

    def scaled(self, factor: float) -> "GeodesicTable":
        return GeodesicTable(self.dist * factor, self.nodes, self.dropped)


def geodesics(graph) -> GeodesicTable:
    """Dijkstra from every node of a :class:`PixelGraph` or a symmetric
    sparse matrix of edge lengths.

    Explicit zero entries count as zero-length edges. If the graph is
    disconnected only the largest component is kept.
    """
    adj = graph.adjacency() if hasattr(graph, "adjacency") else sparse.csr_matrix(graph)
    n = adj.shape[0]
    if n == 0:
        raise ValueError("empty graph")
    ncomp, labels = connected_components(adj, directed=False)
    nodes = np.arange(n)
    if ncomp > 1:
        sizes = np.bincount(labels)
        nodes = np.flatnonzero(labels == sizes.argmax())
        log.warning("graph has %d components; keeping %d of %d nodes", ncomp, len(nodes), n)
        adj = adj[nodes][:, nodes]
    # A symmetric matrix already lists both directions of every edge, and
    # the directed search skips scipy's internal symmetrization.
    symmetric = (abs(adj - adj.T) > 0).nnz == 0
    dist = dijkstra(adj, directed=not symmetric)
    dist = 0.5 * (dist + dist.T)
    return GeodesicTable(dist, nodes, n - len(nodes))


def stretch_distances(dist: np.ndarray, d_max: float | None = None,
                      eps_fraction: float = 0.1) -> np.ndarray:
    """``tan(d * pi / (2 d_max + eps))`` with ``eps = eps_fraction * d_max``."""
    d_max = float(np.max(dist)) if d_max is None else d_max
    if d_max <= 0:
        return np.zeros_like(dist)
    return np.tan(dist * np.pi / (2.0 * d_max + eps_fraction * d_max))


def classical_mds(dist: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates from double-centered squared distances.

    Returns ``(points, eigenvalues)`` with the ``dim`` largest eigenvalues in
    decreasing order. Raises if fewer than ``dim`` of them are positive.
    """
    d2 = np.asarray(dist, dtype=float) ** 2
    n = len(d2)
    if n <= dim:
        raise EmbeddingError(f"need more than {dim} points for a {dim}-d embedding")
    if not np.all(np.isfinite(d2)):
        raise EmbeddingError("non-finite distances")
    row = d2.mean(axis=0)
    B = -0.5 * (d2 - row[None, :] - row[:, None] + row.mean())
    if n > DENSE_MDS_LIMIT:
        vals, vecs = eigsh(B, k=dim, which="LA", v0=np.ones(n), tol=1e-12)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
    else:
        vals, vecs = eigh(B, subset_by_index=[n - dim, n - 1])
        vals, vecs = vals[::-1], vecs[:, ::-1]
    if not np.all(np.isfinite(vals)) or np.any(vals <= 1e-12 * max(abs(vals[0]), 1e-300)):
        raise EmbeddingError(f"fewer than {dim} positive eigenvalues: {vals}")
    return vecs * np.sqrt(vals), vals


@dataclass(frozen=True)
class PeelResult:
    """Boundary nodes (indices into the table's node list) and per-peel sizes."""

    boundary: np.ndarray
    peel_sizes: tuple
    flat: np.ndarray


def peel_hulls(points: np.ndarray, target_fraction: float = 0.05) -> tuple[np.ndarray, list]:
    """Label successive convex-hull layers until ``target_fraction`` of the
    points are labeled. Stops at the first layer reaching the target."""
    n = len(points)
    need = int(np.ceil(target_fraction * n))
    remaining = np.arange(n)
    labeled, sizes = [], []
    while sum(sizes) < need and len(remaining):
        try:
            hull = remaining[ConvexHull(points[remaining]).vertices]
        except (QhullError, ValueError):
            # Too few or collinear points: whatever is left is the rim.
            hull = remaining
        labeled.append(hull)
        sizes.append(len(hull))
        remaining = np.setdiff1d(remaining, hull)
    out = np.sort(np.concatenate(labeled)) if labeled else np.empty(0, dtype=int)
    return out, sizes


def flatten_and_peel(table: GeodesicTable, target_fraction: float = 0.05,
                     eps_fraction: float = 0.1) -> PeelResult:
    """Stretch geodesics, embed them in the plane, and peel hulls."""
    if not 0 < target_fraction <= 1:
        raise ValueError("target_fraction must lie in (0, 1]")
    stretched = stretch_distances(table.dist, table.d_max, eps_fraction)
    flat, _ = classical_mds(stretched, 2)
    boundary, sizes = peel_hulls(flat, target_fraction)
    return PeelResult(boundary, tuple(sizes), flat)


def boundary_csv(path, pixels: np.ndarray, width: int) -> None:
    """Write boundary pixels as ``row,col`` lines."""
    pixels = np.asarray(pixels, dtype=int)
    rc = np.column_stack([pixels // width, pixels % width])
    np.savetxt(path, rc, delimiter=",", header="row,col", comments="", fmt="%d")
