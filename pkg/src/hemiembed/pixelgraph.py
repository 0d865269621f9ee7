"""Normalized intensity vectors and mutual k-nearest-neighbor graphs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

DARK_EPS = 1e-9


class EmptyGraphError(ValueError):
    pass


@dataclass(frozen=True)
class PixelVectors:
    """Unit-norm intensity vectors of the usable pixels.

    ``pixels`` holds flat (raster) indices into the image, ``dark`` the flat
    indices of masked pixels dropped because their intensity vector vanished.
    """

    vectors: np.ndarray
    pixels: np.ndarray
    dark: np.ndarray


@dataclass(frozen=True)
class PixelGraph:
    """Mutual k-NN graph over normalized intensity vectors.

    Neighbor lists are stored CSR-style: the neighbors of node ``p`` are
    ``indices[indptr[p]:indptr[p + 1]]`` (sorted) with distances in the
    matching slice of ``distances``. ``knn`` keeps the one-sided k-NN choice
    made before the mutual filter.
    """

    vectors: np.ndarray
    pixels: np.ndarray
    knn: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    distances: np.ndarray
    removed: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def size(self) -> int:
        return len(self.vectors)

    @property
    def k(self) -> int:
        return self.knn.shape[1]

    def neighbors(self, p: int) -> np.ndarray:
        return self.indices[self.indptr[p]:self.indptr[p + 1]]

    def neighbor_distances(self, p: int) -> np.ndarray:
        return self.distances[self.indptr[p]:self.indptr[p + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric sparse matrix of edge lengths (explicit entries, zeros kept)."""
        return sparse.csr_matrix((self.distances, self.indices, self.indptr),
                                 shape=(self.size, self.size))

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Undirected edges ``(p, q, d)`` with ``p < q``."""
        rows = np.repeat(np.arange(self.size), self.degrees())
        keep = rows < self.indices
        return rows[keep], self.indices[keep], self.distances[keep]

    def subgraph(self, keep: np.ndarray) -> "PixelGraph":
        """Restrict to the nodes in ``keep`` (sorted node ids), dropping other edges."""
        keep = np.asarray(keep)
        remap = np.full(self.size, -1)
        remap[keep] = np.arange(len(keep))
        adj = self.adjacency()[keep][:, keep].tocsr()
        adj.sort_indices()
        knn = remap[self.knn[keep]]
        return PixelGraph(self.vectors[keep], self.pixels[keep], knn, adj.indptr,
                          adj.indices, adj.data, self.removed)


def normalize_vectors(v: np.ndarray, eps: float = DARK_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize ``v``; returns ``(unit_rows, ok)`` where ``ok`` flags non-dark rows."""
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=1)
    ok = norms > eps
    out = np.zeros_like(v)
    out[ok] = v[ok] / norms[ok, None]
    return out, ok


def build_vectors(stack, eps: float = DARK_EPS) -> PixelVectors:
    """Normalized per-pixel intensity vectors of an :class:`~hemiembed.render.ImageStack`."""
    if stack.count < 3:
        raise ValueError(f"need at least 3 images, got {stack.count}")
    flat = np.flatnonzero(stack.mask.ravel())
    unit, ok = normalize_vectors(stack.pixel_vectors(), eps)
    if not ok.any():
        raise EmptyGraphError("every pixel is dark")
    return PixelVectors(unit[ok], flat[ok], flat[~ok])


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def knn_brute(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest neighbors (self excluded), ties broken by index."""
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError(f"k={k} needs more than {n} points")
    d = pairwise_distances(x)
    np.fill_diagonal(d, np.inf)
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    return idx, np.take_along_axis(d, idx, axis=1)


def _mutual_csr(x: np.ndarray, knn: np.ndarray):
    n = len(x)
    rows = np.repeat(np.arange(n), knn.shape[1])
    chosen = sparse.csr_matrix((np.ones(len(rows), dtype=bool), (rows, knn.ravel())),
                               shape=(n, n))
    mutual = chosen.multiply(chosen.T).tocsr()
    mutual.sort_indices()
    r = np.repeat(np.arange(n), np.diff(mutual.indptr))
    c = mutual.indices
    d = np.linalg.norm(x[r] - x[c], axis=1)
    return mutual.indptr.copy(), c.copy(), d


def favor_fraction(knn: np.ndarray) -> np.ndarray:
    """Fraction of each node's chosen neighbors that chose it back."""
    n, k = knn.shape
    rows = np.repeat(np.arange(n), k)
    chosen = sparse.csr_matrix((np.ones(len(rows)), (rows, knn.ravel())), shape=(n, n))
    back = np.asarray(chosen.multiply(chosen.T).sum(axis=1)).ravel()
    return back / k


def build_neighborhoods(vectors, k: int, pixels=None) -> PixelGraph:
    """k-NN by Euclidean distance between unit vectors, then AND-symmetrized."""
    if isinstance(vectors, PixelVectors):
        pixels = vectors.pixels if pixels is None else pixels
        vectors = vectors.vectors
    x = np.asarray(vectors, dtype=float)
    pixels = np.arange(len(x)) if pixels is None else np.asarray(pixels)
    knn, _ = knn_brute(x, k)
    indptr, indices, dist = _mutual_csr(x, knn)
    return PixelGraph(x, pixels, knn, indptr, indices, dist)


def remove_outliers(graph: PixelGraph, favor_threshold: float = 0.8) -> PixelGraph:
    """Drop pixels that too few of their chosen neighbors reciprocate.

    The test uses the one-sided k-NN lists; survivors get fresh k-NN lists
    among themselves before the mutual filter is re-applied. Dropped pixel ids
    accumulate in ``removed``.
    """
    frac = favor_fraction(graph.knn)
    bad = frac < favor_threshold
    if not bad.any():
        return graph
    keep = np.flatnonzero(~bad)
    k = graph.k
    if len(keep) <= k:
        raise EmptyGraphError(f"only {len(keep)} pixels survive outlier removal (k={k})")
    log.info("outlier filter removed %d of %d pixels", bad.sum(), graph.size)
    rebuilt = build_neighborhoods(graph.vectors[keep], k, graph.pixels[keep])
    removed = np.concatenate([graph.removed, graph.pixels[bad]])
    return PixelGraph(rebuilt.vectors, rebuilt.pixels, rebuilt.knn, rebuilt.indptr,
                      rebuilt.indices, rebuilt.distances, removed)


def default_k(n_pixels: int, fraction: float = 0.05, cap: int | None = 60) -> int:
    k = int(np.ceil(fraction * n_pixels))
    if cap is not None:
        k = min(k, cap)
    return max(k, 3)


def dump_edges_csv(graph: PixelGraph, path) -> None:
    p, q, d = graph.edges()
    np.savetxt(path, np.column_stack([graph.pixels[p], graph.pixels[q], d]),
               delimiter=",", header="p,q,d", comments="", fmt=["%d", "%d", "%.17g"])
