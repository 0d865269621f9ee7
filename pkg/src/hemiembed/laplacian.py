"""Discrete Laplace-Beltrami operators from local tangent charts.

Each pixel ``p`` gets a planar chart of its neighborhood. Weights ``w_pq``
solve one global program::

    min  sum w_pq^2
    s.t. sum_q w_pq (u_q - u_p) = 0,  sum_q w_pq (v_q - v_p) = 0   (linear precision)
         sum_q w_pq = s_p                                          (row sum)
         w_pq >= 0,  w_pq = w_qp

for every interior pixel. Symmetry is built in by using one variable per
undirected edge; the remaining problem (least norm over a polyhedron) is
solved exactly through its dual with a semismooth Newton method.

Boundary (equator) pixels carry no constraints in this program. The
Dirichlet operator is the interior block of ``L = D - W``; the Neumann
operator replaces the boundary rows with weights computed on neighborhoods
mirrored across the local equator line.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, splu

from .pixelgraph import PixelGraph

log = logging.getLogger(__name__)


# Residuals within this factor of the target count as a round-off stall.
STALL_FACTOR = 100.0


class WeightSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class TangentCharts:
    """Planar coordinates of every neighborhood.

    ``center[p]`` is pixel ``p`` in its own chart; ``nbr`` is aligned with
    ``graph.indices`` and holds each neighbor's coordinates in the chart of
    the row it belongs to. ``radius[p]`` is the largest planar distance from
    the center to a neighbor.
    """

    center: np.ndarray
    nbr: np.ndarray
    radius: np.ndarray
    degenerate: np.ndarray

    def offsets(self, graph: PixelGraph, p: int) -> np.ndarray:
        s = slice(graph.indptr[p], graph.indptr[p + 1])
        return self.nbr[s] - self.center[p]


def _finish_charts(graph, center, nbr, degenerate):
    rows = np.repeat(np.arange(graph.size), graph.degrees())
    dist = np.linalg.norm(nbr - center[rows], axis=1)
    radius = np.zeros(graph.size)
    np.maximum.at(radius, rows, dist)
    return TangentCharts(center, nbr, radius, degenerate)


def build_charts(graph: PixelGraph, points: np.ndarray | None = None,
                 rank_tol: float = 1e-9) -> TangentCharts:
    """PCA charts: project each neighborhood (center included) onto its top two
    principal directions, after subtracting the neighborhood mean.

    ``points`` defaults to the graph's normalized intensity vectors. A
    neighborhood whose second singular value is below ``rank_tol`` times the
    first (or that has fewer than three members) is flagged degenerate.
    """
    x = graph.vectors if points is None else np.asarray(points, dtype=float)
    center = np.zeros((graph.size, 2))
    nbr = np.zeros((len(graph.indices), 2))
    degenerate = np.zeros(graph.size, dtype=bool)
    for p in range(graph.size):
        s = slice(graph.indptr[p], graph.indptr[p + 1])
        idx = graph.indices[s]
        if len(idx) < 2:
            degenerate[p] = True
            continue
        pts = np.vstack([x[p], x[idx]])
        mean = pts.mean(axis=0)
        _, sv, vt = np.linalg.svd(pts - mean, full_matrices=False)
        if len(sv) < 2 or sv[1] <= rank_tol * max(sv[0], 1e-300):
            degenerate[p] = True
            continue
        coords = (pts - mean) @ vt[:2].T
        center[p] = coords[0]
        nbr[s] = coords[1:]
    return _finish_charts(graph, center, nbr, degenerate)


def geodesic_charts(graph: PixelGraph, points: np.ndarray) -> TangentCharts:
    """Exact charts for points on the unit sphere (azimuthal equidistant map).

    Each neighbor is mapped into the tangent plane of the center along the
    great circle joining them, at its true geodesic distance.
    """
    x = np.asarray(points, dtype=float)
    center = np.zeros((graph.size, 2))
    nbr = np.zeros((len(graph.indices), 2))
    for p in range(graph.size):
        s = slice(graph.indptr[p], graph.indptr[p + 1])
        c = x[p]
        helper = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(c, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(c, e1)
        q = x[graph.indices[s]]
        cosang = np.clip(q @ c, -1.0, 1.0)
        ang = np.arccos(cosang)
        t = q - cosang[:, None] * c
        tn = np.linalg.norm(t, axis=1)
        t = np.divide(t, tn[:, None], out=np.zeros_like(t), where=tn[:, None] > 0)
        nbr[s] = np.column_stack([t @ e1, t @ e2]) * ang[:, None]
    return _finish_charts(graph, center, nbr, np.zeros(graph.size, dtype=bool))


def row_targets(charts: TangentCharts, mode: str = "constant") -> np.ndarray:
    """Row-sum targets ``s_p``: 1 everywhere, or ``1 / r_p^2``."""
    if mode == "constant":
        return np.ones(len(charts.radius))
    if mode == "inverse-r-squared":
        r = np.where(charts.radius > 0, charts.radius, np.inf)
        return 1.0 / r ** 2
    raise ValueError(f"unknown row-sum mode {mode!r}")


@dataclass
class NonnegResult:
    w: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _spd_solve(H, rhs, rtol: float) -> np.ndarray:
    """Jacobi-preconditioned CG, with a sparse LU fallback."""
    d = H.diagonal()
    M = sparse.diags(1.0 / np.where(d > 0, d, 1.0))
    x, info = cg(H, rhs, rtol=rtol, atol=0.0, M=M, maxiter=10 * H.shape[0])
    if info == 0:
        return x
    try:
        return splu(sparse.csc_matrix(H)).solve(rhs)
    except RuntimeError:
        return x


def min_norm_nonneg(A, b, tol: float = 1e-10, max_iter: int = 200,
                    reg: float = 1e-13) -> NonnegResult:
    """Least-norm ``w >= 0`` with ``A w = b`` via semismooth Newton on the dual.

    The dual objective ``0.5 ||(A^T y)_+||^2 - b^T y`` is convex with gradient
    ``A (A^T y)_+ - b``; the primal solution is ``w = (A^T y)_+``. Converges
    when the max-norm residual drops below ``tol`` times ``max(1, ||b||_inf)``.
    When the primal is infeasible the dual is unbounded and the iterates
    drift off; the iterate with the smallest residual is returned then.
    """
    A = sparse.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    m = A.shape[0]
    scale = max(1.0, np.abs(b).max(initial=0.0))
    target = tol * scale
    AAt = (A @ A.T).tocsr()
    eye = sparse.identity(m, format="csr")
    diag_scale = max(AAt.diagonal().max(initial=0.0), 1.0)
    y = _spd_solve(AAt + reg * diag_scale * eye, b, 1e-12) if m else np.zeros(0)

    def dual(yv):
        w = np.maximum(A.T @ yv, 0.0)
        return 0.5 * w @ w - b @ yv, w

    f, w = dual(y)
    res = np.abs(A @ w - b).max(initial=0.0)
    it = 0
    best, best_w, best_it = res, w, 0
    while res > target and it < max_iter:
        it += 1
        g = A @ w - b
        active = (A.T @ y) > 0
        As = A[:, active]
        H = (As @ As.T).tocsr()
        mu = reg * diag_scale + min(1e-6, np.linalg.norm(g)) * 1e-3
        d = _spd_solve(H + mu * eye, -g, 1e-12)
        slope = g @ d
        if slope >= 0:
            d, slope = -g, -(g @ g)
        t = 1.0
        while True:
            f_new, w_new = dual(y + t * d)
            if f_new <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        y = y + t * d
        f, w = f_new, w_new
        res = np.abs(A @ w - b).max(initial=0.0)
        if res < best:
            if res < 0.5 * best:
                best_it = it
            best, best_w = res, w
        if t < 1e-12 or it - best_it >= 15 or res > 1e3 * max(best, target):
            # Round-off floor reached, or the dual is running away.
            break
    return NonnegResult(best_w, float(best), it, bool(best <= target))


def _row_feasible(offsets: np.ndarray, gap_tol: float = 1e-9) -> bool:
    """Is the chart center strictly inside the convex hull of its neighbors?

    That is exactly when nonnegative weights with zero first moment and a
    positive sum exist; in 2-d it holds iff no angular gap between neighbor
    directions reaches pi.
    """
    if len(offsets) < 3:
        return False
    r = np.linalg.norm(offsets, axis=1)
    if np.any(r <= 1e-15 * max(r.max(), 1e-300)):
        return True
    ang = np.sort(np.arctan2(offsets[:, 1], offsets[:, 0]))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    return bool(gaps.max() < np.pi - gap_tol)


@dataclass
class WeightSolution:
    """Symmetric weight matrix plus diagnostics."""

    W: sparse.csr_matrix
    targets: np.ndarray
    boundary: np.ndarray
    infeasible: np.ndarray
    residual: float
    iterations: int
    rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    released: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    constraints: dict = field(default_factory=dict)

    @property
    def demoted(self) -> np.ndarray:
        """Rows left unconstrained: locally infeasible plus released."""
        return np.union1d(self.infeasible, self.released)


def constraint_matrix(graph: PixelGraph, charts: TangentCharts, rows: np.ndarray):
    """Constraint matrix over undirected-edge variables for the given rows.

    Returns ``(A, edge_p, edge_q)``; ``A`` has three rows per constrained
    pixel (u-precision, v-precision, row sum).
    """
    ep, eq, _ = graph.edges()
    n = graph.size
    edge_id = sparse.csr_matrix((np.arange(len(ep)) + 1, (ep, eq)), shape=(n, n))
    edge_id = (edge_id + edge_id.T).tocsr()
    edge_id.sort_indices()
    # edge_id shares the sparsity pattern of graph.adjacency(), so its data
    # lines up with graph.indices / charts.nbr.
    rr, cc, vv = [], [], []
    for i, p in enumerate(rows):
        s = slice(graph.indptr[p], graph.indptr[p + 1])
        eids = edge_id.data[s] - 1
        off = charts.nbr[s] - charts.center[p]
        k = len(eids)
        rr.append(np.repeat(3 * i + np.arange(3), k))
        cc.append(np.tile(eids, 3))
        vv.append(np.concatenate([off[:, 0], off[:, 1], np.ones(k)]))
    if rows.size:
        rr, cc, vv = map(np.concatenate, (rr, cc, vv))
    else:
        rr = cc = np.empty(0, dtype=int)
        vv = np.empty(0)
    A = sparse.csr_matrix((vv, (rr, cc)), shape=(3 * len(rows), len(ep)))
    return A, ep, eq


def check_rows(graph: PixelGraph, charts: TangentCharts, rows) -> np.ndarray:
    """Rows whose local constraints admit no nonnegative solution."""
    bad = []
    for p in rows:
        if charts.degenerate[p] or not _row_feasible(charts.offsets(graph, p)):
            bad.append(p)
    return np.array(bad, dtype=int)


def solve_weights(graph: PixelGraph, charts: TangentCharts, boundary=(),
                  row_sum: str = "constant", tol: float = 1e-10,
                  max_iter: int = 200, release_rounds: int = 10) -> WeightSolution:
    """Solve the global symmetric weight program for all non-boundary rows.

    Rows that are infeasible on their own (the center is not inside the
    convex hull of its neighbors, or the chart is degenerate) are reported in
    ``infeasible`` and left unconstrained. Every row can be feasible while
    the coupled program is not; then the rows with the largest violation at
    the best iterate are released (listed in ``released``) and the program is
    solved again, up to ``release_rounds`` times. Callers should treat both
    kinds as outliers.
    """
    boundary = np.unique(np.asarray(boundary, dtype=int))
    targets = row_targets(charts, row_sum)
    is_bnd = np.zeros(graph.size, dtype=bool)
    is_bnd[boundary] = True
    interior = np.flatnonzero(~is_bnd)
    infeasible = check_rows(graph, charts, interior)
    rows = np.setdiff1d(interior, infeasible)
    released = []
    for _ in range(release_rounds + 1):
        A, ep, eq = constraint_matrix(graph, charts, rows)
        b = np.zeros(A.shape[0])
        b[2::3] = targets[rows]
        sol = min_norm_nonneg(A, b, tol=tol, max_iter=max_iter)
        if sol.converged:
            break
        floor = STALL_FACTOR * tol * max(1.0, np.abs(b).max(initial=0.0))
        if sol.residual <= floor:
            # Stalled at the round-off floor, not infeasible.
            log.warning("weight program stalled at residual %.3e (target %.1e)",
                        sol.residual, tol)
            break
        per_row = np.abs(A @ sol.w - b).reshape(-1, 3).max(axis=1)
        cut = max(0.1 * per_row.max(), 10 * tol * max(1.0, np.abs(b).max()))
        drop = rows[per_row > cut]
        log.info("releasing %d rows (residual %.3e)", len(drop), sol.residual)
        released.append(drop)
        rows = np.setdiff1d(rows, drop)
    else:
        raise WeightSolveError(
            f"weight program did not converge: residual {sol.residual:.3e} "
            f"after {sol.iterations} iterations and {release_rounds} release rounds")
    w = sol.w
    n = graph.size
    W = sparse.csr_matrix((np.concatenate([w, w]), (np.concatenate([ep, eq]),
                                                   np.concatenate([eq, ep]))), shape=(n, n))
    W.sort_indices()
    out = WeightSolution(W, targets, boundary, infeasible, sol.residual, sol.iterations,
                         rows=rows,
                         released=np.concatenate(released) if released else np.empty(0, dtype=int))
    out.constraints = weight_residuals(graph, charts, W, rows, targets)
    return out


def weight_residuals(graph, charts, W, rows, targets) -> dict:
    """Max-norm violations of every constraint family over ``rows``."""
    W = sparse.csr_matrix(W)
    lin = 0.0
    rsum = 0.0
    for p in rows:
        s = slice(graph.indptr[p], graph.indptr[p + 1])
        wrow = np.asarray(W[p, graph.indices[s]].todense()).ravel()
        off = charts.nbr[s] - charts.center[p]
        lin = max(lin, np.abs(wrow @ off).max(initial=0.0))
        rsum = max(rsum, abs(W[p].sum() - targets[p]))
    asym = abs(W - W.T).max() if W.nnz else 0.0
    neg = max(0.0, -W.min()) if W.nnz else 0.0
    # Entries outside the neighbor pattern must be zero.
    pattern = graph.adjacency().astype(bool).astype(float)
    stray = abs(W - W.multiply(pattern)).max() if W.nnz else 0.0
    return {"linear_precision": float(lin), "row_sum": float(rsum),
            "symmetry": float(asym), "negativity": float(neg), "off_pattern": float(stray)}


def equator_direction(offsets: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Unit direction of the equator line: the fitted gradient of ``values``
    over the chart offsets, rotated by a quarter turn."""
    A = np.column_stack([np.ones(len(offsets)), offsets])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    g = coef[1:]
    gn = np.linalg.norm(g)
    if not gn > 1e-12 * max(np.abs(values).max(initial=0.0), 1e-300):
        raise WeightSolveError("flat Dirichlet eigenvector around a boundary pixel")
    g = g / gn
    return np.array([-g[1], g[0]])


def _principal_direction(offsets: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(offsets - offsets.mean(axis=0), full_matrices=False)
    return vt[0]


@dataclass
class NeumannRows:
    """Boundary rows of the Neumann weight matrix (mirror ghosts folded back)."""

    rows: sparse.csr_matrix
    fallback: np.ndarray
    residual: float
    flat: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


def neumann_rows(graph: PixelGraph, charts: TangentCharts, boundary, z_dirichlet,
                 targets: np.ndarray | None = None, tol: float = 1e-10) -> NeumannRows:
    """Weights for boundary rows after mirroring each neighborhood across the
    local equator line through the boundary pixel.

    ``z_dirichlet`` is indexed by graph node (zero on the boundary). A ghost
    ``q^R`` shares the weight of ``q``, so row ``p`` solves, per original
    neighbor, with offsets ``delta_q + R delta_q`` and row sum ``2 sum w``;
    the folded matrix entry is ``2 w_pq``. Where the eigenvector is flat
    over the whole neighborhood (all neighbors on the boundary) the line
    follows the principal direction of the boundary neighbors instead; such
    rows are listed in ``flat``. Rows whose program does not converge are
    listed in ``fallback``.
    """
    boundary = np.asarray(boundary, dtype=int)
    z = np.asarray(z_dirichlet, dtype=float)
    targets = np.ones(graph.size) if targets is None else targets
    is_bnd = np.zeros(graph.size, dtype=bool)
    is_bnd[boundary] = True
    rr, cc, vv, fallback, flat = [], [], [], [], []
    worst = 0.0
    for p in boundary:
        s = slice(graph.indptr[p], graph.indptr[p + 1])
        idx = graph.indices[s]
        off = charts.nbr[s] - charts.center[p]
        try:
            line = equator_direction(np.vstack([[0.0, 0.0], off]),
                                     np.concatenate([[z[p]], z[idx]]))
        except WeightSolveError:
            flat.append(p)
            on_rim = off[is_bnd[idx]]
            line = _principal_direction(np.vstack([[0.0, 0.0], on_rim if len(on_rim) else off]))
        along = off @ line
        # delta + reflected delta = 2 * (component along the line) * line, so
        # the precision constraint across the line holds for any weights.
        A = np.vstack([2 * along, 2 * np.ones(len(idx))])
        b = np.array([0.0, targets[p]])
        sol = min_norm_nonneg(A, b, tol=tol)
        if not sol.converged:
            fallback.append(p)
        worst = max(worst, sol.residual)
        rr.append(np.full(len(idx), p))
        cc.append(idx)
        vv.append(2 * sol.w)
    n = graph.size
    if rr:
        rows = sparse.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))),
                                 shape=(n, n))
    else:
        rows = sparse.csr_matrix((n, n))
    return NeumannRows(rows, np.array(fallback, dtype=int), worst, np.array(flat, dtype=int))


@dataclass(frozen=True)
class LaplacianSet:
    """``L = D - W`` and its boundary variants.

    ``L_D`` acts on ``interior`` (graph node ids; boundary values pinned to
    zero) and ``L_N`` on ``neumann_nodes``. Each is restricted to the largest
    connected piece of its weight graph: a node cut off from it (typically an
    unconstrained row that ended up with no weights) would only add spurious
    zero modes.
    """

    W: sparse.csr_matrix
    L: sparse.csr_matrix
    L_D: sparse.csr_matrix
    interior: np.ndarray
    boundary: np.ndarray
    L_N: sparse.csr_matrix | None = None
    neumann_nodes: np.ndarray | None = None


def graph_laplacian(W) -> sparse.csr_matrix:
    W = sparse.csr_matrix(W)
    d = np.asarray(W.sum(axis=1)).ravel()
    return (sparse.diags(d) - W).tocsr()


def largest_piece(W, nodes: np.ndarray) -> np.ndarray:
    """Nodes of the largest connected component of ``W`` restricted to ``nodes``."""
    nodes = np.asarray(nodes)
    if len(nodes) == 0:
        return nodes
    sub = sparse.csr_matrix(W)[nodes][:, nodes]
    sub.eliminate_zeros()
    _, labels = connected_components(sub, directed=False)
    return nodes[labels == np.bincount(labels).argmax()]


def assemble(W, boundary, neumann: NeumannRows | None = None) -> LaplacianSet:
    """Build ``L``, the Dirichlet block and (optionally) the Neumann operator.

    For ``L_N`` the boundary rows of ``W`` are replaced by the folded mirror
    weights; the resulting matrix is symmetrized as ``(W_N + W_N^T) / 2``
    before forming ``D - W``, which keeps constants in its null space.
    """
    W = sparse.csr_matrix(W)
    n = W.shape[0]
    boundary = np.unique(np.asarray(boundary, dtype=int))
    is_bnd = np.zeros(n, dtype=bool)
    is_bnd[boundary] = True
    interior = largest_piece(W, np.flatnonzero(~is_bnd))
    L = graph_laplacian(W)
    L_D = L[interior][:, interior].tocsr()
    L_N = nodes = None
    if neumann is not None:
        keep = sparse.diags((~is_bnd).astype(float))
        WN = (keep @ W + neumann.rows).tocsr()
        WN = 0.5 * (WN + WN.T)
        nodes = largest_piece(WN, np.arange(n))
        L_N = graph_laplacian(WN[nodes][:, nodes])
    return LaplacianSet(W, L, L_D, interior, boundary, L_N, nodes)


def dump_matrix_market(lap: LaplacianSet, directory) -> None:
    from pathlib import Path
    from scipy.io import mmwrite

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    mmwrite(str(d / "L.mtx"), lap.L)
    mmwrite(str(d / "L_D.mtx"), lap.L_D)
    if lap.L_N is not None:
        mmwrite(str(d / "L_N.mtx"), lap.L_N)
