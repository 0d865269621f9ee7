"""Smallest eigenpairs of sparse symmetric matrices."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh, norm as spnorm, splu

log = logging.getLogger(__name__)

DENSE_LIMIT = 400
DENSE_FALLBACK_LIMIT = 6000

# Expected eigenvalue ratios on the hemisphere, l (l + 1) for the harmonics
# vanishing on the equator and for those with zero normal derivative there.
DIRICHLET_PATTERN = np.array([2.0, 6.0, 6.0, 12.0])
NEUMANN_PATTERN = np.array([0.0, 2.0, 2.0, 6.0, 6.0])


class EigenSolveError(RuntimeError):
    pass


def _below_spectrum(M, sigma: float) -> bool:
    """Is ``M - sigma I`` positive definite?

    Checked through the pivots of a symmetric, non-pivoting LU (an LDL^T in
    disguise): by Sylvester's law their signs give the inertia.
    """
    n = M.shape[0]
    try:
        lu = splu(sparse.csc_matrix(M - sigma * sparse.identity(n)), permc_spec="MMD_AT_PLUS_A",
                  diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError:
        return False
    d = lu.U.diagonal()
    return bool(np.all(np.isfinite(d)) and np.all(d > 0))


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray


def _residuals(M, vals, vecs):
    return np.linalg.norm(M @ vecs - vecs * vals, axis=0)


def smallest_eigenpairs(M, count: int, tol: float = 1e-9, max_iter: int = 10_000,
                        seed: int = 0, method: str = "auto") -> EigenResult:
    """The ``count`` algebraically smallest eigenpairs of symmetric ``M``.

    Small matrices go to a dense solver. Larger ones use ARPACK in
    shift-invert mode around a shift below the spectrum (a tiny negative
    shift when the matrix is positive semidefinite, otherwise the lower
    Gershgorin bound), with a seeded starting vector. Eigenvectors have unit
    norm; residuals ``||M v - lambda v||`` are checked against ``tol`` times a
    norm estimate of ``M``. ``method`` forces ``"dense"`` or ``"arpack"``;
    ``"auto"`` picks by size.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if method not in ("auto", "dense", "arpack"):
        raise ValueError(f"unknown method {method!r}")
    n = M.shape[0]
    if count > n:
        raise ValueError(f"asked for {count} eigenpairs of a {n}x{n} matrix")
    is_sparse = sparse.issparse(M)
    asym = abs(M - M.T).max() if is_sparse else np.abs(M - M.T).max()
    if asym > 1e-8:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.2e})")
    mnorm = spnorm(M, 1) if is_sparse else np.abs(M).sum(axis=0).max()
    use_dense = method == "dense" or (method == "auto" and n <= DENSE_LIMIT) or count >= n - 1
    if use_dense:
        dense = M.toarray() if is_sparse else np.asarray(M, dtype=float)
        vals, vecs = np.linalg.eigh(0.5 * (dense + dense.T))
        vals, vecs = vals[:count], vecs[:, :count]
    else:
        M = sparse.csc_matrix(M)
        diag = M.diagonal()
        off = np.asarray(abs(M).sum(axis=1)).ravel() - np.abs(diag)
        lower = np.min(diag - off)
        sigma = lower - 1e-3 * max(mnorm, 1e-12)
        # A shift close to zero converges far faster for semidefinite
        # matrices whose Gershgorin bound is loose; use it when it is safe.
        near = -1e-6 * max(mnorm, 1e-12)
        if near > sigma and _below_spectrum(M, near):
            sigma = near
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            vals, vecs = eigsh(M, k=count, sigma=sigma, which="LM", v0=v0,
                               tol=tol * 1e-3, maxiter=max_iter)
        except ArpackNoConvergence as exc:
            # Large null spaces can stall ARPACK; small enough problems can
            # still be handed to the dense solver.
            if n > DENSE_FALLBACK_LIMIT:
                raise EigenSolveError(f"eigensolver did not converge: {exc}") from exc
            log.warning("ARPACK did not converge on a %dx%d matrix; using a dense solver", n, n)
            vals, vecs = eigh(M.toarray(), subset_by_index=[0, count - 1])
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        # Re-orthonormalize within (near-)degenerate clusters.
        vecs, _ = np.linalg.qr(vecs)
        vals = np.einsum("ij,ij->j", vecs, M @ vecs)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    res = _residuals(M, vals, vecs)
    limit = max(tol * max(mnorm, 1.0), 1e-12) * 1e3
    if np.any(res > limit):
        raise EigenSolveError(f"eigen residuals too large: {res.max():.3e} > {limit:.3e}")
    return EigenResult(vals, vecs, res)


def fit_scale(values, expected) -> tuple[float, np.ndarray]:
    """One global factor ``alpha`` with ``values ~ alpha * expected``.

    ``alpha`` minimizes the summed squared relative error over the nonzero
    expected entries. Returned residuals are relative to ``alpha * expected``;
    for zero expected entries they are relative to ``alpha`` times the
    smallest nonzero expected value.
    """
    values = np.asarray(values, dtype=float)
    expected = np.asarray(expected, dtype=float)
    nz = expected != 0
    alpha = float(np.mean(values[nz] / expected[nz]))
    ref = np.where(nz, expected, expected[nz].min()) * alpha
    return alpha, np.abs(values - alpha * expected) / ref
