"""Normals from eigenvectors, in-plane alignment, and depth integration.

The Dirichlet eigenvector plays the role of ``z`` and the Neumann pair the
role of ``(x, y)``, each up to an unknown scale. The pair is also only known
up to a rotation/reflection of the image plane, which is fixed here by
picking the transform whose gradient field is closest to integrable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg

log = logging.getLogger(__name__)

Z_FLOOR = 0.15


class DegenerateFieldError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NormalField:
    """Unit normals on the image grid.

    ``normals`` has shape ``(H, W, 3)`` and is zero outside ``mask``;
    ``filled`` marks pixels whose normal was interpolated from neighbors.
    """

    normals: np.ndarray
    mask: np.ndarray
    filled: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def vectors(self) -> np.ndarray:
        return self.normals[self.mask]

    def gradients(self) -> tuple[np.ndarray, np.ndarray]:
        """Depth gradients ``p = -nx/nz`` and ``q = -ny/nz`` (zero off the mask)."""
        n = self.normals
        nz = np.where(self.mask, n[..., 2], 1.0)
        p = np.where(self.mask, -n[..., 0] / nz, 0.0)
        q = np.where(self.mask, -n[..., 1] / nz, 0.0)
        return p, q


@dataclass(frozen=True)
class DepthMap:
    depth: np.ndarray
    mask: np.ndarray
    convexity: str
    flipped: bool
    residual: float
    iterations: int
    field: NormalField


def unit_scale_fit(xy: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, float]:
    """Find ``Q`` (2x2, positive definite) and ``B > 0`` with
    ``xy Q xy^T + B z^2 ~ 1`` in least squares.

    Returns ``(C, sqrt(B))`` where ``C C^T = Q``, so ``(xy @ C, sqrt(B) z)``
    lies near the unit sphere.
    """
    x, y = xy[:, 0], xy[:, 1]
    A = np.column_stack([x * x, 2 * x * y, y * y, z * z])
    coef, *_ = np.linalg.lstsq(A, np.ones(len(z)), rcond=None)
    Q = np.array([[coef[0], coef[1]], [coef[1], coef[2]]])
    if coef[3] <= 0:
        raise DegenerateFieldError("z scale fit is not positive")
    try:
        C = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFieldError("xy scale fit is not positive definite") from exc
    return C, float(np.sqrt(coef[3]))


def lift_z(z: np.ndarray, z_floor: float = Z_FLOOR) -> np.ndarray:
    """Shift ``z`` so its minimum equals ``z_floor``.

    The Dirichlet vector is zero on the boundary nodes, which a camera sees
    at a small positive ``z``; a constant shift (before renormalizing) moves
    them back in view without changing the spacing of the other values.
    """
    return z + (z_floor - z.min())


def fill_normals(normals: np.ndarray, valid: np.ndarray, mask: np.ndarray,
                 max_sweeps: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Fill masked pixels lacking a normal by averaging valid 4-neighbors,
    sweep after sweep, renormalizing each fill.

    Pixels in components with no valid pixel at all get ``(0, 0, 1)``.
    Returns ``(normals, filled)``.
    """
    out = np.where(valid[..., None], normals, 0.0)
    have = valid & mask
    todo = mask & ~have
    filled = todo.copy()
    sweeps = 0
    while todo.any():
        acc = np.zeros_like(out)
        cnt = np.zeros(mask.shape)
        for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
            nb = np.roll(out, shift, axis=axis)
            ok = np.roll(have, shift, axis=axis)
            # np.roll wraps around; cancel the wrapped row/column.
            edge = [slice(None)] * 2
            edge[axis] = 0 if shift == 1 else -1
            ok[tuple(edge)] = False
            acc += np.where(ok[..., None], nb, 0.0)
            cnt += ok
        new = todo & (cnt > 0)
        if not new.any():
            break
        avg = acc[new] / cnt[new][:, None]
        norm = np.linalg.norm(avg, axis=1, keepdims=True)
        avg = np.where(norm > 0, avg / np.where(norm > 0, norm, 1.0), [0.0, 0.0, 1.0])
        out[new] = avg
        have = have | new
        todo = todo & ~new
        sweeps += 1
        if max_sweeps is not None and sweeps >= max_sweeps:
            break
    out[todo] = [0.0, 0.0, 1.0]
    return out, filled


def assemble_normals(z: np.ndarray, xy: np.ndarray, pixels: np.ndarray, shape,
                     mask: np.ndarray | None = None, z_floor: float = Z_FLOOR) -> NormalField:
    """Normals from a Dirichlet ``z`` eigenvector and a Neumann ``xy`` pair.

    ``z`` and ``xy`` are indexed like ``pixels`` (flat raster indices into an
    image of ``shape``). The sign of ``z`` is fixed to a positive mean; the
    three components are rescaled onto the unit sphere, ``z`` is shifted up
    to ``z_floor``, and each normal renormalized. Pixels of ``mask`` not in
    ``pixels`` are filled from their image neighbors.
    """
    z = np.asarray(z, dtype=float)
    xy = np.asarray(xy, dtype=float)
    pixels = np.asarray(pixels)
    if not (len(z) == len(xy) == len(pixels)):
        raise ValueError("z, xy and pixels must share one indexing")
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError("xy must have shape (N, 2)")
    spread = z.max() - z.min()
    if spread <= 1e-12 * max(np.abs(z).max(), 1e-300):
        raise DegenerateFieldError("z eigenvector is constant")
    if z.sum() < 0:
        z = -z
    C, bz = unit_scale_fit(xy, z)
    xy = xy @ C
    z = lift_z(bz * z, z_floor)
    n = np.column_stack([xy, z])
    n /= np.linalg.norm(n, axis=1, keepdims=True)

    shape = tuple(shape)
    grid = np.zeros(shape + (3,))
    valid = np.zeros(shape, dtype=bool)
    grid.reshape(-1, 3)[pixels] = n
    valid.ravel()[pixels] = True
    mask = valid.copy() if mask is None else np.asarray(mask, dtype=bool)
    grid, filled = fill_normals(grid, valid, mask)
    grid[~mask] = 0.0
    return NormalField(grid, mask, filled)


def hemisphere_points(z: np.ndarray, xy: np.ndarray) -> np.ndarray:
    """Rescale eigenvector coordinates onto the unit hemisphere, without the
    ``z`` lift; used to compare embeddings as point clouds."""
    z = np.asarray(z, dtype=float)
    xy = np.asarray(xy, dtype=float)
    if z.sum() < 0:
        z = -z
    C, bz = unit_scale_fit(xy, z)
    n = np.column_stack([xy @ C, bz * z])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _interior(mask: np.ndarray) -> np.ndarray:
    inner = mask.copy()
    inner[0, :] = inner[-1, :] = inner[:, 0] = inner[:, -1] = False
    inner[1:-1, 1:-1] &= (mask[:-2, 1:-1] & mask[2:, 1:-1] & mask[1:-1, :-2] & mask[1:-1, 2:])
    return inner


def _curl_parts(field: NormalField, reflect: bool):
    """Curl of the gradient field after rotating ``(nx, ny)`` by ``phi`` is
    ``cos(phi) U - sin(phi) V``; returns ``(U, V)`` over interior pixels."""
    n = field.normals
    a, b = n[..., 0], n[..., 1] * (-1.0 if reflect else 1.0)
    nz = np.where(field.mask, n[..., 2], 1.0)
    P = -a / nz
    Q = -b / nz
    inner = _interior(field.mask)

    def dy(f):
        out = np.zeros_like(f)
        out[1:-1] = 0.5 * (f[2:] - f[:-2])
        return out

    def dx(f):
        out = np.zeros_like(f)
        out[:, 1:-1] = 0.5 * (f[:, 2:] - f[:, :-2])
        return out

    U = (dy(P) - dx(Q))[inner]
    V = (dy(Q) + dx(P))[inner]
    return U, V


def integrability_residual(field: NormalField) -> float:
    """Sum over interior pixels of ``(dp/dy - dq/dx)^2`` (central differences)."""
    U, _ = _curl_parts(field, False)
    return float(U @ U)


def transform_field(field: NormalField, angle: float, reflect: bool) -> NormalField:
    """Reflect ``ny`` (optionally), then rotate ``(nx, ny)`` by ``angle``."""
    n = field.normals.copy()
    a, b = n[..., 0].copy(), n[..., 1] * (-1.0 if reflect else 1.0)
    c, s = np.cos(angle), np.sin(angle)
    n[..., 0] = c * a - s * b
    n[..., 1] = s * a + c * b
    return replace(field, normals=n)


def _golden(f, lo, hi, tol):
    g = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class RotationResult:
    angle: float
    reflected: bool
    residual: float
    residual_before: float
    grid_residuals: np.ndarray


def resolve_rotation(field: NormalField, grid_deg: float = 1.0,
                     refine_deg: float = 0.01) -> tuple[NormalField, RotationResult]:
    """Rotation angle and reflection of ``(nx, ny)`` minimizing the
    integrability residual: a ``grid_deg`` grid over ``[0, 2 pi)`` for both
    reflection states, then golden-section refinement around the best cell.

    ``angle`` and ``angle + pi`` give the same residual (they differ by the
    convex/concave flip); the smaller grid angle is kept.
    """
    grid = np.deg2rad(np.arange(0.0, 360.0, grid_deg))
    best = None
    table = np.zeros((2, len(grid)))
    for k, reflect in enumerate((False, True)):
        U, V = _curl_parts(field, reflect)

        def resid(phi, U=U, V=V):
            r = np.cos(phi) * U - np.sin(phi) * V
            return float(r @ r)

        table[k] = [resid(phi) for phi in grid]
        i = int(np.argmin(table[k]))
        step = np.deg2rad(grid_deg)
        phi = _golden(resid, grid[i] - step, grid[i] + step, np.deg2rad(refine_deg))
        if resid(grid[i]) < resid(phi):
            phi = grid[i]
        cand = (resid(phi), k, phi % (2 * np.pi))
        if best is None or cand[0] < best[0]:
            best = cand
    res, k, phi = best
    before = float(table[0][0])
    out = transform_field(field, phi, bool(k))
    return out, RotationResult(float(phi), bool(k), float(res), before, table)


def gradient_system(mask: np.ndarray, p: np.ndarray, q: np.ndarray):
    """Forward-difference operator over in-mask pixel pairs and the matching
    averaged gradient targets."""
    idx = -np.ones(mask.shape, dtype=int)
    idx[mask] = np.arange(mask.sum())
    rows, cols, vals, rhs = [], [], [], []
    e = 0
    for axis, g in ((1, p), (0, q)):
        if axis == 1:
            a, b = idx[:, :-1], idx[:, 1:]
            ga, gb = g[:, :-1], g[:, 1:]
        else:
            a, b = idx[:-1, :], idx[1:, :]
            ga, gb = g[:-1, :], g[1:, :]
        ok = (a >= 0) & (b >= 0)
        m = int(ok.sum())
        eid = e + np.arange(m)
        rows += [eid, eid]
        cols += [b[ok], a[ok]]
        vals += [np.ones(m), -np.ones(m)]
        rhs.append(0.5 * (ga[ok] + gb[ok]))
        e += m
    G = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(e, int(mask.sum())))
    return G, np.concatenate(rhs)


def _centroid_region(mask: np.ndarray) -> np.ndarray:
    rr, cc = np.nonzero(mask)
    cy, cx = rr.mean(), cc.mean()
    radius = 0.25 * np.sqrt(len(rr) / np.pi)
    d = np.hypot(rr - cy, cc - cx)
    near = d <= max(radius, d.min())
    out = np.zeros_like(mask)
    out[rr[near], cc[near]] = True
    return out


def _rim(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1)
    inner = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return mask & ~inner


def integrate_depth(field: NormalField, convexity: str = "auto", tol: float = 1e-10,
                    max_iter: int | None = None) -> DepthMap:
    """Least-squares depth from the field's gradients on the mask.

    Solves the normal equations of ``min sum (grad z - (p, q))^2`` over
    in-mask neighbor pairs with conjugate gradients. The branch is chosen so
    that the region around the mask centroid lies nearer the camera (larger
    depth) than the rim for ``convex``/``auto``, and farther for ``concave``;
    choosing the other branch negates both depth and ``(nx, ny)``.
    """
    if convexity not in ("auto", "convex", "concave"):
        raise ValueError(f"unknown convexity {convexity!r}")
    mask = field.mask
    p, q = field.gradients()
    G, g = gradient_system(mask, p, q)
    A = (G.T @ G).tocsr()
    rhs = G.T @ g
    iters = [0]

    def count(_):
        iters[0] += 1

    n = A.shape[0]
    sol, info = cg(A, rhs, rtol=tol, atol=0.0, maxiter=max_iter or 20 * n, callback=count)
    resid = float(np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if info != 0 and resid > tol * 10:
        raise IntegrationError(f"conjugate gradients stopped at relative residual {resid:.3e}")
    sol -= sol.mean()
    depth = np.zeros(mask.shape)
    depth[mask] = sol
    center = depth[_centroid_region(mask)].mean()
    rim = depth[_rim(mask)].mean()
    want_up = convexity in ("auto", "convex")
    flipped = bool((center > rim) != want_up)
    out_field = field
    if flipped:
        depth = -depth
        n_ = field.normals.copy()
        n_[..., :2] *= -1
        out_field = replace(field, normals=n_)
    return DepthMap(depth, mask, convexity, flipped, resid, iters[0], out_field)
