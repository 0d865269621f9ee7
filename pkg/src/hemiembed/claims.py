"""Numerical checks of the two theoretical predictions.

* The distance constant: for nearby normals the distance between normalized
  intensity vectors is ``c`` times their angle. Estimated here by Monte Carlo
  over pixel pairs of a rendered sphere.
* The eigenvalue pattern: on hemisphere samples the smallest Dirichlet
  eigenvalues are proportional to ``2, 6, 6, 12`` and the smallest Neumann
  ones to ``0, 2, 2, 6, 6``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import laplacian as lp
from .pixelgraph import build_neighborhoods, normalize_vectors
from .render import ImageStack, Scene, render_stack, sample_hemisphere, sample_uniform_lights
from .sh import ReflectanceKernel
from .pipeline import PipelineConfig, embed_graph
from .spectral import DIRICHLET_PATTERN, NEUMANN_PATTERN


@dataclass(frozen=True)
class RatioEstimate:
    """Median of ``||v_p - v_q|| / angle(n_p, n_q)`` over sampled pixel pairs."""

    median: float
    ratios: np.ndarray
    angles: np.ndarray

    @property
    def pairs(self) -> int:
        return len(self.ratios)


def pair_ratios(scene: Scene, stack: ImageStack, window: int = 3,
                angle_range: tuple[float, float] = (0.02, 0.2)) -> RatioEstimate:
    """Intensity-to-angle distance ratios for pixel pairs.

    Pairs are all masked pixels within ``window`` rows and columns of each
    other (each unordered pair once) whose true normals differ by an angle
    inside ``angle_range``. Intensity vectors are normalized first; pairs
    involving dark pixels are skipped.
    """
    lo, hi = angle_range
    h, w = scene.shape
    flat = stack.images.reshape(stack.count, -1).T
    unit, usable = normalize_vectors(flat[scene.mask.ravel()])
    index = -np.ones(h * w, dtype=int)
    index[np.flatnonzero(scene.mask.ravel())] = np.arange(len(unit))
    normals = scene.normals.reshape(-1, 3)
    rows, cols = np.divmod(np.arange(h * w), w)
    ratios, angles = [], []
    for dr in range(0, window + 1):
        for dc in range(-window, window + 1):
            if dr == 0 and dc <= 0:
                continue
            r2, c2 = rows + dr, cols + dc
            inside = (r2 < h) & (c2 >= 0) & (c2 < w)
            a = np.flatnonzero(inside)
            b = r2[inside] * w + c2[inside]
            ia, ib = index[a], index[b]
            keep = (ia >= 0) & (ib >= 0)
            ia, ib, a, b = ia[keep], ib[keep], a[keep], b[keep]
            keep = usable[ia] & usable[ib]
            ia, ib, a, b = ia[keep], ib[keep], a[keep], b[keep]
            ang = np.arccos(np.clip(np.sum(normals[a] * normals[b], axis=1), -1.0, 1.0))
            sel = (ang >= lo) & (ang <= hi)
            d = np.linalg.norm(unit[ia[sel]] - unit[ib[sel]], axis=1)
            ratios.append(d / ang[sel])
            angles.append(ang[sel])
    ratios = np.concatenate(ratios)
    if len(ratios) == 0:
        raise ValueError("no pixel pairs fall inside the angle range")
    return RatioEstimate(float(np.median(ratios)), ratios, np.concatenate(angles))


def estimate_distance_constant(scene: Scene, lights: int = 2000, seed: int = 0,
                               mode: str = "exact-lambertian",
                               kernel: ReflectanceKernel | None = None, clip: bool = True,
                               window: int = 3,
                               angle_range: tuple[float, float] = (0.02, 0.2)) -> RatioEstimate:
    """Render ``lights`` random directions on ``scene`` and estimate ``c``."""
    stack = render_stack(scene, sample_uniform_lights(lights, seed), mode, kernel, clip=clip)
    return pair_ratios(scene, stack, window, angle_range)


@dataclass(frozen=True)
class EigenCheck:
    """Recovered eigenvalues against the expected pattern after one scale fit."""

    dirichlet: np.ndarray
    neumann: np.ndarray
    scale: float
    relative_residuals: np.ndarray
    expected: np.ndarray
    weight_residuals: dict
    z_correlation: float

    @property
    def recovered(self) -> np.ndarray:
        return np.concatenate([self.dirichlet, self.neumann])

    @property
    def max_residual(self) -> float:
        return float(self.relative_residuals.max())

    def series(self) -> list[tuple[str, int, float, float]]:
        """Rows ``(condition, index, expected, recovered / scale)`` for plotting."""
        out = []
        for name, vals, pat in (("dirichlet", self.dirichlet, DIRICHLET_PATTERN),
                                ("neumann", self.neumann, NEUMANN_PATTERN)):
            for i, (e, v) in enumerate(zip(pat, vals)):
                out.append((name, i, float(e), float(v / self.scale)))
        return out


def eigen_pattern_check(points: np.ndarray | None = None, count: int = 2000, seed: int = 3,
                        k: int = 30, row_sum: str = "inverse-r-squared",
                        boundary_fraction: float = 0.05, tol: float = 1e-10) -> EigenCheck:
    """Run the weight program and both eigenproblems on exact hemisphere samples.

    Images are bypassed: neighborhoods and tangent charts come straight from
    the sample directions, and the boundary is the ``boundary_fraction`` of
    samples closest to the equator.
    """
    P = sample_hemisphere(count, seed) if points is None else np.asarray(points, dtype=float)
    n = len(P)
    graph = build_neighborhoods(P, k)
    charts = lp.geodesic_charts(graph, P)
    boundary = np.argsort(P[:, 2], kind="stable")[:int(np.ceil(boundary_fraction * n))]
    cfg = PipelineConfig(row_sum_mode=row_sum, weight_tol=tol)
    emb = embed_graph(graph, charts, boundary, cfg)
    rep = emb.report
    rel = np.asarray(rep["eigen_relative_residuals"])
    return EigenCheck(rep["dirichlet_eigenvalues"], rep["neumann_eigenvalues"], rep["eigen_scale"],
                      rel, np.concatenate([DIRICHLET_PATTERN, NEUMANN_PATTERN]),
                      rep["weight_residuals"], float(np.corrcoef(emb.z, P[:, 2])[0, 1]))
