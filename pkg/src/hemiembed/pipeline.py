"""End-to-end reconstruction from an image stack."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import equator as eq
from . import laplacian as lp
from .pixelgraph import PixelGraph, build_neighborhoods, build_vectors, default_k, remove_outliers
from .reconstruct import DepthMap, NormalField, assemble_normals, integrate_depth, resolve_rotation
from .render import ImageStack
from .spectral import DIRICHLET_PATTERN, NEUMANN_PATTERN, fit_scale, smallest_eigenpairs

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass
class PipelineConfig:
    k_fraction: float = 0.05
    k_cap: int | None = 60
    favor_threshold: float = 0.8
    row_sum_mode: str = "constant"
    boundary_fraction: float = 0.05
    stretch_eps_fraction: float = 0.1
    z_floor: float = 0.15
    weight_tol: float = 1e-10
    weight_max_iter: int = 200
    eig_tol: float = 1e-9
    eig_max_iter: int = 10_000
    cg_tol: float = 1e-10
    rotation_grid_deg: float = 1.0
    rotation_refine_deg: float = 0.01
    convexity: str = "auto"
    seed: int = 0

    def __post_init__(self):
        for name in ("k_fraction", "boundary_fraction", "z_floor", "stretch_eps_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not 0 <= self.favor_threshold <= 1:
            raise ValueError("favor_threshold must lie in [0, 1]")
        for name in ("weight_tol", "eig_tol", "cg_tol", "rotation_grid_deg", "rotation_refine_deg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.row_sum_mode not in ("constant", "inverse-r-squared"):
            raise ValueError(f"unknown row_sum_mode {self.row_sum_mode!r}")
        if self.convexity not in ("auto", "convex", "concave"):
            raise ValueError(f"unknown convexity {self.convexity!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class Reconstruction:
    field: NormalField
    depth: DepthMap
    graph: PixelGraph
    boundary: np.ndarray
    report: dict = field(default_factory=dict)

    @property
    def boundary_pixels(self) -> np.ndarray:
        return self.graph.pixels[self.boundary]


def _stage(name, timings):
    class _Timer:
        def __enter__(self):
            self.t = time.perf_counter()
            return self

        def __exit__(self, et, ev, tb):
            timings[name] = time.perf_counter() - self.t
            if ev is not None and not isinstance(ev, StageError):
                raise StageError(name, ev) from ev
            return False

    return _Timer()


@dataclass
class GraphEmbedding:
    """Eigenvector coordinates of the graph nodes.

    ``z`` is the first Dirichlet eigenvector (zero on the boundary and on
    nodes cut from the operator) and ``xy`` the first non-constant Neumann
    pair. ``usable`` flags nodes whose coordinates are all meaningful.
    """

    z: np.ndarray
    xy: np.ndarray
    usable: np.ndarray
    report: dict


def embed_graph(graph: PixelGraph, charts: lp.TangentCharts, boundary: np.ndarray,
                config: PipelineConfig | None = None, timings: dict | None = None) -> GraphEmbedding:
    """Weight program, then the Dirichlet and Neumann eigenproblems."""
    cfg = config or PipelineConfig()
    timings = {} if timings is None else timings
    report: dict = {}

    with _stage("weights", timings):
        sol = lp.solve_weights(graph, charts, boundary, row_sum=cfg.row_sum_mode,
                               tol=cfg.weight_tol, max_iter=cfg.weight_max_iter)
        # Infeasible rows stay in the operator without constraints; their
        # normals are discarded and interpolated from image neighbors.
        demoted = sol.demoted
        report.update(demoted=int(len(demoted)), released=int(len(sol.released)),
                      weight_residuals=sol.constraints, weight_iterations=sol.iterations,
                      boundary_count=int(len(boundary)), graph_size=graph.size)

    with _stage("dirichlet", timings):
        lap = lp.assemble(sol.W, boundary)
        ed = smallest_eigenpairs(lap.L_D, min(4, len(lap.interior)), cfg.eig_tol,
                                 cfg.eig_max_iter, cfg.seed)
        z = np.zeros(graph.size)
        v = ed.vectors[:, 0]
        z[lap.interior] = v if v.sum() >= 0 else -v

    with _stage("neumann", timings):
        nr = lp.neumann_rows(graph, charts, boundary, z, sol.targets, tol=cfg.weight_tol)
        lap_n = lp.assemble(sol.W, boundary, nr)
        en = smallest_eigenpairs(lap_n.L_N, 5, cfg.eig_tol, cfg.eig_max_iter, cfg.seed)
        xy = np.zeros((graph.size, 2))
        xy[lap_n.neumann_nodes] = en.vectors[:, 1:3]
        values = np.concatenate([ed.values, en.values])
        expected = np.concatenate([DIRICHLET_PATTERN[:len(ed.values)], NEUMANN_PATTERN])
        alpha, rel = fit_scale(values, expected)
        report.update(dirichlet_eigenvalues=ed.values, neumann_eigenvalues=en.values,
                      eigen_scale=alpha, eigen_relative_residuals=rel,
                      eigen_solver_residuals=np.concatenate([ed.residuals, en.residuals]),
                      neumann_fallback=int(len(nr.fallback)), neumann_flat=int(len(nr.flat)))

    usable = np.zeros(graph.size, dtype=bool)
    usable[lap_n.neumann_nodes] = True
    usable[demoted] = False
    covered = np.zeros(graph.size, dtype=bool)
    covered[lap.interior] = True
    covered[boundary] = True
    return GraphEmbedding(z, xy, usable & covered, report)


def run_pipeline(stack: ImageStack, config: PipelineConfig | None = None) -> Reconstruction:
    """Image stack to normals and depth.

    Stages: intensity graph, equator detection, weight program, Dirichlet
    and Neumann eigenvectors, normal assembly, rotation resolution and depth
    integration. Failures are re-raised as :class:`StageError`.
    """
    cfg = config or PipelineConfig()
    timings: dict = {}
    report: dict = {"config": cfg.to_dict(), "timings": timings}

    with _stage("graph", timings):
        vecs = build_vectors(stack)
        k = default_k(len(vecs.pixels), cfg.k_fraction, cfg.k_cap)
        graph = build_neighborhoods(vecs, k)
        graph = remove_outliers(graph, cfg.favor_threshold)
        report.update(k=k, pixels=int(stack.mask.sum()), dark=len(vecs.dark),
                      outliers=len(graph.removed))

    with _stage("equator", timings):
        table = eq.geodesics(graph)
        if table.dropped:
            graph = dataclasses.replace(
                graph.subgraph(table.nodes),
                removed=np.concatenate([graph.removed,
                                        np.delete(graph.pixels, table.nodes)]))
        peel = eq.flatten_and_peel(table, cfg.boundary_fraction, cfg.stretch_eps_fraction)
        boundary = peel.boundary
        report.update(disconnected_dropped=table.dropped, peel_sizes=list(peel.peel_sizes))

    with _stage("charts", timings):
        charts = lp.build_charts(graph)
    emb = embed_graph(graph, charts, boundary, cfg, timings)
    report.update(emb.report)

    with _stage("normals", timings):
        ok = emb.usable
        report["interpolated_nodes"] = int(graph.size - ok.sum())
        field0 = assemble_normals(emb.z[ok], emb.xy[ok], graph.pixels[ok],
                                  stack.mask.shape, mask=stack.mask, z_floor=cfg.z_floor)
        field1, rot = resolve_rotation(field0, cfg.rotation_grid_deg, cfg.rotation_refine_deg)
        report.update(rotation_deg=float(np.rad2deg(rot.angle)), reflected=rot.reflected,
                      integrability_before=rot.residual_before, integrability_after=rot.residual)

    with _stage("depth", timings):
        depth = integrate_depth(field1, cfg.convexity, cfg.cg_tol)
        report.update(convexity=cfg.convexity, flipped=depth.flipped,
                      cg_relative_residual=depth.residual, cg_iterations=depth.iterations,
                      filled=int(depth.field.filled.sum()))

    report["total_seconds"] = float(sum(timings.values()))
    return Reconstruction(depth.field, depth, graph, boundary, report)
