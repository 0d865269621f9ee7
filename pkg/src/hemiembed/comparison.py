"""Side-by-side runs of the spectral method and the reference embedders.

Every embedding is aligned to the true normals with a similarity Procrustes
fit (oracle alignment), then scored by mean point distance and by mean angle
between the renormalized aligned points and the true normals.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass

import numpy as np

from . import equator as eq
from . import laplacian as lp
from .baselines import isomap_embed, lle_embed, mean_angle_error, procrustes_align
from .pipeline import PipelineConfig, embed_graph, run_pipeline
from .pixelgraph import build_neighborhoods
from .reconstruct import hemisphere_points
from .render import make_sphere_scene, render_stack, sample_hemisphere, sample_uniform_lights

METHODS = ("spectral", "isomap", "isomap-chordal", "lle")
LLE_NEIGHBORS = 12


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    object: str
    seed: int
    procrustes_error: float
    mean_angle_error: float


def exact_geodesic_table(points: np.ndarray) -> eq.GeodesicTable:
    """Great-circle distances between unit vectors."""
    d = np.arccos(np.clip(points @ points.T, -1.0, 1.0))
    np.fill_diagonal(d, 0.0)
    return eq.GeodesicTable(d, np.arange(len(points)), 0)


def score(points: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Procrustes error and mean angle error of ``points`` against unit ``truth``."""
    fit = procrustes_align(points, truth)
    unit = fit.aligned / np.linalg.norm(fit.aligned, axis=1, keepdims=True)
    return fit.error, mean_angle_error(unit, truth)


def baseline_rows(table: eq.GeodesicTable, graph, truth: np.ndarray, name: str,
                  seed: int) -> list[ComparisonRow]:
    """Isomap, Isomap-chordal and LLE rows. LLE gets its own smaller
    neighborhoods; with as many neighbors as the spectral graph its weight
    matrix has a large null space."""
    lle_graph = build_neighborhoods(graph.vectors, min(LLE_NEIGHBORS, graph.k), graph.pixels)
    rows = []
    for method, emb in (("isomap", lambda: isomap_embed(table)),
                        ("isomap-chordal", lambda: isomap_embed(table, chordal=True)),
                        ("lle", lambda: lle_embed(lle_graph))):
        rows.append(ComparisonRow(method, name, seed, *score(emb().points, truth)))
    return rows


def compare_exact(seed: int, count: int = 1000, k: int = 20,
                  config: PipelineConfig | None = None) -> list[ComparisonRow]:
    """Embedders on exact hemisphere samples with exact geodesic distances."""
    cfg = config or PipelineConfig()
    P = sample_hemisphere(count, seed)
    graph = build_neighborhoods(P, k)
    table = exact_geodesic_table(P)
    boundary = eq.flatten_and_peel(table, cfg.boundary_fraction, cfg.stretch_eps_fraction).boundary
    emb = embed_graph(graph, lp.geodesic_charts(graph, P), boundary, cfg)
    ok = emb.usable
    pts = hemisphere_points(emb.z[ok], emb.xy[ok])
    rows = [ComparisonRow("spectral", "hemisphere", seed, *score(pts, P[ok]))]
    return rows + baseline_rows(table, graph, P, "hemisphere", seed)


def compare_rendered(seed: int, resolution: int = 48, lights: int = 90,
                     config: PipelineConfig | None = None) -> list[ComparisonRow]:
    """Embedders on a rendered sphere; the spectral method runs the full pipeline."""
    scene = make_sphere_scene(resolution)
    stack = render_stack(scene, sample_uniform_lights(lights, seed))
    rec = run_pipeline(stack, config)
    graph = rec.graph
    truth = scene.normals.reshape(-1, 3)[graph.pixels]
    est = rec.field.normals.reshape(-1, 3)[graph.pixels]
    rows = [ComparisonRow("spectral", "sphere", seed, *score(est, truth))]
    table = eq.geodesics(graph)
    if table.dropped:
        graph = graph.subgraph(table.nodes)
        truth = truth[table.nodes]
    return rows + baseline_rows(table, graph, truth, "sphere", seed)


def compare_embedders(seeds, mode: str = "rendered", config: PipelineConfig | None = None,
                      **kwargs) -> list[ComparisonRow]:
    """Rows for every method and seed; ``mode`` is ``rendered`` or ``exact``."""
    run = {"rendered": compare_rendered, "exact": compare_exact}
    if mode not in run:
        raise ValueError(f"unknown comparison mode {mode!r}")
    rows = []
    for seed in seeds:
        rows += run[mode](int(seed), config=config, **kwargs)
    return rows


def write_rows(path, rows: list[ComparisonRow]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["method", "object", "seed", "procrustes_error", "mean_angle_error"])
        for r in rows:
            out.writerow(astuple(r))
