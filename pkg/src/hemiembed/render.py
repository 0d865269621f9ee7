"""Synthetic scenes and multi-illumination image stacks.

Image coordinates: ``x`` grows with the column index and ``y`` with the row
index, ``z`` points toward the (orthographic) camera. A surface ``depth(x, y)``
has normal proportional to ``(-dz/dx, -dz/dy, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sh import ReflectanceKernel, sh_basis


@dataclass(frozen=True)
class Scene:
    """Ground-truth geometry: per-pixel normals and albedo over a mask.

    ``normals`` has shape ``(H, W, 3)`` and ``albedo`` shape ``(H, W)``;
    both are zero outside ``mask``.
    """

    mask: np.ndarray
    normals: np.ndarray
    albedo: np.ndarray
    depth: np.ndarray | None = None
    radius: float = 1.0

    def __post_init__(self):
        if self.normals.shape != self.mask.shape + (3,):
            raise ValueError("normals must have shape mask.shape + (3,)")
        if np.any(self.normals[self.mask][:, 2] <= 0):
            raise ValueError("every unmasked normal must face the camera (z > 0)")

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class ImageStack:
    """``n`` images of shape ``(H, W)`` over a shared mask."""

    images: np.ndarray
    mask: np.ndarray
    lights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[1:] != self.mask.shape:
            raise ValueError("images must have shape (n, H, W) matching the mask")

    @property
    def count(self) -> int:
        return self.images.shape[0]

    def pixel_vectors(self) -> np.ndarray:
        """Intensity vectors of the masked pixels, shape ``(N, n)`` in raster order."""
        return self.images[:, self.mask].T


def make_sphere_scene(resolution: int, albedo_pattern: str = "uniform",
                      checker_size: int = 8) -> Scene:
    """Orthographic unit sphere inscribed in a ``resolution`` x ``resolution`` image."""
    if resolution < 16:
        raise ValueError("resolution must be >= 16")
    c = (resolution - 1) / 2.0
    radius = resolution / 2.0
    rows, cols = np.mgrid[0:resolution, 0:resolution]
    x = (cols - c) / radius
    y = (rows - c) / radius
    r2 = x * x + y * y
    mask = r2 < 1.0
    z = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    normals = np.where(mask[..., None], np.stack([x, y, z], axis=-1), 0.0)
    normals[mask] /= np.linalg.norm(normals[mask], axis=1)[:, None]
    if albedo_pattern == "uniform":
        albedo = mask.astype(float)
    elif albedo_pattern == "checker":
        board = ((rows // checker_size) + (cols // checker_size)) % 2
        albedo = np.where(mask, np.where(board == 0, 1.0, 0.5), 0.0)
    else:
        raise ValueError(f"unknown albedo pattern {albedo_pattern!r}")
    depth = np.where(mask, z * radius, 0.0)
    return Scene(mask=mask, normals=normals, albedo=albedo, depth=depth, radius=radius)


def sample_uniform_lights(count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. unit directions, uniform on the full sphere."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sample_spiral_lights(count: int) -> np.ndarray:
    """``count`` evenly spread unit directions on the full sphere.

    Points sit on a golden-angle spiral with equal-area latitude steps, so
    small light sets cover the sphere without the clumps of random draws.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    r = np.sqrt(1.0 - z * z)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sample_hemisphere(count: int, seed: int) -> np.ndarray:
    """Uniform samples of the upper unit hemisphere (``z >= 0``)."""
    d = sample_uniform_lights(count, seed)
    d[:, 2] = np.abs(d[:, 2])
    return d


def render_stack(scene: Scene, lights, mode: str = "exact-lambertian",
                 kernel: ReflectanceKernel | None = None, noise_sigma: float = 0.0,
                 seed: int = 0, clip: bool = True) -> ImageStack:
    """Render one image per directional light.

    ``exact-lambertian`` evaluates ``rho * max(l . n, 0)``. ``sh-kernel``
    expands each light as a Dirac (``l_s = Y_s(l)``) and applies the harmonic
    image-formation sum with ``kernel``; band-limited kernels can dip slightly
    below zero, which ``clip`` removes.
    """
    lights = np.atleast_2d(np.asarray(lights, dtype=float))
    if lights.size == 0:
        raise ValueError("at least one light is required")
    n = scene.normals[scene.mask]
    rho = scene.albedo[scene.mask]
    if mode == "exact-lambertian":
        vals = np.maximum(n @ lights.T, 0.0)
    elif mode == "sh-kernel":
        if kernel is None:
            raise ValueError("sh-kernel mode needs a kernel")
        order = kernel.max_order
        vals = (sh_basis(n, order) * kernel.gains_per_harmonic(order)) @ sh_basis(lights, order).T
    else:
        raise ValueError(f"unknown render mode {mode!r}")
    vals = vals * rho[:, None]
    if noise_sigma > 0:
        vals = vals + np.random.default_rng(seed).normal(scale=noise_sigma, size=vals.shape)
    if clip:
        vals = np.maximum(vals, 0.0)
    images = np.zeros((len(lights),) + scene.shape)
    images[:, scene.mask] = vals.T
    meta = {"mode": mode, "kernel": None if kernel is None else kernel.name}
    return ImageStack(images=images, mask=scene.mask.copy(), lights=lights, meta=meta)


def empirical_light_gram(lights, order: int) -> np.ndarray:
    """``L_st = sum_k Y_s(l_k) Y_t(l_k) * 4 pi / K``; tends to the identity for uniform lights."""
    lights = np.atleast_2d(lights)
    Y = sh_basis(lights, order)
    return Y.T @ Y * (4 * np.pi / len(lights))


__all__ = ["Scene", "ImageStack", "make_sphere_scene", "sample_uniform_lights",
           "sample_spiral_lights", "sample_hemisphere", "render_stack",
           "empirical_light_gram"]
