"""Real spherical harmonics, isotropic reflectance kernels and image formation.

Harmonics are real and orthonormal over the sphere. They are addressed either
by ``(n, m, parity)`` or by a flat zero-based index that orders them by order
``n``, then by ``m``, placing the even (cosine) harmonic before the odd (sine)
one::

    Y_00, Y_10, Y^e_11, Y^o_11, Y_20, Y^e_21, Y^o_21, Y^e_22, Y^o_22, ...

A zonal kernel ``k(theta)`` is stored through its projections ``k_(n)`` onto
``Y_n0`` and the per-order convolution gains
``alpha_(n) = sqrt(4 pi / (2n + 1)) * k_(n)``, so that an image under lighting
coefficients ``l_s`` is ``rho * sum_s alpha_(n(s)) * l_s * Y_s(normal)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial, pi, sqrt
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

MAX_ORDER = 8


class HarmonicIndexError(ValueError):
    pass


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class HarmonicIndex:
    n: int
    m: int = 0
    parity: str = "even"

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.m <= self.n:
            raise HarmonicIndexError(f"invalid harmonic (n={self.n}, m={self.m})")
        if self.parity not in ("even", "odd"):
            raise HarmonicIndexError(f"unknown parity {self.parity!r}")
        if self.m == 0 and self.parity == "odd":
            raise HarmonicIndexError("odd harmonics need m >= 1")

    @property
    def flat(self) -> int:
        if self.m == 0:
            return self.n * self.n
        return self.n * self.n + 2 * self.m - 1 + (self.parity == "odd")

    @classmethod
    def from_flat(cls, s: int) -> "HarmonicIndex":
        if s < 0:
            raise HarmonicIndexError(f"negative flat index {s}")
        n = int(np.sqrt(s))
        r = s - n * n
        if r == 0:
            return cls(n, 0, "even")
        return cls(n, (r + 1) // 2, "even" if r % 2 == 1 else "odd")


def num_harmonics(order: int) -> int:
    return (order + 1) ** 2


def harmonic_indices(order: int) -> list[HarmonicIndex]:
    return [HarmonicIndex.from_flat(s) for s in range(num_harmonics(order))]


@lru_cache(maxsize=None)
def legendre_factor(n: int, m: int) -> Polynomial:
    """Polynomial part ``Q_nm`` of ``P_nm(z) = (1 - z^2)^(m/2) Q_nm(z)``.

    ``Q_nm = d^(n+m)/dz^(n+m) (z^2 - 1)^n / (2^n n!)`` (no Condon-Shortley phase).
    """
    base = Polynomial([-1.0, 0.0, 1.0]) ** n
    return base.deriv(n + m) / (2.0 ** n * factorial(n))


def normalization(n: int, m: int) -> float:
    """Orthonormalizing constant of the real harmonic (includes sqrt(2) for m > 0)."""
    c = sqrt((2 * n + 1) / (4 * pi) * factorial(n - m) / factorial(n + m))
    return c * sqrt(2.0) if m > 0 else c


def _as_directions(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.shape[-1] != 3:
        raise ValueError("directions must have a trailing axis of length 3")
    return d


def eval_real_sh(idx: HarmonicIndex, d) -> np.ndarray | float:
    """Evaluate one real harmonic at unit direction(s) ``d`` (shape ``(..., 3)``)."""
    d = _as_directions(d)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    val = normalization(idx.n, idx.m) * legendre_factor(idx.n, idx.m)(z)
    if idx.m > 0:
        # (1 - z^2)^(m/2) cos(m phi) = Re((x + iy)^m), likewise Im for sine.
        w = (x + 1j * y) ** idx.m
        val = val * (w.real if idx.parity == "even" else w.imag)
    if np.ndim(val) == 0:
        return float(val)
    return val


def sh_basis(d, order: int) -> np.ndarray:
    """All harmonics up to ``order`` at directions ``d``; shape ``(..., (order+1)^2)``."""
    d = _as_directions(d)
    out = np.empty(d.shape[:-1] + (num_harmonics(order),))
    for idx in harmonic_indices(order):
        out[..., idx.flat] = eval_real_sh(idx, d)
    return out


def zonal(n: int, z) -> np.ndarray:
    """``Y_n0`` as a function of ``z = cos(theta)``."""
    return normalization(n, 0) * legendre_factor(n, 0)(np.asarray(z, dtype=float))


@dataclass(frozen=True)
class ReflectanceKernel:
    """Band-limited isotropic kernel described by its zonal coefficients.

    Attributes
    ----------
    zonal_coeffs : ndarray, shape (N + 1,)
        Projections ``k_(n)`` of the kernel onto ``Y_n0``.
    funk_hecke : ndarray, shape (N + 1,)
        Convolution gains ``alpha_(n) = sqrt(4 pi / (2n + 1)) k_(n)``.
    name : str
        Preset name, or ``"custom"``.
    """

    zonal_coeffs: np.ndarray
    funk_hecke: np.ndarray
    name: str = "custom"

    @property
    def max_order(self) -> int:
        return len(self.zonal_coeffs) - 1

    @classmethod
    def from_zonal(cls, coeffs, name: str = "custom") -> "ReflectanceKernel":
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1 or len(coeffs) == 0:
            raise KernelError("zonal coefficients must be a non-empty 1-d array")
        if len(coeffs) - 1 > MAX_ORDER:
            raise KernelError(f"order {len(coeffs) - 1} exceeds MAX_ORDER={MAX_ORDER}")
        if not np.all(np.isfinite(coeffs)):
            raise KernelError("non-finite kernel coefficients")
        n = np.arange(len(coeffs))
        gains = np.sqrt(4 * pi / (2 * n + 1)) * coeffs
        coeffs.setflags(write=False)
        gains.setflags(write=False)
        return cls(coeffs, gains, name)

    def __call__(self, theta) -> np.ndarray:
        """Band-limited kernel value at polar angle ``theta``."""
        z = np.cos(np.asarray(theta, dtype=float))
        return sum(k * zonal(n, z) for n, k in enumerate(self.zonal_coeffs))

    def gains_per_harmonic(self, order: int | None = None) -> np.ndarray:
        """Gain ``alpha_(n(s))`` for every flat harmonic index ``s``."""
        order = self.max_order if order is None else order
        g = np.zeros(num_harmonics(order))
        for n in range(min(order, self.max_order) + 1):
            g[n * n:(n + 1) ** 2] = self.funk_hecke[n]
        return g

    def is_single_lobe(self, samples: int = 2049, ripple: float = 0.1) -> bool:
        """Sampled single-lobe test.

        The kernel must be non-increasing on ``[0, theta_0]``, where ``theta_0``
        is its first zero crossing (or ``pi``), and beyond ``theta_0`` its
        magnitude must stay below ``ripple`` times the peak. Truncated
        clamped kernels ring slightly past the shadow line, hence the ripple
        allowance.
        """
        vals = self(np.linspace(0.0, pi, samples))
        peak = vals[0]
        if peak <= 0:
            return False
        tol = 1e-12 * peak
        neg = np.flatnonzero(vals <= 0)
        stop = neg[0] if len(neg) else samples
        if np.any(np.diff(vals[:stop]) > tol):
            return False
        return bool(np.all(np.abs(vals[stop:]) <= ripple * peak))


def _gauss_legendre_panels(edges, nodes_per_panel):
    x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
    zs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        zs.append(0.5 * (b - a) * x + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * w)
    return np.concatenate(zs), np.concatenate(ws)


def kernel_from_samples(k: Callable, max_order: int, nodes: int = 64,
                        panels: int = 16) -> ReflectanceKernel:
    """Project a zonal kernel ``k(theta)`` onto ``Y_n0`` for ``n <= max_order``.

    Uses composite Gauss-Legendre quadrature in ``z = cos(theta)``. Panel
    edges include ``z = 0`` so the attached-shadow kink of clamped kernels
    falls on a panel boundary. The azimuthal integral of a zonal integrand is
    exactly ``2 pi`` and is applied analytically.
    """
    if max_order < 0:
        raise KernelError("max_order must be >= 0")
    if panels % 2:
        panels += 1
    edges = np.linspace(-1.0, 1.0, panels + 1)
    z, w = _gauss_legendre_panels(edges, nodes)
    vals = np.asarray(k(np.arccos(z)), dtype=float) * np.ones_like(z)
    if not np.all(np.isfinite(vals)):
        raise KernelError("kernel produced non-finite samples")
    coeffs = [2 * pi * np.sum(w * vals * zonal(n, z)) for n in range(max_order + 1)]
    return ReflectanceKernel.from_zonal(coeffs)


def kernel_preset(name: str, max_order: int = 2) -> ReflectanceKernel:
    """Named kernels: ``lambertian``, ``constant``, ``cosine-unclamped``."""
    funcs = {
        "lambertian": lambda t: np.maximum(np.cos(t), 0.0),
        "constant": lambda t: np.ones_like(t),
        "cosine-unclamped": np.cos,
    }
    if name not in funcs:
        raise KeyError(f"unknown kernel preset {name!r}; choose from {sorted(funcs)}")
    kern = kernel_from_samples(funcs[name], max_order)
    coeffs = np.array(kern.zonal_coeffs)
    # Zero out quadrature noise on coefficients that vanish analytically.
    coeffs[np.abs(coeffs) < 1e-13] = 0.0
    return ReflectanceKernel.from_zonal(coeffs, name=name)


def intensity(normal, albedo, kernel: ReflectanceKernel, light) -> np.ndarray | float:
    """Image intensity ``rho * sum_s alpha_s l_s Y_s(normal)``.

    ``light`` is a vector of lighting coefficients in flat order. Orders of the
    kernel and the lighting are truncated to the smaller of the two.
    """
    light = np.asarray(light, dtype=float)
    order = min(kernel.max_order, int(np.sqrt(len(light))) - 1)
    s = num_harmonics(order)
    basis = sh_basis(normal, order)
    val = albedo * (basis @ (kernel.gains_per_harmonic(order) * light[:s]))
    if np.ndim(val) == 0:
        return float(val)
    return val


def dirac_lighting(direction, order: int) -> np.ndarray:
    """Harmonic coefficients ``l_s = Y_s(direction)`` of a unit directional light."""
    return sh_basis(direction, order)


def distance_constant_terms(kernel: ReflectanceKernel) -> tuple[float, float]:
    """Return ``(a, b)`` with ``v_p . v_q ~ a - b theta^2 / 2`` for nearby normals.

    With ``n_p = (0, 0, 1)`` and ``n_q = (sin t, 0, cos t)`` each term
    ``alpha_(n)^2 Y_s(n_p) Y_s(n_q)`` is a polynomial in ``z = cos t``; harmonics
    with ``m > 0`` vanish at the pole. ``a`` is the sum of the polynomials at
    ``z = 1`` and ``b`` the sum of their derivatives there.
    """
    total = Polynomial([0.0])
    for n, gain in enumerate(kernel.funk_hecke):
        c = normalization(n, 0)
        q = legendre_factor(n, 0)
        total = total + gain ** 2 * (c * q(1.0)) * (c * q)
    return float(total(1.0)), float(total.deriv()(1.0))


def predicted_distance_constant(kernel: ReflectanceKernel) -> float:
    """Constant ``c = sqrt(b / a)`` relating intensity distance to geodesic distance."""
    a, b = distance_constant_terms(kernel)
    tol = 1e-14 * max(abs(a), 1.0)
    if a <= tol:
        raise KernelError(f"kernel is not single lobe: a = {a:.3g} <= 0")
    if b < -tol:
        raise KernelError(f"kernel is not single lobe: b = {b:.3g} < 0")
    return sqrt(max(b, 0.0) / a)
