"""How far apart are the intensity vectors of two nearby normals?

Compares the predicted ratio (order-2 spherical-harmonic kernel) with Monte
Carlo estimates on a rendered sphere, for the band-limited kernel and for
exact clamped-cosine shading.

    python demos/distance_constant.py
"""

import numpy as np

from hemiembed.claims import estimate_distance_constant
from hemiembed.render import make_sphere_scene
from hemiembed.sh import ReflectanceKernel, distance_constant_terms, kernel_preset, predicted_distance_constant


def main():
    lam = kernel_preset("lambertian", 2)
    a, b = distance_constant_terms(lam)
    print(f"a = {a:.6f} (127 pi / 192 = {127 * np.pi / 192:.6f})")
    print(f"b = {b:.6f} (109 pi / 192 = {109 * np.pi / 192:.6f})")
    print(f"predicted c = {predicted_distance_constant(lam):.6f}")

    scene = make_sphere_scene(64)
    order1 = ReflectanceKernel.from_zonal([0.0, lam.zonal_coeffs[1]], name="order-1")
    runs = [("order-2 kernel, unclipped", "sh-kernel", lam, False),
            ("order-1 kernel, unclipped", "sh-kernel", order1, False),
            ("exact clamped cosine", "exact-lambertian", None, True)]
    for name, mode, kernel, clip in runs:
        est = estimate_distance_constant(scene, 2000, 1, mode, kernel, clip)
        print(f"{name:28s} median ratio {est.median:.4f} over {est.pairs} pairs")
    # The clamped cosine has correlation (sin t + (pi - t) cos t) / pi, whose
    # ratio tends to 1 - t / (3 pi): the shadow kink, not the low orders,
    # dominates at small angles.
    t = 0.1
    rho = (np.sin(t) + (np.pi - t) * np.cos(t)) / np.pi
    print(f"closed form for the clamped cosine at t = {t}: {np.sqrt(2 * (1 - rho)) / t:.4f}")


if __name__ == "__main__":
    main()
