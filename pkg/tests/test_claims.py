import numpy as np
import pytest

from hemiembed.claims import eigen_pattern_check, estimate_distance_constant, pair_ratios
from hemiembed.render import ImageStack, make_sphere_scene, render_stack, sample_uniform_lights
from hemiembed.sh import ReflectanceKernel, kernel_preset


def test_pair_ratios_of_normals_themselves():
    # With the normals as "images", the chord-to-angle ratio is 2 sin(t/2)/t.
    scene = make_sphere_scene(32)
    images = np.moveaxis(scene.normals, -1, 0)
    est = pair_ratios(scene, ImageStack(images, scene.mask))
    np.testing.assert_allclose(est.ratios, 2 * np.sin(est.angles / 2) / est.angles, rtol=1e-9)
    assert est.pairs > 100
    assert np.all((est.angles >= 0.02) & (est.angles <= 0.2))


def test_pair_ratios_empty_range():
    scene = make_sphere_scene(24)
    stack = render_stack(scene, sample_uniform_lights(10, 0))
    with pytest.raises(ValueError):
        pair_ratios(scene, stack, angle_range=(3.0, 3.1))


def test_order_one_kernel_gives_unit_constant():
    lam = kernel_preset("lambertian", 2)
    order1 = ReflectanceKernel.from_zonal([0.0, lam.zonal_coeffs[1]])
    est = estimate_distance_constant(make_sphere_scene(48), 500, 2, "sh-kernel", order1, clip=False)
    assert est.median == pytest.approx(1.0, abs=0.02)


def test_eigen_pattern_small():
    chk = eigen_pattern_check(count=600, seed=5, k=20)
    assert chk.max_residual < 0.15
    assert chk.z_correlation > 0.99
    assert len(chk.series()) == 9
    np.testing.assert_allclose(chk.recovered[4], 0, atol=1e-6 * chk.scale)


def test_exact_lambertian_matches_clamped_cosine_correlation():
    # For lights uniform on the sphere, the normalized correlation of two
    # clamped-cosine responses at angle t is (sin t + (pi - t) cos t) / pi.
    est = estimate_distance_constant(make_sphere_scene(48), 4000, 11)
    t = est.angles
    rho = (np.sin(t) + (np.pi - t) * np.cos(t)) / np.pi
    predicted = np.sqrt(2 * (1 - rho)) / t
    assert np.median(est.ratios) == pytest.approx(np.median(predicted), abs=0.01)
    # Far above the band-limited value; the attached-shadow kink keeps c near 1.
    assert est.median > 0.97
