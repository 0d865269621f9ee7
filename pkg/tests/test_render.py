import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hemiembed.render import (
    ImageStack,
    Scene,
    empirical_light_gram,
    make_sphere_scene,
    render_stack,
    sample_hemisphere,
    sample_spiral_lights,
    sample_uniform_lights,
)
from hemiembed.sh import kernel_preset


def test_sphere_scene_geometry():
    s = make_sphere_scene(32)
    n = s.normals[s.mask]
    np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
    assert np.all(n[:, 2] > 0)
    assert s.radius == 16
    # Depth is the height of the sphere cap, so its gradient matches the normals.
    rows, cols = np.nonzero(s.mask)
    c = (32 - 1) / 2
    x, y = (cols - c) / s.radius, (rows - c) / s.radius
    np.testing.assert_allclose(n[:, 0], x / np.sqrt(x * x + y * y + (1 - x * x - y * y)), atol=1e-12)
    np.testing.assert_allclose(s.depth[s.mask], np.sqrt(1 - x * x - y * y) * s.radius, atol=1e-12)


def test_scene_rejects_back_facing():
    mask = np.ones((2, 2), dtype=bool)
    normals = np.zeros((2, 2, 3))
    normals[..., 2] = -1
    with pytest.raises(ValueError):
        Scene(mask, normals, mask.astype(float))


def test_checker_albedo():
    s = make_sphere_scene(32, "checker")
    assert set(np.unique(s.albedo[s.mask])) == {0.5, 1.0}


def test_light_samplers():
    for L in (sample_uniform_lights(500, 1), sample_spiral_lights(500), sample_hemisphere(500, 2)):
        np.testing.assert_allclose(np.linalg.norm(L, axis=1), 1.0, atol=1e-12)
    assert np.all(sample_hemisphere(200, 0)[:, 2] >= 0)
    np.testing.assert_array_equal(sample_uniform_lights(10, 4), sample_uniform_lights(10, 4))
    with pytest.raises(ValueError):
        sample_uniform_lights(0, 1)


def test_spiral_lights_are_balanced():
    L = sample_spiral_lights(90)
    assert np.abs(L.mean(axis=0)).max() < 0.02
    # Equal-area bands: every z-slab of width 0.2 holds about a tenth of them.
    counts = np.histogram(L[:, 2], bins=10, range=(-1, 1))[0]
    assert counts.min() >= 8 and counts.max() <= 10


def test_exact_render_matches_formula(small_sphere):
    L = sample_uniform_lights(5, 0)
    stack = render_stack(small_sphere, L)
    n = small_sphere.normals[small_sphere.mask]
    np.testing.assert_allclose(stack.pixel_vectors(), np.maximum(n @ L.T, 0))
    assert np.all(stack.images[:, ~small_sphere.mask] == 0)
    assert stack.count == 5


def test_sh_render_approaches_exact_at_high_order(small_sphere):
    L = sample_uniform_lights(20, 1)
    exact = render_stack(small_sphere, L).pixel_vectors()
    approx = render_stack(small_sphere, L, "sh-kernel", kernel_preset("lambertian", 8)).pixel_vectors()
    assert np.abs(exact - approx).max() < 0.05


def test_noise_is_seeded(small_sphere):
    L = sample_uniform_lights(4, 0)
    a = render_stack(small_sphere, L, noise_sigma=0.01, seed=3).images
    b = render_stack(small_sphere, L, noise_sigma=0.01, seed=3).images
    np.testing.assert_array_equal(a, b)


def test_render_errors(small_sphere):
    with pytest.raises(ValueError):
        render_stack(small_sphere, np.empty((0, 3)))
    with pytest.raises(ValueError):
        render_stack(small_sphere, [[0, 0, 1]], mode="sh-kernel")
    with pytest.raises(ValueError):
        render_stack(small_sphere, [[0, 0, 1]], mode="phong")


def test_stack_shape_check():
    with pytest.raises(ValueError):
        ImageStack(np.zeros((2, 3, 3)), np.ones((4, 4), dtype=bool))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_light_gram_tends_to_identity(seed):
    G = empirical_light_gram(sample_uniform_lights(20_000, seed), 2)
    assert np.abs(G - np.eye(9)).max() < 0.1
