# file: test/test_layout.py
import json

import numpy as np
import pytest

# Import helper to fix path
from test_helper import *

from src.layout.deformation import (LayoutKind, LayoutParams, check_points, deform, deform_dtheta,
                                    deform_inverse, jacobian, jacobian_det)
from src.layout.export import (deformed_grid_lines, export_layout_svg, load_layout_json,
                               pixel_density_map, save_layout_json)
from src.layout.grid import Edge, SensorGrid, boundary_param, pixel_region, uniform_pixel_bounds
from src.utils.errors import DomainError

KINDS = [LayoutKind.CURVILINEAR, LayoutKind.RECTANGULAR]


def random_points(n, seed=0):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(n, 2))


def test_layout_kind_aliases():
    assert LayoutKind.parse("curv") is LayoutKind.CURVILINEAR
    assert LayoutKind.parse("Rect") is LayoutKind.RECTANGULAR
    assert LayoutKind.parse("uniform") is LayoutKind.IDENTITY
    with pytest.raises(DomainError):
        LayoutKind.parse("hexagonal")
    print("✓ Layout kind parsing")


def test_theta_outside_domain_points_to_theta_raw():
    with pytest.raises(DomainError) as info:
        LayoutParams.from_theta("curv", (1.5, 0.0))
    assert "theta_raw" in str(info.value)
    with pytest.raises(DomainError):
        LayoutParams.from_theta("rect", (0.2, -1.0))


def test_theta_raw_saturation_stays_inside_domain():
    params = LayoutParams.from_raw("curv", (40.0, -40.0))
    assert all(abs(t) < 1.0 for t in params.theta)
    assert np.all(params.dtheta_draw() > 0.0)


def test_zero_theta_is_identity():
    p = random_points(200)
    for kind in KINDS:
        params = LayoutParams.from_theta(kind, (0.0, 0.0))
        np.testing.assert_array_equal(deform(p, params), p)
        np.testing.assert_array_equal(jacobian_det(p, params), np.ones(200))
    print("✓ theta = 0 leaves every point in place")


def test_rectangular_known_value():
    params = LayoutParams.from_theta("rect", (0.5, 0.5))
    np.testing.assert_allclose(deform(np.array([0.5, -0.5]), params), [0.25, -0.25], atol=1e-15)


def test_origin_is_fixed():
    for kind in KINDS:
        params = LayoutParams.from_theta(kind, (0.6, -0.4))
        np.testing.assert_array_equal(deform(np.zeros(2), params), np.zeros(2))


def test_sensor_boundary_is_preserved():
    t = np.linspace(-1.0, 1.0, 41)
    edges = np.concatenate([
        np.stack([t, -np.ones_like(t)], axis=-1),
        np.stack([np.ones_like(t), t], axis=-1),
        np.stack([t, np.ones_like(t)], axis=-1),
        np.stack([-np.ones_like(t), t], axis=-1),
    ])
    for kind in KINDS:
        mapped = deform(edges, LayoutParams.from_theta(kind, (0.7, -0.3)))
        np.testing.assert_allclose(np.abs(mapped).max(axis=-1), 1.0, atol=1e-12)


def test_curvilinear_keeps_unit_disk():
    p = random_points(2000, seed=3)
    p = p[np.linalg.norm(p, axis=-1) < 1.0]
    mapped = deform(p, LayoutParams.from_theta("curv", (0.8, -0.6)))
    assert np.all(np.linalg.norm(mapped, axis=-1) < 1.0)


def test_positive_theta_densifies_center():
    for kind in KINDS:
        params = LayoutParams.from_theta(kind, (0.5, 0.5))
        center = jacobian_det(np.array([[0.0, 0.0]]), params)[0]
        assert center < 1.0
    print("✓ Positive theta shrinks the center pixels")


@pytest.mark.parametrize("kind", KINDS)
def test_deformation_is_a_bijection_of_the_sensor(kind):
    p = random_points(10000, seed=1)
    q = random_points(10000, seed=2)
    rng = np.random.default_rng(11)
    for _ in range(20):
        params = LayoutParams.from_theta(kind, rng.uniform(-0.9, 0.9, size=2))
        image = deform(p, params)
        assert np.abs(image).max() <= 1.0 + 1e-12
        assert np.abs(deform_inverse(image, params) - p).max() < 1e-7
        preimage = deform_inverse(q, params)
        assert np.abs(preimage).max() <= 1.0 + 1e-12
        assert np.abs(deform(preimage, params) - q).max() < 1e-7
        assert np.all(jacobian_det(p, params) > 0.0)


@pytest.mark.parametrize("kind", KINDS)
def test_jacobian_matches_finite_differences(kind):
    params = LayoutParams.from_theta(kind, (0.45, -0.3))
    p = random_points(50, seed=5) * 0.6
    h = 1e-6
    numeric = np.empty((50, 2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        numeric[..., :, i] = (deform(p + e, params) - deform(p - e, params)) / (2.0 * h)
    np.testing.assert_allclose(jacobian(p, params), numeric, atol=1e-6)


@pytest.mark.parametrize("kind", KINDS)
def test_theta_derivative_matches_finite_differences(kind):
    theta = np.array([0.35, -0.55])
    p = random_points(50, seed=6) * 0.7
    h = 1e-6
    analytic = deform_dtheta(p, LayoutParams.from_theta(kind, theta))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        numeric = (deform(p, LayoutParams.from_theta(kind, theta + e))
                   - deform(p, LayoutParams.from_theta(kind, theta - e))) / (2.0 * h)
        np.testing.assert_allclose(analytic[..., :, j], numeric, atol=1e-6)
    # Component-separable in theta
    np.testing.assert_array_equal(analytic[..., 0, 1], 0.0)
    np.testing.assert_array_equal(analytic[..., 1, 0], 0.0)


def test_check_points_clamps_and_rejects():
    clamped = check_points(np.array([1.0 + 5e-10, -1.0]))
    np.testing.assert_array_equal(clamped, [1.0, -1.0])
    with pytest.raises(DomainError):
        check_points(np.array([1.1, 0.0]))
    with pytest.raises(DomainError):
        check_points(np.array([np.nan, 0.0]))
    with pytest.raises(DomainError):
        check_points(np.zeros(3))


def test_sensor_grid():
    grid = SensorGrid.parse("4x3")
    assert grid.shape == (4, 3)
    assert grid.pixel_area == pytest.approx(4.0 / 12.0)
    assert str(grid) == "4x3"
    assert len(grid.indices()) == 12
    with pytest.raises(DomainError):
        SensorGrid.parse("4by3")
    with pytest.raises(DomainError):
        SensorGrid(0, 2)


def test_uniform_pixel_bounds():
    grid = SensorGrid(2, 2)
    bounds = uniform_pixel_bounds(grid, (1, 0))
    assert (bounds.x0, bounds.x1, bounds.y0, bounds.y1) == (0.0, 1.0, -1.0, 0.0)
    assert bounds.area == pytest.approx(1.0)
    with pytest.raises(DomainError):
        uniform_pixel_bounds(grid, (2, 0))


def test_boundary_normals_point_outward_under_identity():
    region = pixel_region(SensorGrid(2, 2), (0, 0), LayoutParams.identity())
    expected = {Edge.BOTTOM: (0.0, -1.0), Edge.RIGHT: (1.0, 0.0), Edge.TOP: (0.0, 1.0), Edge.LEFT: (-1.0, 0.0)}
    t = np.array([0.25, 0.5, 0.75])
    for edge, normal in expected.items():
        side = boundary_param(region, edge)
        np.testing.assert_allclose(side.normal(t), np.tile(normal, (3, 1)), atol=1e-15)
        np.testing.assert_allclose(side.line_element(t), 1.0)


def test_boundary_traversal_is_closed():
    region = pixel_region(SensorGrid(3, 3), (1, 2), LayoutParams.from_theta("curv", (0.4, 0.2)))
    sides = [boundary_param(region, edge) for edge in Edge]
    for current, following in zip(sides, sides[1:] + sides[:1]):
        np.testing.assert_allclose(current.point(1.0), following.point(0.0), atol=1e-15)


def test_deformed_grid_lines():
    grid = SensorGrid(4, 2)
    lines = deformed_grid_lines(grid, LayoutParams.from_theta("rect", (0.3, 0.3)), samples_per_edge=8)
    assert len(lines) == (grid.r1 + 1) + (grid.r2 + 1)
    assert all(line.shape[1] == 2 for line in lines)


def test_pixel_density_map():
    np.testing.assert_allclose(pixel_density_map(LayoutParams.identity(), 8), np.ones((8, 8)))
    density = pixel_density_map(LayoutParams.from_theta("curv", (0.5, 0.5)), 9)
    assert density[4, 4] > density[0, 4]


def test_layout_svg_and_json(tmp_path):
    grid = SensorGrid(4, 4)
    params = LayoutParams.from_theta("curv", (0.56, 0.38))
    svg = export_layout_svg(tmp_path / "layout.svg", grid, params, density_resolution=4)
    text = svg.read_text()
    assert "<svg" in text
    assert text.count("<polyline") == 10

    path = save_layout_json(tmp_path / "layout.json", grid, params)
    data = json.loads(path.read_text())
    assert data["kind"] == "curvilinear" and data["r1"] == 4
    loaded_grid, loaded = load_layout_json(path)
    assert loaded_grid == grid
    assert loaded.theta_raw == params.theta_raw
    print("✓ Layout export")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
