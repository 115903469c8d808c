#!/usr/bin/env python3
"""
Test array geometry: direction vectors, steering vectors, grids and the
block-diagonal steering matrices.
"""

import sys
import os

# Add project root to path
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.errors import DegenerateGeometryError, ValidationError
from core.geometry import (
    SearchGrid,
    SensingNode,
    build_steering_set,
    direction_vector,
    steering_vector,
    target_steering_set,
)


def line_nodes(num_antennas=64):
    return [
        SensingNode([5.0, 0.0, 6.0], num_antennas=num_antennas),
        SensingNode([15.0, 0.0, 6.0], num_antennas=num_antennas),
    ]


def test_direction_unit_offset():
    assert_allclose(direction_vector([0, 0, 0], [1, 0, 0]), [-1.0, 0.0, 0.0])


def test_direction_with_node_height():
    expected = np.array([-2.8, 0.0, 6.0]) / np.linalg.norm([-2.8, 0.0, 6.0])
    assert_allclose(direction_vector([5, 0, 6], [7.8, 0, 0]), expected, rtol=1e-14)


def test_direction_coincident_point_is_rejected():
    with pytest.raises(DegenerateGeometryError):
        direction_vector([1, 2, 3], [1, 2, 3])


def test_steering_vector_matches_scalar_loop():
    node = SensingNode([5.0, 0.0, 6.0], num_antennas=4, spacing_over_wavelength=0.5)
    point = [8.0, 0.0, 0.0]

    offset = np.array([5.0 - 8.0, 0.0, 6.0])
    cos_angle = offset[0] / np.sqrt(offset @ offset)
    expected = []
    for m in range(4):
        phase = 2 * np.pi * 0.5 * m * cos_angle
        expected.append(complex(np.cos(phase), np.sin(phase)) / 2.0)

    assert_allclose(steering_vector(node, point), expected, rtol=1e-12, atol=1e-15)


def test_steering_vector_has_unit_norm():
    node = SensingNode([0.0, 10.0, 6.0], axis=[0.0, 1.0, 0.0], num_antennas=64)
    for point in ([3.5, 13.5, 0.0], [19.0, 1.0, 0.0], [10.0, 10.0, 0.0]):
        assert np.linalg.norm(steering_vector(node, point)) == pytest.approx(1.0, abs=1e-12)


def test_node_rejects_non_unit_axis():
    with pytest.raises(ValidationError):
        SensingNode([0.0, 0.0, 0.0], axis=[1.0, 1.0, 0.0])


def test_node_rejects_bad_antenna_count():
    with pytest.raises(ValidationError):
        SensingNode([0.0, 0.0, 0.0], num_antennas=0)


def test_line_grid_includes_both_ends():
    grid = SearchGrid.line([0, 0], [20, 0], 0.1)
    assert len(grid) == 201
    assert_allclose(grid.points[0], [0, 0, 0])
    assert_allclose(grid.points[-1], [20, 0, 0])
    assert_allclose(grid.points[78], [7.8, 0, 0], atol=1e-12)
    assert grid.shape == (201,)
    assert grid.step == pytest.approx(0.1)


def test_rectangle_grid_is_row_major():
    grid = SearchGrid.rectangle([1, 19], [1, 19], 0.5)
    assert len(grid) == 37 * 37
    assert grid.shape == (37, 37)
    # index = iy * nx + ix, x varies fastest
    assert_allclose(grid.points[1], [1.5, 1.0, 0.0])
    assert_allclose(grid.points[37], [1.0, 1.5, 0.0])
    assert grid.nearest_index([3.5, 13.5]) == 25 * 37 + 5


def test_grid_rejects_duplicate_points():
    with pytest.raises(ValidationError):
        SearchGrid.from_points([[0, 0], [1, 0], [0, 0]])


def test_explicit_points_step_is_smallest_gap():
    grid = SearchGrid.from_points([[0, 0], [2, 0], [2.5, 0]])
    assert grid.kind == "points"
    assert grid.step == pytest.approx(0.5)


def test_block_diagonal_steering_is_orthonormal():
    steering = build_steering_set(line_nodes(), SearchGrid.line([0, 0], [20, 0], 0.1))
    assert steering.num_points == 201
    for i in range(steering.num_points):
        a = steering.matrix(i)
        assert a.shape == (128, 2)
        assert_allclose(a.conj().T @ a, np.eye(2), atol=1e-10)


def test_stacked_matches_matrix():
    steering = build_steering_set(line_nodes(8), SearchGrid.line([0, 0], [4, 0], 1.0))
    for i in range(steering.num_points):
        assert_allclose(steering.stacked[:, i, :], steering.matrix(i))


def test_vectorized_set_matches_single_vectors():
    nodes = line_nodes(16)
    grid = SearchGrid.line([0, 0], [20, 0], 2.5)
    steering = build_steering_set(nodes, grid)
    for i, point in enumerate(grid.points):
        for l, node in enumerate(nodes):
            assert_allclose(steering.vectors[i, l], steering_vector(node, point), atol=1e-13)


def test_grid_point_on_node_names_the_index():
    nodes = [SensingNode([2.0, 0.0, 0.0], num_antennas=4)]
    with pytest.raises(DegenerateGeometryError) as info:
        build_steering_set(nodes, SearchGrid.line([0, 0], [4, 0], 1.0))
    assert info.value.grid_index == 2


def test_nodes_must_share_antenna_count():
    nodes = [SensingNode([0, 0, 6], num_antennas=4), SensingNode([10, 0, 6], num_antennas=8)]
    with pytest.raises(ValidationError):
        build_steering_set(nodes, SearchGrid.line([0, 0], [4, 0], 1.0))


def test_target_steering_allows_repeated_positions():
    steering = target_steering_set(line_nodes(4), [[8, 0], [8, 0]])
    assert steering.vectors.shape == (2, 2, 4)
    assert_allclose(steering.vectors[0], steering.vectors[1])


def test_direction_reverses_when_endpoints_swap():
    rng = np.random.default_rng(3)
    for _ in range(20):
        u, p = rng.uniform(-10, 10, 3), rng.uniform(-10, 10, 3)
        assert_allclose(direction_vector(u, p), -direction_vector(p, u), rtol=1e-14, atol=1e-15)


def test_steering_phase_advances_by_a_constant_step():
    node = SensingNode([5.0, 0.0, 6.0], num_antennas=16, spacing_over_wavelength=0.5)
    for point in ([8.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 3.0, 0.0]):
        a = steering_vector(node, point)
        increments = np.angle(a[1:] / a[:-1])
        expected = 2 * np.pi * 0.5 * direction_vector(node.position, point) @ node.axis
        assert_allclose(increments, expected, atol=1e-12)


def test_grid_step_must_divide_the_span():
    with pytest.raises(ValidationError):
        SearchGrid.line([0, 0], [4, 0], 0.3)
    with pytest.raises(ValidationError):
        SearchGrid.rectangle([0, 4], [0, 1], 0.3)
    with pytest.raises(ValidationError):
        SearchGrid.rectangle([4, 0], [0, 1], 0.5)

    # Realized spacing equals the declared step
    grid = SearchGrid.line([0, 0], [20, 0], 0.1)
    assert_allclose(np.diff(grid.points[:, 0]), 0.1, atol=1e-12)


if __name__ == "__main__":
    pytest.main([__file__])
