import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pointcloud_defense.Errors import CloudParseError, ContractError, ParameterError
from pointcloud_defense.NeighborIndex import build_index, farthest_point_sample
from pointcloud_defense.PointCloud import (
    SHAPE_FAMILIES, PointCloud, ShapeSpec, load_cloud, normalize_unit_cube, sample_shape, save_cloud)


def brute_knn(points, i, k):
    d = np.sqrt(np.sum((points - points[i]) ** 2, axis=-1))
    d[i] = np.inf
    order = np.lexsort((np.arange(len(points)), d))[:min(k, len(points) - 1)]
    return order, d[order]


def random_cloud(seed, n, grid=False):
    rng = np.random.default_rng(seed)
    if grid:
        return rng.integers(0, 4, size=(n, 3)) / 4.0
    return rng.random((n, 3))


"""
Sphere samples stay within the clipped jitter band around the radius
"""
def test_sample_sphere_radial_bound():
    cloud = sample_shape(ShapeSpec('sphere', scale=0.5, jitter=0.005), 1024, seed=7)
    r = np.linalg.norm(cloud.points, axis=1)
    assert len(cloud) == 1024
    assert r.min() >= 0.5 - 4 * 0.005
    assert r.max() <= 0.5 + 4 * 0.005


"""
A single cube sample lies on the cube surface
"""
def test_sample_cube_single_point():
    cloud = sample_shape(ShapeSpec('cube', scale=0.5, jitter=0.0), 1, seed=0)
    assert len(cloud) == 1
    assert np.max(np.abs(cloud.points)) == pytest.approx(0.5, abs=1e-12)


"""
Sampling is deterministic per seed and differs across seeds, for every family
"""
def test_sample_determinism():
    for family in SHAPE_FAMILIES:
        a = sample_shape(ShapeSpec(family), 256, seed=3)
        b = sample_shape(ShapeSpec(family), 256, seed=3)
        c = sample_shape(ShapeSpec(family), 256, seed=4)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)


"""
Invalid shape parameters are rejected
"""
def test_sample_invalid_spec():
    with pytest.raises(ParameterError):
        sample_shape(ShapeSpec('dodecahedron'), 10, seed=0)
    with pytest.raises(ParameterError):
        sample_shape(ShapeSpec('sphere', jitter=-1.0), 10, seed=0)
    with pytest.raises(ParameterError):
        sample_shape(ShapeSpec('sphere', scale=0.0), 10, seed=0)
    with pytest.raises(ParameterError):
        sample_shape(ShapeSpec('sphere'), 0, seed=0)


"""
PointCloud refuses empty, malformed and non-finite input
"""
def test_point_cloud_contract():
    with pytest.raises(ContractError):
        PointCloud(np.empty((0, 3)))
    with pytest.raises(ContractError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(ContractError):
        PointCloud([[0.0, np.nan, 0.0]])
    assert len(PointCloud([1.0, 2.0, 3.0])) == 1


"""
Unit-cube normalization maps corners exactly and collapses degenerate clouds
"""
def test_normalize_examples():
    out = normalize_unit_cube([[-1, -1, -1], [1, 1, 1]])
    assert np.array_equal(out.points, [[0, 0, 0], [1, 1, 1]])
    single = normalize_unit_cube([[3, 4, 5]])
    assert np.array_equal(single.points, [[0.5, 0.5, 0.5]])


"""
Normalized clouds fit the unit cube with a longest side of 1, and
normalizing twice changes nothing
"""
@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 200))
def test_normalize_properties(seed, n):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(n, 3)) * rng.uniform(0.1, 10, size=3) + rng.normal(size=3) * 5
    once = normalize_unit_cube(points).points
    extent = once.max(axis=0) - once.min(axis=0)
    assert once.min() >= 0.0 and once.max() <= 1.0
    assert abs(extent.max() - 1.0) < 1e-9
    twice = normalize_unit_cube(once).points
    assert np.max(np.abs(twice - once)) < 1e-12


"""
Saving and loading a cloud reproduces every coordinate
"""
def test_save_load_round_trip(tmp_path):
    cloud = sample_shape(ShapeSpec('torus'), 300, seed=1)
    path = str(tmp_path / 'torus.xyz')
    save_cloud(cloud, path)
    assert open(path).readline().strip() == '300 3'
    assert np.array_equal(load_cloud(path).points, cloud.points)


"""
Headerless files and comment lines are accepted
"""
def test_load_without_header(tmp_path):
    path = tmp_path / 'plain.xyz'
    path.write_text('# comment\n0.1 0.2 0.3\n\n0.4 0.5 0.6\n')
    assert np.array_equal(load_cloud(str(path)).points, [[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])


"""
Malformed lines produce a parse error naming the offending line
"""
def test_load_errors(tmp_path):
    arity = tmp_path / 'arity.xyz'
    arity.write_text('0.1 0.2 0.3\n0.1 0.2\n')
    with pytest.raises(CloudParseError) as exc_info:
        load_cloud(str(arity))
    assert exc_info.value.line == 2

    bad = tmp_path / 'bad.xyz'
    bad.write_text('2 3\n0.1 0.2 0.3\n0.1 x 0.3\n')
    with pytest.raises(CloudParseError) as exc_info:
        load_cloud(str(bad))
    assert exc_info.value.line == 3

    inf = tmp_path / 'inf.xyz'
    inf.write_text('0.1 inf 0.3\n')
    with pytest.raises(CloudParseError):
        load_cloud(str(inf))

    short = tmp_path / 'short.xyz'
    short.write_text('3 3\n0.1 0.2 0.3\n')
    with pytest.raises(CloudParseError):
        load_cloud(str(short))


"""
kNN queries clamp k and never return the query point
"""
def test_knn_small_examples():
    index = build_index([[0, 0, 0], [1, 0, 0]])
    indices, distances = index.query(0, 1)
    assert list(indices) == [1]
    assert list(distances) == [1.0]
    index = build_index(random_cloud(0, 5))
    indices, _ = index.query(2, 10)
    assert sorted(indices) == [0, 1, 3, 4]
    assert len(build_index([[0, 0, 0]]).query(0, 3)[0]) == 0


"""
On a 1024-point cloud the 2-NN of every point equal brute force
"""
def test_knn_matches_brute_force_large():
    points = sample_shape(ShapeSpec('cone'), 1024, seed=11).points
    index = build_index(points)
    indices, distances = index.query_all(2)
    for i in range(len(points)):
        expected, expected_d = brute_knn(points, i, 2)
        assert np.array_equal(indices[i], expected)
        assert np.array_equal(distances[i], expected_d)


"""
kNN results equal brute force exactly, ties included
"""
@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 120), st.integers(1, 8), st.booleans())
def test_knn_matches_brute_force(seed, n, k, grid):
    points = random_cloud(seed, n, grid)
    index = build_index(points)
    all_indices, _ = index.query_all(k)
    for i in range(n):
        expected, expected_d = brute_knn(points, i, k)
        indices, distances = index.query(i, k)
        assert np.array_equal(indices, expected)
        assert np.array_equal(distances, expected_d)
        assert np.array_equal(all_indices[i], expected)


"""
Farthest point sampling returns distinct indices and is order independent
"""
def test_farthest_point_sample():
    points = random_cloud(5, 64)
    picks = farthest_point_sample(points, 10)
    assert len(set(picks.tolist())) == 10
    perm = np.random.default_rng(0).permutation(64)
    permuted = farthest_point_sample(points[perm], 10)
    assert np.array_equal(np.sort(perm[permuted]), np.sort(picks))
