import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from pointcloud_defense.Defenses import *
from pointcloud_defense.Errors import ContractError, ParameterError
from pointcloud_defense.Metrics import identify_adv_points, removal_ratio
from pointcloud_defense.NeighborIndex import build_index, pairwise_distances
from pointcloud_defense.PointCloud import ShapeSpec, normalize_unit_cube, sample_shape

SQUARE = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]
SQUARE_WITH_OUTLIER = SQUARE + [[0.5, 0.5, 10.0]]


def brute_sor(points, k, alpha):
    d = pairwise_distances(points[:, None, :], points[None, :, :])
    np.fill_diagonal(d, np.inf)
    kk = min(k, len(points) - 1)
    mean_d = np.sort(d, axis=1)[:, :kk].copy().mean(axis=1)
    kept = np.flatnonzero(mean_d < mean_d.mean() + alpha * mean_d.std())
    return kept if len(kept) else np.arange(len(points))


"""
The far point above a unit square is removed
"""
def test_sor_removes_outlier():
    outcome = sor(SQUARE_WITH_OUTLIER, SorConfig(k=2, alpha=1.1))
    assert list(outcome.removed) == [4]
    assert list(outcome.kept) == [0, 1, 2, 3]
    assert np.array_equal(outcome.cloud.points, SQUARE)


"""
When every point has the same neighborhood nothing is removed
"""
def test_sor_uniform_cloud_unchanged():
    outcome = sor(SQUARE, SorConfig(k=2, alpha=1.1))
    assert len(outcome.removed) == 0
    assert np.array_equal(outcome.cloud.points, SQUARE)


"""
SOR rejects bad settings and clouds too small to have neighbors
"""
def test_sor_errors():
    with pytest.raises(ContractError):
        sor([[0.0, 0.0, 0.0]], SorConfig())
    with pytest.raises(ParameterError):
        sor(SQUARE, SorConfig(k=0))
    with pytest.raises(ParameterError):
        sor(SQUARE, SorConfig(alpha=-1.0))


"""
SOR keeps exactly the points a brute-force computation keeps
"""
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 80), st.sampled_from([1, 2, 5]),
       st.sampled_from([0.5, 1.1, 2.0]))
def test_sor_matches_brute_force(seed, n, k, alpha):
    points = np.random.default_rng(seed).random((n, 3))
    outcome = sor(points, SorConfig(k, alpha))
    assert np.array_equal(outcome.kept, brute_sor(points, k, alpha))
    assert np.array_equal(outcome.cloud.points, points[outcome.kept])


"""
A larger alpha never removes more points
"""
def test_sor_alpha_monotone():
    points = np.random.default_rng(1).random((300, 3))
    kept = [set(sor(points, SorConfig(2, alpha)).kept.tolist()) for alpha in (0.5, 1.1, 2.0, 4.0)]
    for smaller, larger in zip(kept, kept[1:]):
        assert smaller <= larger


"""
SRS keeps n - r input points in input order, deterministically per seed
"""
def test_srs_basics():
    points = np.random.default_rng(2).random((50, 3))
    assert np.array_equal(srs(points, 0).cloud.points, points)
    outcome = srs(points, 49, seed=3)
    assert len(outcome.cloud) == 1
    outcome = srs(points, 20, seed=4)
    assert len(outcome.cloud) == 30 and len(outcome.removed) == 20
    assert np.array_equal(outcome.cloud.points, points[outcome.kept])
    assert np.all(np.diff(outcome.kept) > 0)
    assert np.array_equal(srs(points, 20, seed=4).kept, outcome.kept)
    for r in (-1, 50):
        with pytest.raises(ParameterError):
            srs(points, r)


"""
Every point is equally likely to be dropped
"""
def test_srs_uniform():
    points = np.random.default_rng(5).random((10, 3))
    counts = np.zeros(10)
    for seed in range(2000):
        counts[srs(points, 5, seed=seed).removed] += 1
    assert chisquare(counts).pvalue > 0.001


def displaced_spheres(count=5, n=512, moved=20):
    """Unit-cube spheres with `moved` points pushed radially outward"""
    pairs = []
    for seed in range(count):
        X = normalize_unit_cube(sample_shape(ShapeSpec('sphere'), n, seed=seed)).points
        rng = np.random.default_rng(100 + seed)
        idx = rng.choice(n, size=moved, replace=False)
        center = X.mean(axis=0)
        direction = X[idx] - center
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        X_adv = X.copy()
        X_adv[idx] += direction * rng.uniform(0.1, 0.2, size=(moved, 1))
        pairs.append((X, X_adv, seed))
    return pairs


"""
On attacked clouds SOR removes adversarial points at a higher rate than
random sampling of the same size
"""
def test_sor_removal_ratio_beats_srs():
    p_sor, p_srs = [], []
    for X, X_adv, seed in displaced_spheres():
        report = identify_adv_points(X, X_adv, 0.04)
        assert len(report.adv_indices) == 20
        removal = sor(X_adv, SorConfig(2, 1.1))
        assert len(removal.removed) > 0
        p_sor.append(removal_ratio(X, X_adv, removal.removed, report).p)
        sampled = srs(X_adv, len(removal.removed), seed=seed)
        p_srs.append(removal_ratio(X, X_adv, sampled.removed, report).p)
    assert np.mean(p_sor) > np.mean(p_srs)
    assert np.mean(np.array(p_sor) > np.array(p_srs)) >= 0.7


"""
Two points upsample to their midpoint and then a quarter point
"""
def test_midpoint_two_points():
    out = midpoint_upsample([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 2)
    assert np.array_equal(out.points, [[0, 0, 0], [1, 0, 0], [0.5, 0, 0], [0.25, 0, 0]])


"""
Midpoint upsampling keeps the originals first, multiplies the count by the
rate and places new points within half an edge of the originals
"""
def test_midpoint_properties():
    points = np.random.default_rng(6).random((60, 3))
    _, d = build_index(points).query_all(4)
    for rate in (2, 3, 4):
        out = midpoint_upsample(points, rate).points
        assert len(out) == rate * 60
        assert np.array_equal(out[:60], points)
        nearest = np.min(pairwise_distances(out[60:, None, :], points[None, :, :]), axis=1)
        assert nearest.max() <= d.max() / 2 + 1e-12
    with pytest.raises(ParameterError):
        midpoint_upsample(points, 1)
    with pytest.raises(ContractError):
        midpoint_upsample(points[:1], 2)


"""
DUP with an SOR that keeps everything equals plain upsampling, and SOR
removals shrink the output by rate per removed point
"""
def test_dup_pipeline():
    points = np.random.default_rng(7).random((40, 3))
    keep_all = dup_pipeline(points, SorConfig(2, 1e9))
    assert np.array_equal(keep_all.points, midpoint_upsample(points, 2).points)
    outcome = dup_outcome(SQUARE_WITH_OUTLIER, SorConfig(2, 1.1))
    assert list(outcome.removed) == [4]
    assert len(outcome.cloud) == 2 * (5 - 1)
    assert outcome.added_count == 4
    with pytest.raises(ContractError):
        dup_pipeline(points, SorConfig(), upsampler='learned')
    with pytest.raises(ParameterError):
        dup_pipeline(points, SorConfig(), upsampler='bicubic')


"""
Configured defenses validate their settings and apply the right transform
"""
def test_defense_spec():
    points = np.random.default_rng(8).random((30, 3))
    assert np.array_equal(DefenseSpec().apply(points).cloud.points, points)
    clamped = DefenseSpec(type='srs', r=500).apply(points, seed=1)
    assert len(clamped.cloud) == 1
    spec = DefenseSpec.from_dict({'type': 'dup', 'name': 'dup_mid', 'k': 2, 'alpha': 1.1})
    spec.validate()
    assert spec.name == 'dup_mid' and not spec.needs_checkpoint
    assert np.array_equal(spec.apply(points).cloud.points, dup_pipeline(points, SorConfig(2, 1.1)).points)
    upsampled = DefenseSpec(type='upsample', rate=3).apply(points)
    assert len(upsampled.cloud) == 90 and upsampled.added_count == 60

    with pytest.raises(ParameterError):
        DefenseSpec.from_dict({'type': 'sor', 'sigma': 2})
    with pytest.raises(ParameterError):
        DefenseSpec(type='blur').validate()
    with pytest.raises(ParameterError):
        DefenseSpec(type='dup', upsampler='learned').validate()
    with pytest.raises(ParameterError):
        DefenseSpec(type='upsample', rate=1).validate()
    with pytest.raises(ParameterError):
        DefenseSpec(type='sor', k=0).validate()
