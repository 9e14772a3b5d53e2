"""
This module exposes the input transformations used as defenses: simple
random sampling (SRS), statistical outlier removal (SOR), a non-learned
midpoint upsampler and the SOR -> upsampler pipeline (DUP).

Example:
        outcome = sor(cloud, SorConfig(k=2, alpha=1.1))
        defended = dup_pipeline(cloud, SorConfig(2, 1.1), 'midpoint', 2)
"""

import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial import cKDTree

from . import Upsampler
from .Errors import ContractError, ParameterError
from .NeighborIndex import build_index, pairwise_distances
from .PointCloud import PointCloud, as_points

logger = logging.getLogger(__name__)

DEFENSE_TYPES = ('none', 'srs', 'sor', 'dup', 'upsample')
UPSAMPLERS = ('midpoint', 'learned')


@dataclass
class SorConfig:
    """
    Statistical outlier removal settings

    Attributes:
        k (int): neighbors averaged into each point's distance d_i
        alpha (float): points with d_i >= mean + alpha * std are removed
    """
    k: int = 2
    alpha: float = 1.1

    def validate(self):
        if int(self.k) != self.k or self.k < 1:
            raise ParameterError('SOR needs k >= 1, got ' + str(self.k))
        if not self.alpha >= 0:
            raise ParameterError('SOR needs alpha >= 0, got ' + str(self.alpha))


@dataclass
class DefenseOutcome:
    """
    Result of a defense transformation

    Attributes:
        cloud (PointCloud): defended cloud
        removed (numpy.ndarray): indices of input points that were dropped
        kept (numpy.ndarray): indices of input points that survive, ascending
        added_count (int): points created by upsampling
    """
    cloud: PointCloud
    removed: np.ndarray
    kept: np.ndarray
    added_count: int = 0


def _removal_outcome(points, kept):
    kept = np.asarray(kept, dtype=np.int64)
    removed = np.setdiff1d(np.arange(len(points)), kept)
    return DefenseOutcome(PointCloud(points[kept]), removed, kept, 0)


def srs(cloud, r, seed=0):
    """
    Simple random sampling: drops r points chosen uniformly without
    replacement

    Args:
        cloud (PointCloud | array-like): input cloud
        r (int): number of points to drop, 0 <= r < n
        seed (int): sampling seed

    Returns:
        DefenseOutcome: surviving points keep their input order

    Raises:
        ParameterError: if r is outside [0, n)
    """
    points = as_points(cloud)
    n = len(points)
    if not 0 <= r < n:
        raise ParameterError('SRS needs 0 <= r < n, got r=' + str(r) + ' for n=' + str(n))
    rng = np.random.default_rng(seed)
    kept = np.sort(rng.choice(n, size=n - int(r), replace=False))
    return _removal_outcome(points, kept)


def mean_knn_distances(cloud, k):
    """Average distance d_i of every point to its k nearest neighbors"""
    _, d = build_index(cloud).query_all(k)
    return d.mean(axis=1)


def sor(cloud, cfg):
    """
    Statistical outlier removal

    d_i is the mean distance of point i to its k nearest neighbors; with
    d_mean and the population standard deviation sigma of all d_i, a point is
    kept when d_i < d_mean + alpha * sigma. If that rule would remove every
    point the input is returned unchanged.

    Args:
        cloud (PointCloud | array-like): input cloud, n >= 2
        cfg (SorConfig): k and alpha

    Returns:
        DefenseOutcome: kept points are unmodified input points

    Raises:
        ContractError: if the cloud has fewer than 2 points
    """
    cfg.validate()
    points = as_points(cloud)
    if len(points) < 2:
        raise ContractError('SOR needs at least 2 points')
    d = mean_knn_distances(points, cfg.k)
    threshold = d.mean() + cfg.alpha * d.std()
    kept = np.flatnonzero(d < threshold)
    if len(kept) == 0:
        logger.debug('SOR would remove all %d points, input returned unchanged', len(points))
        kept = np.arange(len(points))
    return _removal_outcome(points, kept)


def _edge_candidates(points, edges, level):
    """Points at the odd multiples of 1/2^level along every edge"""
    denom = 2 ** level
    fractions = np.arange(1, denom, 2) / denom
    a, b = points[edges[:, 0]], points[edges[:, 1]]
    return (a[:, None, :] + fractions[None, :, None] * (b - a)[:, None, :]).reshape(-1, 3)


def midpoint_upsample(cloud, rate, k=4):
    """
    Non-learned upsampling by interpolation along kNN-graph edges

    Candidates are edge midpoints first, then quarter points, eighth points
    and so on until there are enough of them; (rate - 1) * n candidates are
    then picked farthest-first, starting from the candidate farthest from
    every original point.

    Args:
        cloud (PointCloud | array-like): input cloud, n >= 2
        rate (int): upsampling factor, >= 2
        k (int): neighbors per point in the interpolation graph

    Returns:
        PointCloud: the n original points followed by (rate - 1) * n new ones

    Raises:
        ContractError: if the cloud has fewer than 2 points
        ParameterError: if rate < 2
    """
    points = as_points(cloud)
    n = len(points)
    if n < 2:
        raise ContractError('midpoint upsampling needs at least 2 points')
    if int(rate) != rate or rate < 2:
        raise ParameterError('upsampling rate must be an integer >= 2, got ' + str(rate))
    needed = (int(rate) - 1) * n

    neighbors, _ = build_index(points).query_all(k)
    src = np.repeat(np.arange(n), neighbors.shape[1])
    dst = neighbors.ravel()
    edges = np.unique(np.sort(np.stack([src, dst], axis=1), axis=1), axis=0)

    candidates = []
    level = 1
    while sum(len(c) for c in candidates) < needed:
        candidates.append(_edge_candidates(points, edges, level))
        level += 1
    candidates = np.concatenate(candidates)

    _, nearest = cKDTree(points).query(candidates)
    nearest = pairwise_distances(points[nearest], candidates)
    picks = np.empty(needed, dtype=np.int64)
    for i in range(needed):
        j = int(np.argmax(nearest))
        picks[i] = j
        nearest = np.minimum(nearest, pairwise_distances(candidates[j], candidates))
    return PointCloud(np.concatenate([points, candidates[picks]]))


def upsample(cloud, upsampler='midpoint', rate=2, upsampler_params=None):
    """
    Upsamples a cloud with the midpoint or the learned upsampler

    Args:
        cloud (PointCloud | array-like): input cloud
        upsampler (str): 'midpoint' or 'learned'
        rate (int): upsampling factor for the midpoint upsampler; the learned
            one uses the rate it was trained with
        upsampler_params (UpsamplerParams): weights, required for 'learned'

    Returns:
        PointCloud: upsampled cloud
    """
    if upsampler == 'midpoint':
        return midpoint_upsample(cloud, rate)
    if upsampler == 'learned':
        if upsampler_params is None:
            raise ContractError('the learned upsampler needs a trained checkpoint')
        return Upsampler.up_forward(upsampler_params, cloud)
    raise ParameterError('unknown upsampler "' + str(upsampler) + '"')


def dup_pipeline(cloud, sor_cfg, upsampler='midpoint', rate=2, upsampler_params=None):
    """
    Denoise-then-upsample defense: SOR followed by upsampling

    The point count after SOR is decided by a hard threshold, so no gradient
    flows from the output back to which input points survive.

    Args:
        cloud (PointCloud | array-like): possibly adversarial input
        sor_cfg (SorConfig): outlier removal settings
        upsampler (str): 'midpoint' or 'learned'
        rate (int): upsampling factor
        upsampler_params (UpsamplerParams): learned upsampler weights

    Returns:
        PointCloud: rate * (n - removed) points
    """
    return dup_outcome(cloud, sor_cfg, upsampler, rate, upsampler_params).cloud


def dup_outcome(cloud, sor_cfg, upsampler='midpoint', rate=2, upsampler_params=None):
    """dup_pipeline that also reports which input points SOR removed"""
    removal = sor(cloud, sor_cfg)
    out = upsample(removal.cloud, upsampler, rate, upsampler_params)
    return DefenseOutcome(out, removal.removed, removal.kept, len(out) - len(removal.kept))


@dataclass
class DefenseSpec:
    """
    One configured defense of the evaluation grid

    Attributes:
        type (str): 'none', 'srs', 'sor', 'dup' or 'upsample'
        name (str): column name in reports; defaults to the type
        k (int): SOR neighbors
        alpha (float): SOR multiplier
        r (int): SRS drop count
        rate (int): upsampling factor
        upsampler (str): 'midpoint' or 'learned'
        checkpoint (str): learned upsampler checkpoint; inside an experiment
            config it defaults to the upsampler section's checkpoint
    """
    type: str = 'none'
    name: str = ''
    k: int = 2
    alpha: float = 1.1
    r: int = 500
    rate: int = 2
    upsampler: str = 'midpoint'
    checkpoint: str = None

    def __post_init__(self):
        if not self.name:
            self.name = self.type

    @classmethod
    def from_dict(cls, raw):
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError('unknown defense fields: ' + ', '.join(sorted(unknown)))
        return cls(**raw)

    def to_dict(self):
        return asdict(self)

    @property
    def sor_config(self):
        return SorConfig(self.k, self.alpha)

    @property
    def needs_checkpoint(self):
        return self.type in ('dup', 'upsample') and self.upsampler == 'learned'

    def validate(self):
        if self.type not in DEFENSE_TYPES:
            raise ParameterError('unknown defense type "' + str(self.type) + '"')
        if self.type in ('sor', 'dup'):
            self.sor_config.validate()
        if self.type == 'srs' and self.r < 0:
            raise ParameterError('SRS drop count must be non-negative')
        if self.type in ('dup', 'upsample'):
            if self.upsampler not in UPSAMPLERS:
                raise ParameterError('unknown upsampler "' + str(self.upsampler) + '"')
            if self.rate < 2:
                raise ParameterError('upsampling rate must be >= 2')
            if self.needs_checkpoint and not self.checkpoint:
                raise ParameterError('defense "' + self.name + '" needs an upsampler checkpoint')

    def apply(self, cloud, seed=0, upsampler_params=None):
        """
        Runs the defense on one cloud

        Args:
            cloud (PointCloud | array-like): input cloud
            seed (int): SRS seed
            upsampler_params (UpsamplerParams): learned upsampler weights

        Returns:
            DefenseOutcome: defended cloud and removal bookkeeping
        """
        points = as_points(cloud)
        if self.type == 'none':
            return DefenseOutcome(PointCloud(points), np.empty(0, dtype=np.int64), np.arange(len(points)))
        if self.type == 'srs':
            return srs(points, min(self.r, len(points) - 1), seed)
        if self.type == 'sor':
            return sor(points, self.sor_config)
        if self.type == 'dup':
            return dup_outcome(points, self.sor_config, self.upsampler, self.rate, upsampler_params)
        out = upsample(points, self.upsampler, self.rate, upsampler_params)
        return DefenseOutcome(out, np.empty(0, dtype=np.int64), np.arange(len(points)), len(out) - len(points))
