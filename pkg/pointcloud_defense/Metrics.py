"""
This module exposes the point-set distances (paired l2, point-to-set,
directed Hausdorff, Chamfer, one-sided Chamfer, exact EMD) and the
adversarial-point bookkeeping used to score outlier-removal defenses.

Example:
        report = identify_adv_points(clean, adversarial, 0.04, mode='paired_l2')
        ratio = removal_ratio(clean, adversarial, outcome.removed, report)
"""

import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .Errors import ContractError, ParameterError
from .PointCloud import as_points

logger = logging.getLogger(__name__)

ADV_MODES = ('paired_l2', 'set_distance')


@dataclass
class AdvPointReport:
    """
    Points of an adversarial cloud flagged as adversarial

    Attributes:
        adv_indices (list): indices into the adversarial cloud
        threshold (float): score above which a point is adversarial
        epsilon (float): targeted fraction of flagged points
        mode (str): 'paired_l2' or 'set_distance'
    """
    adv_indices: list
    threshold: float
    epsilon: float
    mode: str = 'paired_l2'

    def to_dict(self):
        return asdict(self)


@dataclass
class RemovalRatio:
    """
    Fraction of the points removed by a defense that are adversarial

    `p` is None when the defense removed nothing; such results are reported
    separately and left out of aggregate statistics.
    """
    p: float
    removed_count: int
    removed_adv_count: int

    @property
    def defined(self):
        return self.removed_count > 0

    def to_dict(self):
        out = asdict(self)
        out['defined'] = self.defined
        return out


def _nonempty(points, name):
    if len(points) == 0:
        raise ContractError(name + ' must not be empty')


def paired_l2(X, X_adv):
    """
    Per-point and total l2 perturbation between index-paired clouds

    Args:
        X (PointCloud | array-like): original cloud
        X_adv (PointCloud | array-like): perturbed cloud, same size and order

    Returns:
        tuple: (per-point distances, l2 norm of the whole stacked perturbation)

    Raises:
        ContractError: if the clouds have different sizes
    """
    a, b = as_points(X), as_points(X_adv)
    if a.shape != b.shape:
        raise ContractError('paired_l2 needs clouds of equal size, got ' + str(len(a)) + ' and ' + str(len(b)))
    delta = b - a
    return np.sqrt(np.sum(delta ** 2, axis=1)), float(np.sqrt(np.sum(delta ** 2)))


def point_to_set(x, X):
    """Exact minimum Euclidean distance from point x to the set X"""
    points = as_points(X)
    _nonempty(points, 'X')
    x = np.asarray(x, dtype=np.float64).reshape(1, 3)
    return float(np.sqrt(np.min(np.sum((points - x) ** 2, axis=1))))


def nearest_in(A, B):
    """
    For every point of A, its nearest point of B

    Returns:
        tuple: (index into B, Euclidean distance) per point of A
    """
    a, b = as_points(A), as_points(B)
    _nonempty(a, 'first set')
    _nonempty(b, 'second set')
    d = cdist(a, b)
    j = np.argmin(d, axis=1)
    return j, d[np.arange(len(a)), j]


def hausdorff_directed(X_adv, X):
    """Largest distance from a point of X_adv to its nearest point of X"""
    _, d = nearest_in(X_adv, X)
    return float(d.max())


def chamfer(X, X_adv):
    """
    Symmetric Chamfer distance: mean squared nearest-neighbor distance in
    each direction, averaged over the two directions
    """
    _, d_ab = nearest_in(X, X_adv)
    _, d_ba = nearest_in(X_adv, X)
    return float(0.5 * (np.mean(d_ab ** 2) + np.mean(d_ba ** 2)))


def one_sided_chamfer(X, X_hat):
    """
    Mean over the points of X_hat of the squared distance to the nearest
    point of X (the reconstruction loss of the upsampler)
    """
    _, d = nearest_in(X_hat, X)
    return float(np.mean(d ** 2))


def emd_assignment(X, X_adv):
    """
    Optimal one-to-one matching between equal-size clouds

    Returns:
        tuple: (average matched Euclidean cost, column index matched to each
        row of X)

    Raises:
        ContractError: if the clouds have different sizes
    """
    a, b = as_points(X), as_points(X_adv)
    if len(a) != len(b):
        raise ContractError('emd needs clouds of equal size, got ' + str(len(a)) + ' and ' + str(len(b)))
    _nonempty(a, 'X')
    cost = cdist(a, b)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / len(a)), cols


def emd(X, X_adv):
    """Earth Mover's distance: minimum average cost of a perfect matching"""
    return emd_assignment(X, X_adv)[0]


def adv_scores(X, X_adv, mode='paired_l2'):
    """Per-point adversarial scores of X_adv under `mode`"""
    if mode == 'paired_l2':
        return paired_l2(X, X_adv)[0]
    if mode == 'set_distance':
        return nearest_in(X_adv, X)[1]
    raise ParameterError('unknown adversarial-point mode "' + str(mode) + '"')


def identify_adv_points(X, X_adv, epsilon, mode='paired_l2'):
    """
    Flags the epsilon fraction of X_adv with the highest scores

    The threshold is the (1 - epsilon) empirical quantile of the scores,
    read off a full sort so that round(epsilon * n) points lie strictly
    above it when scores are distinct.

    Args:
        X (PointCloud | array-like): clean cloud
        X_adv (PointCloud | array-like): attacked cloud
        epsilon (float): fraction in (0, 1)
        mode (str): 'paired_l2' (index-paired distance) or 'set_distance'
            (distance from each attacked point to the clean set)

    Returns:
        AdvPointReport: flagged indices and threshold

    Raises:
        ParameterError: if epsilon is outside (0, 1)
    """
    if not 0 < epsilon < 1:
        raise ParameterError('epsilon must lie in (0, 1), got ' + str(epsilon))
    scores = adv_scores(X, X_adv, mode)
    n = len(scores)
    flagged = int(round(epsilon * n))
    ordered = np.sort(scores)
    if flagged >= n:
        # every point is flagged: the threshold sits just below the lowest score
        threshold = float(np.nextafter(ordered[0], -np.inf))
    else:
        threshold = float(ordered[n - flagged - 1])
    adv = np.flatnonzero(scores > threshold)
    return AdvPointReport([int(i) for i in adv], threshold, float(epsilon), mode)


def removal_ratio(X, X_adv, removed, report=None, epsilon=0.04, mode='paired_l2'):
    """
    Fraction of the removed points that are adversarial points

    Args:
        X (PointCloud | array-like): clean cloud, used only when `report`
            has to be computed here
        X_adv (PointCloud | array-like): attacked cloud fed to the defense
        removed (iterable): indices into X_adv dropped by the defense
        report (AdvPointReport): flagged adversarial points; computed with
            `epsilon` and `mode` when omitted

    Returns:
        RemovalRatio: p is None when nothing was removed

    Raises:
        ContractError: if a removed index is outside X_adv
    """
    n = len(as_points(X_adv))
    removed = np.unique(np.asarray(list(removed), dtype=np.int64))
    if len(removed) and (removed.min() < 0 or removed.max() >= n):
        raise ContractError('removed indices must index the attacked cloud')
    if report is None:
        report = identify_adv_points(X, X_adv, epsilon, mode)
    if len(removed) == 0:
        return RemovalRatio(None, 0, 0)
    hits = int(np.isin(removed, np.asarray(report.adv_indices, dtype=np.int64)).sum())
    return RemovalRatio(hits / len(removed), int(len(removed)), hits)
