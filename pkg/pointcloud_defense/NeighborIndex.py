"""
This module exposes NeighborIndex, the kd-tree used for every k-nearest
neighbor query of the toolkit, plus farthest point sampling.

Neighbors are ordered by ascending Euclidean distance with ties broken by the
smaller point index, so results are identical to a brute-force scan.

Example:
        index = build_index(cloud)
        neighbors = index.query(0, 2)
"""

import logging

import numpy as np
from scipy.spatial import cKDTree

from .Errors import ContractError, ParameterError
from .PointCloud import as_points

logger = logging.getLogger(__name__)

# relative slack absorbing rounding differences between the tree and numpy
_TIE_SLACK = 1e-9


def pairwise_distances(points, others):
    """
    Euclidean distances between matching rows of two broadcastable arrays

    Every distance in the toolkit goes through this expression so that the
    same pair of points always yields the same float.
    """
    return np.sqrt(np.sum((others - points) ** 2, axis=-1))


class NeighborIndex:
    """
    Immutable kd-tree over the points of one cloud

    Args:
        cloud (PointCloud | array-like): indexed cloud
        leaf_size (int): kd-tree leaf size

    Attributes:
        points (numpy.ndarray): indexed coordinates (read-only)
        leaf_size (int): kd-tree leaf size
    """
    def __init__(self, cloud, leaf_size=16):
        points = np.array(as_points(cloud), dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] != 3:
            raise ContractError('NeighborIndex needs a non-empty n x 3 cloud')
        if leaf_size < 1:
            raise ParameterError('leaf_size must be a positive integer')
        points.setflags(write=False)
        self.points = points
        self.leaf_size = int(leaf_size)
        self._tree = cKDTree(points, leafsize=self.leaf_size)

    def __len__(self):
        return self.points.shape[0]

    def query(self, i, k):
        """
        Returns the k nearest neighbors of point i, never i itself

        Args:
            i (int): index of the query point
            k (int): number of neighbors; clamped to n - 1

        Returns:
            tuple: (indices, distances), both of length min(k, n - 1), sorted
            by ascending distance then ascending index
        """
        n = len(self)
        k = min(int(k), n - 1)
        if k <= 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        origin = self.points[i]
        count = min(k + 1, n)
        dist, _ = self._tree.query(origin, k=count)
        radius = float(np.atleast_1d(dist)[-1])
        candidates = np.array(
            self._tree.query_ball_point(origin, r=radius * (1 + _TIE_SLACK) + 1e-300), dtype=np.int64)
        candidates = candidates[candidates != i]
        d = pairwise_distances(origin, self.points[candidates])
        order = np.lexsort((candidates, d))[:k]
        return candidates[order], d[order]

    def query_all(self, k):
        """
        Runs query(i, k) for every point at once

        Args:
            k (int): number of neighbors; clamped to n - 1

        Returns:
            tuple: (indices, distances) arrays of shape (n, min(k, n - 1))
        """
        n = len(self)
        k = min(int(k), n - 1)
        if k <= 0:
            return np.empty((n, 0), dtype=np.int64), np.empty((n, 0))
        count = min(k + 2, n)
        _, candidates = self._tree.query(self.points, k=count)
        candidates = np.asarray(candidates, dtype=np.int64).reshape(n, count)
        d = pairwise_distances(self.points[:, None, :], self.points[candidates])
        d[candidates == np.arange(n)[:, None]] = np.inf
        order = np.lexsort((candidates, d), axis=-1)
        candidates = np.take_along_axis(candidates, order, axis=-1)
        d = np.take_along_axis(d, order, axis=-1)

        if count < n:
            # a row is only trusted when the next candidate is strictly
            # farther than the k-th, otherwise an unreturned point may tie
            boundary = d[:, k - 1] * (1 + _TIE_SLACK) + 1e-300
            unsure = np.flatnonzero(~(d[:, k] > boundary))
        else:
            unsure = np.empty(0, dtype=np.int64)

        indices, distances = candidates[:, :k].copy(), d[:, :k].copy()
        for i in unsure:
            indices[i], distances[i] = self.query(i, k)
        return indices, distances


def build_index(cloud, leaf_size=16):
    """
    Builds the kNN index of a cloud

    Args:
        cloud (PointCloud | array-like): cloud to index

    Returns:
        NeighborIndex: the index
    """
    return NeighborIndex(cloud, leaf_size=leaf_size)


def farthest_point_sample(cloud, count, start=None):
    """
    Greedy farthest point sampling

    Args:
        cloud (PointCloud | array-like): input cloud
        count (int): number of points to pick (clamped to n)
        start (int): first pick; defaults to the point farthest from the
            centroid, which makes the result independent of point order

    Returns:
        numpy.ndarray: picked indices in pick order
    """
    points = as_points(cloud)
    n = len(points)
    count = min(int(count), n)
    if count <= 0:
        return np.empty(0, dtype=np.int64)
    if start is None:
        start = int(np.argmax(pairwise_distances(points.mean(axis=0), points)))
    picks = [start]
    nearest = pairwise_distances(points[start], points)
    for _ in range(count - 1):
        nxt = int(np.argmax(nearest))
        picks.append(nxt)
        nearest = np.minimum(nearest, pairwise_distances(points[nxt], points))
    return np.array(picks, dtype=np.int64)
