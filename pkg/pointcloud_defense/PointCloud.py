"""
This module exposes the point-cloud data model: the PointCloud and
LabeledCloud containers, the ShapeSpec used to draw synthetic shapes,
unit-cube normalization and the plain-text cloud file format.

Example:
        cloud = sample_shape(ShapeSpec('sphere'), 1024, seed=7)
        cloud = normalize_unit_cube(cloud)
        save_cloud(cloud, 'sphere.xyz')
"""

import logging
from dataclasses import dataclass

import numpy as np

from .Errors import CloudParseError, ContractError, ParameterError

logger = logging.getLogger(__name__)

SHAPE_FAMILIES = (
    'sphere', 'cube', 'cylinder', 'cone', 'torus', 'pyramid', 'capsule', 'disk')

# jitter vectors longer than this many standard deviations are shortened
JITTER_CLIP_SIGMAS = 3.0


class PointCloud:
    """
    An ordered list of 3D points

    Args:
        points (array-like): n x 3 coordinates

    Attributes:
        points (numpy.ndarray): n x 3 float64 coordinates

    Raises:
        ContractError: if the cloud is empty, not n x 3, or holds NaN/Inf
    """
    def __init__(self, points):
        points = np.array(points, dtype=np.float64)
        if points.ndim == 1 and points.size == 3:
            points = points.reshape(1, 3)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ContractError('a point cloud must be an n x 3 array, got shape ' + str(points.shape))
        if points.shape[0] == 0:
            raise ContractError('a point cloud needs at least one point')
        if not np.all(np.isfinite(points)):
            raise ContractError('point cloud holds non-finite coordinates')
        self.points = points

    def __len__(self):
        return self.points.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.points
        return self.points.astype(dtype)

    def subset(self, indices):
        """
        Returns the cloud restricted to `indices`, in the given order

        Args:
            indices (array-like): point indices

        Returns:
            PointCloud: the selected points
        """
        return PointCloud(self.points[np.asarray(indices, dtype=np.int64)])

    def copy(self):
        return PointCloud(self.points.copy())


@dataclass
class LabeledCloud:
    """A cloud with its ground-truth class index"""
    cloud: PointCloud
    label: int
    cloud_id: str = ''


@dataclass
class ShapeSpec:
    """
    Parameters of one synthetic shape family

    Attributes:
        family (str): one of SHAPE_FAMILIES
        scale (float): characteristic radius / half extent
        aspect (float): secondary proportion (height, minor radius, ...)
        jitter (float): standard deviation of the surface noise
    """
    family: str
    scale: float = 0.5
    aspect: float = 1.0
    jitter: float = 0.005

    def validate(self):
        if self.family not in SHAPE_FAMILIES:
            raise ParameterError('unknown shape family "' + str(self.family) + '"')
        if not (self.scale > 0 and self.aspect > 0):
            raise ParameterError('shape scale and aspect must be positive')
        if not self.jitter >= 0:
            raise ParameterError('shape jitter must be non-negative')
        if self.family == 'torus' and _torus_radii(self)[1] >= _torus_radii(self)[0]:
            raise ParameterError('torus minor radius must be smaller than its major radius')


def as_points(cloud):
    """
    Returns the n x 3 float64 coordinate array of a PointCloud or array-like

    Args:
        cloud (PointCloud | array-like): input cloud

    Returns:
        numpy.ndarray: n x 3 coordinates (not copied when already float64)
    """
    if isinstance(cloud, PointCloud):
        return cloud.points
    points = np.asarray(cloud, dtype=np.float64)
    if points.ndim == 1 and points.size == 3:
        points = points.reshape(1, 3)
    return points


# Surface samplers

def _sample_triangles(rng, triangles, n):
    triangles = np.asarray(triangles, dtype=np.float64)
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    face = rng.choice(len(triangles), size=n, p=areas / areas.sum())
    su = np.sqrt(rng.random(n))[:, None]
    v = rng.random(n)[:, None]
    return (1 - su) * a[face] + su * (1 - v) * b[face] + su * v * c[face]


def _box_triangles(hx, hy, hz):
    corners = np.array([[sx * hx, sy * hy, sz * hz]
                        for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    # corner index bits: x*4 + y*2 + z
    quads = [(0, 1, 3, 2), (4, 5, 7, 6), (0, 1, 5, 4), (2, 3, 7, 6), (0, 2, 6, 4), (1, 3, 7, 5)]
    triangles = []
    for q in quads:
        triangles.append(corners[[q[0], q[1], q[2]]])
        triangles.append(corners[[q[0], q[2], q[3]]])
    return np.array(triangles)


def _pyramid_triangles(half, height):
    base = np.array([[-half, -half, -height / 2], [half, -half, -height / 2],
                     [half, half, -height / 2], [-half, half, -height / 2]])
    apex = np.array([0.0, 0.0, height / 2])
    triangles = [np.array([base[i], base[(i + 1) % 4], apex]) for i in range(4)]
    triangles.append(base[[0, 1, 2]])
    triangles.append(base[[0, 2, 3]])
    return np.array(triangles)


def _sample_sphere(rng, radius, n):
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return radius * v / norms


def _sample_disk(rng, radius, n):
    r = radius * np.sqrt(rng.random(n))
    theta = 2 * np.pi * rng.random(n)
    return r, theta


def _sample_components(rng, n, weights, samplers):
    weights = np.asarray(weights, dtype=np.float64)
    which = rng.choice(len(weights), size=n, p=weights / weights.sum())
    out = np.empty((n, 3))
    for k, sampler in enumerate(samplers):
        mask = which == k
        count = int(mask.sum())
        if count:
            out[mask] = sampler(count)
    return out


def _cylinder_surface(rng, radius, half_height, n):
    def lateral(m):
        theta = 2 * np.pi * rng.random(m)
        z = rng.uniform(-half_height, half_height, m)
        return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])

    def cap(sign):
        def sampler(m):
            r, theta = _sample_disk(rng, radius, m)
            return np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full(m, sign * half_height)])
        return sampler

    lateral_area = 2 * np.pi * radius * 2 * half_height
    cap_area = np.pi * radius ** 2
    return _sample_components(rng, n, [lateral_area, cap_area, cap_area], [lateral, cap(1), cap(-1)])


def _cone_surface(rng, radius, height, n):
    def lateral(m):
        # density along the slant grows linearly away from the apex
        t = np.sqrt(rng.random(m))
        theta = 2 * np.pi * rng.random(m)
        return np.column_stack([t * radius * np.cos(theta), t * radius * np.sin(theta), height / 2 - t * height])

    def base(m):
        r, theta = _sample_disk(rng, radius, m)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full(m, -height / 2)])

    slant = np.hypot(radius, height)
    return _sample_components(rng, n, [np.pi * radius * slant, np.pi * radius ** 2], [lateral, base])


def _torus_radii(spec):
    return spec.scale, 0.35 * spec.scale * spec.aspect


def _torus_surface(rng, major, minor, n):
    accepted = []
    count = 0
    while count < n:
        m = 2 * (n - count) + 16
        theta = 2 * np.pi * rng.random(m)
        phi = 2 * np.pi * rng.random(m)
        keep = rng.random(m) < (major + minor * np.cos(phi)) / (major + minor)
        theta, phi = theta[keep], phi[keep]
        ring = major + minor * np.cos(phi)
        accepted.append(np.column_stack([ring * np.cos(theta), ring * np.sin(theta), minor * np.sin(phi)]))
        count += len(theta)
    return np.concatenate(accepted)[:n]


def _capsule_surface(rng, radius, half_length, n):
    def lateral(m):
        theta = 2 * np.pi * rng.random(m)
        z = rng.uniform(-half_length, half_length, m)
        return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])

    def caps(m):
        p = _sample_sphere(rng, radius, m)
        p[:, 2] += np.where(p[:, 2] >= 0, half_length, -half_length)
        return p

    return _sample_components(
        rng, n, [2 * np.pi * radius * 2 * half_length, 4 * np.pi * radius ** 2], [lateral, caps])


def _surface_points(spec, rng, n):
    s, a = spec.scale, spec.aspect
    if spec.family == 'sphere':
        return _sample_sphere(rng, s, n)
    if spec.family == 'cube':
        return _sample_triangles(rng, _box_triangles(s, s, s * a), n)
    if spec.family == 'cylinder':
        return _cylinder_surface(rng, s, s * a, n)
    if spec.family == 'cone':
        return _cone_surface(rng, s, 2 * s * a, n)
    if spec.family == 'torus':
        major, minor = _torus_radii(spec)
        return _torus_surface(rng, major, minor, n)
    if spec.family == 'pyramid':
        return _sample_triangles(rng, _pyramid_triangles(s, 2 * s * a), n)
    if spec.family == 'capsule':
        return _capsule_surface(rng, s / 2, s * a / 2, n)
    r, theta = _sample_disk(rng, s, n)
    return np.column_stack([r * np.cos(theta), a * r * np.sin(theta), np.zeros(n)])


def sample_shape(spec, n, seed):
    """
    Samples `n` points area-uniformly from the surface of a shape and adds
    isotropic Gaussian jitter whose norm is clipped at 3 standard deviations

    Args:
        spec (ShapeSpec): shape family and parameters
        n (int): number of points
        seed (int): random seed; the same (spec, n, seed) gives the same cloud

    Returns:
        PointCloud: the sampled cloud, centered on the origin

    Raises:
        ParameterError: if the spec is invalid or n < 1
    """
    spec.validate()
    if n < 1:
        raise ParameterError('sample_shape needs n >= 1, got ' + str(n))
    rng = np.random.default_rng(seed)
    points = _surface_points(spec, rng, int(n))
    noise = rng.normal(0.0, 1.0, size=points.shape) * spec.jitter
    if spec.jitter > 0:
        norms = np.linalg.norm(noise, axis=1, keepdims=True)
        limit = JITTER_CLIP_SIGMAS * spec.jitter
        noise *= np.minimum(1.0, limit / np.maximum(norms, 1e-300))
    return PointCloud(points + noise)


def normalize_unit_cube(cloud):
    """
    Maps the bounding box of a cloud into [0, 1]^3 with one uniform scale
    (longest side becomes 1) and centers the shorter axes

    A cloud whose points are all identical maps to (0.5, 0.5, 0.5).

    Args:
        cloud (PointCloud | array-like): input cloud

    Returns:
        PointCloud: the normalized cloud
    """
    points = as_points(cloud)
    if len(points) == 0:
        raise ContractError('cannot normalize an empty cloud')
    lo = points.min(axis=0)
    extent = points.max(axis=0) - lo
    longest = extent.max()
    if longest == 0:
        return PointCloud(np.full(points.shape, 0.5))
    scaled = (points - lo) / longest
    scaled += (1.0 - extent / longest) / 2.0
    return PointCloud(np.clip(scaled, 0.0, 1.0))


def save_cloud(cloud, path):
    """
    Writes a cloud as text: an "n 3" header followed by one "x y z" line
    per point, at full float precision

    Args:
        cloud (PointCloud | array-like): cloud to write
        path (str): destination file
    """
    points = as_points(cloud)
    lines = [str(len(points)) + ' 3']
    for x, y, z in points:
        lines.append(repr(float(x)) + ' ' + repr(float(y)) + ' ' + repr(float(z)))
    with open(path, 'w') as f:
        f.write('\n'.join(lines) + '\n')


def _is_header(tokens):
    if len(tokens) != 2:
        return False
    try:
        return int(tokens[0]) >= 0 and tokens[1] == '3'
    except ValueError:
        return False


def load_cloud(path):
    """
    Reads a cloud written by save_cloud (the "n 3" header is optional)

    Args:
        path (str): file to read

    Returns:
        PointCloud: the parsed cloud

    Raises:
        CloudParseError: on a malformed line, wrong arity, a non-finite
            value, or a row count that disagrees with the header
    """
    rows = []
    expected = None
    with open(path, 'r') as f:
        for number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            tokens = line.split()
            if expected is None and not rows and _is_header(tokens):
                expected = int(tokens[0])
                continue
            if len(tokens) != 3:
                raise CloudParseError('expected 3 fields, found ' + str(len(tokens)), path, number)
            try:
                row = [float(t) for t in tokens]
            except ValueError:
                raise CloudParseError('malformed number in "' + line + '"', path, number)
            if not all(np.isfinite(row)):
                raise CloudParseError('non-finite coordinate in "' + line + '"', path, number)
            rows.append(row)
    if expected is not None and expected != len(rows):
        raise CloudParseError(
            'header announces ' + str(expected) + ' points but file has ' + str(len(rows)), path)
    if not rows:
        raise CloudParseError('file holds no points', path)
    return PointCloud(np.array(rows))
