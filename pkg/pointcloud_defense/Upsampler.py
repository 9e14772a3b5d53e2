"""
This module exposes the learned patch upsampler: a per-point encoder
(3 -> 32 -> 64), a max-pooled patch feature, `rate` expansion branches
(64 + 64 -> 64) and a residual coordinate head (64 -> 32 -> 3). Every input
point yields `rate` offspring at its own position plus a learned offset;
with the zero-initialized head the offspring start on their parent.

Training minimizes L_rec + beta * L_rep + gamma * ||theta||^2 on
(sparse, dense) patch pairs, with hand-derived gradients.

Example:
        patches = extract_patches(cloud, patch_size=32, patches_per_cloud=8, seed=0)
        params = train_upsampler(patches, UpsampleLossConfig(), UpsamplerTrainConfig(epochs=20))
        dense = up_forward(params, cloud)
"""

import logging
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial.distance import cdist
from tqdm import tqdm

from .Adam import Adam
from .Checkpoint import load_checkpoint, save_checkpoint
from .Errors import ContractError, ParameterError
from .Metrics import emd_assignment, nearest_in, one_sided_chamfer
from .NeighborIndex import build_index, farthest_point_sample, pairwise_distances
from .PointCloud import PointCloud, as_points

logger = logging.getLogger(__name__)

TENSOR_NAMES = ('E1', 'e1', 'E2', 'e2', 'B', 'bB', 'H1', 'h1', 'H2', 'h2')
REC_MODES = ('emd', 'one_sided_chamfer')
# seeds used to cover a cloud larger than one patch, relative to n / patch_size
PATCH_OVERLAP = 2


class UpsamplerParams:
    """
    Weights of the learned upsampler

    Args:
        tensors (dict): E1, e1, E2, e2 (encoder), B, bB (expansion branches,
            one slice per offspring), H1, h1, H2, h2 (coordinate head)
        patch_size (int): points per patch at inference
        history (list): per-epoch training records

    Attributes:
        rate (int): offspring per input point
    """
    def __init__(self, tensors, patch_size=32, history=None):
        missing = [name for name in TENSOR_NAMES if name not in tensors]
        if missing:
            raise ContractError('upsampler tensors missing: ' + ', '.join(missing))
        t = {name: np.array(tensors[name], dtype=np.float64) for name in TENSOR_NAMES}
        feature = t['E2'].shape[1]
        if (t['E1'].shape[1] != t['E2'].shape[0] or t['B'].ndim != 3
                or t['B'].shape[1] != 2 * feature or t['B'].shape[2] != t['H1'].shape[0]
                or t['H1'].shape[1] != t['H2'].shape[0] or t['H2'].shape[1] != 3):
            raise ContractError('upsampler tensor shapes do not chain')
        if t['B'].shape[0] < 2:
            raise ContractError('upsampling rate must be at least 2')
        if patch_size < 2:
            raise ParameterError('patch_size must be at least 2')
        self.tensors = t
        self.patch_size = int(patch_size)
        self.history = history or []

    @property
    def rate(self):
        return self.tensors['B'].shape[0]

    @classmethod
    def init(cls, rate=2, seed=0, patch_size=32, zero_head=True):
        """
        He-initialized parameters

        Args:
            rate (int): upsampling factor, >= 2
            seed (int): initialization seed
            patch_size (int): points per patch at inference
            zero_head (bool): zero the last layer so offspring start on
                their parent

        Returns:
            UpsamplerParams: fresh parameters
        """
        if int(rate) != rate or rate < 2:
            raise ParameterError('upsampling rate must be an integer >= 2, got ' + str(rate))
        rng = np.random.default_rng(seed)

        def he(*shape):
            return rng.normal(0.0, np.sqrt(2.0 / shape[-2]), size=shape)

        tensors = {
            'E1': he(3, 32), 'e1': np.zeros(32),
            'E2': he(32, 64), 'e2': np.zeros(64),
            'B': he(int(rate), 128, 64), 'bB': np.zeros((int(rate), 64)),
            'H1': he(64, 32), 'h1': np.zeros(32),
            'H2': np.zeros((32, 3)) if zero_head else 0.01 * he(32, 3), 'h2': np.zeros(3),
        }
        return cls(tensors, patch_size)

    def copy(self):
        return UpsamplerParams({k: v.copy() for k, v in self.tensors.items()}, self.patch_size, list(self.history))

    def squared_norm(self):
        return float(sum(np.sum(v ** 2) for v in self.tensors.values()))

    def save(self, path):
        save_checkpoint(path, 'upsampler', self.tensors,
                        {'rate': self.rate, 'patch_size': self.patch_size, 'history': self.history})

    @classmethod
    def load(cls, path):
        _, tensors, meta = load_checkpoint(path, kind='upsampler')
        return cls(tensors, meta.get('patch_size', 32), meta.get('history', []))


@dataclass
class UpsampleLossConfig:
    """
    Weights of the upsampler loss

    Attributes:
        beta (float): repulsion weight
        gamma (float): weight-decay multiplier
        rec_mode (str): 'emd' or 'one_sided_chamfer'
        k_rep (int): neighbors per output point in the repulsion term
        h (float): repulsion bandwidth
    """
    beta: float = 0.01
    gamma: float = 1e-5
    rec_mode: str = 'emd'
    k_rep: int = 5
    h: float = 0.03

    def validate(self):
        if self.beta < 0 or self.gamma < 0:
            raise ParameterError('beta and gamma must be non-negative')
        if self.rec_mode not in REC_MODES:
            raise ParameterError('unknown reconstruction loss "' + str(self.rec_mode) + '"')
        if self.k_rep < 1 or not self.h > 0:
            raise ParameterError('k_rep must be positive and h > 0')

    def to_dict(self):
        return asdict(self)


@dataclass
class UpsamplerTrainConfig:
    """Upsampler training settings (Adam, fixed seed)"""
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 0.001
    seed: int = 0
    validation_fraction: float = 0.1
    patch_size: int = 32

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError('epochs and batch_size must be positive')
        if not self.learning_rate > 0:
            raise ParameterError('learning_rate must be positive')
        if not 0 <= self.validation_fraction < 1:
            raise ParameterError('validation_fraction must lie in [0, 1)')

    def to_dict(self):
        return asdict(self)


def _relu(x):
    return np.maximum(x, 0.0)


def _encode(t, P):
    z1 = P @ t['E1'] + t['e1']
    a1 = _relu(z1)
    z2 = a1 @ t['E2'] + t['e2']
    return z1, a1, z2, _relu(z2)


def _forward(t, P, context=None):
    """
    Offspring of the points P; the pooled feature comes from `context`
    (defaults to P itself)
    """
    z1, a1, z2, f = _encode(t, P)
    fc = f if context is None else _encode(t, context)[3]
    arg = np.argmax(fc, axis=0)
    pooled = fc[arg, np.arange(fc.shape[1])]
    u = np.concatenate([f, np.broadcast_to(pooled, f.shape)], axis=1)
    zb = np.einsum('mc,rcd->mrd', u, t['B']) + t['bB'][None]
    g = _relu(zb)
    hh = g @ t['H1'] + t['h1']
    q = _relu(hh)
    residual = q @ t['H2'] + t['h2']
    out = (P[:, None, :] + residual).reshape(-1, 3)
    cache = {'P': P, 'z1': z1, 'a1': a1, 'z2': z2, 'arg': arg, 'u': u,
             'zb': zb, 'g': g, 'hh': hh, 'q': q}
    return out, cache


def _backward(t, cache, dout):
    """Parameter gradients for a forward pass whose context was P itself"""
    grads = {}
    dres = dout.reshape(cache['zb'].shape[0], cache['zb'].shape[1], 3)
    q, g = cache['q'], cache['g']
    grads['H2'] = q.reshape(-1, q.shape[-1]).T @ dres.reshape(-1, 3)
    grads['h2'] = dres.sum(axis=(0, 1))
    dhh = (dres @ t['H2'].T) * (cache['hh'] > 0)
    grads['H1'] = g.reshape(-1, g.shape[-1]).T @ dhh.reshape(-1, dhh.shape[-1])
    grads['h1'] = dhh.sum(axis=(0, 1))
    dzb = (dhh @ t['H1'].T) * (cache['zb'] > 0)
    grads['B'] = np.einsum('mc,mrd->rcd', cache['u'], dzb)
    grads['bB'] = dzb.sum(axis=0)
    du = np.einsum('mrd,rcd->mc', dzb, t['B'])
    width = du.shape[1] // 2
    df = du[:, :width].copy()
    np.add.at(df, (cache['arg'], np.arange(width)), du[:, width:].sum(axis=0))
    dz2 = df * (cache['z2'] > 0)
    grads['E2'] = cache['a1'].T @ dz2
    grads['e2'] = dz2.sum(axis=0)
    dz1 = (dz2 @ t['E2'].T) * (cache['z1'] > 0)
    grads['E1'] = cache['P'].T @ dz1
    grads['e1'] = dz1.sum(axis=0)
    return grads


def normalize_patch(points):
    """
    Centers a patch on its centroid and scales its largest radius to 1

    Returns:
        tuple: (normalized points, centroid, scale); a single-point patch
        keeps scale 1
    """
    center = points.mean(axis=0)
    radius = float(np.max(pairwise_distances(center, points)))
    scale = radius if radius > 0 else 1.0
    return (points - center) / scale, center, scale


def upsample_patch(params, patch):
    """Offspring of a normalized patch (rate * m points, grouped per parent)"""
    return _forward(params.tensors, as_points(patch))[0]


def up_forward(params, cloud):
    """
    Upsamples a whole cloud

    A cloud of at most `patch_size` points is one patch. A larger one is
    covered by farthest-point seeds, each with a patch of its patch_size
    nearest points; every point is expanded in the normalized frame and with
    the pooled feature of its nearest seed's patch.

    Args:
        params (UpsamplerParams): weights
        cloud (PointCloud | array-like): n >= 1 points

    Returns:
        PointCloud: rate * n points; rows i*rate .. i*rate + rate - 1 are the
        offspring of input point i
    """
    points = as_points(cloud)
    n, rate = len(points), params.rate
    if n <= params.patch_size:
        normalized, center, scale = normalize_patch(points)
        return PointCloud(upsample_patch(params, normalized) * scale + center)

    seeds = farthest_point_sample(points, math.ceil(PATCH_OVERLAP * n / params.patch_size))
    index = build_index(points)
    owner = np.argmin(cdist(points, points[seeds]), axis=1)
    out = np.empty((n, rate, 3))
    for s, seed in enumerate(seeds):
        members = np.flatnonzero(owner == s)
        if len(members) == 0:
            continue
        neighbors, _ = index.query(seed, params.patch_size - 1)
        patch = points[np.concatenate([[seed], neighbors])]
        _, center, scale = normalize_patch(patch)
        offspring, _ = _forward(params.tensors, (points[members] - center) / scale, (patch - center) / scale)
        out[members] = offspring.reshape(len(members), rate, 3) * scale + center
    return PointCloud(out.reshape(-1, 3))


def _rec_loss(target, output, rec_mode, assignment=None):
    """Reconstruction loss and its gradient w.r.t. the output points"""
    grad = np.zeros_like(output)
    if rec_mode == 'emd':
        if len(target) != len(output):
            raise ContractError('emd reconstruction needs |target| == |output|')
        if assignment is None:
            _, assignment = emd_assignment(target, output)
        assignment = np.asarray(assignment, dtype=np.int64)
        diff = output[assignment] - target
        d = np.sqrt(np.sum(diff ** 2, axis=1))
        safe = np.where(d > 0, d, 1.0)
        grad[assignment] = np.where(d[:, None] > 0, diff / safe[:, None], 0.0) / len(target)
        return float(d.sum() / len(target)), grad
    nn, d = nearest_in(output, target)
    grad = 2.0 * (output - target[nn]) / len(output)
    return float(np.mean(d ** 2)), grad


def repulsion_loss(output, k=5, h=0.03):
    """
    Repulsion term: sum over each output point i and its k nearest outputs j
    of -r * exp(-r^2 / h^2), r = ||x_i - x_j||

    Returns:
        tuple: (value, gradient w.r.t. the output points); coincident pairs
        contribute no gradient
    """
    output = as_points(output)
    if len(output) < 2:
        return 0.0, np.zeros_like(output)
    neighbors, r = build_index(output).query_all(k)
    weight = np.exp(-(r ** 2) / h ** 2)
    value = float(np.sum(-r * weight))
    dr = weight * (2.0 * r ** 2 / h ** 2 - 1.0)
    diff = output[:, None, :] - output[neighbors]
    safe = np.where(r > 0, r, 1.0)
    pair = np.where(r[..., None] > 0, (dr / safe)[..., None] * diff, 0.0)
    grad = pair.sum(axis=1)
    np.add.at(grad, neighbors.ravel(), -pair.reshape(-1, 3))
    return value, grad


def loss_terms(params, input_patch, target_patch, cfg, assignment=None):
    """
    Evaluates the upsampler loss on one patch pair

    Returns:
        tuple: (total, parameter gradients, dict of the three terms)
    """
    cfg.validate()
    inp, target = as_points(input_patch), as_points(target_patch)
    if len(target) == 0:
        raise ContractError('target patch must not be empty')
    out, cache = _forward(params.tensors, inp)
    rec, dout = _rec_loss(target, out, cfg.rec_mode, assignment)
    rep = 0.0
    if cfg.beta:
        rep, drep = repulsion_loss(out, cfg.k_rep, cfg.h)
        dout = dout + cfg.beta * drep
    decay = params.squared_norm()
    grads = _backward(params.tensors, cache, dout)
    if cfg.gamma:
        for name in grads:
            grads[name] = grads[name] + 2.0 * cfg.gamma * params.tensors[name]
    total = rec + cfg.beta * rep + cfg.gamma * decay
    return total, grads, {'rec': rec, 'rep': rep, 'decay': decay}


def total_loss(params, input_patch, target_patch, cfg, assignment=None):
    """
    L = L_rec(target, output) + beta * L_rep(output) + gamma * ||theta||^2

    Args:
        params (UpsamplerParams): weights
        input_patch (array-like): sparse normalized patch
        target_patch (array-like): dense normalized patch
        cfg (UpsampleLossConfig): loss weights and modes
        assignment (array-like): fixed EMD matching (output index per target
            point); recomputed when omitted

    Returns:
        tuple: (loss value, parameter gradients dict)
    """
    total, grads, _ = loss_terms(params, input_patch, target_patch, cfg, assignment)
    return total, grads


def extract_patches(cloud, patch_size, patches_per_cloud, seed=0, rate=2):
    """
    Cuts (sparse input, dense target) training pairs out of one cloud

    The dense patch is a random point and its rate * patch_size - 1 nearest
    neighbors; the sparse patch is a random patch_size subset of it. Both are
    normalized by the dense patch's centroid and radius.

    Returns:
        list: (input m x 3, target rate*m x 3) pairs

    Raises:
        ContractError: if the cloud has fewer than rate * patch_size points
    """
    points = as_points(cloud)
    dense_size = int(rate) * int(patch_size)
    if len(points) < dense_size:
        raise ContractError('cloud of ' + str(len(points)) + ' points is too small for patches of '
                            + str(dense_size))
    rng = np.random.default_rng(seed)
    index = build_index(points)
    centers = rng.choice(len(points), size=patches_per_cloud, replace=patches_per_cloud > len(points))
    pairs = []
    for center in centers:
        neighbors, _ = index.query(center, dense_size - 1)
        dense = points[np.concatenate([[center], neighbors])]
        sparse = dense[np.sort(rng.choice(dense_size, size=patch_size, replace=False))]
        normalized, c, scale = normalize_patch(dense)
        pairs.append(((sparse - c) / scale, normalized))
    return pairs


def reconstruction_error(params, patches, rec_mode='emd'):
    """Mean reconstruction loss of the upsampler over patch pairs"""
    if not patches:
        return float('nan')
    return float(np.mean([_rec_loss(t, upsample_patch(params, i), rec_mode)[0] for i, t in patches]))


def one_sided_error(patches, upsample):
    """
    Mean one-sided Chamfer distance from upsampled inputs to their dense
    targets

    Args:
        patches (list): (input, target) pairs
        upsample (callable): maps an input patch to its upsampled points

    Returns:
        float: the mean, nan for an empty patch list
    """
    if not patches:
        return float('nan')
    return float(np.mean([one_sided_chamfer(t, upsample(i)) for i, t in patches]))


def train_upsampler(patches, loss_cfg, config, verbose=False):
    """
    Trains the upsampler with Adam on patch pairs

    A validation_fraction of the pairs is held out. `history` has one record
    before training (epoch 0) and one after every epoch with the mean
    held-out reconstruction loss (`validation_rec`), the held-out one-sided
    Chamfer distance of the learned upsampler (`validation_chamfer`) and
    that of midpoint insertion on the same patches (`midpoint_chamfer`).

    Args:
        patches (list): pairs from extract_patches
        loss_cfg (UpsampleLossConfig): loss weights
        config (UpsamplerTrainConfig): optimization settings
        verbose (bool): show a progress bar

    Returns:
        UpsamplerParams: trained weights

    Raises:
        ContractError: on an empty patch list
    """
    loss_cfg.validate()
    config.validate()
    if not patches:
        raise ContractError('cannot train the upsampler on an empty patch set')
    rate = len(patches[0][1]) // len(patches[0][0])
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(patches))
    held = int(round(config.validation_fraction * len(patches)))
    if held >= len(patches):
        held = len(patches) - 1
    validation = [patches[i] for i in order[:held]]
    training = [patches[i] for i in order[held:]]

    # Defenses imports this module
    from .Defenses import midpoint_upsample
    midpoint = one_sided_error(validation, lambda p: midpoint_upsample(p, rate).points)

    def record(epoch, loss):
        return {'epoch': epoch, 'loss': loss,
                'validation_rec': reconstruction_error(params, validation, loss_cfg.rec_mode),
                'validation_chamfer': one_sided_error(validation, lambda p: upsample_patch(params, p)),
                'midpoint_chamfer': midpoint}

    params = UpsamplerParams.init(rate, seed=int(rng.integers(2 ** 31)), patch_size=config.patch_size)
    opt = Adam(config.learning_rate)
    params.history.append(record(0, None))
    for epoch in tqdm(range(1, config.epochs + 1), desc='train-upsampler', disable=not verbose):
        shuffled = rng.permutation(len(training))
        losses = []
        for start in range(0, len(training), config.batch_size):
            batch = shuffled[start:start + config.batch_size]
            summed = None
            for i in batch:
                loss, grads = total_loss(params, training[i][0], training[i][1], loss_cfg)
                losses.append(loss)
                if summed is None:
                    summed = grads
                else:
                    for name in summed:
                        summed[name] += grads[name]
            opt.step(params.tensors, {name: g / len(batch) for name, g in summed.items()})
        row = record(epoch, float(np.mean(losses)))
        params.history.append(row)
        logger.info('upsampler epoch %d loss %.5f validation rec %.5f chamfer %.5f (midpoint %.5f)', epoch,
                    row['loss'], row['validation_rec'], row['validation_chamfer'], row['midpoint_chamfer'])
    return params
