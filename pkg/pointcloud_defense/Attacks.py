"""
This module exposes the white-box attacks on the classifier: C&W point
shifting (l2), C&W point adding (Hausdorff or Chamfer, initialize-and-shift)
and saliency-map iterative point dropping.

Example:
        result = cw_shift(params, cloud, label, CwConfig(steps=200))
        if result.success:
            save_cloud(result.cloud, 'adv.xyz')
"""

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import Classifier
from .Adam import Adam
from .Errors import AttackAborted, ContractError, ParameterError
from .Metrics import hausdorff_directed, nearest_in, one_sided_chamfer, paired_l2
from .PointCloud import as_points

logger = logging.getLogger(__name__)

ADD_METRICS = ('hausdorff', 'chamfer')


@dataclass
class CwConfig:
    """
    Settings of the C&W attacks

    Attributes:
        c (float): weight of the margin loss against the distance
        kappa (float): margin at which the loss stops pushing
        steps (int): Adam iterations per binary-search round
        step_size (float): Adam learning rate
        targeted (bool): aim at `target` instead of any wrong class
        target (int): target class; defaults to (label + 1) mod C
        binary_search_rounds (int): rounds of search over c
        c_min (float): lower end of the c search range
        c_max (float): upper end of the c search range
        added (int): number of points added by cw_add
        seed (int): seed choosing where added points start
    """
    c: float = 1.0
    kappa: float = 0.0
    steps: int = 200
    step_size: float = 0.01
    targeted: bool = False
    target: int = None
    binary_search_rounds: int = 5
    c_min: float = 0.1
    c_max: float = 100.0
    added: int = 64
    seed: int = 0

    def validate(self):
        if self.steps < 0:
            raise ParameterError('steps must be non-negative')
        if self.c < 0 or self.kappa < 0:
            raise ParameterError('c and kappa must be non-negative')
        if not self.step_size > 0:
            raise ParameterError('step_size must be positive')
        if self.binary_search_rounds < 1:
            raise ParameterError('binary_search_rounds must be at least 1')
        if not 0 < self.c_min <= self.c_max:
            raise ParameterError('c search range must satisfy 0 < c_min <= c_max')

    def to_dict(self):
        return asdict(self)


@dataclass
class SaliencyConfig:
    """
    Settings of the saliency dropping attack

    Attributes:
        alpha (float): rescaling exponent of the saliency score
        loops (int): number of drop rounds T
        total_drop (int): points dropped over all rounds
    """
    alpha: float = 1.0
    loops: int = 10
    total_drop: int = 200

    def validate(self):
        if self.alpha < 0:
            raise ParameterError('alpha must be non-negative')
        if self.loops < 1 or self.total_drop < 0:
            raise ParameterError('loops must be positive and total_drop non-negative')
        if self.total_drop % self.loops:
            raise ParameterError(
                'total_drop (' + str(self.total_drop) + ') must be divisible by loops (' + str(self.loops) + ')')

    def to_dict(self):
        return asdict(self)


@dataclass
class AttackResult:
    """
    An adversarial cloud and how it was obtained

    Attributes:
        cloud (numpy.ndarray): adversarial points X'
        success (bool): the classifier is fooled (or hits the target)
        distortion (float): distance under the attack's own metric
        predicted (int): classifier output on X'
        iterations (int): optimization steps or drop rounds used
        label (int): ground truth of the clean cloud
        target (int): target class of a targeted attack
        attack (str): attack name
        skipped (bool): clean cloud was already misclassified; X' = X
        details (dict): attack-specific extras (final c, dropped indices, ...)
    """
    cloud: np.ndarray
    success: bool
    distortion: float
    predicted: int
    iterations: int
    label: int
    target: int = None
    attack: str = ''
    skipped: bool = False
    details: dict = field(default_factory=dict)

    def provenance(self):
        """JSON-ready record of everything but the coordinates"""
        out = {k: v for k, v in asdict(self).items() if k != 'cloud'}
        out['points'] = int(len(self.cloud))
        return out


def _margin(logits, true_label, kappa, targeted, target):
    logits = np.asarray(logits, dtype=np.float64)
    if len(logits) < 2:
        raise ContractError('margin loss needs at least 2 classes')
    if targeted:
        if target is None:
            raise ParameterError('targeted margin loss needs a target label')
        if target == true_label:
            raise ParameterError('target label equals the true label')
        anchor, sign = target, -1.0
    else:
        anchor, sign = true_label, 1.0
    others = logits.copy()
    others[anchor] = -np.inf
    best = int(np.argmax(others))
    raw = sign * (logits[anchor] - logits[best])
    grad = np.zeros_like(logits)
    if not np.isfinite(raw):
        return float(raw), grad
    if raw > -kappa:
        grad[anchor] = sign
        grad[best] = -sign
        return float(raw), grad
    return float(-kappa), grad


def margin_loss(logits, true_label, kappa=0.0, targeted=False, target=None):
    """
    C&W margin loss

    Untargeted: max(Z_true - max_{i != true} Z_i, -kappa).
    Targeted: max(max_{i != t} Z_i - Z_t, -kappa).

    Raises:
        ParameterError: if a targeted attack aims at the true label
    """
    return _margin(logits, true_label, kappa, targeted, target)[0]


def _resolve_target(cfg, label, num_classes):
    if not cfg.targeted:
        return None
    target = cfg.target if cfg.target is not None else (label + 1) % num_classes
    if target == label:
        raise ParameterError('target label equals the true label')
    return int(target)


def _fooled(pred, label, target):
    return pred == target if target is not None else pred != label


def _skip_if_misclassified(params, points, label, target, name):
    pred = Classifier.predict(params, points)
    if pred == label:
        return None
    logger.debug('%s: clean cloud already predicted %d (label %d), left unchanged', name, pred, label)
    return AttackResult(points.copy(), _fooled(pred, label, target), 0.0, pred, 0, label, target, name, True,
                        {'skip_reason': 'misclassified before the attack'})


def _run_cw(params, label, cfg, free_init, assemble, distance, report, name):
    """
    Minimizes distance(free) + c * margin(assemble(free)) with Adam and an
    optional binary search over c, keeping the lowest-distortion success

    `free` are the coordinates being optimized; their gradient is the last
    len(free) rows of the input gradient.
    """
    target = _resolve_target(cfg, label, params.num_classes)

    def head(z):
        return _margin(z, label, cfg.kappa, target is not None, target)

    search = cfg.c > 0 and cfg.binary_search_rounds > 1
    rounds = cfg.binary_search_rounds if search else 1
    lo, hi = cfg.c_min, cfg.c_max
    c = min(max(cfg.c, lo), hi) if search else cfg.c
    best, last = None, None
    iterations = 0
    for rnd in range(rounds):
        state = {'free': np.array(free_init, dtype=np.float64)}
        opt = Adam(cfg.step_size)
        succeeded = False
        for it in range(cfg.steps + 1):
            free = state['free']
            cloud = assemble(free)
            f, z, dX = Classifier.logit_objective(params, cloud, head)
            d, d_grad = distance(free)
            total = d + c * f
            if not np.isfinite(total):
                raise AttackAborted(name + ': non-finite objective',
                                    {'round': rnd, 'iteration': it, 'c': c, 'distance': d, 'margin': f})
            pred = int(np.argmax(z))
            if _fooled(pred, label, target):
                succeeded = True
                distortion = report(cloud)
                if best is None or distortion < best[1]:
                    best = (cloud.copy(), distortion, pred, c)
            last = (cloud, pred)
            if it == cfg.steps:
                break
            grad = d_grad + c * dX[len(dX) - len(free):]
            opt.step(state, {'free': grad})
            np.clip(state['free'], 0.0, 1.0, out=state['free'])
        iterations += cfg.steps
        logger.debug('%s round %d c=%.4g success=%s', name, rnd, c, succeeded)
        if search:
            if succeeded:
                hi = min(hi, c)
            else:
                lo = max(lo, c)
            c = math.sqrt(lo * hi)

    if best is not None:
        cloud, distortion, pred, c_used = best
        return AttackResult(cloud, True, float(distortion), pred, iterations, label, target, name,
                            details={'c': c_used})
    cloud, pred = last
    return AttackResult(cloud.copy(), False, float(report(cloud)), pred, iterations, label, target, name,
                        details={'c': c})


def cw_shift(params, cloud, label, cfg):
    """
    C&W point-shifting attack: minimizes ||delta||^2 + c * f(X + delta)
    with X + delta kept inside the unit cube

    Args:
        params (ClassifierParams): attacked classifier
        cloud (PointCloud | array-like): clean cloud
        label (int): true label
        cfg (CwConfig): attack settings

    Returns:
        AttackResult: distortion is the l2 norm of the whole perturbation

    Raises:
        AttackAborted: if the objective becomes non-finite
    """
    cfg.validate()
    X = np.array(as_points(cloud), dtype=np.float64)
    target = _resolve_target(cfg, label, params.num_classes)
    skipped = _skip_if_misclassified(params, X, label, target, 'cw_shift')
    if skipped is not None:
        return skipped

    def distance(free):
        delta = free - X
        return float(np.sum(delta ** 2)), 2.0 * delta

    return _run_cw(params, label, cfg, X, lambda free: free, distance,
                   lambda adv: paired_l2(X, adv)[1], 'cw_shift')


def cw_add(params, cloud, label, cfg, metric='hausdorff'):
    """
    C&W point-adding attack: `cfg.added` points start on randomly chosen
    points of X and are shifted to minimize D(added, X) + c * f(X ∪ added);
    the original points are never moved

    Args:
        params (ClassifierParams): attacked classifier
        cloud (PointCloud | array-like): clean cloud
        label (int): true label
        cfg (CwConfig): attack settings
        metric (str): 'hausdorff' (directed, added -> X) or 'chamfer'
            (mean squared nearest distance, added -> X)

    Returns:
        AttackResult: X' has len(X) + cfg.added points, originals first
    """
    cfg.validate()
    if metric not in ADD_METRICS:
        raise ParameterError('unknown adding metric "' + str(metric) + '"')
    if cfg.added < 1:
        raise ParameterError('cw_add needs at least one added point')
    X = np.array(as_points(cloud), dtype=np.float64)
    name = 'cw_add_' + metric
    target = _resolve_target(cfg, label, params.num_classes)
    skipped = _skip_if_misclassified(params, X, label, target, name)
    if skipped is not None:
        return skipped

    rng = np.random.default_rng(cfg.seed)
    start = rng.choice(len(X), size=cfg.added, replace=cfg.added > len(X))
    added_init = X[start].copy()

    def assemble(free):
        return np.concatenate([X, free])

    def distance(free):
        nn, d = nearest_in(free, X)
        grad = np.zeros_like(free)
        if metric == 'chamfer':
            grad = 2.0 * (free - X[nn]) / len(free)
            return float(np.mean(d ** 2)), grad
        j = int(np.argmax(d))
        if d[j] > 0:
            grad[j] = (free[j] - X[nn[j]]) / d[j]
        return float(d[j]), grad

    def report(adv):
        added = adv[len(X):]
        return hausdorff_directed(added, X) if metric == 'hausdorff' else one_sided_chamfer(X, added)

    result = _run_cw(params, label, cfg, added_init, assemble, distance, report, name)
    result.details['start_indices'] = [int(i) for i in start]
    return result


def saliency_scores(params, cloud, label, alpha=1.0):
    """
    Per-point saliency s_i = -r_i^alpha * (x_i - x_c) . g_i, where g_i is the
    loss gradient at x_i, x_c the coordinate-wise median of the cloud and
    r_i = ||x_i - x_c||

    Returns:
        numpy.ndarray: one score per point
    """
    X = as_points(cloud)
    _, _, g = Classifier.loss_and_grads(params, X, label)
    diff = X - np.median(X, axis=0)
    r = np.sqrt(np.sum(diff ** 2, axis=1))
    return -(r ** alpha) * np.sum(diff * g, axis=1)


def drop_attack(params, cloud, label, cfg):
    """
    Saliency-map point dropping: for `cfg.loops` rounds, recompute the
    scores on the surviving points and drop the total_drop / loops points
    with the lowest scores

    Returns:
        AttackResult: X' has n - total_drop points; distortion is the
        number of dropped points. A cloud the classifier already gets wrong
        is not attacked: the result is marked `skipped`, keeps all n
        points and has distortion 0.

    Raises:
        ParameterError: if total_drop is not divisible by loops
        ContractError: if total_drop >= n
    """
    cfg.validate()
    X = np.array(as_points(cloud), dtype=np.float64)
    if cfg.total_drop >= len(X):
        raise ContractError('cannot drop ' + str(cfg.total_drop) + ' of ' + str(len(X)) + ' points')
    skipped = _skip_if_misclassified(params, X, label, None, 'drop')
    if skipped is not None:
        return skipped

    keep = np.arange(len(X))
    per_loop = cfg.total_drop // cfg.loops
    for _ in range(cfg.loops):
        scores = saliency_scores(params, X[keep], label, cfg.alpha)
        lowest = np.argsort(scores, kind='stable')[:per_loop]
        keep = np.delete(keep, lowest)
    adv = X[keep]
    pred = Classifier.predict(params, adv)
    dropped = np.setdiff1d(np.arange(len(X)), keep)
    return AttackResult(adv, pred != label, float(cfg.total_drop), pred, cfg.loops, label, None, 'drop',
                        details={'dropped_indices': [int(i) for i in dropped]})


ATTACK_TYPES = ('cw_shift', 'cw_add', 'drop')


@dataclass
class AttackSpec:
    """
    One configured attack of an experiment

    Attributes:
        type (str): 'cw_shift', 'cw_add' or 'drop'
        name (str): row name in reports and output folder; defaults to the type
        metric (str): cw_add distance, 'hausdorff' or 'chamfer'
        cw (dict): CwConfig overrides
        saliency (dict): SaliencyConfig overrides
    """
    type: str = 'cw_shift'
    name: str = ''
    metric: str = 'hausdorff'
    cw: dict = field(default_factory=dict)
    saliency: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            self.name = self.type

    @classmethod
    def from_dict(cls, raw):
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError('unknown attack fields: ' + ', '.join(sorted(unknown)))
        return cls(**raw)

    def to_dict(self):
        return asdict(self)

    def cw_config(self, seed=0):
        allowed = set(CwConfig.__dataclass_fields__)
        unknown = set(self.cw) - allowed
        if unknown:
            raise ParameterError('unknown C&W settings: ' + ', '.join(sorted(unknown)))
        cfg = CwConfig(**self.cw)
        if 'seed' not in self.cw:
            cfg.seed = seed
        return cfg

    def saliency_config(self):
        unknown = set(self.saliency) - set(SaliencyConfig.__dataclass_fields__)
        if unknown:
            raise ParameterError('unknown saliency settings: ' + ', '.join(sorted(unknown)))
        return SaliencyConfig(**self.saliency)

    @property
    def paired(self):
        """True when X' keeps the points of X in order (paired l2 applies)"""
        return self.type == 'cw_shift'

    def validate(self):
        if self.type not in ATTACK_TYPES:
            raise ParameterError('unknown attack type "' + str(self.type) + '"')
        if self.type == 'drop':
            self.saliency_config().validate()
        else:
            self.cw_config().validate()
        if self.type == 'cw_add' and self.metric not in ADD_METRICS:
            raise ParameterError('unknown adding metric "' + str(self.metric) + '"')

    def run(self, params, cloud, label, seed=0):
        """
        Attacks one cloud

        Args:
            params (ClassifierParams): attacked classifier
            cloud (PointCloud | array-like): clean cloud
            label (int): true label
            seed (int): per-cloud seed, used where the attack is randomized

        Returns:
            AttackResult: the adversarial cloud and its provenance
        """
        if self.type == 'cw_shift':
            result = cw_shift(params, cloud, label, self.cw_config(seed))
        elif self.type == 'cw_add':
            result = cw_add(params, cloud, label, self.cw_config(seed), self.metric)
        elif self.type == 'drop':
            result = drop_attack(params, cloud, label, self.saliency_config())
        else:
            raise ParameterError('unknown attack type "' + str(self.type) + '"')
        result.attack = self.name
        return result
