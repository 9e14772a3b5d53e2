"""
This module exposes the point-set classifier: a shared per-point MLP
(3 -> 32 -> 64 -> 128, ReLU), a global max pool and a dense head
(128 -> 64 -> C), with hand-derived gradients with respect to both the
weights (training) and the input coordinates (attacks).

Max-pool ties go to the smallest point index, in the forward pass and in
the gradient routing alike.

Example:
        params = train(dataset, TrainConfig(epochs=30, seed=0))
        label = predict(params, cloud)
"""

import logging
from dataclasses import dataclass, asdict

import numpy as np
from tqdm import tqdm

from .Adam import Adam
from .Checkpoint import load_checkpoint, save_checkpoint
from .Errors import ContractError, ParameterError
from .PointCloud import as_points

logger = logging.getLogger(__name__)

TENSOR_NAMES = ('W1', 'b1', 'W2', 'b2', 'W3', 'b3', 'W4', 'b4', 'W5', 'b5')


class ClassifierParams:
    """
    Weights of the classifier

    Args:
        tensors (dict): W1..W5 and b1..b5
        history (list): per-epoch training records, if any

    Attributes:
        tensors (dict): name -> numpy array
        num_classes (int): number of output classes
        history (list): dicts with epoch, loss, train_accuracy, test_accuracy
    """
    def __init__(self, tensors, history=None):
        missing = [name for name in TENSOR_NAMES if name not in tensors]
        if missing:
            raise ContractError('classifier tensors missing: ' + ', '.join(missing))
        self.tensors = {name: np.array(tensors[name], dtype=np.float64) for name in TENSOR_NAMES}
        for i in range(1, 5):
            if self.tensors['W' + str(i)].shape[1] != self.tensors['W' + str(i + 1)].shape[0]:
                raise ContractError('classifier layer shapes do not chain at layer ' + str(i))
        self.history = history or []

    def __getitem__(self, name):
        return self.tensors[name]

    @property
    def num_classes(self):
        return self.tensors['W5'].shape[1]

    @property
    def feature_dim(self):
        return self.tensors['W3'].shape[1]

    @classmethod
    def init(cls, num_classes, seed=0, widths=(32, 64, 128), head=64):
        """
        He-initialized parameters

        Args:
            num_classes (int): number of classes C
            seed (int): initialization seed
            widths (tuple): per-point MLP widths
            head (int): hidden width of the dense head

        Returns:
            ClassifierParams: fresh parameters
        """
        rng = np.random.default_rng(seed)
        sizes = [3] + list(widths) + [head, num_classes]
        tensors = {}
        for i in range(5):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            tensors['W' + str(i + 1)] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            tensors['b' + str(i + 1)] = np.zeros(fan_out)
        return cls(tensors)

    def copy(self):
        return ClassifierParams({k: v.copy() for k, v in self.tensors.items()}, list(self.history))

    def save(self, path):
        save_checkpoint(path, 'classifier', self.tensors, {'history': self.history})

    @classmethod
    def load(cls, path):
        _, tensors, meta = load_checkpoint(path, kind='classifier')
        return cls(tensors, meta.get('history', []))


@dataclass
class ForwardTrace:
    """
    Everything one forward pass computed for a single cloud

    Attributes:
        pre_activations (list): z1, z2, z3 (per point) and the head's
            hidden pre-activation
        pooled (numpy.ndarray): max-pooled global feature
        argmax (numpy.ndarray): point index achieving each pooled value
        logits (numpy.ndarray): class scores Z(X)
    """
    pre_activations: list
    pooled: np.ndarray
    argmax: np.ndarray
    logits: np.ndarray


@dataclass
class TrainConfig:
    """Classifier training settings (Adam, fixed seed)"""
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.001
    seed: int = 0
    weight_decay: float = 1e-4

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError('epochs and batch_size must be positive')
        if not (self.learning_rate > 0 and self.weight_decay >= 0):
            raise ParameterError('learning_rate must be positive and weight_decay non-negative')

    def to_dict(self):
        return asdict(self)


def _relu(x):
    return np.maximum(x, 0.0)


def _forward(params, X):
    t = params.tensors
    z1 = X @ t['W1'] + t['b1']
    a1 = _relu(z1)
    z2 = a1 @ t['W2'] + t['b2']
    a2 = _relu(z2)
    z3 = a2 @ t['W3'] + t['b3']
    a3 = _relu(z3)
    arg = np.argmax(a3, axis=1)
    pooled = np.take_along_axis(a3, arg[:, None, :], axis=1)[:, 0, :]
    h = pooled @ t['W4'] + t['b4']
    a4 = _relu(h)
    logits = a4 @ t['W5'] + t['b5']
    return {'X': X, 'z1': z1, 'a1': a1, 'z2': z2, 'a2': a2, 'z3': z3, 'arg': arg,
            'pooled': pooled, 'h': h, 'a4': a4, 'logits': logits}


def _backward(params, cache, dlogits):
    t = params.tensors
    g = {}
    g['W5'] = cache['a4'].T @ dlogits
    g['b5'] = dlogits.sum(axis=0)
    dh = (dlogits @ t['W5'].T) * (cache['h'] > 0)
    g['W4'] = cache['pooled'].T @ dh
    g['b4'] = dh.sum(axis=0)
    dpooled = dh @ t['W4'].T

    da3 = np.zeros_like(cache['z3'])
    np.put_along_axis(da3, cache['arg'][:, None, :], dpooled[:, None, :], axis=1)
    dz3 = da3 * (cache['z3'] > 0)
    a2 = cache['a2']
    g['W3'] = a2.reshape(-1, a2.shape[-1]).T @ dz3.reshape(-1, dz3.shape[-1])
    g['b3'] = dz3.sum(axis=(0, 1))
    dz2 = (dz3 @ t['W3'].T) * (cache['z2'] > 0)
    a1 = cache['a1']
    g['W2'] = a1.reshape(-1, a1.shape[-1]).T @ dz2.reshape(-1, dz2.shape[-1])
    g['b2'] = dz2.sum(axis=(0, 1))
    dz1 = (dz2 @ t['W2'].T) * (cache['z1'] > 0)
    g['W1'] = cache['X'].reshape(-1, 3).T @ dz1.reshape(-1, dz1.shape[-1])
    g['b1'] = dz1.sum(axis=(0, 1))
    dX = dz1 @ t['W1'].T
    return g, dX


def _cross_entropy(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(labels))
    losses = log_norm - shifted[rows, labels]
    probs = np.exp(shifted - log_norm[:, None])
    probs[rows, labels] -= 1.0
    return losses, probs


def forward(params, cloud):
    """
    Runs the classifier on one cloud

    Args:
        params (ClassifierParams): weights
        cloud (PointCloud | array-like): n x 3 points in the unit cube

    Returns:
        ForwardTrace: pre-activations, pooled feature, argmax points, logits
    """
    cache = _forward(params, as_points(cloud)[None])
    return ForwardTrace(
        [cache['z1'][0], cache['z2'][0], cache['z3'][0], cache['h'][0]],
        cache['pooled'][0], cache['arg'][0], cache['logits'][0])


def logits(params, cloud):
    """Class scores Z(X) of one cloud"""
    return _forward(params, as_points(cloud)[None])['logits'][0]


def predict(params, cloud):
    """Predicted class of one cloud; ties go to the smallest class index"""
    return int(np.argmax(logits(params, cloud)))


def predict_batch(params, points, batch_size=64):
    """
    Predicted classes of a stack of equal-size clouds

    Args:
        points (numpy.ndarray): B x n x 3 clouds

    Returns:
        numpy.ndarray: B predicted labels
    """
    out = []
    for start in range(0, len(points), batch_size):
        out.append(np.argmax(_forward(params, points[start:start + batch_size])['logits'], axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def accuracy(params, points, labels, batch_size=64):
    """Fraction of clouds classified correctly"""
    if len(labels) == 0:
        return float('nan')
    return float(np.mean(predict_batch(params, points, batch_size) == np.asarray(labels)))


def loss_and_grads(params, cloud, label):
    """
    Cross-entropy loss of one cloud with analytic gradients

    Args:
        params (ClassifierParams): weights
        cloud (PointCloud | array-like): n x 3 points
        label (int): ground-truth class

    Returns:
        tuple: (loss, parameter gradients dict, n x 3 gradient w.r.t. points)
    """
    if not 0 <= label < params.num_classes:
        raise ParameterError('label ' + str(label) + ' outside [0, ' + str(params.num_classes) + ')')
    cache = _forward(params, as_points(cloud)[None])
    losses, dlogits = _cross_entropy(cache['logits'], np.array([label]))
    grads, dX = _backward(params, cache, dlogits)
    return float(losses[0]), grads, dX[0]


def logit_objective(params, cloud, head):
    """
    Evaluates a scalar function of the logits and its gradient w.r.t. the
    points, with a single forward and backward pass

    Args:
        params (ClassifierParams): weights
        cloud (PointCloud | array-like): n x 3 points
        head (callable): logits -> (value, gradient w.r.t. logits)

    Returns:
        tuple: (value, logits, n x 3 gradient)
    """
    cache = _forward(params, as_points(cloud)[None])
    value, dlogits = head(cache['logits'][0])
    _, dX = _backward(params, cache, np.asarray(dlogits, dtype=np.float64)[None])
    return value, cache['logits'][0], dX[0]


def batch_loss_and_grads(params, points, labels):
    """Mean cross-entropy and mean parameter gradients over a batch"""
    cache = _forward(params, points)
    losses, dlogits = _cross_entropy(cache['logits'], labels)
    grads, _ = _backward(params, cache, dlogits / len(labels))
    return float(losses.mean()), grads


def critical_subset(params, cloud):
    """
    Points achieving the max in at least one pooled feature dimension

    Removing every other point leaves the logits unchanged.

    Returns:
        numpy.ndarray: sorted point indices
    """
    return np.unique(forward(params, cloud).argmax)


def train(dataset, config, verbose=False):
    """
    Trains the classifier with Adam on minibatches

    Args:
        dataset (ShapeDataset): needs train_points, train_labels,
            test_points, test_labels and class_names
        config (TrainConfig): training settings
        verbose (bool): show a progress bar

    Returns:
        ClassifierParams: trained weights; `history` holds per-epoch
        loss and train/test accuracy

    Raises:
        ContractError: on an empty dataset or fewer than 2 classes
    """
    config.validate()
    X, y = dataset.train_points, np.asarray(dataset.train_labels, dtype=np.int64)
    if len(y) == 0:
        raise ContractError('cannot train on an empty dataset')
    num_classes = len(dataset.class_names)
    if num_classes < 2:
        raise ContractError('training needs at least 2 classes')

    rng = np.random.default_rng(config.seed)
    params = ClassifierParams.init(num_classes, seed=int(rng.integers(2 ** 31)))
    opt = Adam(config.learning_rate)
    for epoch in tqdm(range(1, config.epochs + 1), desc='train', disable=not verbose):
        order = rng.permutation(len(y))
        losses = []
        for start in range(0, len(y), config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads = batch_loss_and_grads(params, X[batch], y[batch])
            if config.weight_decay:
                for name in grads:
                    grads[name] += config.weight_decay * params.tensors[name]
            opt.step(params.tensors, grads)
            losses.append(loss * len(batch))
        record = {
            'epoch': epoch,
            'loss': float(np.sum(losses) / len(y)),
            'train_accuracy': accuracy(params, X, y),
            'test_accuracy': accuracy(params, dataset.test_points, dataset.test_labels),
        }
        params.history.append(record)
        logger.info('epoch %d loss %.4f train %.4f test %.4f', epoch, record['loss'],
                    record['train_accuracy'], record['test_accuracy'])
    return params
