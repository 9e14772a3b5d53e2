"""
This module exposes ShapeDataset, the synthetic labeled dataset the
classifier is trained and attacked on: one class per shape family, every
cloud sampled from the family's surface with a randomized aspect ratio and
normalized into the unit cube.

On disk a dataset is a directory with `manifest.json` and one folder per
split, `{split}/{class}/{id:04d}.xyz`, plus a `labels.txt` sidecar per split.

Example:
        dataset = ShapeDataset.generate(DatasetConfig(seed=0))
        dataset.save('data/shapes')
        dataset = ShapeDataset.load('data/shapes')
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from tqdm import tqdm

from .Errors import ContractError, ParameterError
from .PointCloud import (
    SHAPE_FAMILIES, LabeledCloud, PointCloud, ShapeSpec, load_cloud,
    normalize_unit_cube, sample_shape, save_cloud)

logger = logging.getLogger(__name__)

SPLITS = ('train', 'test')


def derive_seed(master, *keys):
    """
    Deterministic 32-bit seed for a task, derived from the master seed and
    any number of keys (split, class, cloud id, ...)
    """
    text = ':'.join([str(master)] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:4], 'little')


@dataclass
class DatasetConfig:
    """
    Synthetic dataset settings

    Attributes:
        classes (list): shape families, one class each, in label order
        train_per_class (int): training clouds per class
        test_per_class (int): test clouds per class
        points (int): points per cloud
        scale (float): shape scale before normalization
        aspect_spread (float): aspect ratio is drawn from 1 +/- this
        jitter (float): surface noise standard deviation
        seed (int): master seed
    """
    classes: list = field(default_factory=lambda: list(SHAPE_FAMILIES))
    train_per_class: int = 300
    test_per_class: int = 60
    points: int = 1024
    scale: float = 0.5
    aspect_spread: float = 0.2
    jitter: float = 0.005
    seed: int = 0

    def validate(self):
        if len(self.classes) < 2:
            raise ParameterError('a dataset needs at least 2 classes')
        if len(set(self.classes)) != len(self.classes):
            raise ParameterError('dataset classes must be distinct')
        for family in self.classes:
            if family not in SHAPE_FAMILIES:
                raise ParameterError('unknown shape family "' + str(family) + '"')
        if self.train_per_class < 0 or self.test_per_class < 0 or self.points < 1:
            raise ParameterError('cloud counts must be non-negative and points positive')
        if not 0 <= self.aspect_spread < 1:
            raise ParameterError('aspect_spread must lie in [0, 1)')

    def to_dict(self):
        return asdict(self)


class ShapeDataset:
    """
    Labeled clouds of both splits, held as stacked arrays

    Args:
        class_names (list): class name per label
        splits (dict): split -> (points B x n x 3, labels B, ids B)
        config (dict): settings the dataset was generated with

    Attributes:
        class_names (list): class name per label
        train_points (numpy.ndarray): training clouds, B x n x 3
        train_labels (numpy.ndarray): training labels
        test_points (numpy.ndarray): test clouds, B x n x 3
        test_labels (numpy.ndarray): test labels
        config (dict): generation settings
    """
    def __init__(self, class_names, splits, config=None):
        self.class_names = list(class_names)
        self.config = config or {}
        self._splits = {}
        for split in SPLITS:
            points, labels, ids = splits.get(split, (np.empty((0, 0, 3)), np.empty(0, dtype=np.int64), []))
            labels = np.asarray(labels, dtype=np.int64)
            if len(points) != len(labels) or len(labels) != len(ids):
                raise ContractError(split + ' split has mismatched points, labels and ids')
            if len(labels) and (labels.min() < 0 or labels.max() >= len(self.class_names)):
                raise ContractError(split + ' split holds labels outside [0, ' + str(len(self.class_names)) + ')')
            self._splits[split] = (np.asarray(points, dtype=np.float64), labels, list(ids))

    @property
    def train_points(self):
        return self._splits['train'][0]

    @property
    def train_labels(self):
        return self._splits['train'][1]

    @property
    def test_points(self):
        return self._splits['test'][0]

    @property
    def test_labels(self):
        return self._splits['test'][1]

    def ids(self, split):
        return list(self._splits[split][2])

    def __len__(self):
        return sum(len(labels) for _, labels, _ in self._splits.values())

    def clouds(self, split, families=None):
        """
        Yields the clouds of one split as LabeledCloud, in id order

        Args:
            split (str): 'train' or 'test'
            families (list): restrict to these class names
        """
        if split not in SPLITS:
            raise ParameterError('unknown split "' + str(split) + '"')
        points, labels, ids = self._splits[split]
        allowed = None if families is None else {self.class_names.index(f) for f in families}
        for p, label, cloud_id in zip(points, labels, ids):
            if allowed is None or label in allowed:
                yield LabeledCloud(PointCloud(p), int(label), cloud_id)

    @classmethod
    def generate(cls, config, verbose=False):
        """
        Samples a dataset; the same config always yields the same clouds

        Args:
            config (DatasetConfig): dataset settings
            verbose (bool): show a progress bar

        Returns:
            ShapeDataset: the generated dataset
        """
        config.validate()
        splits = {}
        counts = {'train': config.train_per_class, 'test': config.test_per_class}
        total = len(config.classes) * (config.train_per_class + config.test_per_class)
        bar = tqdm(total=total, desc='generate', disable=not verbose)
        for split in SPLITS:
            points, labels, ids = [], [], []
            for label, family in enumerate(config.classes):
                for i in range(counts[split]):
                    seed = derive_seed(config.seed, split, family, i)
                    rng = np.random.default_rng(seed)
                    aspect = 1.0 + rng.uniform(-config.aspect_spread, config.aspect_spread)
                    spec = ShapeSpec(family, config.scale, aspect, config.jitter)
                    cloud = normalize_unit_cube(sample_shape(spec, config.points, int(rng.integers(2 ** 32))))
                    points.append(cloud.points)
                    labels.append(label)
                    ids.append(family + '/' + '{:04d}'.format(i))
                    bar.update(1)
            stacked = np.stack(points) if points else np.empty((0, config.points, 3))
            splits[split] = (stacked, labels, ids)
        bar.close()
        logger.info('generated %d clouds over %d classes', total, len(config.classes))
        return cls(config.classes, splits, config.to_dict())

    def save(self, root):
        """
        Writes every cloud, the per-split labels.txt and manifest.json

        Args:
            root (str): dataset directory, created when missing

        Returns:
            str: the manifest path
        """
        counts = {}
        for split in SPLITS:
            points, labels, ids = self._splits[split]
            lines = []
            for p, label, cloud_id in zip(points, labels, ids):
                relative = cloud_id + '.xyz'
                target = os.path.join(root, split, relative)
                os.makedirs(os.path.dirname(target), exist_ok=True)
                save_cloud(p, target)
                lines.append(relative + ' ' + str(int(label)))
            os.makedirs(os.path.join(root, split), exist_ok=True)
            with open(os.path.join(root, split, 'labels.txt'), 'w') as f:
                f.write('\n'.join(lines) + ('\n' if lines else ''))
            counts[split] = {name: int(np.sum(labels == i)) for i, name in enumerate(self.class_names)}
        manifest = {'class_names': self.class_names, 'counts': counts, 'config': self.config}
        path = os.path.join(root, 'manifest.json')
        with open(path, 'w') as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, root):
        """
        Reads a dataset written by save

        Raises:
            ContractError: if the manifest or a labels.txt is missing, or a
                listed cloud disagrees with the manifest
        """
        manifest_path = os.path.join(root, 'manifest.json')
        if not os.path.exists(manifest_path):
            raise ContractError('no dataset manifest at "' + manifest_path + '"')
        with open(manifest_path) as f:
            manifest = json.load(f)
        class_names = manifest['class_names']
        splits = {}
        for split in SPLITS:
            labels_path = os.path.join(root, split, 'labels.txt')
            if not os.path.exists(labels_path):
                raise ContractError('missing "' + labels_path + '"')
            points, labels, ids = [], [], []
            with open(labels_path) as f:
                for line in f:
                    if not line.strip():
                        continue
                    relative, label = line.rsplit(None, 1)
                    points.append(load_cloud(os.path.join(root, split, relative)).points)
                    labels.append(int(label))
                    ids.append(relative[:-len('.xyz')] if relative.endswith('.xyz') else relative)
            expected = sum(manifest['counts'][split].values())
            if expected != len(labels):
                raise ContractError(split + ' split lists ' + str(len(labels)) + ' clouds, manifest says '
                                    + str(expected))
            sizes = {len(p) for p in points}
            if len(sizes) > 1:
                raise ContractError(split + ' split mixes clouds of different sizes')
            stacked = np.stack(points) if points else np.empty((0, 0, 3))
            splits[split] = (stacked, labels, ids)
        return cls(class_names, splits, manifest.get('config', {}))
