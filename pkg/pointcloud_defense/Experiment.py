"""
This module exposes ExperimentConfig, the YAML-backed settings of one
experiment, and ExperimentReport, the attack x defense accuracy grid it
produces.

Example:
        config = ExperimentConfig.from_yaml('experiment.yaml')
        report = ExperimentReport.from_json('runs/default/report.json')
"""

import copy
import csv
import json
import logging
import os

import yaml

from .Attacks import AttackSpec
from .Defenses import DefenseSpec, SorConfig
from .Errors import ContractError, ParameterError
from .MarkdownTable import MarkdownTable
from .Metrics import ADV_MODES
from .PointCloud import SHAPE_FAMILIES
from .ShapeDataset import DatasetConfig
from .Upsampler import REC_MODES

logger = logging.getLogger(__name__)


def _merge(defaults, override, where):
    merged = copy.deepcopy(defaults)
    for key, value in (override or {}).items():
        if key not in defaults:
            raise ParameterError('unknown config key "' + where + key + '"')
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge(defaults[key], value, where + key + '.')
        else:
            merged[key] = value
    return merged


class ExperimentConfig:
    """
    Fully explicit experiment settings

    Every key has a default in DEFAULTS; a config file only overrides keys.
    Checkpoint paths left empty resolve inside `output_dir`. Learned
    upsampler defenses without their own checkpoint or rate use those of
    the `upsampler` section.

    Args:
        values (dict): overrides of DEFAULTS

    Attributes:
        values (dict): effective settings
        attacks (list): AttackSpec per configured attack
        defenses (list): DefenseSpec per configured defense
    """
    DEFAULTS = {
        'seed': 0,
        'output_dir': 'runs/default',
        'workers': 1,
        'max_test_clouds': None,
        'epsilon': 0.04,
        'dataset': {
            'root': 'data/shapes',
            'classes': list(SHAPE_FAMILIES),
            'train_per_class': 300,
            'test_per_class': 60,
            'points': 1024,
            'scale': 0.5,
            'aspect_spread': 0.2,
            'jitter': 0.005,
        },
        'classifier': {
            'checkpoint': None,
            'epochs': 30,
            'batch_size': 32,
            'learning_rate': 0.001,
            'weight_decay': 0.0001,
        },
        'upsampler': {
            'checkpoint': None,
            'rate': 2,
            'patch_size': 32,
            'patches_per_cloud': 8,
            'clouds_per_class': 20,
            'families': None,
            'epochs': 20,
            'batch_size': 16,
            'learning_rate': 0.001,
            'validation_fraction': 0.1,
            'beta': 0.01,
            'gamma': 1e-05,
            'rec_mode': 'emd',
            'k_rep': 5,
            'h': 0.03,
        },
        'attacks': [
            {'name': 'cw_l2', 'type': 'cw_shift'},
            {'name': 'cw_add_hausdorff', 'type': 'cw_add', 'metric': 'hausdorff'},
            {'name': 'drop200', 'type': 'drop', 'saliency': {'total_drop': 200, 'loops': 10}},
        ],
        'defenses': [
            {'name': 'srs', 'type': 'srs', 'r': 500},
            {'name': 'sor', 'type': 'sor', 'k': 2, 'alpha': 1.1},
            {'name': 'dup_midpoint', 'type': 'dup', 'k': 2, 'alpha': 1.1, 'upsampler': 'midpoint'},
        ],
        'ratio_study': {
            'attack': 'cw_l2',
            'k': 2,
            'alpha': 1.1,
            'adv_mode': 'paired_l2',
        },
        'sweeps': {
            'attack': 'cw_l2',
            'srs_drops': [0, 100, 200, 300, 400, 500, 600, 700],
            'sor_k': [1, 2, 5],
            'sor_alpha': [0.5, 1.1, 2.0],
            'drop_totals': [50, 100, 150, 200],
            'drop_loops': 10,
        },
    }

    def __init__(self, values=None):
        values = values or {}
        self.values = _merge(self.DEFAULTS, values, '')
        self.attacks = [AttackSpec.from_dict(a) for a in self.values['attacks']]
        self.defenses = [DefenseSpec.from_dict(d) for d in self.values['defenses']]
        for raw, spec in zip(self.values['defenses'], self.defenses):
            if spec.needs_checkpoint:
                spec.checkpoint = spec.checkpoint or self.upsampler_checkpoint
                if 'rate' not in raw:
                    spec.rate = int(self.values['upsampler']['rate'])

    @classmethod
    def from_yaml(cls, path):
        """
        Reads a YAML config file

        Raises:
            ContractError: if the file does not exist
            ParameterError: on unknown keys or a non-mapping document
        """
        if not os.path.exists(path):
            raise ContractError('config file "' + str(path) + '" does not exist')
        with open(path) as f:
            raw = yaml.safe_load(f)
        if raw is not None and not isinstance(raw, dict):
            raise ParameterError('config file must hold a mapping at the top level')
        return cls(raw)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def output_dir(self):
        return self.values['output_dir']

    @property
    def seed(self):
        return int(self.values['seed'])

    @property
    def dataset_root(self):
        return self.values['dataset']['root']

    @property
    def classifier_checkpoint(self):
        return self.values['classifier']['checkpoint'] or os.path.join(self.output_dir, 'classifier.json')

    @property
    def upsampler_checkpoint(self):
        return self.values['upsampler']['checkpoint'] or os.path.join(self.output_dir, 'upsampler.json')

    def dataset_config(self):
        d = dict(self.values['dataset'])
        d.pop('root')
        return DatasetConfig(seed=self.seed, **d)

    def attack(self, name):
        for spec in self.attacks:
            if spec.name == name:
                return spec
        raise ParameterError('no attack named "' + str(name) + '" in the config')

    def defense(self, name):
        for spec in self.defenses:
            if spec.name == name:
                return spec
        raise ParameterError('no defense named "' + str(name) + '" in the config')

    def attack_dir(self, name):
        return os.path.join(self.output_dir, 'attacks', name)

    def validate(self):
        """
        Checks every setting before any work starts

        Raises:
            ParameterError: on an out-of-range value, a duplicate name, an
                unknown attack, defense, mode or family, or a ratio-study
                attack that paired_l2 cannot score
        """
        v = self.values
        if int(v['workers']) < 1:
            raise ParameterError('workers must be at least 1')
        if v['max_test_clouds'] is not None and int(v['max_test_clouds']) < 1:
            raise ParameterError('max_test_clouds must be positive when set')
        if not 0 < v['epsilon'] < 1:
            raise ParameterError('epsilon must lie in (0, 1)')
        self.dataset_config().validate()
        up = v['upsampler']
        if up['rec_mode'] not in REC_MODES:
            raise ParameterError('unknown reconstruction loss "' + str(up['rec_mode']) + '"')
        if up['families'] is not None:
            for family in up['families']:
                if family not in v['dataset']['classes']:
                    raise ParameterError('upsampler family "' + str(family) + '" is not a dataset class')
        for kind, specs in (('attack', self.attacks), ('defense', self.defenses)):
            names = [s.name for s in specs]
            if len(set(names)) != len(names):
                raise ParameterError('duplicate ' + kind + ' names: ' + ', '.join(names))
            if 'none' in names or 'clean' in names:
                raise ParameterError('"none" and "clean" are reserved ' + kind + ' names')
            for spec in specs:
                spec.validate()
        ratio = v['ratio_study']
        SorConfig(ratio['k'], ratio['alpha']).validate()
        if ratio['adv_mode'] not in ADV_MODES:
            raise ParameterError('unknown adversarial-point mode "' + str(ratio['adv_mode']) + '"')
        if ratio['attack'] is not None:
            studied = self.attack(ratio['attack'])
            if ratio['adv_mode'] == 'paired_l2' and not studied.paired:
                raise ParameterError('ratio-study attack "' + studied.name
                                     + '" changes the point count; use adv_mode set_distance')
        sweeps = v['sweeps']
        for total in sweeps['drop_totals']:
            if total % sweeps['drop_loops']:
                raise ParameterError('sweep drop total ' + str(total) + ' is not divisible by drop_loops')

    def to_dict(self):
        """Effective settings with checkpoint paths resolved"""
        out = copy.deepcopy(self.values)
        out['classifier']['checkpoint'] = self.classifier_checkpoint
        out['upsampler']['checkpoint'] = self.upsampler_checkpoint
        out['attacks'] = [spec.to_dict() for spec in self.attacks]
        out['defenses'] = [spec.to_dict() for spec in self.defenses]
        return out

    def write_effective(self, directory=None):
        """Writes effective_config.yaml and returns its path"""
        directory = directory or self.output_dir
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, 'effective_config.yaml')
        with open(path, 'w') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False, default_flow_style=False)
        return path


def _fmt(value):
    return 'nan' if value is None else '{:.6f}'.format(value)


class ExperimentReport:
    """
    Accuracy of the classifier for every (attack, defense) pair

    Rows are 'clean' followed by the attacks, columns are 'none' followed
    by the defenses.

    Args:
        rows (list): row names
        columns (list): column names

    Attributes:
        correct (dict): (row, column) -> correctly classified clouds
        counts (dict): (row, column) -> evaluated clouds
        skipped (dict): row -> clouds left out (misclassified before the
            attack or failed)
        ratio_summary (dict): p_SOR / p_SRS summary, when computed
        wall_time (float): seconds spent; kept out of the CSV
    """
    def __init__(self, rows, columns):
        self.rows = list(rows)
        self.columns = list(columns)
        self.correct = {(r, c): 0 for r in self.rows for c in self.columns}
        self.counts = {(r, c): 0 for r in self.rows for c in self.columns}
        self.skipped = {r: 0 for r in self.rows}
        self.ratio_summary = {}
        self.wall_time = 0.0

    def record(self, row, column, correct):
        self.counts[(row, column)] += 1
        self.correct[(row, column)] += int(bool(correct))

    def accuracy(self, row, column):
        """Accuracy of a cell, None when no cloud was evaluated"""
        count = self.counts[(row, column)]
        if count == 0:
            return None
        return self.correct[(row, column)] / count

    def to_csv(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['attack', 'defense', 'accuracy', 'count'])
            for r in self.rows:
                for c in self.columns:
                    writer.writerow([r, c, _fmt(self.accuracy(r, c)), self.counts[(r, c)]])

    def to_dict(self):
        return {
            'rows': self.rows,
            'columns': self.columns,
            'cells': [{'attack': r, 'defense': c, 'accuracy': self.accuracy(r, c),
                       'correct': self.correct[(r, c)], 'count': self.counts[(r, c)]}
                      for r in self.rows for c in self.columns],
            'skipped': self.skipped,
            'ratio_summary': self.ratio_summary,
            'wall_time': self.wall_time,
        }

    def to_json(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, body):
        report = cls(body['rows'], body['columns'])
        for cell in body['cells']:
            key = (cell['attack'], cell['defense'])
            report.correct[key] = cell['correct']
            report.counts[key] = cell['count']
        report.skipped.update(body.get('skipped', {}))
        report.ratio_summary = body.get('ratio_summary', {})
        report.wall_time = body.get('wall_time', 0.0)
        return report

    @classmethod
    def from_json(cls, path):
        if not os.path.exists(path):
            raise ContractError('report "' + str(path) + '" does not exist')
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def grid_markdown(self):
        """The grid as a Markdown table, accuracies in percent"""
        data = []
        for r in self.rows:
            row = [r]
            for c in self.columns:
                acc = self.accuracy(r, c)
                row.append('-' if acc is None else '{:.1f}%'.format(100 * acc))
            row.append(self.skipped.get(r, 0))
            data.append(row)
        return MarkdownTable.render(data, ['attack'] + self.columns + ['skipped'])

    def ratio_markdown(self):
        """The p_SOR / p_SRS summary as a Markdown table"""
        if not self.ratio_summary:
            return ''
        keys = sorted(self.ratio_summary)
        return MarkdownTable.render([[k, self.ratio_summary[k]] for k in keys], ['statistic', 'value'])
