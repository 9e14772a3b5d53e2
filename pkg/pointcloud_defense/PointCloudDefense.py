"""
This module exposes PointCloudDefense class which creates a PointCloudDefense
object that serves as the entry point to every experiment step from a
Python/Jupyter notebook or from the command line: dataset generation,
classifier and upsampler training, attack batches, defenses, evaluation
grids, removal-ratio studies, sweeps and reports.

Example:
        toolkit = PointCloudDefense('experiment.yaml', isJupyter=False)
        toolkit.cmd_generate_data()
        toolkit.cmd_train()
        toolkit.cmd_attack()
        report = toolkit.cmd_evaluate()
"""

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from IPython.display import display, Markdown
from tqdm import tqdm

from . import Classifier
from .Attacks import AttackSpec
from .Classifier import ClassifierParams, TrainConfig
from .Defenses import DefenseSpec, SorConfig, sor, srs
from .Errors import ContractError, ParameterError
from .Experiment import ExperimentConfig, ExperimentReport
from .MarkdownTable import MarkdownTable
from .Metrics import identify_adv_points, removal_ratio
from .PointCloud import as_points, load_cloud, save_cloud
from .ShapeDataset import ShapeDataset, derive_seed
from .Upsampler import (
    UpsampleLossConfig, UpsamplerParams, UpsamplerTrainConfig, extract_patches, train_upsampler)
from .Zip import Zip

logger = logging.getLogger(__name__)

NO_DEFENSE = DefenseSpec('none')


def _write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value):
    return 'nan' if value is None else '{:.6f}'.format(value)


def _run_tasks(fn, tasks, workers, desc, verbose):
    """Maps fn over tasks; results come back in task order for any worker count"""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tqdm(tasks, desc=desc, disable=not verbose)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(fn, tasks), total=len(tasks), desc=desc, disable=not verbose))


def _attack_task(task):
    params, spec, points, label, cloud_id, seed = task
    try:
        return cloud_id, spec.run(params, points, label, seed), None
    except Exception as e:
        return cloud_id, None, type(e).__name__ + ': ' + str(e)


def _defense_task(task):
    """Correctness of the classifier on one cloud under every defense"""
    params, upsampler_params, defenses, points, label, seeds = task
    try:
        correct = []
        for spec, seed in zip(defenses, seeds):
            outcome = spec.apply(points, seed, upsampler_params)
            correct.append(Classifier.predict(params, outcome.cloud) == label)
        return correct, None
    except Exception as e:
        return None, type(e).__name__ + ': ' + str(e)


class PointCloudDefense:
    """PointCloudDefense class
    An interface that runs every step of an adversarial defense experiment

    Args:
        config (ExperimentConfig | dict | str): settings, a dict of overrides
            or the path of a YAML file
        isJupyter (bool): set to True if you are using Jupyter environment
        verbose (bool): print status lines and show progress bars

    Attributes:
        config (ExperimentConfig): validated experiment settings
        isJupyter (bool): render tables through IPython instead of print
        verbose (bool): print status lines and show progress bars
        workers (int): processes used for per-cloud work
    """
    def __init__(self, config=None, isJupyter=False, verbose=True):
        if isinstance(config, ExperimentConfig):
            self.config = config
        elif isinstance(config, str):
            self.config = ExperimentConfig.from_yaml(config)
        else:
            self.config = ExperimentConfig(config)
        self.config.validate()
        self.isJupyter = isJupyter
        self.verbose = verbose
        self.workers = int(self.config['workers'])
        self._dataset = None

    # helpers

    def _print(self, message):
        if self.verbose:
            print(message)

    def _show(self, markdown):
        if not markdown:
            return
        if self.isJupyter:
            display(Markdown(markdown))
        else:
            print(markdown)

    def _out(self, *parts):
        path = os.path.join(self.config.output_dir, *parts)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def _dataset_or_load(self):
        if self._dataset is None:
            self._dataset = ShapeDataset.load(self.config.dataset_root)
        return self._dataset

    def _classifier(self):
        return ClassifierParams.load(self.config.classifier_checkpoint)

    def _upsampler_for(self, defenses):
        if not any(spec.needs_checkpoint for spec in defenses):
            return None
        checkpoints = {spec.checkpoint for spec in defenses if spec.needs_checkpoint}
        if len(checkpoints) > 1:
            raise ParameterError('defenses refer to several upsampler checkpoints: ' + ', '.join(sorted(checkpoints)))
        params = UpsamplerParams.load(checkpoints.pop())
        for spec in defenses:
            if spec.needs_checkpoint and spec.rate != params.rate:
                raise ParameterError('defense "' + spec.name + '" asks for rate ' + str(spec.rate)
                                     + ' but the upsampler checkpoint was trained for rate ' + str(params.rate))
        return params

    def _test_clouds(self):
        """(cloud id, points, label) of the evaluated test clouds, in id order"""
        dataset = self._dataset_or_load()
        ids = dataset.ids('test')
        chosen = np.arange(len(ids))
        limit = self.config['max_test_clouds']
        if limit is not None and limit < len(ids):
            chosen = np.unique(np.linspace(0, len(ids) - 1, int(limit)).round().astype(np.int64))
        return [(ids[i], dataset.test_points[i], int(dataset.test_labels[i])) for i in chosen]

    def _clean_lookup(self):
        dataset = self._dataset_or_load()
        return {cloud_id: (dataset.test_points[i], int(dataset.test_labels[i]))
                for i, cloud_id in enumerate(dataset.ids('test'))}

    def _load_attack(self, name):
        """
        Entries of an attack run; adversarial points are loaded for every
        entry that neither failed nor was skipped
        """
        directory = self.config.attack_dir(name)
        manifest_path = os.path.join(directory, 'manifest.json')
        if not os.path.exists(manifest_path):
            raise ContractError('attack "' + name + '" has not been run (no ' + manifest_path + ')')
        with open(manifest_path) as f:
            manifest = json.load(f)
        entries = manifest['entries']
        for entry in entries:
            if entry['path'] is not None and not entry['skipped']:
                entry['points'] = load_cloud(os.path.join(directory, entry['path'])).points
        return entries

    def _accuracy(self, params, upsampler_params, clouds, defenses, tag):
        """
        Runs every defense on every cloud

        Returns:
            tuple: (correct count per defense, evaluated cloud count, failures)
        """
        tasks = [(params, upsampler_params, defenses, points, label,
                  [derive_seed(self.config.seed, 'defense', tag, spec.name, cloud_id) for spec in defenses])
                 for cloud_id, points, label in clouds]
        results = _run_tasks(_defense_task, tasks, self.workers, tag, self.verbose)
        correct = np.zeros(len(defenses), dtype=np.int64)
        count, failed = 0, 0
        for (cloud_id, _, _), (flags, error) in zip(clouds, results):
            if flags is None:
                logger.warning('%s: defenses failed on %s: %s', tag, cloud_id, error)
                failed += 1
                continue
            correct += np.asarray(flags, dtype=np.int64)
            count += 1
        return correct, count, failed

    # commands

    def cmd_generate_data(self):
        """
        Generates the synthetic dataset into dataset.root

        Returns:
            str: dataset directory
        """
        dataset = ShapeDataset.generate(self.config.dataset_config(), verbose=self.verbose)
        dataset.save(self.config.dataset_root)
        self._dataset = dataset
        self.config.write_effective()
        self._print('✅ dataset of ' + str(len(dataset)) + ' clouds written to ' + self.config.dataset_root)
        return self.config.dataset_root

    def cmd_train(self):
        """
        Trains the classifier and writes its checkpoint and train_curve.csv

        Returns:
            ClassifierParams: trained weights
        """
        c = self.config['classifier']
        train_cfg = TrainConfig(c['epochs'], c['batch_size'], c['learning_rate'], self.config.seed, c['weight_decay'])
        params = Classifier.train(self._dataset_or_load(), train_cfg, verbose=self.verbose)
        params.save(self._out_checkpoint(self.config.classifier_checkpoint))
        _write_csv(self._out('train_curve.csv'), ['epoch', 'loss', 'train_accuracy', 'test_accuracy'],
                   [[h['epoch'], _fmt(h['loss']), _fmt(h['train_accuracy']), _fmt(h['test_accuracy'])]
                    for h in params.history])
        self.config.write_effective()
        final = params.history[-1]['test_accuracy'] if params.history else None
        self._print('✅ classifier saved to ' + self.config.classifier_checkpoint + ' (test accuracy '
                    + _fmt(final) + ')')
        return params

    def _out_checkpoint(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        return path

    def cmd_train_upsampler(self):
        """
        Trains the learned upsampler on patches of training clouds (only the
        configured families, when set) and writes upsampler_curve.csv

        Returns:
            UpsamplerParams: trained weights
        """
        u = self.config['upsampler']
        dataset = self._dataset_or_load()
        per_class = {}
        patches = []
        for item in dataset.clouds('train', u['families']):
            taken = per_class.get(item.label, 0)
            if taken >= u['clouds_per_class']:
                continue
            per_class[item.label] = taken + 1
            patches.extend(extract_patches(item.cloud, u['patch_size'], u['patches_per_cloud'],
                                           derive_seed(self.config.seed, 'patches', item.cloud_id), u['rate']))
        logger.info('extracted %d patches from %d clouds', len(patches), sum(per_class.values()))
        loss_cfg = UpsampleLossConfig(u['beta'], u['gamma'], u['rec_mode'], u['k_rep'], u['h'])
        train_cfg = UpsamplerTrainConfig(u['epochs'], u['batch_size'], u['learning_rate'], self.config.seed,
                                         u['validation_fraction'], u['patch_size'])
        params = train_upsampler(patches, loss_cfg, train_cfg, verbose=self.verbose)
        params.save(self._out_checkpoint(self.config.upsampler_checkpoint))
        _write_csv(self._out('upsampler_curve.csv'),
                   ['epoch', 'loss', 'validation_rec', 'validation_chamfer', 'midpoint_chamfer'],
                   [[h['epoch'], _fmt(h['loss']), _fmt(h['validation_rec']), _fmt(h['validation_chamfer']),
                     _fmt(h['midpoint_chamfer'])] for h in params.history])
        self.config.write_effective()
        final = params.history[-1]
        margin = final['midpoint_chamfer'] - final['validation_chamfer']
        logger.info('held-out one-sided chamfer %.6f, midpoint %.6f, margin %.6f',
                    final['validation_chamfer'], final['midpoint_chamfer'], margin)
        self._print('✅ upsampler saved to ' + self.config.upsampler_checkpoint + ' (held-out chamfer '
                    + _fmt(final['validation_chamfer']) + ', midpoint ' + _fmt(final['midpoint_chamfer']) + ')')
        if not margin > 0:
            self._print('❌ the learned upsampler does not beat midpoint insertion on held-out patches')
        return params

    def cmd_attack(self, names=None):
        """
        Attacks every evaluated test cloud with the configured attacks

        Each attack writes attacks/<name>/<class>/<id>.xyz with a <id>.json
        provenance sidecar, a manifest.json and a summary.json. Failures on
        single clouds are logged and counted.

        Args:
            names (list): attack names to run; all configured when omitted

        Returns:
            dict: attack name -> summary
        """
        params = self._classifier()
        specs = self.config.attacks if names is None else [self.config.attack(n) for n in names]
        clouds = self._test_clouds()
        summaries = {}
        for spec in specs:
            directory = self.config.attack_dir(spec.name)
            tasks = [(params, spec, points, label, cloud_id, derive_seed(self.config.seed, 'attack', spec.name, cloud_id))
                     for cloud_id, points, label in clouds]
            results = _run_tasks(_attack_task, tasks, self.workers, spec.name, self.verbose)
            entries = []
            for (cloud_id, result, error), task in zip(results, tasks):
                entry = {'id': cloud_id, 'label': task[3], 'seed': task[5], 'path': None,
                         'success': False, 'skipped': False, 'failed': error is not None}
                if error is not None:
                    logger.warning('%s failed on %s: %s', spec.name, cloud_id, error)
                    entry['error'] = error
                else:
                    entry['path'] = cloud_id + '.xyz'
                    entry['success'] = bool(result.success)
                    entry['skipped'] = bool(result.skipped)
                    target = os.path.join(directory, entry['path'])
                    os.makedirs(os.path.dirname(target), exist_ok=True)
                    save_cloud(result.cloud, target)
                    provenance = result.provenance()
                    provenance.update({'id': cloud_id, 'seed': task[5], 'config': spec.to_dict()})
                    with open(os.path.join(directory, cloud_id + '.json'), 'w') as f:
                        json.dump(provenance, f, indent=2, sort_keys=True)
                entries.append(entry)
            attempted = [e for e in entries if not e['failed'] and not e['skipped']]
            summary = {
                'attack': spec.name,
                'clouds': len(entries),
                'attacked': len(attempted),
                'skipped': sum(e['skipped'] for e in entries),
                'failed': sum(e['failed'] for e in entries),
                'success_rate': (sum(e['success'] for e in attempted) / len(attempted)) if attempted else None,
            }
            with open(os.path.join(directory, 'manifest.json'), 'w') as f:
                json.dump({'attack': spec.to_dict(), 'seed': self.config.seed, 'entries': entries},
                          f, indent=2, sort_keys=True)
            with open(os.path.join(directory, 'summary.json'), 'w') as f:
                json.dump(summary, f, indent=2, sort_keys=True)
            summaries[spec.name] = summary
            self._print('✅ ' + spec.name + ': success rate ' + _fmt(summary['success_rate']) + ' over '
                        + str(summary['attacked']) + ' clouds (' + str(summary['skipped']) + ' skipped, '
                        + str(summary['failed']) + ' failed)')
        self.config.write_effective()
        return summaries

    def cmd_defend(self, defense_name, source, destination):
        """
        Applies one configured defense to a cloud file or to every cloud of
        an attack directory

        Args:
            defense_name (str): name of a configured defense
            source (str): a cloud file or an attack directory (with manifest.json)
            destination (str): output file, or output directory for a directory source

        Returns:
            int: number of clouds written
        """
        spec = self.config.defense(defense_name)
        upsampler_params = self._upsampler_for([spec])
        if os.path.isfile(source):
            seed = derive_seed(self.config.seed, 'defend', spec.name, os.path.basename(source))
            outcome = spec.apply(load_cloud(source), seed, upsampler_params)
            os.makedirs(os.path.dirname(os.path.abspath(destination)), exist_ok=True)
            save_cloud(outcome.cloud, destination)
            self._print('✅ ' + spec.name + ' removed ' + str(len(outcome.removed)) + ' and added '
                        + str(outcome.added_count) + ' points, written to ' + destination)
            return 1
        manifest_path = os.path.join(source, 'manifest.json')
        if not os.path.exists(manifest_path):
            raise ContractError('"' + source + '" is neither a cloud file nor an attack directory')
        with open(manifest_path) as f:
            entries = json.load(f)['entries']
        written = []
        for entry in tqdm(entries, desc=spec.name, disable=not self.verbose):
            if entry['path'] is None:
                continue
            seed = derive_seed(self.config.seed, 'defend', spec.name, entry['id'])
            outcome = spec.apply(load_cloud(os.path.join(source, entry['path'])), seed, upsampler_params)
            target = os.path.join(destination, entry['path'])
            os.makedirs(os.path.dirname(target), exist_ok=True)
            save_cloud(outcome.cloud, target)
            written.append({'id': entry['id'], 'path': entry['path'], 'label': entry['label'],
                            'removed': [int(i) for i in outcome.removed], 'added': int(outcome.added_count)})
        with open(os.path.join(destination, 'manifest.json'), 'w') as f:
            json.dump({'defense': spec.to_dict(), 'source': source, 'entries': written}, f, indent=2, sort_keys=True)
        self._print('✅ ' + spec.name + ' applied to ' + str(len(written)) + ' clouds, written to ' + destination)
        return len(written)

    def cmd_evaluate(self):
        """
        Evaluates the classifier on clean and attacked clouds under no
        defense and every configured defense

        Writes report.csv and report.json. When ratio_study.attack is set
        the ratio summary is computed after the grid is written and added to
        report.json.

        Returns:
            ExperimentReport: the accuracy grid
        """
        start = time.perf_counter()
        params = self._classifier()
        defenses = [NO_DEFENSE] + list(self.config.defenses)
        upsampler_params = self._upsampler_for(defenses)
        report = ExperimentReport(['clean'] + [a.name for a in self.config.attacks], [d.name for d in defenses])

        rows = {'clean': (self._test_clouds(), 0)}
        for spec in self.config.attacks:
            entries = self._load_attack(spec.name)
            usable = [(e['id'], e['points'], e['label']) for e in entries if 'points' in e]
            rows[spec.name] = (usable, len(entries) - len(usable))
            if rows[spec.name][1]:
                logger.warning('%s: %d clouds skipped or failed, left out of the grid', spec.name, rows[spec.name][1])

        for row in report.rows:
            clouds, left_out = rows[row]
            correct, count, failed = self._accuracy(params, upsampler_params, clouds, defenses, row)
            for spec, hits in zip(defenses, correct):
                report.correct[(row, spec.name)] = int(hits)
                report.counts[(row, spec.name)] = count
            report.skipped[row] = left_out + failed

        report.wall_time = time.perf_counter() - start
        report.to_csv(self._out('report.csv'))
        report.to_json(self._out('report.json'))
        self.config.write_effective()
        if self.config['ratio_study']['attack'] is not None:
            report.ratio_summary = self._ratio_study()[1]
            report.wall_time = time.perf_counter() - start
            report.to_json(self._out('report.json'))
        self._print('✅ report written to ' + self._out('report.csv'))
        self._show(report.grid_markdown())
        return report

    def _ratio_study(self):
        cfg = self.config['ratio_study']
        if cfg['attack'] is None:
            raise ParameterError('ratio_study.attack is null; name a configured attack to run the study')
        spec = self.config.attack(cfg['attack'])
        mode = cfg['adv_mode']
        if mode == 'paired_l2' and not spec.paired:
            raise ParameterError('attack "' + spec.name + '" changes the point count; use adv_mode set_distance')
        epsilon = self.config['epsilon']
        clean = self._clean_lookup()
        sor_cfg = SorConfig(cfg['k'], cfg['alpha'])
        rows, defined = [], []
        for entry in self._load_attack(spec.name):
            if 'points' not in entry:
                continue
            X, X_adv = clean[entry['id']][0], entry['points']
            adv = identify_adv_points(X, X_adv, epsilon, mode)
            removal = sor(X_adv, sor_cfg)
            if len(removal.removed) == 0:
                rows.append([entry['id'], len(adv.adv_indices), 0, 'undefined', 'undefined'])
                continue
            p_sor = removal_ratio(X, X_adv, removal.removed, adv)
            sampled = srs(X_adv, len(removal.removed), derive_seed(self.config.seed, 'ratio', entry['id']))
            p_srs = removal_ratio(X, X_adv, sampled.removed, adv)
            rows.append([entry['id'], len(adv.adv_indices), p_sor.removed_count, _fmt(p_sor.p), _fmt(p_srs.p)])
            defined.append((p_sor.p, p_srs.p))
        pairs = np.array(defined).reshape(-1, 2)
        summary = {
            'attack': spec.name,
            'epsilon': epsilon,
            'clouds': len(rows),
            'defined': len(defined),
            'undefined': len(rows) - len(defined),
            'mean_p_sor': float(pairs[:, 0].mean()) if len(pairs) else None,
            'mean_p_srs': float(pairs[:, 1].mean()) if len(pairs) else None,
            'win_rate': float(np.mean(pairs[:, 0] > pairs[:, 1])) if len(pairs) else None,
        }
        return rows, summary

    def cmd_ratio_study(self):
        """
        Compares the fraction of adversarial points among the points removed
        by SOR and by SRS removing as many points, cloud by cloud

        Writes ratio_study.csv (one row per cloud; clouds where SOR removes
        nothing are marked undefined) and ratio_study.json (summary).

        Returns:
            dict: mean p_SOR, mean p_SRS, win rate and bucket sizes
        """
        rows, summary = self._ratio_study()
        _write_csv(self._out('ratio_study.csv'), ['id', 'adv_points', 'removed', 'p_sor', 'p_srs'], rows)
        with open(self._out('ratio_study.json'), 'w') as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        self.config.write_effective()
        self._print('✅ ratio study over ' + str(summary['defined']) + ' clouds: win rate ' + _fmt(summary['win_rate'])
                    + ', ' + str(summary['undefined']) + ' undefined')
        self._show(MarkdownTable.render([[k, summary[k]] for k in sorted(summary)], ['statistic', 'value']))
        return summary

    def cmd_sweep(self, names=None):
        """
        Runs the ablation sweeps and writes one sweep_<name>.csv each:
        'srs' (drop count), 'sor' (k x alpha) on clean and attacked clouds,
        and 'drop' (accuracy against total_drop under every defense)

        Args:
            names (list): sweeps to run; all three when omitted

        Returns:
            dict: sweep name -> CSV path
        """
        names = names or ['srs', 'sor', 'drop']
        unknown = set(names) - {'srs', 'sor', 'drop'}
        if unknown:
            raise ParameterError('unknown sweeps: ' + ', '.join(sorted(unknown)))
        sw = self.config['sweeps']
        params = self._classifier()
        paths = {}

        sets = []
        if 'srs' in names or 'sor' in names:
            sets.append(('clean', self._test_clouds()))
            if sw['attack']:
                entries = self._load_attack(sw['attack'])
                sets.append((sw['attack'], [(e['id'], e['points'], e['label']) for e in entries if 'points' in e]))

        if 'srs' in names:
            specs = [DefenseSpec('srs', 'srs_' + str(r), r=int(r)) for r in sw['srs_drops']]
            rows = []
            for set_name, clouds in sets:
                correct, count, _ = self._accuracy(params, None, clouds, specs, 'sweep_srs_' + set_name)
                rows.extend([set_name, s.r, _fmt(c / count if count else None), count] for s, c in zip(specs, correct))
            paths['srs'] = self._out('sweep_srs.csv')
            _write_csv(paths['srs'], ['set', 'r', 'accuracy', 'count'], rows)

        if 'sor' in names:
            specs = [DefenseSpec('sor', 'sor_' + str(k) + '_' + str(a), k=int(k), alpha=float(a))
                     for k in sw['sor_k'] for a in sw['sor_alpha']]
            rows = []
            for set_name, clouds in sets:
                correct, count, _ = self._accuracy(params, None, clouds, specs, 'sweep_sor_' + set_name)
                rows.extend([set_name, s.k, s.alpha, _fmt(c / count if count else None), count]
                            for s, c in zip(specs, correct))
            paths['sor'] = self._out('sweep_sor.csv')
            _write_csv(paths['sor'], ['set', 'k', 'alpha', 'accuracy', 'count'], rows)

        if 'drop' in names:
            defenses = [NO_DEFENSE] + list(self.config.defenses)
            upsampler_params = self._upsampler_for(defenses)
            clouds = self._test_clouds()
            rows = []
            for total in sw['drop_totals']:
                spec = AttackSpec('drop', 'drop' + str(total),
                                  saliency={'total_drop': int(total), 'loops': int(sw['drop_loops'])})
                tasks = [(params, spec, points, label, cloud_id, 0) for cloud_id, points, label in clouds]
                results = _run_tasks(_attack_task, tasks, self.workers, spec.name, self.verbose)
                attacked = [(cloud_id, as_points(result.cloud), label)
                            for (cloud_id, result, error), (_, _, label) in zip(results, clouds)
                            if error is None and not result.skipped]
                correct, count, _ = self._accuracy(params, upsampler_params, attacked, defenses, spec.name)
                rows.extend([int(total), d.name, _fmt(c / count if count else None), count]
                            for d, c in zip(defenses, correct))
            paths['drop'] = self._out('sweep_drop.csv')
            _write_csv(paths['drop'], ['total_drop', 'defense', 'accuracy', 'count'], rows)

        self.config.write_effective()
        for name in sorted(paths):
            self._print('✅ sweep ' + name + ' written to ' + paths[name])
        return paths

    def cmd_report(self, zip_path=None):
        """
        Renders report.json as Markdown tables and optionally bundles the
        run's reports, curves and summaries into a zip archive

        Args:
            zip_path (str): archive to write

        Returns:
            ExperimentReport: the loaded report
        """
        report = ExperimentReport.from_json(os.path.join(self.config.output_dir, 'report.json'))
        self._show(report.grid_markdown())
        self._show(report.ratio_markdown())
        if zip_path is not None:
            bundle = Zip().add_tree(self.config.output_dir,
                                    suffixes=('.csv', '.yaml', 'report.json', 'ratio_study.json', 'summary.json'))
            bundle.write(zip_path)
            self._print('📮 ' + str(len(bundle.names)) + ' files bundled into ' + zip_path)
        return report
