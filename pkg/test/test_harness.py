import copy
import csv
import json
import os
import zipfile

import numpy as np
import pytest
import yaml

from pointcloud_defense import ExperimentConfig, ExperimentReport, PointCloudDefense
from pointcloud_defense.__main__ import main
from pointcloud_defense.Errors import ContractError, ParameterError
from pointcloud_defense.MarkdownTable import MarkdownTable
from pointcloud_defense.Metrics import paired_l2
from pointcloud_defense.PointCloud import load_cloud
from pointcloud_defense.ShapeDataset import ShapeDataset
from pointcloud_defense.Zip import Zip


def tiny_values(root):
    run = os.path.join(root, 'run')
    return {
        'seed': 1,
        'output_dir': run,
        'dataset': {'root': os.path.join(root, 'data'), 'classes': ['sphere', 'cube'],
                    'train_per_class': 4, 'test_per_class': 2, 'points': 64},
        'classifier': {'epochs': 1, 'batch_size': 4},
        'upsampler': {'patch_size': 8, 'patches_per_cloud': 2, 'clouds_per_class': 2, 'epochs': 1, 'batch_size': 2},
        'attacks': [
            {'name': 'cw_l2', 'type': 'cw_shift', 'cw': {'steps': 2, 'binary_search_rounds': 1}},
            {'name': 'cw_add_chamfer', 'type': 'cw_add', 'metric': 'chamfer',
             'cw': {'steps': 2, 'binary_search_rounds': 1, 'added': 4}},
            {'name': 'drop4', 'type': 'drop', 'saliency': {'total_drop': 4, 'loops': 2}},
        ],
        'defenses': [
            {'name': 'srs', 'type': 'srs', 'r': 8},
            {'name': 'sor', 'type': 'sor'},
            {'name': 'dup_midpoint', 'type': 'dup'},
            {'name': 'dup_learned', 'type': 'dup', 'upsampler': 'learned',
             'checkpoint': os.path.join(run, 'upsampler.json')},
        ],
        'sweeps': {'srs_drops': [0, 8], 'sor_k': [2], 'sor_alpha': [1.1], 'drop_totals': [2, 4], 'drop_loops': 2},
    }


def read_rows(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


def read_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


@pytest.fixture(scope='module')
def run(tmp_path_factory):
    root = str(tmp_path_factory.mktemp('experiment'))
    values = tiny_values(root)
    toolkit = PointCloudDefense(values, verbose=False)
    toolkit.cmd_generate_data()
    toolkit.cmd_train()
    toolkit.cmd_train_upsampler()
    summaries = toolkit.cmd_attack()
    report = toolkit.cmd_evaluate()
    return {'root': root, 'values': values, 'toolkit': toolkit, 'summaries': summaries, 'report': report}


"""
The same seed always generates the same dataset files
"""
def test_generate_data_deterministic(run):
    values = copy.deepcopy(run['values'])
    values['dataset']['root'] = os.path.join(run['root'], 'data_again')
    values['output_dir'] = os.path.join(run['root'], 'run_again')
    PointCloudDefense(values, verbose=False).cmd_generate_data()
    for relative in ('manifest.json', 'test/labels.txt', 'test/sphere/0000.xyz', 'train/cube/0003.xyz'):
        assert read_bytes(os.path.join(run['values']['dataset']['root'], relative)) == \
            read_bytes(os.path.join(values['dataset']['root'], relative))
    dataset = ShapeDataset.load(values['dataset']['root'])
    assert dataset.class_names == ['sphere', 'cube']
    assert dataset.test_points.shape == (4, 64, 3)
    manifest = json.load(open(os.path.join(values['dataset']['root'], 'manifest.json')))
    assert manifest['counts'] == {'train': {'sphere': 4, 'cube': 4}, 'test': {'sphere': 2, 'cube': 2}}


"""
Training writes the checkpoints and one curve row per epoch
"""
def test_training_outputs(run):
    out = run['values']['output_dir']
    assert os.path.exists(os.path.join(out, 'classifier.json'))
    assert os.path.exists(os.path.join(out, 'upsampler.json'))
    assert read_rows(os.path.join(out, 'train_curve.csv'))[0] == ['epoch', 'loss', 'train_accuracy', 'test_accuracy']
    assert len(read_rows(os.path.join(out, 'train_curve.csv'))) == 2
    curve = read_rows(os.path.join(out, 'upsampler_curve.csv'))
    assert curve[0] == ['epoch', 'loss', 'validation_rec', 'validation_chamfer', 'midpoint_chamfer']
    assert [r[0] for r in curve] == ['epoch', '0', '1']
    assert curve[1][4] == curve[2][4] and float(curve[1][4]) > 0
    effective = yaml.safe_load(open(os.path.join(out, 'effective_config.yaml')))
    assert effective['classifier']['checkpoint'] == os.path.join(out, 'classifier.json')


"""
Every test cloud is accounted for in each attack manifest, and provenance
matches the written cloud
"""
def test_attack_outputs(run):
    out = run['values']['output_dir']
    for name, summary in run['summaries'].items():
        assert summary['clouds'] == 4
        assert summary['attacked'] + summary['skipped'] + summary['failed'] == 4
        manifest = json.load(open(os.path.join(out, 'attacks', name, 'manifest.json')))
        assert [e['id'] for e in manifest['entries']] == ['sphere/0000', 'sphere/0001', 'cube/0000', 'cube/0001']

    dataset = ShapeDataset.load(run['values']['dataset']['root'])
    clean = dict(zip(dataset.ids('test'), dataset.test_points))
    directory = os.path.join(out, 'attacks', 'cw_l2')
    for entry in json.load(open(os.path.join(directory, 'manifest.json')))['entries']:
        adv = load_cloud(os.path.join(directory, entry['path'])).points
        provenance = json.load(open(os.path.join(directory, entry['id'] + '.json')))
        assert provenance['points'] == 64
        assert provenance['distortion'] == pytest.approx(paired_l2(clean[entry['id']], adv)[1], abs=1e-12)
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    directory = os.path.join(out, 'attacks', 'drop4')
    for entry in json.load(open(os.path.join(directory, 'manifest.json')))['entries']:
        size = len(load_cloud(os.path.join(directory, entry['path'])))
        assert size == (64 if entry['skipped'] else 60)


"""
The grid has a clean row plus one row per attack and a no-defense column
plus one column per defense; the JSON report reloads to the same grid
"""
def test_evaluate_grid(run):
    report = run['report']
    assert report.rows == ['clean', 'cw_l2', 'cw_add_chamfer', 'drop4']
    assert report.columns == ['none', 'srs', 'sor', 'dup_midpoint', 'dup_learned']
    for column in report.columns:
        assert report.counts[('clean', column)] == 4
    for name, summary in run['summaries'].items():
        assert report.counts[(name, 'none')] + report.skipped[name] == 4
    out = run['values']['output_dir']
    rows = read_rows(os.path.join(out, 'report.csv'))
    assert rows[0] == ['attack', 'defense', 'accuracy', 'count']
    assert len(rows) == 1 + 4 * 5
    reloaded = ExperimentReport.from_json(os.path.join(out, 'report.json'))
    for row in report.rows:
        for column in report.columns:
            assert reloaded.accuracy(row, column) == report.accuracy(row, column)
    assert report.ratio_summary['attack'] == 'cw_l2'
    assert '| attack | none | srs |' in report.grid_markdown()
    final = read_rows(os.path.join(out, 'train_curve.csv'))[-1]
    assert float(final[3]) == pytest.approx(report.accuracy('clean', 'none'), abs=1e-6)


"""
Rerunning attacks and evaluation with the same config reproduces the files
byte for byte, with one or two workers
"""
def test_reruns_are_identical(run):
    out = run['values']['output_dir']
    manifest = os.path.join(out, 'attacks', 'cw_l2', 'manifest.json')
    first_manifest, first_report = read_bytes(manifest), read_bytes(os.path.join(out, 'report.csv'))
    toolkit = PointCloudDefense(run['values'], verbose=False)
    toolkit.cmd_attack()
    toolkit.cmd_evaluate()
    assert read_bytes(manifest) == first_manifest
    assert read_bytes(os.path.join(out, 'report.csv')) == first_report

    values = copy.deepcopy(run['values'])
    values['output_dir'] = os.path.join(run['root'], 'run_parallel')
    values['workers'] = 2
    values['classifier']['checkpoint'] = os.path.join(out, 'classifier.json')
    PointCloudDefense(values, verbose=False).cmd_attack(['cw_l2'])
    assert read_bytes(os.path.join(values['output_dir'], 'attacks', 'cw_l2', 'manifest.json')) == first_manifest


"""
The accuracy grid is on disk before the ratio summary is computed, so a
failing ratio study does not lose it
"""
def test_evaluate_writes_grid_before_ratio_study(run, monkeypatch):
    out = run['values']['output_dir']
    paths = [os.path.join(out, 'report.csv'), os.path.join(out, 'report.json')]
    saved = [read_bytes(p) for p in paths]
    for p in paths:
        os.remove(p)

    def failing():
        raise ContractError('ratio study unavailable')

    toolkit = PointCloudDefense(run['values'], verbose=False)
    monkeypatch.setattr(toolkit, '_ratio_study', failing)
    try:
        with pytest.raises(ContractError):
            toolkit.cmd_evaluate()
        assert read_bytes(paths[0]) == saved[0]
        assert json.load(open(paths[1]))['ratio_summary'] == {}
    finally:
        for p, body in zip(paths, saved):
            with open(p, 'wb') as f:
                f.write(body)


"""
The ratio study writes one row per usable cloud and a summary
"""
def test_ratio_study(run):
    summary = run['toolkit'].cmd_ratio_study()
    assert summary['defined'] + summary['undefined'] == summary['clouds']
    out = run['values']['output_dir']
    rows = read_rows(os.path.join(out, 'ratio_study.csv'))
    assert rows[0] == ['id', 'adv_points', 'removed', 'p_sor', 'p_srs']
    assert len(rows) - 1 == summary['clouds']
    assert json.load(open(os.path.join(out, 'ratio_study.json')))['attack'] == 'cw_l2'

    values = copy.deepcopy(run['values'])
    values['ratio_study'] = {'attack': 'cw_add_chamfer'}
    with pytest.raises(ParameterError):
        PointCloudDefense(values, verbose=False).cmd_ratio_study()
    values['ratio_study'] = {'attack': None}
    with pytest.raises(ParameterError, match='ratio_study.attack is null'):
        PointCloudDefense(values, verbose=False).cmd_ratio_study()


"""
Each sweep writes its CSV with one row per setting
"""
def test_sweeps(run):
    paths = run['toolkit'].cmd_sweep()
    assert sorted(paths) == ['drop', 'sor', 'srs']
    assert len(read_rows(paths['srs'])) == 1 + 2 * 2
    assert len(read_rows(paths['sor'])) == 1 + 2 * 1
    drop = read_rows(paths['drop'])
    assert drop[0] == ['total_drop', 'defense', 'accuracy', 'count']
    assert len(drop) == 1 + 2 * 5
    with pytest.raises(ParameterError):
        run['toolkit'].cmd_sweep(['bogus'])


"""
A defense applies to a single cloud file and to a whole attack directory
"""
def test_defend(run):
    out = run['values']['output_dir']
    source = os.path.join(out, 'attacks', 'drop4')
    single = os.path.join(run['root'], 'defended', 'one.xyz')
    assert run['toolkit'].cmd_defend('dup_midpoint', os.path.join(source, 'sphere', '0000.xyz'), single) == 1
    assert len(load_cloud(single)) % 2 == 0
    destination = os.path.join(run['root'], 'defended', 'drop4')
    assert run['toolkit'].cmd_defend('sor', source, destination) == 4
    assert len(json.load(open(os.path.join(destination, 'manifest.json')))['entries']) == 4
    with pytest.raises(ContractError):
        run['toolkit'].cmd_defend('sor', run['root'], destination)
    with pytest.raises(ParameterError):
        run['toolkit'].cmd_defend('blur', source, destination)


"""
A learned-upsampler defense without its own checkpoint or rate uses the
upsampler section's; a rate the checkpoint was not trained for is refused
"""
def test_learned_defense_defaults(run, tmp_path):
    out = run['values']['output_dir']
    source = os.path.join(out, 'attacks', 'drop4', 'sphere', '0000.xyz')
    values = copy.deepcopy(run['values'])
    values['defenses'] = [{'name': 'learned', 'type': 'upsample', 'upsampler': 'learned'},
                          {'name': 'learned3', 'type': 'upsample', 'upsampler': 'learned', 'rate': 3}]
    config = ExperimentConfig(values)
    config.validate()
    assert config.defense('learned').checkpoint == os.path.join(out, 'upsampler.json')
    assert config.defense('learned').rate == 2 and config.defense('learned3').rate == 3

    toolkit = PointCloudDefense(config, verbose=False)
    destination = str(tmp_path / 'learned.xyz')
    assert toolkit.cmd_defend('learned', source, destination) == 1
    assert len(load_cloud(destination)) == 2 * len(load_cloud(source))
    with pytest.raises(ParameterError):
        toolkit.cmd_defend('learned3', source, str(tmp_path / 'learned3.xyz'))

    values['upsampler']['rate'] = 3
    assert ExperimentConfig(values).defense('learned').rate == 3


"""
The report bundle holds the CSVs, the JSON report and the effective config
"""
def test_report_bundle(run):
    path = os.path.join(run['root'], 'bundle.zip')
    run['toolkit'].cmd_report(path)
    names = zipfile.ZipFile(path).namelist()
    assert 'report.csv' in names and 'report.json' in names and 'effective_config.yaml' in names
    assert 'attacks/cw_l2/summary.json' in names
    assert not any(name.endswith('.xyz') for name in names)


"""
The command line returns 0 on success and 2 on a usage error
"""
def test_command_line(run, tmp_path):
    config = tmp_path / 'experiment.yaml'
    config.write_text(yaml.safe_dump(run['values']))
    assert main(['-c', str(config), '-q', 'report']) == 0
    assert main(['-c', str(tmp_path / 'missing.yaml'), 'report']) == 2
    bad = tmp_path / 'bad.yaml'
    bad.write_text('colour: red\n')
    assert main(['-c', str(bad), 'report']) == 2
    assert main(['-c', str(config), '-q', 'attack', 'teleport']) == 2


"""
Invalid configs are refused before any work starts
"""
def test_config_errors(tmp_path):
    with pytest.raises(ParameterError):
        ExperimentConfig({'colour': 'red'})
    with pytest.raises(ParameterError):
        ExperimentConfig({'dataset': {'shape': 'cube'}})
    with pytest.raises(ParameterError):
        ExperimentConfig({'attacks': [{'name': 'a'}, {'name': 'a'}]}).validate()
    with pytest.raises(ParameterError):
        ExperimentConfig({'defenses': [{'name': 'none', 'type': 'sor'}]}).validate()
    with pytest.raises(ParameterError):
        ExperimentConfig({'sweeps': {'drop_totals': [15], 'drop_loops': 10}}).validate()
    with pytest.raises(ParameterError):
        ExperimentConfig({'dataset': {'classes': ['sphere', 'cube']}, 'upsampler': {'families': ['torus']}}).validate()
    with pytest.raises(ParameterError):
        ExperimentConfig({'epsilon': 1.5}).validate()
    for attack in ('drop200', 'cw_add_hausdorff', 'teleport'):
        with pytest.raises(ParameterError):
            ExperimentConfig({'ratio_study': {'attack': attack, 'adv_mode': 'paired_l2'}}).validate()
    ExperimentConfig({'ratio_study': {'attack': 'drop200', 'adv_mode': 'set_distance'}}).validate()
    ExperimentConfig({'ratio_study': {'attack': None}}).validate()
    with pytest.raises(ContractError):
        ExperimentConfig.from_yaml(str(tmp_path / 'missing.yaml'))
    listing = tmp_path / 'list.yaml'
    listing.write_text('- 1\n- 2\n')
    with pytest.raises(ParameterError):
        ExperimentConfig.from_yaml(str(listing))
    with pytest.raises(ContractError):
        PointCloudDefense({'output_dir': str(tmp_path / 'empty'), 'dataset': {'root': str(tmp_path / 'nothing')}},
                          verbose=False).cmd_train()


"""
Bundles of the same files are byte-identical, and table cells are escaped
"""
def test_zip_and_markdown(tmp_path):
    (tmp_path / 'a.csv').write_text('x\n1\n')
    (tmp_path / 'sub').mkdir()
    (tmp_path / 'sub' / 'b.csv').write_text('y\n2\n')
    (tmp_path / 'c.xyz').write_text('1 3\n0 0 0\n')
    first = Zip().add_tree(str(tmp_path), suffixes=('.csv',))
    second = Zip().add_tree(str(tmp_path), suffixes=('.csv',))
    assert first.names == ['a.csv', 'sub/b.csv']
    assert first.read() == second.read()
    table = MarkdownTable.render([['a|b', 0.5, None]], ['name', 'value', 'missing'])
    assert table.splitlines() == ['| name | value | missing |', '| --- | --- | --- |',
                                  '| a<code>&#124;</code>b | 0.5000 | - |']
    assert MarkdownTable.render([], []) == ''
