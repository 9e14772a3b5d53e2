"""
Command line of the toolkit.

Example:
        pointcloud-defense --config experiment.yaml generate-data
        pointcloud-defense --config experiment.yaml train
        pointcloud-defense --config experiment.yaml attack
        pointcloud-defense --config experiment.yaml evaluate
"""

import argparse
import logging
import os
import sys

from .Errors import ToolkitError
from .Experiment import ExperimentConfig
from .PointCloudDefense import PointCloudDefense

logger = logging.getLogger('pointcloud_defense')


def build_parser():
    parser = argparse.ArgumentParser(
        prog='pointcloud-defense',
        description='Adversarial attacks and outlier-removal/upsampling defenses for point-cloud classifiers')
    parser.add_argument('-c', '--config', help='experiment YAML file (defaults apply when omitted)')
    parser.add_argument('-o', '--output-dir', help='override output_dir')
    parser.add_argument('-s', '--seed', type=int, help='override the master seed')
    parser.add_argument('-w', '--workers', type=int, help='override the worker count')
    parser.add_argument('--max-test-clouds', type=int, help='evaluate only this many test clouds')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for INFO, -vv for DEBUG')
    parser.add_argument('--log-file', help='also write the log to this file')
    parser.add_argument('-q', '--quiet', action='store_true', help='no status lines or progress bars')
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('generate-data', help='generate the synthetic shape dataset')
    sub.add_parser('train', help='train the classifier')
    sub.add_parser('train-upsampler', help='train the learned upsampler')
    attack = sub.add_parser('attack', help='attack the test clouds')
    attack.add_argument('names', nargs='*', help='attack names (all configured when omitted)')
    defend = sub.add_parser('defend', help='apply one defense to a cloud file or an attack directory')
    defend.add_argument('defense', help='configured defense name')
    defend.add_argument('source', help='cloud file or attack directory')
    defend.add_argument('destination', help='output file or directory')
    sub.add_parser('evaluate', help='accuracy grid of attacks x defenses')
    sub.add_parser('ratio-study', help='compare SOR and SRS removal ratios')
    sweep = sub.add_parser('sweep', help='run the ablation sweeps')
    sweep.add_argument('names', nargs='*', help='srs, sor and/or drop (all when omitted)')
    report = sub.add_parser('report', help='render report.json and optionally bundle artifacts')
    report.add_argument('--zip', dest='zip_path', help='write a zip bundle of the run')
    return parser


def load_config(args):
    config = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    overrides = {'output_dir': args.output_dir, 'seed': args.seed, 'workers': args.workers,
                 'max_test_clouds': args.max_test_clouds}
    for key, value in overrides.items():
        if value is not None:
            config.values[key] = value
    return config


def configure_logging(verbose, log_file=None):
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    handlers = [logging.StreamHandler()]
    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format='%(asctime)s %(name)s %(levelname)s %(message)s', handlers=handlers)


def run(args):
    toolkit = PointCloudDefense(load_config(args), isJupyter=False, verbose=not args.quiet)
    if args.command == 'generate-data':
        return toolkit.cmd_generate_data()
    if args.command == 'train':
        return toolkit.cmd_train()
    if args.command == 'train-upsampler':
        return toolkit.cmd_train_upsampler()
    if args.command == 'attack':
        return toolkit.cmd_attack(args.names or None)
    if args.command == 'defend':
        return toolkit.cmd_defend(args.defense, args.source, args.destination)
    if args.command == 'evaluate':
        return toolkit.cmd_evaluate()
    if args.command == 'ratio-study':
        return toolkit.cmd_ratio_study()
    if args.command == 'sweep':
        return toolkit.cmd_sweep(args.names or None)
    return toolkit.cmd_report(args.zip_path)


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.log_file)
    try:
        run(args)
    except ToolkitError as e:
        logger.debug('command failed', exc_info=True)
        print('❌ ' + str(e), file=sys.stderr)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
