"""
The command line interface ties the pipeline together: synthetic weather
generation, dataset construction, training, evaluation, and the theoretical
bound curves.
"""

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from expert_calibration.bounds import bound_columns
from expert_calibration.bounds import bound_curves
from expert_calibration.bounds import crossing_rho
from expert_calibration.core import CalibrationError
from expert_calibration.core import DivergenceError
from expert_calibration.costmodel import CostModel
from expert_calibration.demand import AugmentConfig
from expert_calibration.demand import load_synthetic_weather
from expert_calibration.demand import load_weather_csv
from expert_calibration.demand import make_dataset
from expert_calibration.demand import read_dataset_csv
from expert_calibration.demand import RenewableParams
from expert_calibration.demand import shift_contexts
from expert_calibration.demand import ShortageParams
from expert_calibration.demand import write_dataset_csv
from expert_calibration.demand import write_weather_csv
from expert_calibration.evaluation import evaluate
from expert_calibration.evaluation import make_policy
from expert_calibration.evaluation import metric_columns
from expert_calibration.evaluation import pareto_boundary
from expert_calibration.evaluation import policy_sweep
from expert_calibration.evaluation import tradeoff_sweep
from expert_calibration.evaluation import write_instance_csv
from expert_calibration.evaluation import write_metrics_csv
from expert_calibration.mlopt import load_weights
from expert_calibration.mlopt import save_weights
from expert_calibration.trainer import prepare_samples
from expert_calibration.trainer import PureMLConfig
from expert_calibration.trainer import train_ecl2o
from expert_calibration.trainer import train_pureml
from expert_calibration.trainer import TrainConfig
from expert_calibration.trainer import TrainingHistory
from expert_calibration.trainer import write_training_log
from expert_calibration.utils import check_writable
from expert_calibration.utils import load_config
from expert_calibration.utils import merge_config
from expert_calibration.utils import resolve_seed
from expert_calibration.utils import write_manifest

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')
WEIGHT_POLICIES = ('mlarobd', 'pureml', 'switch')

# swept parameter and default values of every sweep family
SWEEPS = {
    'mlarobd': ('theta', '0,0.1,0.3,0.5,1,2,5'),
    'switch': ('gamma', '1,1.5,2,4,8'),
    'pureml': ('kappa', '0,0.25,0.5,0.75,1'),
    'ecl2o': ('mu', '0,0.2,0.4,0.6,0.8,1'),
}


def _float_list(text):
    return [float(v) for v in text.split(',') if v.strip()]


def _cost_model(config):
    if 'cost_model' in config:
        return CostModel.from_config(config['cost_model'])
    return CostModel.quadratic(5.0)


def _seed(args, section):
    return resolve_seed(args.seed if args.seed is not None
                        else section.get('seed'))


def _manifest_path(path):
    return path + '.manifest.json'


def cmd_gen_weather(args, config):
    check_writable(args.out, args.force)
    shortage = ShortageParams.from_dict(config.get('shortage', {}))
    seed = _seed(args, config)
    records = load_synthetic_weather(args.days, seed, shortage)
    write_weather_csv(records, args.out)
    effective = {'days': args.days, 'seed': seed,
                 'shortage': shortage.to_dict()}
    write_manifest(_manifest_path(args.out), 'gen-weather', effective,
                   [os.path.basename(args.out)])
    logger.info("wrote %i hourly records to %s", len(records), args.out)


def cmd_gen_data(args, config):
    os.makedirs(args.out, exist_ok=True)
    paths = [os.path.join(args.out, '%s.csv' % s) for s in SPLITS]
    for path in paths + [os.path.join(args.out, 'manifest.json')]:
        check_writable(path, args.force)
    seed = _seed(args, config)
    if args.weather is None:
        shortage = ShortageParams.from_dict(config.get('shortage', {}))
        records = load_synthetic_weather(args.days, seed, shortage)
        source = 'synthetic'
    else:
        records = load_weather_csv(args.weather)
        source = os.path.abspath(args.weather)
    augment = AugmentConfig.from_dict(merge_config(
        AugmentConfig().to_dict(), config.get('augment'),
        {'n_train': args.augment}))
    renewables = RenewableParams.from_dict(config.get('renewables', {}))
    train, val, test = make_dataset(
        records, args.episode_len, (args.train_days, args.val_days),
        augment, seed, renewables, normalization=args.normalization)
    for path, episodes in zip(paths, (train, val, test)):
        write_dataset_csv(episodes, path)
    effective = {'weather': source, 'episode_len': args.episode_len,
                 'train_days': args.train_days, 'val_days': args.val_days,
                 'seed': seed, 'augment': augment.to_dict(),
                 'renewables': renewables.to_dict(),
                 'normalization': args.normalization,
                 'counts': [len(train), len(val), len(test)]}
    write_manifest(os.path.join(args.out, 'manifest.json'), 'gen-data',
                   effective, [os.path.basename(p) for p in paths])


def _read_split(data, split):
    return read_dataset_csv(os.path.join(data, '%s.csv' % split))


def _train_config(args, config, mode, **overrides):
    """
    Merges the defaults, the config file section of a training mode and the
    command line flags into a :class:`TrainConfig` or :class:`PureMLConfig`.
    """
    if mode == 'ecl2o':
        cls, section = TrainConfig, config.get('train', {})
    else:
        cls, section = PureMLConfig, config.get('pureml', {})
    flags = {'epochs': args.epochs, 'learning_rate': args.lr,
             'batch_size': args.batch_size, 'patience': args.patience,
             'seed': None}
    flags.update(overrides)
    merged = merge_config(cls().to_dict(), section, flags)
    merged['seed'] = _seed(args, section)
    return cls.from_dict(merged)


def cmd_train(args, config):
    check_writable(args.out, args.force)
    log_path = args.log or args.out + '.log.csv'
    check_writable(log_path, args.force)
    model = _cost_model(config)
    if args.mode == 'ecl2o':
        train_config = _train_config(args, config, args.mode, mu=args.mu,
                                     theta=args.theta)
    else:
        train_config = _train_config(args, config, args.mode,
                                     kappa=args.kappa)

    train = prepare_samples(_read_split(args.data, 'train'), model)
    val = prepare_samples(_read_split(args.data, 'val'), model)
    history = TrainingHistory()
    try:
        if args.mode == 'ecl2o':
            weights = train_ecl2o(train, model, train_config, val, history)
        else:
            weights = train_pureml(train, model, train_config, val, history)
    finally:
        if len(history):
            write_training_log(log_path, history)
    save_weights(weights, args.out)
    effective = {'mode': args.mode, 'data': os.path.abspath(args.data),
                 'cost_model': model.to_config(),
                 'train': train_config.to_dict()}
    write_manifest(_manifest_path(args.out), 'train', effective,
                   [os.path.basename(args.out), os.path.basename(log_path)])


def _trained_theta(weights_path):
    """
    Returns the trust parameter recorded in the training manifest next to a
    weights file, or None when there is none.
    """
    path = _manifest_path(weights_path)
    if not os.path.exists(path):
        return None
    with open(path) as dat:
        manifest = json.load(dat)
    return manifest.get('config', {}).get('train', {}).get('theta')


def _policies(args, model, eval_cfg):
    names = [n.strip() for n in args.policy.split(',') if n.strip()]
    weights = load_weights(args.weights) if args.weights else None
    pureml = (load_weights(args.pureml_weights) if args.pureml_weights
              else weights)
    theta = args.theta
    if theta is None and args.weights:
        theta = _trained_theta(args.weights)
        if theta is not None:
            logger.info("using theta=%g from the training manifest of %s",
                        theta, args.weights)
    if theta is None:
        theta = eval_cfg.get('theta', 0.5)
    policies = []
    for name in names:
        policies.append(make_policy(
            name, model, pureml if name in WEIGHT_POLICIES else weights,
            theta=theta, mlarobd_theta=eval_cfg.get('mlarobd_theta', 0.3),
            gamma=eval_cfg.get('gamma', 1.5),
            gamma_growth=eval_cfg.get('gamma_growth', 2.0),
            perfect=args.perfect))
    return policies


def _dataset(args):
    episodes = _read_split(args.data, args.split)
    if args.shift != 1.0:
        episodes = shift_contexts(episodes, args.shift)
    return episodes


def cmd_eval(args, config):
    if args.out:
        check_writable(args.out, args.force)
    eval_cfg = config.get('eval', {})
    model = _cost_model(config)
    percentiles = tuple(_float_list(args.percentiles))
    dataset = _dataset(args)
    results = []
    for policy in _policies(args, model, eval_cfg):
        results.append(evaluate(policy, dataset, model, args.chain_x0,
                                percentiles, args.jobs))
    if args.out:
        write_metrics_csv(results, args.out, percentiles)
        outputs = [os.path.basename(args.out)]
        if args.instances:
            for result in results:
                path = '%s.%s.csv' % (args.instances, result.policy)
                write_instance_csv(result, path)
                outputs.append(os.path.basename(path))
        effective = {'policy': args.policy, 'data': os.path.abspath(
            args.data), 'split': args.split, 'shift': args.shift,
            'chain_x0': args.chain_x0, 'percentiles': list(percentiles),
            'cost_model': model.to_config(), 'eval': eval_cfg}
        write_manifest(_manifest_path(args.out), 'eval', effective, outputs)
    else:
        writer = csv.writer(sys.stdout, lineterminator='\n')
        writer.writerow(metric_columns(percentiles))
        for result in results:
            writer.writerow(result.as_row(percentiles))


def cmd_bounds(args, config):
    if args.out:
        check_writable(args.out, args.force)
    thetas = _float_list(args.theta_list)
    rhos = np.linspace(0.0, args.rho_max, args.rho_steps)
    rows = bound_curves(args.m, args.alpha, args.beta, thetas, rhos)
    out = open(args.out, 'w', newline='') if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(bound_columns(thetas))
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    finally:
        if args.out:
            out.close()
    for theta in thetas:
        if theta > 0:
            logger.info("theta=%g: bounds cross R-OBD at rho*=%.6g", theta,
                        crossing_rho(args.m, args.alpha, args.beta, theta))


def cmd_sweep(args, config):
    if args.out:
        check_writable(args.out, args.force)
    model = _cost_model(config)
    column, default_values = SWEEPS[args.family]
    values = _float_list(args.values or default_values)
    dataset = _dataset(args)
    if args.family in ('mlarobd', 'switch'):
        if not args.weights:
            raise ValueError("the %s sweep needs --weights" % args.family)
        weights = load_weights(args.weights)
    else:
        train = prepare_samples(_read_split(args.data, 'train'), model)
        val = prepare_samples(_read_split(args.data, 'val'), model)

    if args.family == 'mlarobd':
        rows = tradeoff_sweep(dataset, model, weights, values,
                              args.chain_x0, jobs=args.jobs)
    else:
        eval_cfg = config.get('eval', {})

        def factory(value):
            if args.family == 'switch':
                return make_policy(
                    'switch', model, weights, gamma=value,
                    gamma_growth=eval_cfg.get('gamma_growth', 2.0))
            if args.family == 'pureml':
                trained = train_pureml(train, model, _train_config(
                    args, config, 'pureml', kappa=value), val)
                return make_policy('pureml', model, trained)
            train_config = _train_config(args, config, 'ecl2o', mu=value,
                                         theta=args.theta)
            trained = train_ecl2o(train, model, train_config, val)
            return make_policy('ecl2o', model, trained,
                               theta=train_config.theta)

        rows = policy_sweep(dataset, model, factory, values, args.chain_x0,
                            jobs=args.jobs)
    if args.pareto:
        rows = pareto_boundary(rows)
    out = open(args.out, 'w', newline='') if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow([column, 'norm_avg', 'emp_cr'])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    finally:
        if args.out:
            out.close()


def build_parser():
    parser = argparse.ArgumentParser(
        prog='expert-calibration',
        description="Expert-calibrated learning for online optimization "
                    "with switching costs.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true',
                           help="log debug messages")
    verbosity.add_argument('--quiet', action='store_true',
                           help="log warnings and errors only")
    parser.add_argument('--config', help="JSON configuration file")
    sub = parser.add_subparsers(dest='command', required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument('--force', action='store_true',
                       help="overwrite existing outputs")
        p.add_argument('--seed', type=int, default=None,
                       help="random seed (default: $SOCO_SEED or 0)")
        return p

    def optimizer_flags(p):
        p.add_argument('--epochs', type=int, default=None)
        p.add_argument('--lr', type=float, default=None)
        p.add_argument('--batch-size', type=int, default=None)
        p.add_argument('--patience', type=int, default=None)

    p = add('gen-weather', cmd_gen_weather, "write a synthetic weather CSV")
    p.add_argument('--out', required=True)
    p.add_argument('--days', type=int, default=365)

    p = add('gen-data', cmd_gen_data, "build train/val/test datasets")
    p.add_argument('--weather', help="weather CSV (synthetic if omitted)")
    p.add_argument('--out', required=True, help="output directory")
    p.add_argument('--days', type=int, default=365,
                   help="days of synthetic weather")
    p.add_argument('--episode-len', type=int, default=24)
    p.add_argument('--augment', type=int, default=None,
                   help="number of training episodes after augmentation")
    p.add_argument('--train-days', type=int, default=59)
    p.add_argument('--val-days', type=int, default=31)
    p.add_argument('--normalization', type=float, default=None,
                   help="context scale in MW (default: 95th percentile "
                        "of the training contexts)")

    p = add('train', cmd_train, "train EC-L2O or PureML")
    p.add_argument('--mode', choices=['ecl2o', 'pureml'], default='ecl2o')
    p.add_argument('--data', required=True)
    p.add_argument('--mu', type=float, default=None)
    p.add_argument('--theta', type=float, default=None)
    p.add_argument('--kappa', type=float, default=None)
    optimizer_flags(p)
    p.add_argument('--out', required=True, help="weights file")
    p.add_argument('--log', help="training log CSV")

    for name, func, help in (('eval', cmd_eval, "evaluate policies"),
                             ('sweep', cmd_sweep,
                              "average cost / CR trade-off of a policy")):
        p = add(name, func, help)
        p.add_argument('--data', required=True)
        p.add_argument('--split', choices=SPLITS, default='test')
        p.add_argument('--shift', type=float, default=1.0,
                       help="scale test contexts to induce a shift")
        p.add_argument('--chain-x0', action='store_true',
                       help="start every instance from the previous one's "
                            "last action")
        p.add_argument('--jobs', type=int, default=1)
        p.add_argument('--out', help="CSV output (stdout if omitted)")
        if name == 'eval':
            p.add_argument('--policy', required=True,
                           help="comma separated policy names")
            p.add_argument('--weights', help="EC-L2O weights")
            p.add_argument('--pureml-weights',
                           help="PureML-0 weights for mlarobd, pureml and "
                                "switch (default: --weights)")
            p.add_argument('--theta', type=float, default=None)
            p.add_argument('--perfect', action='store_true',
                           help="ftp follows the offline optimum")
            p.add_argument('--percentiles', default='99,99.9')
            p.add_argument('--instances',
                           help="prefix for per-instance ratio CSVs")
        else:
            p.add_argument('--family', choices=sorted(SWEEPS),
                           default='mlarobd',
                           help="swept policy: mlarobd (theta), switch "
                                "(gamma), pureml (kappa) or ecl2o (mu); "
                                "pureml and ecl2o train one network per "
                                "value on the train and val splits")
            p.add_argument('--values', '--theta-list', dest='values',
                           help="comma separated parameter values")
            p.add_argument('--weights',
                           help="PureML-0 weights for mlarobd and switch")
            p.add_argument('--theta', type=float, default=None,
                           help="trust parameter of the ecl2o family")
            p.add_argument('--pareto', action='store_true',
                           help="only write the Pareto boundary")
            optimizer_flags(p)

    p = add('bounds', cmd_bounds, "theoretical competitive ratio bounds")
    p.add_argument('--m', type=float, default=1.0)
    p.add_argument('--alpha', type=float, default=10.0)
    p.add_argument('--beta', type=float, default=10.0)
    p.add_argument('--theta-list', default='0,0.5,1,2')
    p.add_argument('--rho-max', type=float, default=2.0)
    p.add_argument('--rho-steps', type=int, default=41)
    p.add_argument('--out', help="CSV output (stdout if omitted)")
    return parser


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else (logging.WARNING if quiet else
                                           logging.INFO)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(levelname)s %(name)s: %(message)s')


def main(argv=None):
    """
    Runs a command and returns the process exit status.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        config = load_config(args.config)
        args.func(args, config)
    except DivergenceError as err:
        logger.error("training diverged: %s", err)
        return 1
    except (CalibrationError, ValueError, OSError) as err:
        logger.error("%s: %s", type(err).__name__, err)
        return 1
    return 0
