#!/usr/bin/env python3

# Copyright 2026 Fare authors
# Apache 2.0

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from torch.utils.tensorboard import SummaryWriter

from fare.common import (FormatError, describe, fix_random_seed, save_training_info, setup_logger, str2bool,
                         write_config_echo)
from fare.conformal.band import InsufficientSegmentsError, chunk, fit_band, load_band, save_band
from fare.data.datamodule import NavDataModule
from fare.data.trajectories import load_trajectories, save_trajectories
from fare.eval.detectors import METHODS, Detectors, calibration_scores, fit_bands
from fare.eval.evaluate import evaluate
from fare.eval.report import write_eval_report, write_trials_report
from fare.eval.testset import build_test_set
from fare.eval.trials import TrialConfig, run_trials
from fare.models.autoencoder import train_ae
from fare.models.encoder import EncoderConfig
from fare.models.policy import train_policy
from fare.models.registry import load_model
from fare.models.rnd import train_rnd
from fare.recovery.policy import RecoveryConfig
from fare.sim.collect import CollectConfig, collect_dataset
from fare.sim.world import LAYOUTS
from fare.training.trainer import TrainConfig, write_loss_curve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def comma_list(value: str) -> List[str]:
    return [v for v in value.split(',') if v]


def layout_list(value: str) -> List[str]:
    layouts = comma_list(value)
    for layout in layouts:
        if layout not in LAYOUTS:
            raise argparse.ArgumentTypeError(f'Unknown layout {layout}, expected a subset of {",".join(LAYOUTS)}')
    return layouts


def method_list(value: str) -> List[str]:
    methods = comma_list(value)
    for method in methods:
        if method not in METHODS:
            raise argparse.ArgumentTypeError(f'Unknown method {method}, expected a subset of {",".join(METHODS)}')
    return methods


def _common(parser: argparse.ArgumentParser, out: str) -> None:
    parser.add_argument(
        '--seed',
        type=int,
        default=0,
        help='Random seed; together with the flags it determines every output.')
    parser.add_argument(
        '--out',
        type=Path,
        default=Path(out),
        help='Output location.')
    parser.add_argument(
        '--log-level',
        type=str,
        default='info',
        choices=['debug', 'info', 'warning'],
        help='Logging level.')


def _training(parser: argparse.ArgumentParser, epochs: int = 20) -> None:
    NavDataModule.add_arguments(parser)
    parser.add_argument(
        '--epochs',
        type=int,
        default=epochs,
        help='Number of training epochs; 0 keeps the initialization.')
    parser.add_argument(
        '--lr',
        type=float,
        default=1e-3,
        help='Adam learning rate.')
    parser.add_argument(
        '--beta',
        type=float,
        default=1e-3,
        help='Weight of the KL term (sweep e.g. 1e-4, 1e-3, 1e-2).')
    parser.add_argument(
        '--latent-dim',
        type=int,
        default=32,
        help='Latent dimension d.')
    parser.add_argument(
        '--tensorboard',
        type=str2bool,
        default=False,
        help='Write TensorBoard training diagnostics to <out>/tensorboard.')


def _recovery(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group(title='Recovery policy options')
    group.add_argument('--tau-pix', type=float, default=0.5,
                       help='A heatmap pixel is high above this fraction of the frame maximum.')
    group.add_argument('--tau-cnt-fraction', type=float, default=0.05,
                       help='A bin is flagged when more than this fraction of its pixels is high.')
    group.add_argument('--t-max-tries', type=int, default=6,
                       help='Macro-actions attempted before asking for help.')
    group.add_argument('--k-clear', type=int, default=3,
                       help='Consecutive in-distribution frames that end a recovery.')
    group.add_argument('--blind-seed', type=int, default=None,
                       help='Seed of the random macro-action choice in blind mode (default: --seed).')


def get_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='fare', formatter_class=argparse.ArgumentDefaultsHelpFormatter,
                                     description='Failure-aware imitation-learned navigation.')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser('gen-data', formatter_class=fmt, help='Collect expert demonstrations.')
    _common(p, 'exp/data')
    p.add_argument('--n-traj', type=int, default=200, help='Number of trajectories (at least 10).')
    p.add_argument('--layouts', type=layout_list, default=list(LAYOUTS), help='Comma-separated layout mix.')
    p.add_argument('--max-steps', type=int, default=150, help='Maximum steps per trajectory.')
    p.add_argument('--calib-fraction', type=float, default=0.2, help='Share of trajectories held out for calibration.')
    p.set_defaults(func=gen_data)

    p = sub.add_parser('train', formatter_class=fmt, help='Train the VIB policy.')
    _common(p, 'exp/policy')
    _training(p)
    p.set_defaults(func=train)

    p = sub.add_parser('train-baseline', formatter_class=fmt, help='Train an AE, VAE or RND baseline.')
    _common(p, 'exp/baselines')
    _training(p)
    p.add_argument('--kind', type=str, required=True, choices=['ae', 'vae', 'rnd'], help='Baseline kind.')
    p.set_defaults(func=train_baseline)

    p = sub.add_parser('calibrate', formatter_class=fmt, help='Fit the conformal band of the policy.')
    _common(p, 'exp/policy/policy.band')
    p.add_argument('--weights', type=Path, default=Path('exp/policy/policy.fwt'), help='Policy weights.')
    p.add_argument('--calib', type=Path, default=Path('exp/data/calib.ftraj'), help='Calibration trajectories.')
    p.add_argument('--T', dest='T', type=int, default=49, help='Segment length is T+1 frames.')
    p.add_argument('--alpha', type=float, default=0.05, help='Significance level.')
    p.add_argument('--split-fraction', type=float, default=0.5, help='Share of segments estimating the mean.')
    p.set_defaults(func=calibrate)

    p = sub.add_parser('eval', formatter_class=fmt, help='Detection and recognition evaluation.')
    _common(p, 'exp/eval')
    p.add_argument('--weights', type=Path, default=Path('exp/policy/policy.fwt'), help='Policy weights.')
    p.add_argument('--band', type=Path, default=Path('exp/policy/policy.band'), help='Policy band.')
    p.add_argument('--calib', type=Path, default=Path('exp/data/calib.ftraj'),
                   help='Calibration trajectories for the baseline bands.')
    p.add_argument('--baselines', type=Path, default=Path('exp/baselines'),
                   help='Directory holding ae.fwt, vae.fwt and rnd.fwt.')
    p.add_argument('--methods', type=method_list, default=list(METHODS), help='Comma-separated methods.')
    p.add_argument('--n-fail', type=int, default=90, help='Failure trajectories, split evenly over 3 families.')
    p.add_argument('--n-normal', type=int, default=90, help='Failure-free trajectories.')
    p.add_argument('--layouts', type=layout_list, default=list(LAYOUTS), help='Comma-separated layout mix.')
    p.set_defaults(func=run_eval)

    p = sub.add_parser('trials', formatter_class=fmt, help='Closed-loop recovery trials.')
    _common(p, 'exp/trials')
    p.add_argument('--weights', type=Path, default=Path('exp/policy/policy.fwt'), help='Policy weights.')
    p.add_argument('--band', type=Path, default=Path('exp/policy/policy.band'), help='Policy band.')
    p.add_argument('--mode', type=str, default='informed', choices=['informed', 'blind', 'both'],
                   help='Recovery mode; both runs the paired informed/blind comparison.')
    p.add_argument('--n', type=int, default=10, help='Trials per failure kind.')
    p.add_argument('--budget-steps', type=int, default=300, help='Control steps allowed after the trigger.')
    p.add_argument('--layouts', type=layout_list, default=list(LAYOUTS), help='Comma-separated layout mix.')
    _recovery(p)
    p.set_defaults(func=trials)
    return parser


def _log_dir(args) -> Path:
    out = Path(args.out)
    return (out.parent if out.suffix else out) / 'log'


# ----------------------------------------------------------------------
# commands


def gen_data(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    config = CollectConfig(max_steps=args.max_steps, calib_fraction=args.calib_fraction)
    train_set, calib_set = collect_dataset(args.n_traj, tuple(args.layouts), args.seed, config)
    save_trajectories(args.out / 'train.ftraj', train_set)
    save_trajectories(args.out / 'calib.ftraj', calib_set)
    with open(args.out / 'split.txt', 'w') as f:
        for name, trajs in (('train', train_set), ('calib', calib_set)):
            for seed, layout, length in zip(trajs.seeds, trajs.layouts, trajs.lengths):
                f.write(f'{name} {seed} {layout} {length}\n')
    logging.info(f'{len(train_set)} train / {len(calib_set)} calibration trajectories, '
                 f'{train_set.num_frames} / {calib_set.num_frames} frames')


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, beta=args.beta,
                       seed=args.seed, shuffle=args.shuffle)


def _tb_writer(args) -> Optional[SummaryWriter]:
    return SummaryWriter(log_dir=str(args.out / 'tensorboard')) if args.tensorboard else None


def _finish_training(args, model, history, name: str) -> None:
    describe(model.params, f'{name} parameters summary:')
    model_path = args.out / f'{name}.fwt'
    model.save(model_path)
    write_loss_curve(args.out / f'loss_{name}.csv', history)
    final = history[-1].loss if history else float('nan')
    best = min(history, key=lambda s: s.loss) if history else None
    save_training_info(args.out / f'training_info_{name}.txt', model_path, args.epochs, args.lr, final,
                       best.loss if best else final, best.epoch if best else -1)


def train(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    trajs = NavDataModule(args).train_trajectories()
    c, h, w = trajs.obs_shape
    encoder = EncoderConfig(channels=c, height=h, width=w, latent_dim=args.latent_dim)
    tb_writer = _tb_writer(args)
    model, history = train_policy(trajs, _train_config(args), encoder, tb_writer=tb_writer)
    if tb_writer is not None:
        tb_writer.close()
    _finish_training(args, model, history, 'policy')


def train_baseline(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    trajs = NavDataModule(args).train_trajectories()
    c, h, w = trajs.obs_shape
    encoder = EncoderConfig(channels=c, height=h, width=w, latent_dim=args.latent_dim)
    tb_writer = _tb_writer(args)
    if args.kind == 'rnd':
        model, history = train_rnd(trajs, _train_config(args), encoder, tb_writer=tb_writer)
    else:
        model, history = train_ae(trajs, args.kind == 'vae', _train_config(args), encoder, tb_writer=tb_writer)
    if tb_writer is not None:
        tb_writer.close()
    _finish_training(args, model, history, args.kind)


def calibrate(args) -> None:
    args.out.parent.mkdir(parents=True, exist_ok=True)
    policy = load_model(args.weights, 'policy')
    calib = load_trajectories(args.calib)
    scores = calibration_scores(Detectors(policy=policy), 'fare', calib)
    segments = chunk(scores, args.T)
    band = fit_band(segments, alpha=args.alpha, split_fraction=args.split_fraction, score='kl')
    save_band(args.out, band)


def _baseline_models(args):
    models = {}
    for kind, needed in (('ae', 'ae' in args.methods),
                         ('vae', 'vae-r' in args.methods or 'vae-kl' in args.methods),
                         ('rnd', 'rnd' in args.methods)):
        if needed:
            models[kind] = load_model(args.baselines / f'{kind}.fwt', kind)
    return models


def run_eval(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    policy = load_model(args.weights, 'policy')
    band = load_band(args.band)
    detectors = Detectors(policy=policy, **_baseline_models(args))
    detectors.check(args.methods)
    bands = {'fare': band}
    if any(m != 'fare' for m in args.methods):
        calib = load_trajectories(args.calib)
        bands = fit_bands(detectors, args.methods, calib, band.T, band.alpha, fixed=bands)
    test_set = build_test_set(args.n_fail, args.n_normal, args.seed, tuple(args.layouts))
    results = evaluate(test_set, detectors, bands, args.methods)
    for line in write_eval_report(args.out, results):
        logging.info(line)


def trials(args) -> None:
    args.out.mkdir(parents=True, exist_ok=True)
    policy = load_model(args.weights, 'policy')
    band = load_band(args.band)
    config = TrialConfig(n_per_failure=args.n, seed=args.seed, budget_steps=args.budget_steps,
                         layouts=tuple(args.layouts), blind_seed=args.blind_seed)
    recovery = RecoveryConfig(tau_pix=args.tau_pix, tau_cnt_fraction=args.tau_cnt_fraction,
                              t_max_tries=args.t_max_tries, k_clear=args.k_clear)
    modes = ('informed', 'blind') if args.mode == 'both' else (args.mode,)
    results, events = {}, {}
    for mode in modes:
        results[mode], events[mode] = run_trials(policy, band, mode, config, replace(recovery, mode=mode))
    for line in write_trials_report(args.out, results, events):
        logging.info(line)


# ----------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = get_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logger(str(_log_dir(args) / f'log-{args.command}'), args.log_level)
    fix_random_seed(args.seed)
    config = {k: ','.join(v) if isinstance(v, list) else v for k, v in vars(args).items() if k != 'func'}
    echo_dir = args.out.parent if args.out.suffix else args.out
    try:
        echo_dir.mkdir(parents=True, exist_ok=True)
        write_config_echo(echo_dir / 'config.echo', config)
        args.func(args)
    except (FileNotFoundError, FormatError, InsufficientSegmentsError) as e:
        logging.error(f'{args.command}: {e}')
        return EXIT_DATA
    except Exception as e:
        logging.exception(f'{args.command} failed: {e}')
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
