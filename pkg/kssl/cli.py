#!/usr/bin/env python
"""The kssl commandline tool.

    kssl synthesize [flags]     fit the target, build the optimal
                                augmentation, and (optionally) pre-images
    kssl train [flags]          train a kernel model under that
                                augmentation and trace its recovery of
                                the target
    kssl demo-spiked [flags]    the spiked-covariance example: does
                                training find the signal direction?

Every command reads a RunConfig (--config, then flags on top) and
writes its outputs, plus a JSON manifest or report, into --out.
Matrix outputs hold one item per row, like the inputs.

The exit status is 0 on success, and otherwise the exit_code of the
KsslFailure subclass that stopped the run (see errors.py).
"""

import argparse
import json
import multiprocessing
import os
import sys

import numpy as np
import scipy.linalg
import scipy.stats

from . import dataio
from . import errors
from . import kernels
from . import log
from . import losses
from . import matrixkit
from . import preimage
from . import run_config
from . import synth
from . import trainer


MANIFEST = 'manifest.json'
REPORT = 'report.json'
TRACE = 'trace.csv'


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise errors.IoError('Cannot create output directory %s: %s'
                             % (path, e))


def _write_json(values, path):
    try:
        with open(path, 'w') as f:
            json.dump(values, f, sort_keys=True, indent=2)
            f.write('\n')
    except OSError as e:
        raise errors.IoError('Cannot write %s: %s' % (path, e))


def _float_or_none(value):
    return None if value is None else float(value)


def _base_report(config, gram):
    """The keys every manifest and report has."""
    spec = gram.spec
    return {
        'method': config.method,
        'kernel': spec.family,
        'kernel_description': spec.describe(),
        'sigma': spec.sigma if spec.family == kernels.RBF else None,
        'lambda_ridge': float(config.lambda_ridge),
        'mu_p': None,
        'mkm_residual': None,
        'lyapunov_residual': None,
        'final_procrustes_mean': None,
        'final_procrustes_sem': None,
        'baseline_procrustes': None,
        'n': gram.n,
        'min_eig': gram.min_eig,
        'max_eig': gram.max_eig,
        'full_rank': bool(gram.is_full_rank),
        'jitter': gram.jitter,
        'seed': config.seed,
    }


def _operator_report(operator):
    checks = operator.checks
    return {
        'mkm_residual': _float_or_none(checks.get('mkm_residual')),
        'lyapunov_residual': _float_or_none(checks.get('lyapunov_residual')),
        'invariance_residual': _float_or_none(
            checks.get('invariance_residual')),
        'projection_rank': checks.get('projection_rank'),
        'bt_identity_residual': _float_or_none(
            checks.get('bt_identity_residual')),
    }


def _gram(config, data):
    return kernels.gram(config.kernel_spec(), data.values,
                        jitter=config.jitter)


def cmd_synthesize(config):
    """Fit, synthesize the augmentation, augment the queries."""
    config = config.for_command(run_config.SYNTHESIZE)
    (data, F, _) = config.load_inputs()
    gram = _gram(config, data)

    if config.queries:
        (queries, _) = dataio.load_data(config.queries)
        if queries.m != data.m:
            raise errors.DimensionMismatch(
                'Queries are in R^%d but the data is in R^%d'
                % (queries.m, data.m))
        K_cross = kernels.cross_gram(gram.spec, data.values, queries.values)
    else:
        queries = data
        K_cross = gram.K

    log.info('Synthesizing the %s augmentation for %d points (d=%d),'
             ' %d queries', config.method, data.n, F.shape[0], queries.n)
    result = synth.synthesize(F, gram, config.method, config.lambda_ridge,
                              K_cross)

    _ensure_dir(config.out)
    dataio.write_matrix(result.operator.M,
                        os.path.join(config.out, 'M.mat64'))
    dataio.write_matrix(result.coefficients.C,
                        os.path.join(config.out, 'C.mat64'))
    dataio.write_matrix(result.augmented.T,
                        os.path.join(config.out, 'augmented_queries.mat64'))

    manifest = _base_report(config, gram)
    manifest.update(_operator_report(result.operator))
    manifest.update({
        'd': result.coefficients.d,
        'm': data.m,
        'k': queries.n,
        'rank_C': matrixkit.matrix_rank(result.coefficients.C),
        'coefficient_source': result.coefficients.source,
        'mu_p': config.preimage_config().mu_p,
        'preimage_residual': None,
        'config': config.as_dict(),
    })

    if config.preimage:
        cfg = config.preimage_config()
        points = preimage.preimage(data.values, gram, result.augmented, cfg)
        dataio.write_matrix(points.T,
                            os.path.join(config.out, 'preimages.csv'))
        manifest['preimage_residual'] = preimage.preimage_residual(
            data.values, gram, result.augmented, points, cfg)
        log.info('Wrote %d pre-images (residual %.3g)', points.shape[1],
                 manifest['preimage_residual'])

    _write_json(manifest, os.path.join(config.out, MANIFEST))
    log.info('Wrote the %s operator to %s', result.operator.family,
             config.out)
    return manifest


def _prepare_training(config, data, F):
    """Put the target in the form the loss recovers, then synthesize."""
    loss_kind = config.loss_kind()
    gram = _gram(config, data)
    kernels.check_full_rank(gram)
    target = trainer.comparison_target(loss_kind, F)
    result = synth.synthesize(target, gram, config.method,
                              config.lambda_ridge)
    dist = synth.AugmentationDistribution(result.operator)
    return (gram, target, result, dist)


def _train_one(args):
    """One seed of a repeated run; module-level so Pool can pickle it."""
    (gram, dist, target, cfg) = args
    (state, trace) = trainer.train(None, gram.spec, dist, target, cfg,
                                   gram=gram)
    return (state.C, trace.records)


def _run_repeats(config, gram, dist, target):
    cfgs = [config.train_config(seed=config.seed + r)
            for r in range(config.repeats)]
    jobs = [(gram, dist, target, cfg) for cfg in cfgs]
    if config.jobs > 1 and len(jobs) > 1:
        pool = multiprocessing.Pool(min(config.jobs, len(jobs)))
        try:
            return pool.map(_train_one, jobs)
        finally:
            pool.close()
            pool.join()
    return [_train_one(job) for job in jobs]


def _summarize(results):
    finals = [records[-1].procrustes_to_target for (_, records) in results]
    baselines = [records[-1].procrustes_random_baseline
                 for (_, records) in results]
    sem = float(scipy.stats.sem(finals)) if len(finals) > 1 else 0.0
    return {
        'final_procrustes': finals,
        'final_procrustes_mean': float(np.mean(finals)),
        'final_procrustes_sem': sem,
        'final_loss': [records[-1].loss for (_, records) in results],
        'baseline_procrustes': float(np.mean(baselines)),
    }


def _training_report(config, gram, result):
    report = _base_report(config, gram)
    report.update(_operator_report(result.operator))
    report.update({
        'd': result.coefficients.d,
        'loss': config.loss_kind().describe(),
        'epochs': config.epochs,
        'learning_rate': config.lr,
        'pairing': config.pairing,
        'norm_penalty': config.norm_penalty,
        'repeats': config.repeats,
        'seeds': [config.seed + r for r in range(config.repeats)],
        'config': config.as_dict(),
    })
    return report


def _train_and_report(config, command, data, F):
    """Shared body of cmd_train and cmd_demo_spiked."""
    (gram, target, result, dist) = _prepare_training(config, data, F)
    report = _training_report(config, gram, result)
    _ensure_dir(config.out)
    try:
        results = _run_repeats(config, gram, dist, target)
    except errors.NonFiniteLoss as e:
        report.update({'status': 'diverged',
                       'last_good_epoch': e.last_good_epoch})
        _write_json(report, os.path.join(config.out, REPORT))
        raise
    report['status'] = 'ok'
    report.update(_summarize(results))
    dataio.write_trace(results[0][1], os.path.join(config.out, TRACE))
    log.info('%s: final procrustes %.4g +- %.2g (random baseline %.4g)',
             command, report['final_procrustes_mean'],
             report['final_procrustes_sem'], report['baseline_procrustes'])
    return (report, results, gram)


def cmd_train(config):
    """Train under the synthesized augmentation and trace recovery."""
    config = config.for_command(run_config.TRAIN)
    (data, F, _) = config.load_inputs()
    (report, results, _) = _train_and_report(config, run_config.TRAIN,
                                             data, F)
    dataio.write_matrix(results[0][0],
                        os.path.join(config.out, 'C_learned.mat64'))
    _write_json(report, os.path.join(config.out, REPORT))
    return report


def spike_alignment(data, Y, theta):
    """|cos| between theta and the least-squares linear direction of Y."""
    Xc = data.values - data.values.mean(axis=1, keepdims=True)
    Yc = np.ravel(Y - np.mean(Y))
    (direction, _, _, _) = scipy.linalg.lstsq(Xc.T, Yc)
    norm = np.linalg.norm(direction)
    if norm == 0:
        return 0.0
    return float(abs(np.dot(direction, theta)) / norm)


def cmd_demo_spiked(config):
    """Train on spiked-covariance data towards theta^T x."""
    config = config.for_command(run_config.DEMO_SPIKED)
    (data, F, spiked) = config.load_inputs()
    if spiked is None:
        raise errors.ConfigError('demo-spiked needs spiked data'
                                 ' (--data spiked:...)')
    (report, results, gram) = _train_and_report(
        config, run_config.DEMO_SPIKED, data, F)
    loss_kind = config.loss_kind()
    alignments = [
        spike_alignment(data,
                        trainer.learned_representation(loss_kind, C, gram),
                        spiked.theta)
        for (C, _) in results]
    report.update({
        'spike_nu': spiked.nu,
        'm': spiked.m,
        'alignment': alignments,
        'alignment_mean': float(np.mean(alignments)),
    })
    _write_json(report, os.path.join(config.out, REPORT))
    log.info('Spike alignment: %s', ', '.join('%.4f' % a for a in alignments))
    return report


COMMAND_FUNCTIONS = {
    run_config.SYNTHESIZE: cmd_synthesize,
    run_config.TRAIN: cmd_train,
    run_config.DEMO_SPIKED: cmd_demo_spiked,
}


def _add_flags(parser):
    s = argparse.SUPPRESS         # only flags actually given override
    parser.add_argument('--config',
                        help='A JSON file of RunConfig settings')
    parser.add_argument('--out', default=s,
                        help='Output directory (default kssl-out)')
    parser.add_argument('--data', default=s,
                        help=('A .csv/.mat64 file with one point per row,'
                              ' or a generator: gaussian:m=20,n=200,seed=0'
                              ' or spiked:m=10,n=500,nu=50,seed=0'))
    parser.add_argument('--target', default=s,
                        help=('A .csv/.mat64 file with one representation'
                              ' per row, or linear:d=8,seed=1, or spike'))
    parser.add_argument('--queries', default=s,
                        help='Points to augment (default: the data)')
    parser.add_argument('--pca-dim', type=int, default=s, dest='pca_dim',
                        help='PCA-reduce the target to this many dimensions')
    parser.add_argument('--m', type=int, default=s,
                        help='Override m in a data generator')
    parser.add_argument('--n', type=int, default=s,
                        help='Override n in a data generator')
    parser.add_argument('--nu', type=float, default=s,
                        help='Override the spike strength of spiked data')
    parser.add_argument('--d', type=int, default=s,
                        help='Override d in a target generator')

    parser.add_argument('--kernel', choices=kernels.FAMILIES, default=s)
    parser.add_argument('--sigma', type=float, default=s,
                        help='RBF length-scale')
    parser.add_argument('--degree', type=int, default=s)
    parser.add_argument('--offset', type=float, default=s)
    parser.add_argument('--jitter', type=float, default=s,
                        help='Add this multiple of I to the Gram matrix')

    parser.add_argument('--method', choices=losses.KINDS, default=s)
    parser.add_argument('--lambda-ridge', type=float, default=s,
                        dest='lambda_ridge')
    parser.add_argument('--mu-p', type=float, default=s, dest='mu_p')
    parser.add_argument('--preimage', action='store_true', default=s,
                        help='Also write input-space pre-images')
    parser.add_argument('--clamp', type=float, nargs=2, default=s,
                        metavar=('LOW', 'HIGH'),
                        help='Clip pre-images to [LOW, HIGH]')

    parser.add_argument('--vicreg-lambda', type=float, default=s,
                        dest='vicreg_lambda')
    parser.add_argument('--vicreg-mu', type=float, default=s,
                        dest='vicreg_mu')
    parser.add_argument('--vicreg-nu', type=float, default=s,
                        dest='vicreg_nu')
    parser.add_argument('--variance-mode', choices=losses.VARIANCE_MODES,
                        default=s, dest='variance_mode')
    parser.add_argument('--bt-lambda', type=float, default=s,
                        dest='bt_lambda')
    parser.add_argument('--bt-literal-offdiag', action='store_false',
                        default=s, dest='standard_offdiag',
                        help=('Penalize (1 - C_ij)^2 off the diagonal'
                              ' instead of C_ij^2'))

    parser.add_argument('--epochs', type=int, default=s)
    parser.add_argument('--lr', type=float, default=s)
    parser.add_argument('--seed', type=int, default=s)
    parser.add_argument('--repeats', type=int, default=s,
                        help='Train this many seeds (seed, seed+1, ...)')
    parser.add_argument('--pairing', choices=trainer.PAIRING_MODES,
                        default=s)
    parser.add_argument('--eval-every', type=int, default=s,
                        dest='eval_every')
    parser.add_argument('--init-std', type=float, default=s,
                        dest='init_std')
    parser.add_argument('--norm-penalty', type=float, default=s,
                        dest='norm_penalty')
    parser.add_argument('--jobs', '-j', type=int, default=s,
                        help='Train repeats in this many processes')
    log.add_verbose_flag(parser)


def make_parser():
    parser = argparse.ArgumentParser(
        prog='kssl', description=__doc__.split('\n\n')[0])
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True
    for (name, func) in COMMAND_FUNCTIONS.items():
        _add_flags(subparsers.add_parser(name, help=func.__doc__))
    return parser


def config_from_args(args):
    values = dict(vars(args))
    config_path = values.pop('config', None)
    values.pop('command')
    values.pop('verbose', None)
    config = (run_config.RunConfig.load(config_path) if config_path
              else run_config.RunConfig())
    if 'clamp' in values:
        values['clamp'] = list(values['clamp'])
    return config.override(values)


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        COMMAND_FUNCTIONS[args.command](config)
    except errors.KsslFailure as e:
        log.error('%s failed: %s: %s', args.command, type(e).__name__, e)
        return e.exit_code
    except Exception:
        log.exception('%s failed unexpectedly', args.command)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
