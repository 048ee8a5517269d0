"""Tests for cli.py."""

import json
import os
import pickle
from unittest import mock

import numpy as np

from kssl import cli
from kssl import dataio
from kssl import errors
from kssl import kernels
from kssl import trainer
import testutil


SMALL_DATA = ['--data', 'gaussian:m=5,n=30,seed=2', '--target', 'linear:d=2']
SMALL_TRAINING = SMALL_DATA + ['--epochs', '200', '--eval-every', '50']


class CliTestBase(testutil.KsslTestBase):
    def _run(self, command, *flags, **kwargs):
        out = kwargs.get('out', self._abspath('out'))
        return cli.main([command, '--out', out] + list(flags))

    def _out(self, *args):
        return self._abspath('out', *args)

    def _read_json(self, filename):
        with open(self._out(filename)) as f:
            return json.load(f)

    def _read_bytes(self, path):
        with open(path, 'rb') as f:
            return f.read()

    def _check_idempotent(self, command, filenames, *flags):
        """Two runs into the same directory write identical files."""
        outputs = []
        for _ in range(2):
            self.assertEqual(0, self._run(command, *flags))
            outputs.append([self._read_bytes(self._out(filename))
                            for filename in filenames])
        for (filename, first, second) in zip(filenames, *outputs):
            self.assertEqual(first, second, filename)


class TestSynthesize(CliTestBase):
    def test_outputs(self):
        self.assertEqual(0, self._run('synthesize', *SMALL_DATA))
        M = dataio.read_matrix(self._out('M.mat64'))
        C = dataio.read_matrix(self._out('C.mat64'))
        augmented = dataio.read_matrix(self._out('augmented_queries.mat64'))
        self.assertEqual((30, 30), M.shape)
        self.assertEqual((2, 30), C.shape)
        self.assertEqual((30, 30), augmented.shape)
        self.assertFalse(os.path.exists(self._out('preimages.csv')))

        (data, _) = dataio.load_data('gaussian:m=5,n=30,seed=2')
        K = kernels.gram(kernels.KernelSpec.rbf(3.0), data.values).K
        self.assertRelativeClose(C @ K, C @ K @ M @ K, tol=1e-6)
        self.assertAllClose(M @ K, augmented.T, atol=1e-10)

    def test_manifest(self):
        self.assertEqual(0, self._run('synthesize', *SMALL_DATA))
        manifest = self._read_json(cli.MANIFEST)
        for key in ('method', 'kernel', 'sigma', 'lambda_ridge', 'mu_p',
                    'mkm_residual', 'lyapunov_residual',
                    'final_procrustes_mean', 'final_procrustes_sem',
                    'baseline_procrustes', 'n', 'min_eig', 'max_eig',
                    'full_rank', 'jitter', 'seed', 'd', 'k', 'rank_C',
                    'coefficient_source', 'config'):
            self.assertIn(key, manifest)
        self.assertEqual('vicreg', manifest['method'])
        self.assertEqual(3.0, manifest['sigma'])
        self.assertEqual(1.0, manifest['lambda_ridge'])
        self.assertEqual('ridge', manifest['coefficient_source'])
        self.assertEqual((30, 30, 2, 2),
                         (manifest['n'], manifest['k'], manifest['d'],
                          manifest['rank_C']))
        self.assertLess(manifest['mkm_residual'], 1e-8)
        self.assertIsNone(manifest['lyapunov_residual'])
        self.assertIsNone(manifest['final_procrustes_mean'])
        self.assertEqual(1.0, manifest['mu_p'])
        self.assertIsNone(manifest['preimage_residual'])

    def test_manifest_records_mu_p(self):
        self.assertEqual(0, self._run('synthesize', '--mu-p', '0.25',
                                      *SMALL_DATA))
        self.assertEqual(0.25, self._read_json(cli.MANIFEST)['mu_p'])

    def test_barlow_twins(self):
        self.assertEqual(0, self._run('synthesize', '--method', 'barlow-twins',
                                      '--sigma', '1.0', *SMALL_DATA))
        manifest = self._read_json(cli.MANIFEST)
        self.assertLess(manifest['lyapunov_residual'], 1e-8)
        self.assertLess(manifest['bt_identity_residual'], 1e-4)
        self.assertIsNone(manifest['mkm_residual'])

    def test_barlow_twins_needs_full_rank_gram(self):
        points = self.rng.standard_normal((6, 3))
        path = self._abspath('points.csv')
        dataio.write_matrix(np.vstack([points, points[:1]]), path)
        self.assertEqual(
            errors.SingularMatrix.exit_code,
            self._run('synthesize', '--method', 'barlow-twins',
                      '--data', path, '--target', 'linear:d=2'))

    def test_preimages(self):
        self.assertEqual(0, self._run('synthesize', '--preimage',
                                      *SMALL_DATA))
        points = dataio.read_matrix(self._out('preimages.csv'))
        self.assertEqual((30, 5), points.shape)
        manifest = self._read_json(cli.MANIFEST)
        self.assertEqual(1.0, manifest['mu_p'])
        self.assertGreaterEqual(manifest['preimage_residual'], 0.0)

    def test_queries(self):
        queries = self._abspath('queries.csv')
        dataio.write_matrix(self.rng.standard_normal((4, 5)), queries)
        self.assertEqual(0, self._run('synthesize', '--queries', queries,
                                      *SMALL_DATA))
        augmented = dataio.read_matrix(self._out('augmented_queries.mat64'))
        self.assertEqual((4, 30), augmented.shape)
        self.assertEqual(4, self._read_json(cli.MANIFEST)['k'])

        dataio.write_matrix(self.rng.standard_normal((4, 3)), queries)
        self.assertEqual(
            errors.DimensionMismatch.exit_code,
            self._run('synthesize', '--queries', queries, *SMALL_DATA))

    def test_reproducible(self):
        first = self._abspath('first')
        second = self._abspath('second')
        self.assertEqual(0, self._run('synthesize', *SMALL_DATA, out=first))
        self.assertEqual(0, self._run('synthesize', *SMALL_DATA, out=second))
        for filename in ('M.mat64', 'C.mat64', 'augmented_queries.mat64'):
            self.assertEqual(
                self._read_bytes(os.path.join(first, filename)),
                self._read_bytes(os.path.join(second, filename)))


class TestExitCodes(CliTestBase):
    def test_parse_error(self):
        path = self._abspath('points.csv')
        with open(path, 'w') as f:
            f.write('a,b\nx,y\n')
        self.assertEqual(errors.ParseError.exit_code,
                         self._run('synthesize', '--data', path))

    def test_non_finite_target(self):
        F = self.rng.standard_normal((30, 2))
        F[4, 1] = np.nan
        path = self._abspath('target.csv')
        dataio.write_matrix(F, path)
        self.assertEqual(
            errors.ParseError.exit_code,
            self._run('synthesize', '--data', 'gaussian:m=5,n=30,seed=2',
                      '--target', path))

    def test_missing_file(self):
        self.assertEqual(
            errors.IoError.exit_code,
            self._run('synthesize', '--data', self._abspath('nope.csv')))

    def test_config_error(self):
        self.assertEqual(errors.ConfigError.exit_code,
                         self._run('train', '--repeats', '0'))
        self.assertEqual(errors.ConfigError.exit_code,
                         self._run('synthesize', '--data', 'gaussian:k=3'))

    def test_rank_deficient_target(self):
        self.assertEqual(
            errors.RankDeficientTarget.exit_code,
            self._run('synthesize', '--target', 'linear:d=40'))

    def test_non_finite_loss(self):
        real_objective = trainer.objective
        calls = []

        def fake_objective(*args, **kwargs):
            (value, grad) = real_objective(*args, **kwargs)
            calls.append(value)
            return (float('nan') if len(calls) == 3 else value, grad)

        self.mock_value('kssl.trainer.objective', fake_objective)
        self.assertEqual(errors.NonFiniteLoss.exit_code,
                         self._run('train', *SMALL_TRAINING))
        report = self._read_json(cli.REPORT)
        self.assertEqual('diverged', report['status'])
        self.assertEqual(1, report['last_good_epoch'])

    def test_non_finite_loss_pickles(self):
        e = pickle.loads(pickle.dumps(errors.NonFiniteLoss('diverged', 3)))
        self.assertEqual(3, e.last_good_epoch)
        self.assertEqual('diverged (last good epoch: 3)', str(e))

    def test_non_finite_loss_in_parallel(self):
        self.assertEqual(errors.NonFiniteLoss.exit_code,
                         self._run('train', '--repeats', '2', '--jobs', '2',
                                   '--lr', '1e300', *SMALL_TRAINING))
        report = self._read_json(cli.REPORT)
        self.assertEqual('diverged', report['status'])
        self.assertIsInstance(report['last_good_epoch'], int)
        self.assertFalse(os.path.exists(self._out('C_learned.mat64')))

    def test_unexpected_error(self):
        self.mock_value('kssl.synth.synthesize',
                        mock.Mock(side_effect=RuntimeError('boom')))
        self.assertEqual(1, self._run('synthesize', *SMALL_DATA))

    def test_exit_codes_are_distinct(self):
        codes = [cls.exit_code for cls in (
            errors.ConfigError, errors.ParseError, errors.SingularMatrix,
            errors.RankDeficientTarget, errors.NonFiniteLoss, errors.IoError,
            errors.DimensionMismatch, errors.NonSymmetric,
            errors.GramMismatch)]
        self.assertEqual(list(range(2, 11)), codes)

    def test_bad_flag(self):
        with mock.patch('sys.stderr'):
            with self.assertRaises(SystemExit) as e:
                cli.main(['train', '--method', 'simclr'])
        self.assertEqual(2, e.exception.code)


class TestTrain(CliTestBase):
    def test_outputs(self):
        self.assertEqual(0, self._run('train', '--repeats', '2',
                                      *SMALL_TRAINING))
        trace = dataio.read_trace(self._out(cli.TRACE))
        self.assertEqual([0, 50, 100, 150, 200], [row[0] for row in trace])
        learned = dataio.read_matrix(self._out('C_learned.mat64'))
        self.assertEqual((2, 30), learned.shape)

        report = self._read_json(cli.REPORT)
        self.assertEqual('ok', report['status'])
        self.assertEqual([0, 1], report['seeds'])
        self.assertEqual(2, len(report['final_procrustes']))
        self.assertGreater(report['final_procrustes_sem'], 0.0)
        self.assertAlmostEqual(np.mean(report['final_procrustes']),
                               report['final_procrustes_mean'])
        self.assertEqual(trace[-1][2], report['final_procrustes'][0])
        self.assertEqual(1.0, report['sigma'])
        self.assertEqual(0.0, report['lambda_ridge'])
        self.assertEqual(0.0, report['norm_penalty'])
        self.assertEqual('paired', report['pairing'])

    def test_single_repeat_has_zero_sem(self):
        self.assertEqual(0, self._run('train', '--repeats', '1',
                                      *SMALL_TRAINING))
        self.assertEqual(0.0, self._read_json(cli.REPORT)[
            'final_procrustes_sem'])

    def test_barlow_twins(self):
        self.assertEqual(0, self._run('train', '--method', 'barlow-twins',
                                      '--repeats', '1', *SMALL_TRAINING))
        report = self._read_json(cli.REPORT)
        self.assertEqual(1e-4, report['norm_penalty'])
        self.assertIn('standard off-diagonal', report['loss'])

    def test_parallel_matches_serial(self):
        serial = self._abspath('serial')
        parallel = self._abspath('parallel')
        self.assertEqual(0, self._run('train', '--repeats', '2',
                                      *SMALL_TRAINING, out=serial))
        self.assertEqual(0, self._run('train', '--repeats', '2', '--jobs',
                                      '2', *SMALL_TRAINING, out=parallel))
        with open(os.path.join(serial, cli.REPORT)) as f:
            serial_report = json.load(f)
        with open(os.path.join(parallel, cli.REPORT)) as f:
            parallel_report = json.load(f)
        self.assertEqual(serial_report['final_procrustes'],
                         parallel_report['final_procrustes'])
        self.assertEqual(
            self._read_bytes(os.path.join(serial, cli.TRACE)),
            self._read_bytes(os.path.join(parallel, cli.TRACE)))

    def test_idempotent(self):
        self._check_idempotent(
            'train', ('C_learned.mat64', cli.TRACE, cli.REPORT),
            '--repeats', '2', *SMALL_TRAINING)

    def test_config_file(self):
        path = self._abspath('config.json')
        with open(path, 'w') as f:
            json.dump({'method': 'scl', 'epochs': 5, 'repeats': 1}, f)
        self.assertEqual(0, self._run('train', '--config', path,
                                      *SMALL_TRAINING))
        report = self._read_json(cli.REPORT)
        self.assertEqual('scl', report['method'])
        self.assertEqual(200, report['epochs'])
        self.assertEqual(1, report['repeats'])
        self.assertEqual('scl', report['config']['method'])


class TestDemoSpiked(CliTestBase):
    def test_finds_the_spike(self):
        self.assertEqual(0, self._run(
            'demo-spiked', '--m', '5', '--n', '100', '--epochs', '2000',
            '--lr', '5e-3', '--eval-every', '500', '--repeats', '1'))
        report = self._read_json(cli.REPORT)
        self.assertEqual(50.0, report['spike_nu'])
        self.assertEqual(5, report['m'])
        self.assertGreater(report['alignment_mean'], 0.95)

    def test_without_a_spike(self):
        self.assertEqual(0, self._run(
            'demo-spiked', '--m', '5', '--n', '100', '--nu', '0',
            '--epochs', '4000', '--lr', '5e-3', '--eval-every', '1000',
            '--repeats', '1'))
        report = self._read_json(cli.REPORT)
        self.assertEqual(0.0, report['spike_nu'])
        self.assertLess(report['final_procrustes_mean'],
                        0.05 * report['baseline_procrustes'])

    def test_idempotent(self):
        self._check_idempotent(
            'demo-spiked', (cli.TRACE, cli.REPORT), '--m', '4', '--n', '40',
            '--epochs', '100', '--eval-every', '50', '--repeats', '1')

    @testutil.slow
    def test_full_scale(self):
        self.assertEqual(0, self._run('demo-spiked', '--repeats', '3'))
        report = self._read_json(cli.REPORT)
        self.assertEqual(3, len(report['alignment']))
        for alignment in report['alignment']:
            self.assertGreater(alignment, 0.95)

    def test_needs_spiked_data(self):
        self.assertEqual(
            errors.ConfigError.exit_code,
            self._run('demo-spiked', '--data', 'gaussian:m=5,n=30',
                      '--epochs', '5'))


class TestSpikeAlignment(testutil.KsslTestBase):
    def test_linear_representation(self):
        data = dataio.DataMatrix(self.rng.standard_normal((4, 50)))
        theta = np.array([0.0, 0.6, 0.0, 0.8])
        self.assertAlmostEqual(
            1.0, cli.spike_alignment(data, -3.0 * theta @ data.values + 2.0,
                                     theta))
        other = np.array([1.0, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(
            0.0, cli.spike_alignment(data, other @ data.values, theta))

    def test_constant_representation(self):
        data = dataio.DataMatrix(self.rng.standard_normal((3, 20)))
        self.assertEqual(0.0, cli.spike_alignment(data, np.ones(20),
                                                  np.array([1.0, 0.0, 0.0])))


if __name__ == '__main__':
    testutil.main()
