import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from eigenprep.experiments import RUNNERS, relative_error
from eigenprep.models import ExperimentRun

SCAN_YAML = """
kind: rodeo_scan
seed: 11
initial_state: '0'
hamiltonian:
  name: single_qubit
scan:
  e_min: -2
  e_max: 2
  points: 21
  sigma: 3
  cycles: [1, 3]
  n_sets: 30
sampled:
  energy: 1.0
  sigma: 2
  cycles: 2
  shots: 200
"""

NON_HERMITIAN_YAML = """
kind: rodeo_scan
seed: 11
initial_state: '0'
hamiltonian:
  matrix: [[[1, 0], [1, 0]], [[0, 0], [1, 0]]]
scan: {e_min: -1, e_max: 1, points: 3, sigma: 1, cycles: [1]}
"""

FAILING_CHECK_YAML = """
kind: adiabatic
seed: 3
initial_state: two_spin
initial_hamiltonian: {name: two_spin_initial}
hamiltonian: {name: two_spin_target}
schedule: {total_time: 4, steps: 4}
checks:
  final_fidelity_min: 0.9999
"""


class RelativeErrorTests(SimpleTestCase):
    def test_relative_to_the_reference(self):
        self.assertAlmostEqual(float(relative_error(-1.1780, -1.1768)), 0.0012 / 1.1768)

    def test_zero_reference_stays_finite(self):
        errors = relative_error(pd.Series([0.0, 2e-4, 1.0]), pd.Series([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(errors, [0.0, 0.2, 0.0])


class CommandTestCase(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, name, text):
        path = self.tmp / name
        path.write_text(text)
        return str(path)

    def run_command(self, command, out, *args):
        stdout = StringIO()
        call_command(command, '--out', str(self.tmp / out), *args, stdout=stdout, stderr=StringIO())
        return json.loads((self.tmp / out / 'manifest.json').read_text()), stdout.getvalue()

    def hashes(self, manifest):
        return {output['path']: output['sha256'] for output in manifest['outputs']}


class ManifestTests(CommandTestCase):
    def test_default_preset_run(self):
        manifest, stdout = self.run_command('adiabatic', 'two_spin')
        self.assertEqual(manifest['kind'], 'adiabatic')
        self.assertEqual(manifest['status'], ExperimentRun.Status.COMPLETE)
        self.assertEqual(manifest['seed'], '20220101')
        rows = {output['path']: output['rows'] for output in manifest['outputs']}
        self.assertEqual(rows['trajectory.csv'], 21)
        self.assertIn('final fidelity', stdout)
        self.assertEqual(ExperimentRun.objects.count(), 1)

    def test_check_flag_records_results(self):
        manifest, _ = self.run_command('adiabatic', 'checked', '--check')
        self.assertTrue(manifest['checks']['final_energy']['passed'])
        self.assertTrue(manifest['checks_passed'])


class ReproducibilityTests(CommandTestCase):
    def test_same_seed_same_outputs(self):
        first, _ = self.run_command('adiabatic', 'a')
        second, _ = self.run_command('adiabatic', 'b')
        self.assertEqual(self.hashes(first), self.hashes(second))
        self.assertEqual(first['config_hash'], second['config_hash'])

    def test_seed_override(self):
        first, _ = self.run_command('adiabatic', 'a', '--seed', '5')
        second, _ = self.run_command('adiabatic', 'b', '--seed', '6')
        self.assertEqual(first['seed'], '5')
        self.assertNotEqual(self.hashes(first)['trajectory.csv'], self.hashes(second)['trajectory.csv'])

    def test_threads_do_not_change_outputs(self):
        config = self.write_config('scan.yaml', SCAN_YAML)
        one, _ = self.run_command('rodeo_scan', 'one', '--config', config, '--threads', '1')
        four, _ = self.run_command('rodeo_scan', 'four', '--config', config, '--threads', '4')
        self.assertEqual(self.hashes(one), self.hashes(four))
        self.assertEqual(four['threads'], 4)


class ExitCodeTests(CommandTestCase):
    def test_unknown_preset(self):
        with self.assertRaises(CommandError) as context:
            call_command('adiabatic', '--config', 'no_such_preset', stdout=StringIO(), stderr=StringIO())
        self.assertEqual(context.exception.returncode, 2)
        self.assertEqual(ExperimentRun.objects.count(), 0)

    def test_config_for_another_command(self):
        stderr = StringIO()
        with self.assertRaises(CommandError) as context:
            call_command('pulse', '--config', 'two_spin', stdout=StringIO(), stderr=stderr)
        self.assertEqual(context.exception.returncode, 2)
        self.assertIn('kind', stderr.getvalue())

    def test_numerical_failure(self):
        config = self.write_config('bad.yaml', NON_HERMITIAN_YAML)
        with self.assertRaises(CommandError) as context:
            self.run_command('rodeo_scan', 'bad', '--config', config)
        self.assertEqual(context.exception.returncode, 3)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.INCOMPLETE)
        self.assertIn('Hermitian', run.error)
        self.assertTrue((self.tmp / 'bad' / 'manifest.json').is_file())

    def test_linear_algebra_failure_is_numerical(self):
        def runner(config, rng, sink, threads, checks):
            sink.table('partial', pd.DataFrame({'x': [1.0, 2.0]}))
            raise np.linalg.LinAlgError('Eigenvalues did not converge')

        with mock.patch.dict(RUNNERS, {ExperimentRun.Kind.ADIABATIC: runner}):
            with self.assertRaises(CommandError) as context:
                self.run_command('adiabatic', 'linalg')
        self.assertEqual(context.exception.returncode, 3)
        manifest = json.loads((self.tmp / 'linalg' / 'manifest.json').read_text())
        self.assertEqual(manifest['status'], ExperimentRun.Status.INCOMPLETE)
        self.assertEqual([output['rows'] for output in manifest['outputs']], [2])

    def test_unexpected_failure_still_writes_manifest(self):
        def runner(config, rng, sink, threads, checks):
            sink.table('partial', pd.DataFrame({'x': [1.0]}))
            raise RuntimeError('solver blew up')

        with mock.patch.dict(RUNNERS, {ExperimentRun.Kind.ADIABATIC: runner}):
            with self.assertRaises(RuntimeError):
                self.run_command('adiabatic', 'crash')
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.INCOMPLETE)
        self.assertEqual(run.error, 'solver blew up')
        manifest = json.loads((self.tmp / 'crash' / 'manifest.json').read_text())
        self.assertEqual(manifest['outputs'][0]['path'], 'partial.csv')

    def test_failed_check(self):
        config = self.write_config('strict.yaml', FAILING_CHECK_YAML)
        with self.assertRaises(CommandError) as context:
            self.run_command('adiabatic', 'strict', '--config', config, '--check')
        self.assertEqual(context.exception.returncode, 4)
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.CHECK_FAILED)

    def test_failed_check_without_flag(self):
        config = self.write_config('strict.yaml', FAILING_CHECK_YAML)
        manifest, _ = self.run_command('adiabatic', 'strict', '--config', config)
        self.assertEqual(manifest['checks'], {})
        self.assertEqual(manifest['status'], ExperimentRun.Status.COMPLETE)


@tag('slow')
class PresetAcceptanceTests(CommandTestCase):
    def assertPresetPasses(self, command, preset):
        manifest, _ = self.run_command(command, preset, '--config', preset, '--check')
        self.assertTrue(manifest['checks'])
        self.assertTrue(manifest['checks_passed'], manifest['checks'])

    def test_two_spin_fine(self):
        self.assertPresetPasses('adiabatic', 'two_spin_fine')

    def test_single_qubit_scan(self):
        self.assertPresetPasses('rodeo_scan', 'single_qubit_scan')

    def test_hellmann_feynman(self):
        self.assertPresetPasses('hellmann_feynman', 'hellmann_feynman')

    def test_free_evolution_pulse(self):
        self.assertPresetPasses('pulse', 'pulse_free_evolution')

    def test_heisenberg_prepare(self):
        self.assertPresetPasses('rodeo_prepare', 'heisenberg_prepare')
