import hashlib
import tempfile
from pathlib import Path

from django.test import TestCase

from eigenprep.models import ExperimentRun, count_rows, file_sha256
from eigenprep.serializers import RunManifestSerializer


class ExperimentRunTests(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.run = ExperimentRun.objects.create(
            kind=ExperimentRun.Kind.ADIABATIC, config={'seed': 1}, config_hash='0' * 64, seed=str(2**64 - 1),
            rng_algorithm='PCG64', tool_version='test', output_dir=str(self.tmp),
        )

    def tearDown(self):
        self._tmp.cleanup()

    def test_record_outputs(self):
        table = self.tmp / 'trajectory.csv'
        table.write_text('k,fidelity\n0,1\n1,0.99\n')
        record = self.tmp / 'device.json'
        record.write_text('{}\n')
        self.run.record_outputs([table, record], wall_time=1.5)

        outputs = {o.path: o for o in self.run.outputs.all()}
        self.assertEqual(outputs['trajectory.csv'].rows, 2)
        self.assertEqual(outputs['device.json'].rows, 0)
        self.assertEqual(outputs['trajectory.csv'].sha256, hashlib.sha256(table.read_bytes()).hexdigest())
        self.assertEqual(self.run.status, ExperimentRun.Status.COMPLETE)
        self.assertEqual(self.run.wall_time, 1.5)

    def test_rerecording_updates_in_place(self):
        table = self.tmp / 'scan.csv'
        table.write_text('energy\n1\n')
        self.run.record_outputs([table])
        table.write_text('energy\n1\n2\n')
        self.run.record_outputs([table])
        self.assertEqual(self.run.outputs.count(), 1)
        self.assertEqual(self.run.outputs.get().rows, 2)

    def test_status(self):
        self.run.checks = {'final_energy': {'value': -2.3, 'expected': -2.328, 'passed': False}}
        self.run.record_outputs([])
        self.assertEqual(self.run.status, ExperimentRun.Status.CHECK_FAILED)
        self.assertFalse(self.run.checks_passed)
        self.run.record_outputs([], failed=True)
        self.assertEqual(self.run.status, ExperimentRun.Status.INCOMPLETE)

    def test_manifest(self):
        data = RunManifestSerializer(self.run).data
        self.assertEqual(data['seed'], '18446744073709551615')
        self.assertIsNone(data['checks_passed'])
        self.assertEqual(data['outputs'], [])

    def test_file_helpers(self):
        path = self.tmp / 'empty.csv'
        path.write_text('')
        self.assertEqual(count_rows(path), 0)
        self.assertEqual(file_sha256(path), hashlib.sha256(b'').hexdigest())
