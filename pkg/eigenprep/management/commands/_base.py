import io
import logging
import time
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rich.console import Console
from rich.table import Table

from eigenprep import __version__
from eigenprep.exceptions import ConfigError, NumericalError
from eigenprep.experiments import RUNNERS
from eigenprep.helpers import OutputSink, config_hash, load_config, validate_config, write_manifest
from eigenprep.models import ExperimentRun
from eigenprep.numerics import RNG_ALGORITHM, RngStream

logger = logging.getLogger('eigenprep.commands')

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4


def _u64(value):
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise ValueError(value)
    return seed


class ExperimentCommand(BaseCommand):
    """
    Shared flow of every experiment command: load and validate the config, open a run record,
    execute the runner, checksum the outputs and write manifest.json next to them.
    """

    kind = None
    default_preset = None

    def add_arguments(self, parser):
        parser.add_argument('--config', default=self.default_preset,
                            help=f'Config file path or preset name (default: {self.default_preset}).')
        parser.add_argument('--seed', type=_u64, default=None, help='Override the config seed (unsigned 64-bit).')
        parser.add_argument('--threads', type=int, default=None,
                            help='Worker threads for internal sweeps; results do not depend on it.')
        parser.add_argument('--out', default=None, help='Output directory (default: EIGENPREP_OUTPUT_DIR/<kind>-<run>).')
        parser.add_argument('--check', action='store_true', help="Assert the config's acceptance checks.")

    def handle(self, *args, **options):
        try:
            config = validate_config(load_config(options['config']), kind=self.kind, seed=options['seed'])
        except ConfigError as exc:
            self._report_config_error(exc)
            raise CommandError(str(exc), returncode=EXIT_CONFIG)

        threads = options['threads'] or settings.EIGENPREP_THREADS
        if threads < 1:
            raise CommandError('--threads must be >= 1', returncode=EXIT_CONFIG)

        run = ExperimentRun.objects.create(
            kind=self.kind,
            config=config,
            config_hash=config_hash(config),
            seed=str(config['seed']),
            rng_algorithm=RNG_ALGORITHM,
            tool_version=__version__,
            threads=threads,
        )
        out_dir = Path(options['out'] or Path(settings.EIGENPREP_OUTPUT_DIR) / f'{self.kind}-{run.pk}')
        run.output_dir = str(out_dir)
        run.save(update_fields=['output_dir'])
        sink = OutputSink(out_dir)
        logger.info('%s run %s: seed %s, %d thread(s), writing to %s', self.kind, run.pk, config['seed'], threads, out_dir)

        thresholds = config['checks'] if options['check'] else {}
        started = time.perf_counter()
        try:
            report = RUNNERS[self.kind](config, RngStream(config['seed']), sink, threads=threads, checks=thresholds)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            self._fail(run, sink, out_dir, started, exc)
            raise CommandError(f'Numerical failure: {exc}', returncode=EXIT_NUMERICAL)
        except (ConfigError, ValueError) as exc:
            # argument combinations the schema does not cross-check surface as ValueError
            self._fail(run, sink, out_dir, started, exc)
            self._report_config_error(exc)
            raise CommandError(str(exc), returncode=EXIT_CONFIG)
        except Exception as exc:
            self._fail(run, sink, out_dir, started, exc)
            raise

        run.checks = report.checks
        run.metadata = report.metadata
        run.record_outputs(sink.paths, wall_time=time.perf_counter() - started)
        write_manifest(run, out_dir)
        self._print_summary(run, report)

        if options['check'] and not run.checks_passed:
            failed = sorted(name for name, c in run.checks.items() if not c['passed'])
            raise CommandError(f"Checks failed: {', '.join(failed)}", returncode=EXIT_CHECK)

    def _fail(self, run, sink, out_dir, started, exc):
        logger.error('%s run %s failed: %s', self.kind, run.pk, exc)
        run.error = str(exc)
        run.record_outputs(sink.paths, wall_time=time.perf_counter() - started, failed=True)
        write_manifest(run, out_dir)

    def _report_config_error(self, exc):
        self.stderr.write(f'Config error: {exc}')
        for path, message in _flatten_errors(getattr(exc, 'errors', None)):
            self.stderr.write(f'  {path}: {message}')

    def _print_summary(self, run, report):
        console = Console(file=io.StringIO(), width=110, color_system=None)
        table = Table(title=f'{self.kind} run {run.pk}: {run.status}')
        table.add_column('quantity')
        table.add_column('value')
        for label, value in report.summary:
            table.add_row(label, str(value))
        for name, check in run.checks.items():
            table.add_row(f'check {name}', f"{'pass' if check['passed'] else 'FAIL'} ({check['value']})")
        table.add_row('outputs', str(run.output_dir))
        console.print(table)
        self.stdout.write(console.file.getvalue())


def _flatten_errors(errors, prefix=''):
    """DRF's nested error dict as (dotted path, message) pairs."""
    if isinstance(errors, dict):
        for key, value in errors.items():
            yield from _flatten_errors(value, f'{prefix}.{key}' if prefix else str(key))
    elif isinstance(errors, list):
        if errors and all(isinstance(e, str) for e in errors):
            yield prefix or 'config', '; '.join(errors)
        else:
            for index, item in enumerate(errors):
                yield from _flatten_errors(item, f'{prefix}[{index}]')
    elif errors:
        yield prefix or 'config', str(errors)
