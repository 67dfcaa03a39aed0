import hashlib
from pathlib import Path

from django.db import models


# ==========================================
# 1. RUN MANIFESTS
# ==========================================

class ExperimentRun(models.Model):
    """
    One invocation of an experiment command: the validated config, where its randomness came
    from, and which files it wrote.
    """

    class Kind(models.TextChoices):
        ADIABATIC = 'adiabatic', 'Adiabatic evolution'
        RODEO_SCAN = 'rodeo_scan', 'Rodeo energy scan'
        RODEO_PREPARE = 'rodeo_prepare', 'Rodeo eigenstate preparation'
        HELLMANN_FEYNMAN = 'hellmann_feynman', 'Hellmann-Feynman extraction'
        VRA = 'vra', 'Variational rodeo'
        PULSE = 'pulse', 'Pulse emulation'

    class Status(models.TextChoices):
        RUNNING = 'running', 'Running'
        COMPLETE = 'complete', 'Complete'
        INCOMPLETE = 'incomplete', 'Incomplete'
        CHECK_FAILED = 'check_failed', 'Check failed'

    kind = models.CharField(max_length=32, choices=Kind.choices)
    status = models.CharField(max_length=16, choices=Status.choices, default=Status.RUNNING)

    config = models.JSONField(default=dict)
    config_hash = models.CharField(max_length=64)
    # u64 seeds do not fit a signed BigIntegerField
    seed = models.CharField(max_length=20)
    rng_algorithm = models.CharField(max_length=64)
    tool_version = models.CharField(max_length=32)
    threads = models.PositiveIntegerField(default=1)
    output_dir = models.CharField(max_length=500)

    wall_time = models.FloatField(default=0.0, blank=True)
    checks = models.JSONField(default=dict, blank=True)
    metadata = models.JSONField(default=dict, blank=True)
    error = models.TextField(blank=True, default='')

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f'{self.kind} #{self.pk} ({self.status})'

    def record_outputs(self, paths, wall_time=None, failed=False):
        """
        Checksum every written file, refresh the related outputs and settle the status.
        """
        for path in paths:
            path = Path(path)
            RunOutput.objects.update_or_create(
                run=self,
                path=path.name,
                defaults={
                    'sha256': file_sha256(path),
                    'rows': count_rows(path),
                },
            )

        if wall_time is not None:
            self.wall_time = wall_time
        if failed:
            self.status = self.Status.INCOMPLETE
        elif self.checks and not all(c.get('passed', True) for c in self.checks.values()):
            self.status = self.Status.CHECK_FAILED
        else:
            self.status = self.Status.COMPLETE

        self.save()

    @property
    def checks_passed(self):
        return all(c.get('passed', True) for c in self.checks.values())


class RunOutput(models.Model):
    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name='outputs')
    path = models.CharField(max_length=255)
    sha256 = models.CharField(max_length=64)
    rows = models.IntegerField(default=0, blank=True)

    class Meta:
        unique_together = ['run', 'path']
        ordering = ['path']

    def __str__(self):
        return f'{self.path} ({self.sha256[:12]})'


# ==========================================
# 2. FILE HELPERS
# ==========================================

def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


def count_rows(path):
    """Data rows of a CSV table (header excluded); 0 for anything else."""
    path = Path(path)
    if path.suffix != '.csv':
        return 0
    with open(path, 'rb') as handle:
        return max(sum(1 for _ in handle) - 1, 0)
