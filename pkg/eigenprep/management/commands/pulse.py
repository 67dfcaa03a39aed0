from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'GRAPE pulse optimization and open-system emulation on coupled transmons.'
    kind = 'pulse'
    default_preset = 'pulse_free_evolution'
