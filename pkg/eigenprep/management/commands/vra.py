from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Variational rodeo: QAOA sweeps, cost comparisons, two-stage runs and landscapes.'
    kind = 'vra'
    default_preset = 'vra_compare'
