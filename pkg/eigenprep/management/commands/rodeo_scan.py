from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Rodeo energy scans and sequential peak refinement.'
    kind = 'rodeo_scan'
    default_preset = 'single_qubit_scan'
