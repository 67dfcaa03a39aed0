from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Discretized adiabatic evolution: fidelity and <H_T> along the trajectory.'
    kind = 'adiabatic'
    default_preset = 'two_spin'
