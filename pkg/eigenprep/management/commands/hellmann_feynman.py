from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Eigenvalue slopes dE/dphi from rodeo scans of a Hamiltonian family.'
    kind = 'hellmann_feynman'
    default_preset = 'hellmann_feynman'
