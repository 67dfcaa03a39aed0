from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Rodeo eigenstate preparation: post-selected overlaps and residual against propagation time.'
    kind = 'rodeo_prepare'
    default_preset = 'heisenberg_prepare'
