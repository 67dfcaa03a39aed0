"""
Plumbing shared by the experiment commands: reading and validating configs, building
Hamiltonians and states from their specs, and writing tables, records and manifests.
"""

import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import strictyaml
from strictyaml.ruamel.error import YAMLError

from .adiabatic import confusion_from_rates, prepare, two_spin_preparation
from .exceptions import ConfigError
from .hamiltonian import (
    HamiltonianFamily,
    HamiltonianModel,
    SINGLE_QUBIT_BASE,
    from_terms,
    heisenberg_chain,
    random_hermitian,
    single_qubit,
    staggered_field,
    two_spin_initial,
    two_spin_target,
    x_mixer,
)
from .numerics import RngStream
from .register import StateVector, init_basis
from .serializers import ExperimentConfigSerializer, RunManifestSerializer

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parent / 'presets'
FLOAT_FORMAT = '%.12g'


# ==========================================
# 1. CONFIGS
# ==========================================

def list_presets():
    return sorted(path.stem for path in PRESET_DIR.glob('*.yaml'))


def parse_config_text(text, label='<config>', json_format=False):
    """JSON, or YAML through strictyaml (flow style allowed); scalars stay strings until validated."""
    if json_format:
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f'{label}: invalid JSON: {exc}')
    try:
        return strictyaml.dirty_load(text, label=label, allow_flow_style=True).data
    except YAMLError as exc:
        raise ConfigError(f'{label}: invalid YAML: {exc}')


def load_config(reference):
    """Read a config from a file path, or from a shipped preset when no such file exists."""
    path = Path(reference)
    if not path.is_file():
        preset = PRESET_DIR / f'{reference}.yaml'
        if not preset.is_file():
            raise ConfigError(f"No config file or preset named {reference!r}. Presets: {', '.join(list_presets())}")
        path = preset
    raw = parse_config_text(path.read_text(), label=str(path), json_format=path.suffix == '.json')
    if not isinstance(raw, dict):
        raise ConfigError(f'{path}: the config must be a mapping at the top level')
    return raw


def validate_config(raw, kind=None, seed=None):
    """Validate a raw config dict; `kind` fills in a missing kind, `seed` overrides the file's seed."""
    data = dict(raw)
    if kind is not None:
        data.setdefault('kind', kind)
        if data['kind'] != kind:
            raise ConfigError(f"This config describes a {data['kind']!r} run, not {kind!r}",
                              errors={'kind': [f'Expected {kind!r}.']})
    if seed is not None:
        data['seed'] = seed

    serializer = ExperimentConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError('Invalid experiment config', errors=serializer.errors)
    return _plain(serializer.validated_data)


def _plain(value):
    """Validated data as plain dicts and lists, ready for JSON."""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def canonical_json(config):
    return json.dumps(config, sort_keys=True, separators=(',', ':'), ensure_ascii=True)


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


# ==========================================
# 2. HAMILTONIANS AND STATES
# ==========================================

def build_hamiltonian(spec, rng: RngStream):
    """A HamiltonianModel, or a HamiltonianFamily for {family: ...} specs."""
    if 'family' in spec:
        family = spec['family']
        return HamiltonianFamily(
            build_hamiltonian(family['base'], rng.spawn(0)),
            build_hamiltonian(family['perturbation'], rng.spawn(1)),
        )
    if 'terms' in spec:
        return from_terms([(t['pauli'], t['coefficient']) for t in spec['terms']], name='terms')
    if 'matrix' in spec:
        matrix = np.array([[complex(re, im) for re, im in row] for row in spec['matrix']])
        try:
            return HamiltonianModel(spec['n_qubits'], matrix=matrix, name='matrix')
        except ValueError as exc:
            raise ConfigError(f'Hamiltonian matrix rejected: {exc}')
    return _named_hamiltonian(spec['name'], spec['n_qubits'], spec.get('params', {}), rng)


def _named_hamiltonian(name, n_qubits, params, rng):
    if name == 'two_spin_initial':
        return two_spin_initial()
    if name == 'two_spin_target':
        return two_spin_target()
    if name == 'heisenberg':
        return heisenberg_chain(n_qubits, params.get('coupling', 1.0), params.get('magnetic_field', 0.0),
                                periodic=params.get('periodic', True))
    if name == 'staggered_field':
        return staggered_field(n_qubits)
    if name == 'single_qubit':
        return single_qubit(*params.get('coefficients', SINGLE_QUBIT_BASE))
    if name == 'x_mixer':
        return x_mixer(n_qubits)
    if name == 'random_hermitian':
        stream = RngStream(params['seed']) if 'seed' in params else rng
        return random_hermitian(n_qubits, stream)
    raise ConfigError(f'Unknown Hamiltonian {name!r}')


def build_state(spec, n_qubits, h_initial: HamiltonianModel | None = None) -> StateVector:
    """'ground' (of `h_initial`), 'two_spin' (the |-->|--> preparation) or a bitstring."""
    if spec == 'ground':
        if h_initial is None:
            raise ConfigError("'ground' needs an initial Hamiltonian")
        return StateVector.from_amplitudes(h_initial.spectrum.eigenvectors[:, 0])
    if spec == 'two_spin':
        if n_qubits != 2:
            raise ConfigError('The two_spin preparation needs two qubits')
        return prepare(2, two_spin_preparation())
    if len(spec) != n_qubits:
        raise ConfigError(f'Bitstring {spec!r} does not fit {n_qubits} qubits')
    return init_basis(n_qubits, spec)


def build_confusion(readout):
    if not readout:
        return None
    return confusion_from_rates(list(zip(readout['p01'], readout['p10'])))


# ==========================================
# 3. OUTPUT FILES
# ==========================================

class OutputSink:
    """
    Writes outputs as soon as they exist, so a run that fails halfway still lists everything
    it produced.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.paths = []

    def _claim(self, name):
        path = self.directory / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if path not in self.paths:
            self.paths.append(path)
        return path

    def table(self, name, frame):
        path = self._claim(f'{name}.csv')
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        logger.debug('wrote %s (%d rows)', path, len(frame))
        return path

    def record(self, name, payload):
        path = self._claim(f'{name}.json')
        write_json(path, payload)
        return path


def write_json(path, payload):
    with open(path, 'w') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write('\n')


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f'{type(value).__name__} is not JSON serializable')


def write_manifest(run, directory):
    path = Path(directory) / 'manifest.json'
    write_json(path, RunManifestSerializer(run).data)
    return path
