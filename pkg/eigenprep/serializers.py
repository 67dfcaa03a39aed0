import math
import numbers

from rest_framework import serializers

from .models import ExperimentRun, RunOutput
from .pulse import DEVICE_PRESETS, DISSIPATORS

U64_MAX = 2**64 - 1

HAMILTONIAN_NAMES = [
    'two_spin_initial',
    'two_spin_target',
    'heisenberg',
    'staggered_field',
    'single_qubit',
    'x_mixer',
    'random_hermitian',
]
# named models whose register size is fixed
FIXED_SIZE = {'two_spin_initial': 2, 'two_spin_target': 2, 'single_qubit': 1}


# ==========================================
# 1. HAMILTONIANS AND STATES
# ==========================================

class PauliTermSerializer(serializers.Serializer):
    pauli = serializers.RegexField(r'^[IXYZ]+$')
    coefficient = serializers.FloatField()


class HamiltonianParamsSerializer(serializers.Serializer):
    coupling = serializers.FloatField(default=1.0)
    magnetic_field = serializers.FloatField(default=0.0)
    periodic = serializers.BooleanField(default=True)
    coefficients = serializers.ListField(
        child=serializers.FloatField(), min_length=4, max_length=4, required=False
    )
    seed = serializers.IntegerField(min_value=0, max_value=U64_MAX, required=False)


class HamiltonianSpecSerializer(serializers.Serializer):
    """
    Exactly one of: a named model, a list of Pauli terms, a dense matrix of [re, im] pairs, or
    a family {base, perturbation} of two further specs.
    """
    name = serializers.ChoiceField(choices=HAMILTONIAN_NAMES, required=False)
    n_qubits = serializers.IntegerField(min_value=1, max_value=14, required=False)
    params = HamiltonianParamsSerializer(required=False)
    terms = PauliTermSerializer(many=True, required=False)
    matrix = serializers.ListField(
        child=serializers.ListField(
            child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2)
        ),
        required=False,
    )
    family = serializers.DictField(required=False)

    def validate_family(self, value):
        validated = {}
        for part in ('base', 'perturbation'):
            if part not in value:
                raise serializers.ValidationError(f"A family needs a '{part}' Hamiltonian.")
            member = HamiltonianSpecSerializer(data=value[part])
            if not member.is_valid():
                raise serializers.ValidationError({part: member.errors})
            if 'family' in member.validated_data:
                raise serializers.ValidationError({part: 'Families cannot be nested.'})
            validated[part] = member.validated_data
        return validated

    def validate(self, attrs):
        sources = [key for key in ('name', 'terms', 'matrix', 'family') if key in attrs]
        if len(sources) != 1:
            raise serializers.ValidationError(
                f"Give exactly one of name, terms, matrix or family (got {sources or 'none'})."
            )

        if 'name' in attrs:
            name = attrs['name']
            if name in FIXED_SIZE:
                n = attrs.setdefault('n_qubits', FIXED_SIZE[name])
                if n != FIXED_SIZE[name]:
                    raise serializers.ValidationError({'n_qubits': f'{name} acts on {FIXED_SIZE[name]} qubit(s).'})
            elif 'n_qubits' not in attrs:
                raise serializers.ValidationError({'n_qubits': f'{name} needs n_qubits.'})
            if name == 'heisenberg' and attrs['n_qubits'] < 2:
                raise serializers.ValidationError({'n_qubits': 'A Heisenberg chain needs at least 2 sites.'})
            attrs.setdefault('params', HamiltonianParamsSerializer().run_validation({}))

        if 'terms' in attrs:
            lengths = {len(term['pauli']) for term in attrs['terms']}
            if len(lengths) != 1:
                raise serializers.ValidationError({'terms': 'All Pauli strings must have the same length.'})
            attrs['n_qubits'] = lengths.pop()

        if 'matrix' in attrs:
            rows = attrs['matrix']
            dim = len(rows)
            if dim < 2 or dim & (dim - 1) or any(len(row) != dim for row in rows):
                raise serializers.ValidationError({'matrix': 'The matrix must be square with a power-of-two size.'})
            attrs['n_qubits'] = dim.bit_length() - 1

        if 'family' in attrs:
            base, perturbation = attrs['family']['base'], attrs['family']['perturbation']
            if base.get('n_qubits') != perturbation.get('n_qubits'):
                raise serializers.ValidationError({'family': 'Base and perturbation act on different registers.'})
            attrs['n_qubits'] = base.get('n_qubits')
        return attrs


def validate_initial_state(value):
    if value == 'ground' or value == 'two_spin':
        return value
    if not value or set(value) - {'0', '1'}:
        raise serializers.ValidationError("Use 'ground', 'two_spin' or a computational-basis bitstring.")
    return value


# ==========================================
# 2. METHOD BLOCKS
# ==========================================

class ScheduleSerializer(serializers.Serializer):
    total_time = serializers.FloatField()
    steps = serializers.IntegerField(min_value=1)
    ode_check = serializers.BooleanField(default=False)

    def validate_total_time(self, value):
        if not value > 0:
            raise serializers.ValidationError('Total time must be positive.')
        return value


class UncomputeSerializer(serializers.Serializer):
    shots = serializers.IntegerField(min_value=1, default=8192)
    preparation = serializers.CharField(default='two_spin', validators=[validate_initial_state])


class ReadoutSerializer(serializers.Serializer):
    """Per-qubit p01 = P(read 0 | prepared 1) and p10 = P(read 1 | prepared 0)."""
    p01 = serializers.ListField(child=serializers.FloatField(min_value=0.0, max_value=1.0), min_length=1)
    p10 = serializers.ListField(child=serializers.FloatField(min_value=0.0, max_value=1.0), min_length=1)

    def validate(self, attrs):
        if len(attrs['p01']) != len(attrs['p10']):
            raise serializers.ValidationError('p01 and p10 need one entry per qubit.')
        return attrs


class ScanSerializer(serializers.Serializer):
    e_min = serializers.FloatField()
    e_max = serializers.FloatField()
    points = serializers.IntegerField(min_value=1)
    sigma = serializers.FloatField(min_value=0.0)
    cycles = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1)
    n_sets = serializers.IntegerField(min_value=1, default=20)
    shots_per_set = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)

    def validate(self, attrs):
        if attrs['points'] > 1 and attrs['e_max'] <= attrs['e_min']:
            raise serializers.ValidationError({'e_max': 'e_max must exceed e_min.'})
        return attrs


class SequentialScanSerializer(serializers.Serializer):
    e_min = serializers.FloatField()
    e_max = serializers.FloatField()
    passes = serializers.IntegerField(min_value=1, default=3)
    sigma0 = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    sigma_factor = serializers.FloatField(default=3.5)
    points_per_pass = serializers.IntegerField(min_value=5, default=41)
    cycles = serializers.IntegerField(min_value=1, default=3)
    n_sets = serializers.IntegerField(min_value=1, default=400)

    def validate_sigma_factor(self, value):
        if value <= 1:
            raise serializers.ValidationError('The sigma factor must exceed 1.')
        return value

    def validate(self, attrs):
        if attrs['e_max'] <= attrs['e_min']:
            raise serializers.ValidationError({'e_max': 'e_max must exceed e_min.'})
        return attrs


class SampledRodeoSerializer(serializers.Serializer):
    energy = serializers.FloatField()
    sigma = serializers.FloatField(min_value=0.0)
    cycles = serializers.IntegerField(min_value=1)
    shots = serializers.IntegerField(min_value=1, default=10000)


class UniformScanSerializer(serializers.Serializer):
    t_max = serializers.FloatField()
    cycles = serializers.IntegerField(min_value=1, default=3)
    n_sets = serializers.IntegerField(min_value=1, default=200)

    def validate_t_max(self, value):
        if value <= 0:
            raise serializers.ValidationError('t_max must be positive.')
        return value


class PrepareSerializer(serializers.Serializer):
    labels = serializers.ListField(child=serializers.FloatField(), min_length=1)
    cycles = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    sigma = serializers.FloatField(min_value=0.0)
    n_sets = serializers.IntegerField(min_value=1, default=50)


class ResidualSerializer(serializers.Serializer):
    label = serializers.FloatField()
    cycles = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1)
    n_sets = serializers.IntegerField(min_value=1, default=20)
    sigma = serializers.FloatField(min_value=0.0, default=1.0)
    adiabatic_initial = HamiltonianSpecSerializer(required=False)


class ObservablesSerializer(serializers.Serializer):
    sigma = serializers.FloatField(min_value=0.0)
    cycles = serializers.IntegerField(min_value=1)
    trials = serializers.IntegerField(min_value=1, default=10)
    shots = serializers.IntegerField(min_value=1, default=5000)


class HellmannFeynmanSerializer(SequentialScanSerializer):
    levels = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1, default=lambda: [0, 1])
    phi = serializers.ListField(child=serializers.FloatField(), min_length=3)
    observables = ObservablesSerializer(required=False)

    def validate_phi(self, value):
        ordered = sorted(value)
        if any(not math.isclose(a, -b, abs_tol=1e-12) for a, b in zip(ordered, reversed(ordered))):
            raise serializers.ValidationError('The phi grid must bracket 0 symmetrically.')
        return ordered


class EnergyGridSerializer(serializers.Serializer):
    e_min = serializers.FloatField()
    e_max = serializers.FloatField()
    points = serializers.IntegerField(min_value=1)


class LandscapeSerializer(serializers.Serializer):
    gamma_range = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2,
                                        default=[0.0, math.pi])
    beta_range = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2,
                                       default=[0.0, math.pi])
    resolution = serializers.IntegerField(min_value=2, default=41)


class VraSerializer(serializers.Serializer):
    MODES = ['sweep', 'compare', 'two_stage', 'landscape']

    mode = serializers.ChoiceField(choices=MODES)
    depth = serializers.IntegerField(min_value=1, default=1)
    sigma = serializers.FloatField(min_value=0.0)
    cycles = serializers.IntegerField(min_value=1)
    # null targets the ground-state energy of the objective
    energy = serializers.FloatField(required=False, allow_null=True, default=None)
    restarts = serializers.IntegerField(min_value=1, default=10)
    max_iter = serializers.IntegerField(min_value=0, default=100)
    stage1_iters = serializers.IntegerField(min_value=0, default=50)
    stage2_iters = serializers.IntegerField(min_value=0, default=50)
    n_sets = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    grid = EnergyGridSerializer(required=False)
    landscape = LandscapeSerializer(required=False)
    mixer = HamiltonianSpecSerializer(required=False)

    def validate(self, attrs):
        if attrs['mode'] == 'sweep' and 'grid' not in attrs:
            raise serializers.ValidationError({'grid': 'A sweep needs an energy grid.'})
        if attrs['mode'] == 'landscape':
            attrs.setdefault('landscape', LandscapeSerializer().run_validation({}))
        return attrs


# ==========================================
# 3. DEVICE AND PULSES
# ==========================================

class DeviceSerializer(serializers.Serializer):
    preset = serializers.ChoiceField(choices=sorted(DEVICE_PRESETS), required=False)
    anharmonicity_mhz = serializers.FloatField(default=200.0)
    coupling_mhz = serializers.FloatField(default=3.0)
    t1_ns = serializers.ListField(child=serializers.FloatField(), required=False)
    t2_ns = serializers.ListField(child=serializers.FloatField(), required=False)
    levels = serializers.IntegerField(min_value=2, max_value=5, default=3)
    n_transmons = serializers.ChoiceField(choices=[1, 2], default=2)

    def validate_anharmonicity_mhz(self, value):
        if value <= 0:
            raise serializers.ValidationError('Anharmonicity must be positive (MHz).')
        return value

    def validate_coupling_mhz(self, value):
        if value < 0:
            raise serializers.ValidationError('Coupling must not be negative (MHz).')
        return value

    def validate(self, attrs):
        for key in ('t1_ns', 't2_ns'):
            values = attrs.get(key)
            if values is None:
                continue
            if len(values) != attrs['n_transmons']:
                raise serializers.ValidationError({key: 'Give one value per transmon.'})
            if any(v <= 0 for v in values):
                raise serializers.ValidationError({key: 'Coherence times must be positive (ns).'})
        return attrs


class GrapeSerializer(serializers.Serializer):
    eps_cut_mhz = serializers.FloatField(default=30.0)
    harshness = serializers.IntegerField(min_value=1, default=3)
    penalty = serializers.FloatField(min_value=0.0, default=1e-3)
    max_iter = serializers.IntegerField(min_value=1, default=500)
    target_infidelity = serializers.FloatField(min_value=0.0, default=1e-4)
    gradient = serializers.ChoiceField(choices=['analytic', 'finite_difference'], default='analytic')
    subspace = serializers.ChoiceField(choices=['full', 'computational'], default='full')
    rate = serializers.FloatField(default=8.0)
    initial_scale = serializers.FloatField(min_value=0.0, default=0.05)

    def validate_eps_cut_mhz(self, value):
        if value <= 0:
            raise serializers.ValidationError('eps_cut must be positive (MHz).')
        return value

    def validate_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError('The sample rate must be positive (samples per ns).')
        return value


class GateLadderSerializer(serializers.Serializer):
    TARGETS = ['free_evolution', 'x_pi', 'adiabatic_step']

    target = serializers.ChoiceField(choices=TARGETS)
    durations_ns = serializers.ListField(child=serializers.FloatField(), min_length=1)
    # propagator index used by adiabatic_step
    step = serializers.IntegerField(min_value=1, default=1)

    def validate_durations_ns(self, value):
        if any(v <= 0 for v in value):
            raise serializers.ValidationError('Pulse durations must be positive (ns).')
        return value


class EmulationSerializer(serializers.Serializer):
    duration_ns = serializers.FloatField()
    dissipator = serializers.ChoiceField(choices=list(DISSIPATORS), default='renormalized')
    warm_start = serializers.BooleanField(default=True)
    pulse_files = serializers.BooleanField(default=True)

    def validate_duration_ns(self, value):
        if value <= 0:
            raise serializers.ValidationError('Pulse duration must be positive (ns).')
        return value


# ==========================================
# 4. EXPERIMENT CONFIG
# ==========================================

def _numeric_tree(value):
    if isinstance(value, bool):
        return float(value)
    if isinstance(value, numbers.Number):
        return float(value)
    if isinstance(value, str):
        return float(value)
    if isinstance(value, (list, tuple)):
        return [_numeric_tree(v) for v in value]
    raise TypeError(type(value).__name__)


CHECK_KEYS = {
    ExperimentRun.Kind.ADIABATIC: {
        'final_fidelity_min', 'final_energy', 'final_energy_tol', 'ode_deviation_max',
    },
    ExperimentRun.Kind.RODEO_SCAN: {
        'peak_energies', 'peak_rel_tol', 'background_sigmas', 'formula_tol', 'sampled_stderrs',
    },
    ExperimentRun.Kind.RODEO_PREPARE: {
        'overlap_min', 'reference', 'reference_tol',
    },
    ExperimentRun.Kind.HELLMANN_FEYNMAN: {
        'slopes', 'slope_rel_tol', 'energies', 'energy_rel_tol',
    },
    ExperimentRun.Kind.VRA: {
        'rule_fraction_min', 'success_min', 'vra_beats_energy', 'improvement_min',
    },
    ExperimentRun.Kind.PULSE: {
        'objective', 'objective_tol', 'rms_max', 'rms_monotone', 'gate_infidelity_max', 'fidelity_min',
    },
}

REQUIRED_BLOCKS = {
    ExperimentRun.Kind.ADIABATIC: ('initial_hamiltonian', 'hamiltonian', 'schedule'),
    ExperimentRun.Kind.RODEO_SCAN: ('hamiltonian',),
    ExperimentRun.Kind.RODEO_PREPARE: ('hamiltonian', 'prepare'),
    ExperimentRun.Kind.HELLMANN_FEYNMAN: ('hamiltonian', 'hellmann_feynman'),
    ExperimentRun.Kind.VRA: ('hamiltonian', 'vra'),
    ExperimentRun.Kind.PULSE: ('device', 'grape'),
}


class ExperimentConfigSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=ExperimentRun.Kind.choices)
    seed = serializers.IntegerField(min_value=0, max_value=U64_MAX)
    description = serializers.CharField(required=False, allow_blank=True, default='')
    initial_state = serializers.CharField(required=False, validators=[validate_initial_state])

    initial_hamiltonian = HamiltonianSpecSerializer(required=False)
    hamiltonian = HamiltonianSpecSerializer(required=False)

    schedule = ScheduleSerializer(required=False)
    uncompute = UncomputeSerializer(required=False)
    readout = ReadoutSerializer(required=False)

    scan = ScanSerializer(required=False)
    sequential = SequentialScanSerializer(required=False)
    sampled = SampledRodeoSerializer(required=False)
    uniform = UniformScanSerializer(required=False)
    prepare = PrepareSerializer(required=False)
    residual = ResidualSerializer(required=False)
    hellmann_feynman = HellmannFeynmanSerializer(required=False)
    vra = VraSerializer(required=False)

    device = DeviceSerializer(required=False)
    grape = GrapeSerializer(required=False)
    gates = GateLadderSerializer(required=False)
    emulation = EmulationSerializer(required=False)

    checks = serializers.DictField(required=False, default=dict)

    def validate_checks(self, value):
        cleaned = {}
        for key, item in value.items():
            try:
                cleaned[key] = _numeric_tree(item)
            except (TypeError, ValueError):
                raise serializers.ValidationError({key: 'Check thresholds must be numbers or lists of numbers.'})
        return cleaned

    def validate(self, attrs):
        kind = attrs['kind']
        missing = [block for block in REQUIRED_BLOCKS[kind] if block not in attrs]
        if missing:
            raise serializers.ValidationError({block: f'Required for {kind} experiments.' for block in missing})

        unknown = set(attrs['checks']) - CHECK_KEYS[kind]
        if unknown:
            raise serializers.ValidationError({'checks': f'Unknown checks for {kind}: {sorted(unknown)}.'})

        if kind == ExperimentRun.Kind.RODEO_SCAN and not any(k in attrs for k in ('scan', 'sequential')):
            raise serializers.ValidationError({'scan': 'A rodeo scan needs a scan or a sequential block.'})
        if kind == ExperimentRun.Kind.PULSE and not any(k in attrs for k in ('gates', 'emulation')):
            raise serializers.ValidationError({'gates': 'A pulse run needs a gates or an emulation block.'})

        if kind == ExperimentRun.Kind.ADIABATIC:
            if attrs['initial_hamiltonian']['n_qubits'] != attrs['hamiltonian']['n_qubits']:
                raise serializers.ValidationError({'hamiltonian': 'Initial and target Hamiltonians differ in size.'})
        if kind == ExperimentRun.Kind.HELLMANN_FEYNMAN and 'family' not in attrs['hamiltonian']:
            raise serializers.ValidationError({'hamiltonian': 'Hellmann-Feynman runs need a family.'})
        if kind in (ExperimentRun.Kind.RODEO_SCAN, ExperimentRun.Kind.RODEO_PREPARE) and 'initial_state' not in attrs:
            raise serializers.ValidationError({'initial_state': 'Rodeo runs start from a bitstring.'})
        if kind == ExperimentRun.Kind.PULSE and 'emulation' in attrs:
            if 'schedule' not in attrs:
                raise serializers.ValidationError({'schedule': 'Pulse emulation needs the adiabatic schedule.'})
            if attrs['device']['n_transmons'] != 2:
                raise serializers.ValidationError({'device': 'Adiabatic emulation runs on two transmons.'})

        state = attrs.get('initial_state')
        n_qubits = (attrs.get('hamiltonian') or {}).get('n_qubits')
        if state and set(state) <= {'0', '1'} and n_qubits and len(state) != n_qubits:
            raise serializers.ValidationError(
                {'initial_state': f'Bitstring has {len(state)} bits for {n_qubits} qubits.'}
            )
        return attrs


# ==========================================
# 5. RUN MANIFEST
# ==========================================

class RunOutputSerializer(serializers.ModelSerializer):
    class Meta:
        model = RunOutput
        fields = ['path', 'sha256', 'rows']


class RunManifestSerializer(serializers.ModelSerializer):
    outputs = RunOutputSerializer(many=True, read_only=True)
    checks_passed = serializers.SerializerMethodField()

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'kind', 'status', 'config_hash', 'seed', 'rng_algorithm', 'tool_version',
            'threads', 'wall_time', 'checks', 'checks_passed', 'metadata', 'error', 'created_at', 'config', 'outputs',
        ]

    def get_checks_passed(self, obj):
        if not obj.checks:
            return None
        return obj.checks_passed
