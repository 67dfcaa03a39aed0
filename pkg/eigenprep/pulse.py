"""
Pulse-level emulation of custom two-qubit gates on coupled transmons.

Frequencies are angular, in rad/ns; MHz inputs are converted once, in DeviceModel.from_mhz.
Basis states are |n_1 n_2> with transmon 1 the most significant digit (base `levels`).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .adiabatic import Schedule, Trajectory, instantaneous_eigenstates, short_time_propagators
from .conf import numeric_config
from .exceptions import NumericalError, TraceDriftError
from .hamiltonian import HamiltonianModel
from .numerics import RngStream, central_gradient, check_hermitian, check_unitary, kron, parallel_map
from .register import principal_state

logger = logging.getLogger(__name__)

DEFAULT_RATE = 8.0  # samples per ns
MAX_SUBSTEPS = 8
DISSIPATORS = ('renormalized', 'standard')


def mhz_to_angular(f_mhz: float) -> float:
    return 2.0 * math.pi * f_mhz * 1e-3


def angular_to_mhz(omega: float) -> float:
    return omega / (2.0 * math.pi * 1e-3)


# T1/T2 per qubit (0, 1) in ns, CNOT time and custom-gate time tau_U in ns.
DEVICE_PRESETS = {
    'ibmq_belem': {'t1': (102_600.0, 70_400.0), 't2': (127_300.0, 104_500.0), 'tau_cnot': 810.7, 'tau_u': 2500.0},
    'ibmq_casablanca': {'t1': (111_700.0, 130_100.0), 't2': (40_700.0, 102_200.0), 'tau_cnot': 760.9, 'tau_u': 2400.0},
    'ibmq_lima': {'t1': (101_600.0, 113_000.0), 't2': (180_000.0, 106_900.0), 'tau_cnot': 305.8, 'tau_u': 1000.0},
    'ibmq_manila': {'t1': (136_000.0, 244_200.0), 't2': (112_800.0, 46_700.0), 'tau_cnot': 277.3, 'tau_u': 900.0},
}


@dataclass(frozen=True)
class DeviceModel:
    anharmonicity: float  # rad/ns
    coupling: float  # rad/ns
    t1: tuple  # ns, per transmon; math.inf disables relaxation
    t2: tuple
    levels: int = 3
    n_transmons: int = 2
    name: str = ''

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError(f'a transmon needs at least 2 levels, got {self.levels}')
        if self.n_transmons not in (1, 2):
            raise ValueError(f'one or two transmons are supported, got {self.n_transmons}')
        if self.anharmonicity <= 0 or self.coupling < 0:
            raise ValueError('anharmonicity must be > 0 and coupling >= 0')
        for label, values in (('t1', self.t1), ('t2', self.t2)):
            if len(values) != self.n_transmons:
                raise ValueError(f'{label} needs one value per transmon')
            if any(v <= 0 for v in values):
                raise ValueError(f'{label} values must be > 0')
        object.__setattr__(self, 't1', tuple(float(v) for v in self.t1))
        object.__setattr__(self, 't2', tuple(float(v) for v in self.t2))

    @classmethod
    def from_mhz(cls, anharmonicity_mhz, coupling_mhz, t1=None, t2=None, levels=3, n_transmons=2, preset=None):
        """Build from MHz constants; `preset` supplies per-qubit T1/T2 from DEVICE_PRESETS."""
        if preset is not None:
            if preset not in DEVICE_PRESETS:
                raise ValueError(f'unknown device preset {preset!r}; available: {sorted(DEVICE_PRESETS)}')
            entry = DEVICE_PRESETS[preset]
            t1 = entry['t1'][:n_transmons] if t1 is None else t1
            t2 = entry['t2'][:n_transmons] if t2 is None else t2
        t1 = (math.inf,) * n_transmons if t1 is None else tuple(t1)
        t2 = (math.inf,) * n_transmons if t2 is None else tuple(t2)
        return cls(mhz_to_angular(anharmonicity_mhz), mhz_to_angular(coupling_mhz), t1, t2,
                   levels, n_transmons, preset or '')

    @property
    def anharmonicity_mhz(self) -> float:
        return angular_to_mhz(self.anharmonicity)

    @property
    def coupling_mhz(self) -> float:
        return angular_to_mhz(self.coupling)

    @property
    def dim(self) -> int:
        return self.levels**self.n_transmons

    @property
    def channel_names(self) -> tuple:
        return tuple(f'{quadrature}{i}' for i in range(1, self.n_transmons + 1) for quadrature in 'IQ')

    @cached_property
    def annihilators(self) -> tuple:
        a = np.diag(np.sqrt(np.arange(1, self.levels, dtype=float)), k=1).astype(complex)
        eye = np.eye(self.levels, dtype=complex)
        if self.n_transmons == 1:
            return (a,)
        return kron(a, eye), kron(eye, a)

    @cached_property
    def computational_indices(self) -> np.ndarray:
        """Indices of states with every transmon in level 0 or 1, in qubit order."""
        digits = np.array(np.meshgrid(*([[0, 1]] * self.n_transmons), indexing='ij')).reshape(self.n_transmons, -1)
        weights = self.levels ** np.arange(self.n_transmons - 1, -1, -1)
        return weights @ digits

    def to_record(self) -> dict:
        return {
            'name': self.name, 'levels': self.levels, 'n_transmons': self.n_transmons,
            'anharmonicity_mhz': self.anharmonicity_mhz, 'coupling_mhz': self.coupling_mhz,
            't1_ns': list(self.t1), 't2_ns': list(self.t2),
        }


def drift_hamiltonian(device: DeviceModel) -> np.ndarray:
    """-α Σ a†a a†a - g (a1† a2 + a2† a1)."""
    ops = device.annihilators
    h = np.zeros((device.dim, device.dim), dtype=complex)
    for a in ops:
        number = a.conj().T @ a
        h -= device.anharmonicity * (number @ number)
    if device.n_transmons == 2:
        a1, a2 = ops
        h -= device.coupling * (a1.conj().T @ a2 + a2.conj().T @ a1)
    return h


def control_operators(device: DeviceModel) -> np.ndarray:
    """(a† + a, -i(a† - a)) per transmon, ordered like `channel_names`."""
    operators = []
    for a in device.annihilators:
        operators.append(a.conj().T + a)
        operators.append(-1j * (a.conj().T - a))
    return np.array(operators)


def control_hamiltonian(device: DeviceModel, *amplitudes) -> np.ndarray:
    """Σ_i eI_i (a_i† + a_i) - i eQ_i (a_i† - a_i); amplitudes in channel order."""
    operators = control_operators(device)
    if len(amplitudes) != operators.shape[0]:
        raise ValueError(f'expected {operators.shape[0]} amplitudes, got {len(amplitudes)}')
    return np.tensordot(np.asarray(amplitudes, dtype=float), operators, axes=1)


@dataclass(frozen=True, eq=False)
class PulseSequence:
    duration: float  # ns
    channels: np.ndarray  # (n_channels, samples), rad/ns
    rate: float = DEFAULT_RATE

    def __post_init__(self):
        channels = np.atleast_2d(np.array(self.channels, dtype=float))
        expected = self.duration * self.rate
        if abs(expected - round(expected)) > 1e-9 or round(expected) < 1:
            raise ValueError(f'duration {self.duration} ns at {self.rate}/ns is not a whole number of samples')
        if channels.shape[1] != round(expected):
            raise ValueError(f'channels hold {channels.shape[1]} samples, expected {round(expected)}')
        if not np.all(np.isfinite(channels)):
            raise ValueError('pulse amplitudes must be finite')
        channels.setflags(write=False)
        object.__setattr__(self, 'channels', channels)

    @classmethod
    def zeros(cls, device: DeviceModel, duration, rate=DEFAULT_RATE):
        return cls(duration, np.zeros((len(device.channel_names), int(round(duration * rate)))), rate)

    @property
    def samples(self) -> int:
        return self.channels.shape[1]

    @property
    def dt(self) -> float:
        return 1.0 / self.rate

    def to_record(self, device: DeviceModel) -> dict:
        return {
            'tau_ns': self.duration, 'rate': self.rate, 'units': 'rad/ns',
            'channels': {name: self.channels[i].tolist() for i, name in enumerate(device.channel_names)},
            'device': device.to_record(),
        }

    @classmethod
    def from_record(cls, record: dict, device: DeviceModel):
        channels = np.array([record['channels'][name] for name in device.channel_names])
        return cls(float(record['tau_ns']), channels, float(record.get('rate', DEFAULT_RATE)))


@dataclass(frozen=True)
class GrapeConfig:
    eps_cut: float = mhz_to_angular(30.0)  # rad/ns
    harshness: int = 3
    penalty: float = 1e-3
    max_iter: int = 500
    target_infidelity: float = 1e-4
    gradient: str = 'analytic'
    subspace: str = 'full'
    fd_step: float = 1e-6
    initial_scale: float = 0.05

    def __post_init__(self):
        if self.eps_cut <= 0:
            raise ValueError('eps_cut must be > 0')
        if self.harshness < 1:
            raise ValueError('harshness n must be >= 1')
        if self.penalty < 0:
            raise ValueError('penalty weight chi must be >= 0')
        if self.gradient not in ('analytic', 'finite_difference'):
            raise ValueError(f'unknown gradient method {self.gradient!r}')
        if self.subspace not in ('full', 'computational'):
            raise ValueError(f'unknown fidelity subspace {self.subspace!r}')


# ==========================================
# 1. PROPAGATION
# ==========================================

def _sample_hamiltonians(device: DeviceModel, channels) -> np.ndarray:
    return drift_hamiltonian(device)[None, :, :] + np.tensordot(np.asarray(channels).T, control_operators(device), axes=1)


def _sample_eigensystems(device, channels):
    hamiltonians = _sample_hamiltonians(device, channels)
    return np.linalg.eigh(hamiltonians)


def _exponentials(eigenvalues, eigenvectors, t):
    """exp(-i H_j t) for every sample j."""
    phases = np.exp(-1j * eigenvalues * t)
    return np.einsum('jab,jb,jcb->jac', eigenvectors, phases, eigenvectors.conj())


def propagate_pulse(device: DeviceModel, pulse: PulseSequence) -> np.ndarray:
    """Time-ordered product of exp(-i (H_d + H_c(t_j)) dt)."""
    eigenvalues, eigenvectors = _sample_eigensystems(device, pulse.channels)
    steps = _exponentials(eigenvalues, eigenvectors, pulse.dt)
    u = np.eye(device.dim, dtype=complex)
    for step in steps:
        u = step @ u
    return check_unitary(u, tol=1e-9)


def embed_unitary(u, device: DeviceModel) -> np.ndarray:
    """u on the computational subspace, identity on every state with a level >= 2."""
    u = np.asarray(u, dtype=complex)
    indices = device.computational_indices
    if u.shape != (indices.size, indices.size):
        raise ValueError(f'unitary of shape {u.shape} does not fit {device.n_transmons} transmons')
    check_unitary(u)
    embedded = np.eye(device.dim, dtype=complex)
    embedded[np.ix_(indices, indices)] = u
    return embedded


def embed_two_qubit_unitary(u4, device: DeviceModel) -> np.ndarray:
    if device.n_transmons != 2:
        raise ValueError('two-qubit embedding needs a two-transmon device')
    return embed_unitary(u4, device)


def computational_block(matrix, device: DeviceModel) -> np.ndarray:
    indices = device.computational_indices
    return np.asarray(matrix)[np.ix_(indices, indices)]


def gate_fidelity(u_target, u_actual, dim=None) -> float:
    """|tr(U_target† U_actual)| / dim."""
    u_target, u_actual = np.asarray(u_target), np.asarray(u_actual)
    if u_target.shape != u_actual.shape:
        raise ValueError(f'shape mismatch: {u_target.shape} vs {u_actual.shape}')
    dim = u_target.shape[0] if dim is None else dim
    return float(min(abs(np.trace(u_target.conj().T @ u_actual)) / dim, 1.0))


def rms_amplitude(pulse: PulseSequence, eps_cut: float) -> float:
    """(1/eps_cut) sqrt((1/tau) Σ_channels ∫ eps^2 dt), exact for piecewise-constant samples."""
    if eps_cut <= 0:
        raise ValueError('eps_cut must be > 0')
    integral = float(np.sum(pulse.channels**2)) * pulse.dt
    return math.sqrt(integral / pulse.duration) / eps_cut


# ==========================================
# 2. GRAPE
# ==========================================

def _penalty(rms, config: GrapeConfig) -> float:
    return config.penalty * (math.exp(rms ** (2 * config.harshness)) - 1.0) / (math.e - 1.0)


def grape_objective(device: DeviceModel, pulse: PulseSequence, target, config: GrapeConfig) -> float:
    """1 - F^2/2 + chi (exp(rms^(2n)) - 1) / (e - 1); `target` is already embedded."""
    fidelity = _fidelity(device, propagate_pulse(device, pulse), target, config)
    return 1.0 - fidelity**2 / 2.0 + _penalty(rms_amplitude(pulse, config.eps_cut), config)


def _fidelity(device, u, target, config):
    if config.subspace == 'computational':
        block = device.computational_indices
        return gate_fidelity(computational_block(target, device), computational_block(u, device), block.size)
    return gate_fidelity(target, u)


def _overlap_operator(device, target, config):
    """A with z = tr(A U); zero outside the fidelity subspace."""
    if config.subspace == 'full':
        return target.conj().T, device.dim
    a = np.zeros_like(target)
    indices = device.computational_indices
    a[np.ix_(indices, indices)] = computational_block(target, device).conj().T
    return a, indices.size


def _objective_and_gradient(device, target, config, duration, rate, x):
    """Objective and its analytic gradient over the flattened, eps_cut-scaled samples."""
    n_channels = len(device.channel_names)
    channels = config.eps_cut * x.reshape(n_channels, -1)
    samples = channels.shape[1]
    dt = 1.0 / rate

    eigenvalues, eigenvectors = _sample_eigensystems(device, channels)
    steps = _exponentials(eigenvalues, eigenvectors, dt)

    # before[j] = U_{j-1}..U_0, after[j] = U_{M-1}..U_{j+1}
    eye = np.eye(device.dim, dtype=complex)
    before = np.empty_like(steps)
    after = np.empty_like(steps)
    before[0] = eye
    for j in range(1, samples):
        before[j] = steps[j - 1] @ before[j - 1]
    after[-1] = eye
    for j in range(samples - 2, -1, -1):
        after[j] = after[j + 1] @ steps[j + 1]
    total = steps[-1] @ before[-1]

    a, dim = _overlap_operator(device, target, config)
    z = np.trace(a @ total)
    fidelity = abs(z) / dim

    # Frechet derivative of exp(-i H dt) in the eigenbasis of H
    lam_k = eigenvalues[:, :, None]
    lam_l = eigenvalues[:, None, :]
    exp_k = np.exp(-1j * lam_k * dt)
    exp_l = np.exp(-1j * lam_l * dt)
    gap = lam_k - lam_l
    close = np.abs(gap) < 1e-10
    divided = np.where(close, -1j * dt * exp_k, (exp_k - exp_l) / np.where(close, 1.0, gap))

    vh = eigenvectors.conj().transpose(0, 2, 1)
    rotated = vh @ (before @ a @ after) @ eigenvectors
    controls = vh[:, None] @ control_operators(device)[None] @ eigenvectors[:, None]
    dz = np.einsum('jlk,jckl->cj', rotated, divided[:, None, :, :] * controls)

    d_fidelity = (np.conj(z) * dz).real / (abs(z) * dim) if abs(z) > 0 else np.zeros(dz.shape)
    rms_sq = float(np.sum(channels**2)) / (samples * config.eps_cut**2)
    n = config.harshness
    penalty = config.penalty * (math.exp(rms_sq**n) - 1.0) / (math.e - 1.0)
    d_penalty = (config.penalty * math.exp(rms_sq**n) * n * rms_sq ** (n - 1) / (math.e - 1.0)
                 * 2.0 * channels / (samples * config.eps_cut**2))

    value = 1.0 - fidelity**2 / 2.0 + penalty
    gradient = (-fidelity * d_fidelity + d_penalty) * config.eps_cut
    return value, gradient.reshape(-1)


def grape_gradient(device: DeviceModel, pulse: PulseSequence, target, config: GrapeConfig) -> np.ndarray:
    """dPhi / d eps for every channel sample, shaped like pulse.channels."""
    x = (pulse.channels / config.eps_cut).reshape(-1)
    if config.gradient == 'finite_difference':
        def objective(values):
            return grape_objective(device, PulseSequence(pulse.duration, config.eps_cut * values.reshape(pulse.channels.shape), pulse.rate), target, config)

        gradient = central_gradient(objective, x, config.fd_step)
    else:
        _, gradient = _objective_and_gradient(device, target, config, pulse.duration, pulse.rate, x)
    return gradient.reshape(pulse.channels.shape) / config.eps_cut


@dataclass(frozen=True, eq=False)
class GrapeResult:
    pulse: PulseSequence
    objective: float
    fidelity: float
    status: str
    iterations: int
    message: str = ''

    @property
    def converged(self) -> bool:
        return self.status == 'converged'


def grape_optimize(device: DeviceModel, target, duration, config: GrapeConfig, rng: RngStream,
                   rate=DEFAULT_RATE, initial: PulseSequence | None = None) -> GrapeResult:
    """L-BFGS-B over every channel sample; returns the best pulse even when the threshold is missed."""
    target = check_unitary(np.asarray(target, dtype=complex))
    if target.shape != (device.dim, device.dim):
        raise ValueError(f'target must be embedded in the {device.dim}-dimensional device space')
    samples = int(round(duration * rate))
    if samples < 2:
        raise ValueError('a pulse needs at least two samples')
    n_channels = len(device.channel_names)

    if initial is not None:
        if initial.samples != samples:
            raise ValueError('initial pulse does not match the requested duration')
        x0 = (initial.channels / config.eps_cut).reshape(-1)
    else:
        x0 = rng.uniform(-config.initial_scale, config.initial_scale, n_channels * samples)

    if config.gradient == 'analytic':
        def fun(x):
            return _objective_and_gradient(device, target, config, duration, rate, x)
    else:
        def fun(x):
            pulse = PulseSequence(duration, config.eps_cut * x.reshape(n_channels, -1), rate)
            return grape_objective(device, pulse, target, config), grape_gradient(device, pulse, target, config).reshape(-1) * config.eps_cut

    result = minimize(fun, x0, jac=True, method='L-BFGS-B', options={'maxiter': config.max_iter})
    pulse = PulseSequence(duration, config.eps_cut * result.x.reshape(n_channels, -1), rate)
    fidelity = _fidelity(device, propagate_pulse(device, pulse), target, config)
    if 1.0 - fidelity <= config.target_infidelity:
        status = 'converged'
    elif result.nit >= config.max_iter:
        status = 'iteration_cap'
        logger.warning('GRAPE hit the iteration cap: 1 - F = %.3e after %d iterations', 1.0 - fidelity, result.nit)
    else:
        status = 'stalled'
        logger.warning('GRAPE stopped above the infidelity threshold: 1 - F = %.3e (%s)', 1.0 - fidelity, result.message)
    logger.info('GRAPE tau=%g ns: 1 - F = %.3e, rms amplitude %.4f', duration, 1.0 - fidelity,
                rms_amplitude(pulse, config.eps_cut))
    return GrapeResult(pulse, float(result.fun), fidelity, status, int(result.nit), str(result.message))


# ==========================================
# 3. OPEN-SYSTEM DYNAMICS
# ==========================================

@dataclass(frozen=True, eq=False)
class Dissipator:
    """Hermitian part of the relaxation and dephasing terms, with per-transmon rates."""

    device: DeviceModel
    form: str = 'renormalized'

    def __post_init__(self):
        if self.form not in DISSIPATORS:
            raise ValueError(f'unknown dissipator {self.form!r}; expected one of {DISSIPATORS}')

    @cached_property
    def channels(self) -> list:
        terms = []
        for a, t1, t2 in zip(self.device.annihilators, self.device.t1, self.device.t2):
            ad = a.conj().T
            number = ad @ a
            if self.form == 'renormalized':
                # a rho a† - ½{a a†, rho} and (a†a) rho (a a†) - ½{a a† a† a, rho}
                relax = (a, ad, a @ ad)
                dephase = (number, a @ ad, a @ ad @ ad @ a)
            else:
                relax = (a, ad, ad @ a)
                dephase = (math.sqrt(2.0) * number, math.sqrt(2.0) * number, 2.0 * number @ number)
            if math.isfinite(t1):
                terms.append((1.0 / t1, *relax))
            if math.isfinite(t2):
                terms.append((1.0 / t2, *dephase))
        return terms

    @property
    def active(self) -> bool:
        return bool(self.channels)

    def __call__(self, rho) -> np.ndarray:
        out = np.zeros_like(rho)
        for rate, left, right, anti in self.channels:
            out += rate * (left @ rho @ right - 0.5 * (anti @ rho + rho @ anti))
        return 0.5 * (out + out.conj().T)


@dataclass(frozen=True, eq=False)
class LindbladResult:
    rho: np.ndarray
    trace_log: float  # cumulative ln(trace) removed by renormalization
    trace_drift: float = 0.0  # cumulative |removed - predicted| log-trace
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    snapshots: list = field(default_factory=list)


def _check_density(rho, label='rho'):
    rho = check_hermitian(rho, tol=1e-9)
    trace = np.trace(rho).real
    if abs(trace - 1.0) > 1e-9:
        raise ValueError(f'{label} must have unit trace, got {trace}')
    smallest = float(np.linalg.eigvalsh(rho).min())
    if smallest < -numeric_config().psd_tol:
        raise NumericalError(f'{label} is not positive semidefinite (min eigenvalue {smallest:.3e})')
    return rho


def _rk4_sample(rho, eigenvalues, eigenvectors, dt, dissipator, substeps):
    """Interaction-picture RK4 across one piecewise-constant sample; returns (rho, log trace change, predicted)."""
    h = dt / substeps
    v, vh = eigenvectors, eigenvectors.conj().T
    u_half = (v * np.exp(-1j * eigenvalues * h / 2.0)) @ vh
    u_full = u_half @ u_half
    log_change, predicted = 0.0, 0.0

    def rhs(u, sigma):
        return u.conj().T @ dissipator(u @ sigma @ u.conj().T) @ u

    for _ in range(substeps):
        trace0 = np.trace(rho).real
        k1 = dissipator(rho)
        rate0 = np.trace(k1).real / trace0
        k2 = rhs(u_half, rho + 0.5 * h * k1)
        k3 = rhs(u_half, rho + 0.5 * h * k2)
        k4 = rhs(u_full, rho + h * k3)
        sigma = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = u_full @ sigma @ u_full.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        trace1 = np.trace(rho).real
        rate1 = np.trace(dissipator(rho)).real / trace1
        log_change += math.log(trace1 / trace0)
        predicted += 0.5 * h * (rate0 + rate1)
        rho = rho / trace1
    return rho, log_change, predicted


def lindblad_evolve(device: DeviceModel, rho0, pulse: PulseSequence, dissipator='renormalized', record_every=None,
                    check=True) -> LindbladResult:
    """
    Fixed-step RK4 in the interaction picture of each piecewise-constant sample, so the
    Hamiltonian part is exact and RK4 only integrates the dissipator. The trace is renormalized
    every step and the removed leak is checked against the leak rate tr(D(rho)) / tr(rho); a
    mismatch above a sample's share of the drift tolerance halves the step, then fails.
    """
    rho = np.array(_check_density(rho0, 'rho0') if check else rho0, dtype=complex)
    if rho.shape != (device.dim, device.dim):
        raise ValueError(f'rho0 must be {device.dim}x{device.dim}')
    noise = dissipator if isinstance(dissipator, Dissipator) else Dissipator(device, dissipator)
    eigenvalues, eigenvectors = _sample_eigensystems(device, pulse.channels)
    tolerance = numeric_config().trace_drift_tol * pulse.dt / max(pulse.duration, pulse.dt)

    trace_log, trace_drift = 0.0, 0.0
    times, snapshots = [], []
    if not noise.active:
        steps = _exponentials(eigenvalues, eigenvectors, pulse.dt)
    for j in range(pulse.samples):
        if not noise.active:
            rho = steps[j] @ rho @ steps[j].conj().T
        else:
            substeps = 1
            while True:
                candidate, observed, predicted = _rk4_sample(rho, eigenvalues[j], eigenvectors[j], pulse.dt,
                                                             noise, substeps)
                drift = abs(observed - predicted)
                if drift <= tolerance:
                    break
                if substeps >= MAX_SUBSTEPS:
                    raise TraceDriftError(drift, pulse.dt / substeps)
                substeps *= 2
            rho = candidate
            trace_log += observed
            trace_drift += drift
        if record_every and (j + 1) % record_every == 0:
            times.append((j + 1) * pulse.dt)
            snapshots.append(rho.copy())

    rho = 0.5 * (rho + rho.conj().T)
    smallest = float(np.linalg.eigvalsh(rho).min())
    if smallest < -numeric_config().psd_tol:
        raise NumericalError(f'density matrix lost positivity (min eigenvalue {smallest:.3e})')
    return LindbladResult(rho, trace_log, trace_drift, np.array(times), snapshots)


# ==========================================
# 4. ADIABATIC EMULATION
# ==========================================

@dataclass(frozen=True, eq=False)
class EmulationResult:
    trajectory: Trajectory
    gates: pd.DataFrame
    pulses: list
    rho: np.ndarray


def _embed_state(amplitudes, device):
    psi = np.zeros(device.dim, dtype=complex)
    psi[device.computational_indices] = amplitudes
    return psi


def optimize_gate_sequence(device, targets, duration, config: GrapeConfig, rng: RngStream, rate=DEFAULT_RATE,
                           warm_start=True, threads=1) -> list:
    """One GRAPE run per target; warm starts chain each run from the previous pulse."""
    embedded = [embed_unitary(u, device) for u in targets]
    if not warm_start:
        return parallel_map(lambda k: grape_optimize(device, embedded[k], duration, config, rng.spawn(k), rate),
                            range(len(embedded)), threads)
    results, previous = [], None
    for k, target in enumerate(embedded):
        result = grape_optimize(device, target, duration, config, rng.spawn(k), rate,
                                initial=previous.pulse if previous else None)
        results.append(result)
        previous = result
    return results


def emulate_adiabatic_with_pulses(device: DeviceModel, h0: HamiltonianModel, h_target: HamiltonianModel,
                                  schedule: Schedule, initial, duration, config: GrapeConfig, rng: RngStream,
                                  dissipator='renormalized', rate=DEFAULT_RATE, warm_start=True, threads=1,
                                  gates=None) -> EmulationResult:
    """
    Realize every short-time propagator as one optimized pulse, then run the pulse train through
    the master equation. F(t_k) and <H_T>(t_k) are taken on the renormalized computational block.
    Pass `gates` (GrapeResults) to reuse optimized pulses.
    """
    if device.n_transmons != 2 or h0.n_qubits != 2:
        raise ValueError('adiabatic emulation runs two qubits on two transmons')
    targets = short_time_propagators(h0, h_target, schedule)
    if gates is None:
        gates = optimize_gate_sequence(device, targets, duration, config, rng, rate, warm_start, threads)
    references = instantaneous_eigenstates(h0, h_target, schedule)
    noise = Dissipator(device, dissipator)
    target_matrix = h_target.dense

    psi = _embed_state(initial.amplitudes, device)
    rho = np.outer(psi, psi.conj())
    fidelity, energy, leakage, purity, rows = [], [], [], [], []
    drift = 0.0
    for k in range(schedule.steps + 1):
        if k > 0:
            evolved = lindblad_evolve(device, rho, gates[k - 1].pulse, noise, check=False)
            rho, drift = evolved.rho, evolved.trace_drift
        block = computational_block(rho, device)
        kept = np.trace(block).real
        block = block / kept
        phi = references[k]
        fidelity.append(math.sqrt(max(np.vdot(phi, block @ phi).real, 0.0)))
        energy.append(float(np.trace(block @ target_matrix).real))
        leakage.append(1.0 - kept)
        _, weight = principal_state(block)
        purity.append(weight)
        if k > 0:
            if leakage[-1] > 1e-3:
                logger.warning('gate %d: leakage %.2e outside the computational subspace', k, leakage[-1])
            rows.append({
                'gate': k, 'gate_fidelity': gates[k - 1].fidelity, 'grape_status': gates[k - 1].status,
                'leakage': leakage[-1], 'principal_weight': weight, 'trace_drift': drift,
                'fidelity': fidelity[-1], 'energy': energy[-1],
            })

    trajectory = Trajectory(
        s=schedule.times / schedule.total_time, fidelity=np.array(fidelity), energy=np.array(energy),
        extra={'leakage': np.array(leakage), 'principal_weight': np.array(purity)},
    )
    logger.info('pulse emulation: final fidelity %.5f, energy %.5f', fidelity[-1], energy[-1])
    return EmulationResult(trajectory, pd.DataFrame(rows), [g.pulse for g in gates], rho)


def composition_bound(fidelities, dim) -> float:
    """Σ_k sqrt(2 d (1 - F_gate,k)): accumulated state error allowed by imperfect closed-system gates."""
    return float(sum(math.sqrt(2.0 * dim * max(1.0 - f, 0.0)) for f in fidelities))


def with_rates(device: DeviceModel, t1=None, t2=None) -> DeviceModel:
    return replace(device, t1=tuple(t1) if t1 is not None else device.t1, t2=tuple(t2) if t2 is not None else device.t2)
