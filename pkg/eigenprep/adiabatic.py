"""
Discretized adiabatic evolution H(t) = f(t) H0 + (1 - f(t)) HT with f = cos^2(pi t / 2T),
the controlled-evolution angle decomposition for one-qubit Hamiltonians, and confusion-matrix
readout mitigation.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from .exceptions import NumericalError, SingularConfusionMatrixError
from .hamiltonian import HamiltonianModel, interpolate
from .numerics import RngStream, expm_unitary, kron
from .register import HADAMARD, PAULI_X, StateVector, apply_unitary_array, init_basis

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    total_time: float
    steps: int

    def __post_init__(self):
        if not self.total_time > 0:
            raise ValueError(f'total time must be positive, got {self.total_time}')
        if self.steps < 1:
            raise ValueError(f'steps must be >= 1, got {self.steps}')

    @property
    def dt(self) -> float:
        return self.total_time / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


def interpolation_f(t: float, total_time: float) -> float:
    if not 0.0 <= t <= total_time:
        raise ValueError(f't={t} outside [0, {total_time}]')
    return math.cos(math.pi * t / (2.0 * total_time)) ** 2


def hamiltonian_at(h0, h_target, schedule: Schedule, k: int) -> HamiltonianModel:
    t = min(k * schedule.dt, schedule.total_time)
    return interpolate(h0, h_target, interpolation_f(t, schedule.total_time))


def short_time_propagators(h0, h_target, schedule: Schedule) -> list:
    """U(t_k) = exp(-i H(t_k) dt) for k = 1..n."""
    return [expm_unitary(hamiltonian_at(h0, h_target, schedule, k).dense, schedule.dt)
            for k in range(1, schedule.steps + 1)]


@dataclass(frozen=True, eq=False)
class Trajectory:
    s: np.ndarray
    fidelity: np.ndarray
    energy: np.ndarray
    uncompute_fidelity: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(self.s), len(self.fidelity), len(self.energy)}
        lengths |= {len(v) for v in self.extra.values()}
        if self.uncompute_fidelity is not None:
            lengths.add(len(self.uncompute_fidelity))
        if len(lengths) != 1:
            raise ValueError(f'trajectory columns differ in length: {sorted(lengths)}')

    @property
    def final_fidelity(self) -> float:
        return float(self.fidelity[-1])

    @property
    def final_energy(self) -> float:
        return float(self.energy[-1])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'k': np.arange(len(self.s)),
            's': self.s,
            'fidelity': self.fidelity,
            'energy': self.energy,
        })
        if self.uncompute_fidelity is not None:
            frame['uncompute_fidelity'] = self.uncompute_fidelity
        for name, values in self.extra.items():
            frame[name] = values
        return frame


def instantaneous_eigenstates(h0, h_target, schedule: Schedule, level=0) -> list:
    """
    phi(t_k), k = 0..n: start from eigenvector `level` of H(0) and follow the eigenvector of
    maximal overlap with the previous step.
    """
    states = []
    previous = None
    for k in range(schedule.steps + 1):
        vectors = hamiltonian_at(h0, h_target, schedule, k).spectrum.eigenvectors
        if previous is None:
            current = vectors[:, level]
        else:
            current = vectors[:, int(np.argmax(np.abs(vectors.conj().T @ previous)))]
        states.append(current)
        previous = current
    return states


def evolve(initial, propagators) -> list:
    """psi(t_0), ..., psi(t_n) as raw amplitude arrays."""
    states = [np.asarray(initial, dtype=complex)]
    for u in propagators:
        states.append(u @ states[-1])
    return states


def run_adiabatic(h0, h_target, schedule: Schedule, initial: StateVector) -> Trajectory:
    if initial.dim != h0.dim:
        raise ValueError(f'initial state has dim {initial.dim}, Hamiltonian {h0.dim}')
    propagators = short_time_propagators(h0, h_target, schedule)
    states = evolve(initial.amplitudes, propagators)
    references = instantaneous_eigenstates(h0, h_target, schedule)
    target = h_target.dense

    fidelity = np.array([abs(np.vdot(phi, psi)) for phi, psi in zip(references, states)])
    energy = np.array([np.vdot(psi, target @ psi).real for psi in states])
    uncompute = np.array([
        abs(np.vdot(initial.amplitudes, _uncompute(psi, propagators[:k])))
        for k, psi in enumerate(states)
    ])
    logger.info(
        'adiabatic T=%g n=%d: final fidelity %.6f, energy %.6f',
        schedule.total_time, schedule.steps, fidelity[-1], energy[-1],
    )
    return Trajectory(
        s=schedule.times / schedule.total_time,
        fidelity=np.clip(fidelity, 0.0, 1.0),
        energy=energy,
        uncompute_fidelity=np.clip(uncompute, 0.0, 1.0),
    )


def _uncompute(amplitudes, propagators):
    psi = np.asarray(amplitudes, dtype=complex)
    for u in reversed(propagators):
        psi = u.conj().T @ psi
    return psi


def run_adiabatic_ode(h0, h_target, total_time: float, initial: StateVector, times=None):
    """Exact time-dependent evolution with a high-order adaptive integrator."""
    a, b = h0.dense, h_target.dense

    def rhs(t, psi):
        f = math.cos(math.pi * t / (2.0 * total_time)) ** 2
        return -1j * ((f * a + (1.0 - f) * b) @ psi)

    solution = solve_ivp(
        rhs,
        (0.0, total_time),
        np.asarray(initial.amplitudes, dtype=complex),
        method='DOP853',
        t_eval=times,
        rtol=1e-10,
        atol=1e-12,
    )
    if not solution.success:
        raise NumericalError(f'ODE integration failed: {solution.message}')
    return solution.t, solution.y.T


# ==========================================
# UNCOMPUTE FIDELITY
# ==========================================

def two_spin_preparation() -> list:
    """|psi(0)> = (H x H)(X x X)|00>, as (gate, targets) applied to |00>."""
    return [(PAULI_X, [0]), (PAULI_X, [1]), (HADAMARD, [0]), (HADAMARD, [1])]


def basis_preparation(bits: str) -> list:
    return [(PAULI_X, [q]) for q, bit in enumerate(bits) if bit == '1']


def prepare(n_qubits, preparation) -> StateVector:
    amplitudes = init_basis(n_qubits, '0' * n_qubits).amplitudes
    for gate, targets in preparation:
        amplitudes = apply_unitary_array(amplitudes, n_qubits, gate, targets)
    return StateVector(n_qubits, amplitudes)


def uncompute_amplitudes(h0, h_target, schedule: Schedule, k: int, state=None, preparation=None):
    """
    Run the truncated circuit's inverse on psi(t_k): U^dag(t_k) ... U^dag(t_1), then the
    preparation gates in reverse order. Returns the final register amplitudes; the |0..0>
    entry is the overlap with the ideal trajectory.
    """
    if not 0 <= k <= schedule.steps:
        raise ValueError(f'k={k} outside [0, {schedule.steps}]')
    n = h0.n_qubits
    preparation = two_spin_preparation() if preparation is None else preparation
    propagators = short_time_propagators(h0, h_target, schedule)[:k]
    if state is None:
        state = evolve(prepare(n, preparation).amplitudes, propagators)[-1]
    psi = _uncompute(state.amplitudes if isinstance(state, StateVector) else state, propagators)
    for gate, targets in reversed(preparation):
        psi = apply_unitary_array(psi, n, gate.conj().T, targets)
    return psi


def fidelity_via_uncompute(h0, h_target, schedule: Schedule, k: int, state=None, preparation=None) -> float:
    """sqrt(P(|0..0>)) after the uncompute circuit."""
    psi = uncompute_amplitudes(h0, h_target, schedule, k, state=state, preparation=preparation)
    return float(min(abs(psi[0]), 1.0))


def sampled_fidelity_via_uncompute(h0, h_target, schedule, k, shots, rng: RngStream,
                                   state=None, preparation=None, confusion=None):
    """
    (estimate, stderr) of the uncompute fidelity from `shots` readouts. With a confusion
    matrix the counts are readout-corrupted and then mitigated.
    """
    psi = uncompute_amplitudes(h0, h_target, schedule, k, state=state, preparation=preparation)
    probabilities = np.abs(psi) ** 2
    probabilities = probabilities / probabilities.sum()
    if confusion is None:
        p_zero = int(rng.binomial(shots, min(probabilities[0], 1.0))) / shots
    else:
        counts = sample_readout(probabilities, confusion, shots, rng)
        p_zero = float(confusion_mitigate(counts, confusion)[0])
    stderr = math.sqrt(max(p_zero * (1.0 - p_zero), 0.0) / shots)
    estimate = math.sqrt(p_zero)
    # delta method for the square root; zero when p_zero is 0 or 1
    return estimate, stderr / (2.0 * estimate) if estimate > 0 else 0.0


# ==========================================
# CONTROLLED EVOLUTION ANGLES
# ==========================================

@dataclass(frozen=True)
class EulerAngles:
    gamma: float
    beta: float
    delta: float
    xi: float


def u3(gamma, beta, delta) -> np.ndarray:
    c, s = math.cos(gamma / 2.0), math.sin(gamma / 2.0)
    return np.array([
        [c, -np.exp(1j * delta) * s],
        [np.exp(1j * beta) * s, np.exp(1j * (beta + delta)) * c],
    ])


def controlled_block(u) -> np.ndarray:
    """|0><0| x I + |1><1| x u with the control as the most significant qubit."""
    dim = u.shape[0]
    block = np.eye(2 * dim, dtype=complex)
    block[dim:, dim:] = u
    return block


def controlled_gate_from_angles(angles: EulerAngles) -> np.ndarray:
    """Controlled-U3(gamma, beta, delta) followed by the phase P(xi) on the control."""
    phase = kron(np.diag([1.0, np.exp(1j * angles.xi)]), np.eye(2))
    return phase @ controlled_block(u3(angles.gamma, angles.beta, angles.delta))


def controlled_evolution_angles(c_i, c_x, c_y, c_z, t) -> EulerAngles:
    """
    Angles realizing controlled-exp(-iHt) for H = c_I I + c_X X + c_Y Y + c_Z Z. The SU(2)
    factor R = exp(-it c.sigma) fixes gamma from |R00|, |R10| and beta +/- delta from their
    phases; xi = -c_I t - (beta + delta) / 2 carries the rest.
    """
    if not math.isfinite(t):
        raise ValueError(f'time must be finite, got {t}')
    radius = math.sqrt(c_x**2 + c_y**2 + c_z**2)
    if radius == 0.0 or t == 0.0:
        angles = EulerAngles(0.0, 0.0, 0.0, -c_i * t)
    else:
        theta = 2.0 * t * radius
        nx, ny, nz = c_x / radius, c_y / radius, c_z / radius
        half_c, half_s = math.cos(theta / 2.0), math.sin(theta / 2.0)
        r00 = complex(half_c, -nz * half_s)
        r10 = complex(ny * half_s, -nx * half_s)
        gamma = 2.0 * math.atan2(abs(r10), abs(r00))
        arg00 = math.atan2(r00.imag, r00.real) if abs(r00) > 1e-15 else 0.0
        arg10 = math.atan2(r10.imag, r10.real) if abs(r10) > 1e-15 else 0.0
        beta = arg10 - arg00
        delta = -arg10 - arg00
        angles = EulerAngles(gamma, beta, delta, -c_i * t - (beta + delta) / 2.0)

    exact = controlled_block(_single_qubit_propagator(c_i, c_x, c_y, c_z, t))
    residual = float(np.abs(controlled_gate_from_angles(angles) - exact).max())
    if residual > 1e-9:
        raise NumericalError(f'controlled-evolution reconstruction residual {residual:.2e} exceeds 1e-9')
    return angles


def _single_qubit_propagator(c_i, c_x, c_y, c_z, t):
    h = np.array([[c_i + c_z, c_x - 1j * c_y], [c_x + 1j * c_y, c_i - c_z]])
    return expm_unitary(h, t)


# ==========================================
# CONFUSION MATRIX
# ==========================================

@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Column-stochastic: matrix[measured, prepared]. Qubit 1 is the leftmost bit."""

    matrix: np.ndarray
    rates: tuple  # ((p01, p10) per qubit)


def _check_probability(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f'{name} must lie in [0, 1], got {value}')


def confusion_from_rates(rates) -> ConfusionMatrix:
    blocks = []
    for qubit, (p01, p10) in enumerate(rates, start=1):
        _check_probability(f'p01 on qubit {qubit}', p01)
        _check_probability(f'p10 on qubit {qubit}', p10)
        if p01 + p10 >= 1.0:
            raise SingularConfusionMatrixError(qubit, p01, p10)
        blocks.append(np.array([[1.0 - p10, p01], [p10, 1.0 - p01]]))
    return ConfusionMatrix(kron(*blocks), tuple(tuple(r) for r in rates))


def confusion_build(p01_q1, p10_q1, p01_q2, p10_q2) -> ConfusionMatrix:
    """p01 = P(read 0 | prepared 1), p10 = P(read 1 | prepared 0)."""
    return confusion_from_rates([(p01_q1, p10_q1), (p01_q2, p10_q2)])


def confusion_from_calibration(counts_00: dict, counts_11: dict) -> ConfusionMatrix:
    """Per-qubit marginal error rates from |00> and |11> calibration runs."""
    n = len(next(iter(counts_00)))
    total_0 = sum(counts_00.values())
    total_1 = sum(counts_11.values())
    rates = []
    for q in range(n):
        p10 = sum(c for bits, c in counts_00.items() if bits[q] == '1') / total_0
        p01 = sum(c for bits, c in counts_11.items() if bits[q] == '0') / total_1
        rates.append((p01, p10))
    return confusion_from_rates(rates)


def confusion_forward(probabilities, cm: ConfusionMatrix) -> np.ndarray:
    return cm.matrix @ np.asarray(probabilities, dtype=float)


def sample_readout(probabilities, cm: ConfusionMatrix, shots: int, rng: RngStream) -> np.ndarray:
    measured = np.clip(confusion_forward(probabilities, cm), 0.0, None)
    return rng.multinomial(shots, measured / measured.sum())


def confusion_solve(counts, cm: ConfusionMatrix) -> np.ndarray:
    """P^-1 times the normalized counts, before any clipping."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError('counts must be nonnegative')
    total = counts.sum()
    if total <= 0:
        raise ValueError('counts are empty')
    return np.linalg.solve(cm.matrix, counts / total)


def confusion_mitigate(counts, cm: ConfusionMatrix) -> np.ndarray:
    raw = confusion_solve(counts, cm)
    clipped = np.clip(raw, 0.0, 1.0)
    if np.any(clipped != raw):
        logger.warning('mitigated quasi-probabilities left [0, 1] and were clipped: %s', np.round(raw, 6))
    return clipped / clipped.sum()


def mitigated_expectation_zz(probabilities) -> float:
    """<Z x Z> from a four-outcome distribution (00, 01, 10, 11)."""
    p = np.asarray(probabilities)
    return float(p[0] - p[1] - p[2] + p[3])
