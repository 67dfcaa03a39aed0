"""
n-qubit state-vector simulator.

Qubit 0 is the leftmost bit of a basis label and the most significant bit of its index, so
``init_basis(2, "01")`` puts all amplitude on index 1. Operations return new states; the
``*_array`` helpers work on raw amplitude arrays owned by the caller and are the fast path for
inner loops.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .conf import numeric_config
from .hamiltonian import HamiltonianModel, PauliString
from .numerics import RngStream, check_hermitian, check_unitary, eig_hermitian

logger = logging.getLogger(__name__)

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2.0)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
S_DAGGER = np.array([[1, 0], [0, -1j]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

# Rotation taking each Pauli eigenbasis onto Z; Y uses S-dagger then H so that
# (|0> + i|1>)/sqrt(2) reads +1.
_BASIS_ROTATIONS = {'X': HADAMARD, 'Y': HADAMARD @ S_DAGGER}


def phase_gate(angle: float) -> np.ndarray:
    return np.array([[1, 0], [0, np.exp(1j * angle)]], dtype=complex)


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amplitudes.shape[0] != 2**self.n_qubits:
            raise ValueError(f'{amplitudes.shape[0]} amplitudes do not fit {self.n_qubits} qubits')
        norm = float(np.vdot(amplitudes, amplitudes).real)
        if abs(norm - 1.0) > numeric_config().norm_tol:
            raise ValueError(f'state is not normalized: norm^2 = {norm!r}')
        amplitudes.setflags(write=False)
        object.__setattr__(self, 'amplitudes', amplitudes)

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize=False) -> 'StateVector':
        amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n_qubits = int(round(math.log2(amplitudes.shape[0])))
        if normalize:
            norm = np.linalg.norm(amplitudes)
            if norm == 0.0:
                raise ValueError('cannot normalize the zero vector')
            amplitudes = amplitudes / norm
        return cls(n_qubits, amplitudes)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other) -> complex:
        other = other.amplitudes if isinstance(other, StateVector) else np.asarray(other)
        return complex(np.vdot(other, self.amplitudes))

    def fidelity(self, other) -> float:
        return abs(self.overlap(other))

    def density(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True)
class MeasurementRecord:
    qubit: int
    outcome: int
    probability: float


@dataclass(frozen=True, eq=False)
class ShotEnsemble:
    """Per-shot final states (shots x dim) or bitstring counts."""

    shots: int
    states: np.ndarray | None = None
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states is not None and len(self.states) != self.shots:
            raise ValueError(f'{len(self.states)} states recorded for {self.shots} shots')
        if self.counts and sum(self.counts.values()) != self.shots:
            raise ValueError(f'counts sum to {sum(self.counts.values())}, expected {self.shots}')


# ==========================================
# 1. PREPARATION AND GATES
# ==========================================

def init_basis(n: int, bits: str) -> StateVector:
    if len(bits) != n:
        raise ValueError(f'bitstring {bits!r} has length {len(bits)}, expected {n}')
    if set(bits) - {'0', '1'}:
        raise ValueError(f'bitstring may only contain 0 and 1: {bits!r}')
    amplitudes = np.zeros(2**n, dtype=complex)
    amplitudes[int(bits, 2)] = 1.0
    return StateVector(n, amplitudes)


def _validate_targets(targets, n, control=None):
    targets = [int(t) for t in targets]
    if not targets:
        raise ValueError('at least one target qubit is required')
    if len(set(targets)) != len(targets):
        raise ValueError(f'target qubits must be distinct: {targets}')
    if any(not 0 <= t < n for t in targets):
        raise ValueError(f'target qubits {targets} out of range for {n} qubits')
    if control is not None:
        if not 0 <= control < n:
            raise ValueError(f'control qubit {control} out of range for {n} qubits')
        if control in targets:
            raise ValueError(f'control qubit {control} is also a target')
    return targets


def apply_unitary_array(amplitudes, n, u, targets) -> np.ndarray:
    """u acts on `targets`; targets[0] is the most significant bit of u's index."""
    k = len(targets)
    psi = np.moveaxis(np.asarray(amplitudes).reshape((2,) * n), targets, list(range(k)))
    shape = psi.shape
    psi = (u @ psi.reshape(2**k, -1)).reshape(shape)
    return np.moveaxis(psi, list(range(k)), targets).reshape(-1)


def apply_controlled_array(amplitudes, n, u, control, targets) -> np.ndarray:
    psi = np.array(amplitudes, dtype=complex).reshape((2,) * n)
    view = np.moveaxis(psi, control, 0)
    branch_targets = [t - (t > control) for t in targets]
    branch = view[1]
    view[1] = apply_unitary_array(branch.reshape(-1), n - 1, u, branch_targets).reshape(branch.shape)
    return psi.reshape(-1)


def apply_unitary(state: StateVector, u, targets) -> StateVector:
    targets = _validate_targets(targets, state.n_qubits)
    u = check_unitary(u)
    if u.shape[0] != 2 ** len(targets):
        raise ValueError(f'{u.shape[0]}-dim unitary cannot act on {len(targets)} qubits')
    return StateVector(state.n_qubits, apply_unitary_array(state.amplitudes, state.n_qubits, u, targets))


def apply_controlled_unitary(state: StateVector, u, control: int, targets) -> StateVector:
    targets = _validate_targets(targets, state.n_qubits, control=control)
    u = check_unitary(u)
    if u.shape[0] != 2 ** len(targets):
        raise ValueError(f'{u.shape[0]}-dim unitary cannot act on {len(targets)} qubits')
    amplitudes = apply_controlled_array(state.amplitudes, state.n_qubits, u, control, targets)
    return StateVector(state.n_qubits, amplitudes)


def operator_matrix(u, targets, n, control=None) -> np.ndarray:
    """Full 2^n matrix of a (controlled) gate, built column by column."""
    dim = 2**n
    columns = []
    for index in range(dim):
        basis = np.zeros(dim, dtype=complex)
        basis[index] = 1.0
        if control is None:
            columns.append(apply_unitary_array(basis, n, u, targets))
        else:
            columns.append(apply_controlled_array(basis, n, u, control, targets))
    return np.column_stack(columns)


# ==========================================
# 2. MEASUREMENT
# ==========================================

def _outcome_probability(amplitudes, n, qubit) -> float:
    psi = np.asarray(amplitudes).reshape((2,) * n)
    return float(np.sum(np.abs(np.take(psi, 1, axis=qubit)) ** 2))


def measure_array(amplitudes, n, qubit, rng: RngStream):
    p1 = min(max(_outcome_probability(amplitudes, n, qubit), 0.0), 1.0)
    outcome = int(rng.uniform() < p1)
    probability = p1 if outcome else 1.0 - p1
    psi = np.array(amplitudes, dtype=complex).reshape((2,) * n)
    index = [slice(None)] * n
    index[qubit] = 1 - outcome
    psi[tuple(index)] = 0.0
    collapsed = psi.reshape(-1) / math.sqrt(probability)
    return MeasurementRecord(qubit, outcome, probability), collapsed


def measure_qubit(state: StateVector, q: int, rng: RngStream):
    _validate_targets([q], state.n_qubits)
    record, amplitudes = measure_array(state.amplitudes, state.n_qubits, q, rng)
    return record, StateVector.from_amplitudes(amplitudes, normalize=True)


def sample_bitstrings(state: StateVector, shots: int, rng: RngStream) -> ShotEnsemble:
    if shots < 1:
        raise ValueError('shots must be >= 1')
    probabilities = state.probabilities()
    counts = rng.multinomial(shots, probabilities / probabilities.sum())
    labels = [format(i, f'0{state.n_qubits}b') for i in range(state.dim)]
    return ShotEnsemble(shots, counts={labels[i]: int(c) for i, c in enumerate(counts) if c})


# ==========================================
# 3. EXPECTATION VALUES
# ==========================================

def expectation_pauli(state: StateVector, pauli: PauliString) -> float:
    if pauli.n_qubits != state.n_qubits:
        raise ValueError(f'Pauli string {pauli.letters} does not match {state.n_qubits} qubits')
    return float(np.vdot(state.amplitudes, pauli.apply(state.amplitudes)).real)


def expectation_model(state: StateVector, model: HamiltonianModel) -> float:
    return float(np.vdot(state.amplitudes, model.apply(state.amplitudes)).real)


def rotate_to_measurement_basis(amplitudes, n, pauli: PauliString) -> np.ndarray:
    """Rotate X and Y factors onto Z so a computational-basis readout measures the string."""
    psi = np.asarray(amplitudes)
    for qubit, letter in enumerate(pauli.letters):
        if letter in _BASIS_ROTATIONS:
            psi = apply_unitary_array(psi, n, _BASIS_ROTATIONS[letter], [qubit])
    return psi


def _rotated_parity_plus(amplitudes, n, pauli: PauliString) -> float:
    """Probability that the measured Z-parity over the non-identity qubits is +1."""
    psi = rotate_to_measurement_basis(amplitudes, n, pauli)
    mask = pauli.flip_mask | pauli.sign_mask
    index = np.arange(psi.shape[0], dtype=np.uint64)
    odd = (np.bitwise_count(index & np.uint64(mask)) & 1).astype(bool)
    return float(np.sum(np.abs(psi[~odd]) ** 2))


def sampled_expectation_pauli(state: StateVector, pauli: PauliString, shots: int, rng: RngStream):
    """(estimate, stderr) from `shots` rotated-basis measurements of one Pauli string."""
    if shots < 1:
        raise ValueError('shots must be >= 1')
    if pauli.n_qubits != state.n_qubits:
        raise ValueError(f'Pauli string {pauli.letters} does not match {state.n_qubits} qubits')
    if pauli.is_identity:
        return pauli.coefficient, 0.0

    p_plus = _rotated_parity_plus(state.amplitudes, state.n_qubits, pauli)
    if p_plus < 1e-12:
        p_plus = 0.0
    elif p_plus > 1.0 - 1e-12:
        p_plus = 1.0
    plus = int(rng.binomial(shots, p_plus))
    mean = 2.0 * plus / shots - 1.0
    std = math.sqrt(max(1.0 - mean * mean, 0.0))
    return pauli.coefficient * mean, abs(pauli.coefficient) * std / math.sqrt(shots)


def sampled_expectation_model(state: StateVector, model: HamiltonianModel, shots: int, rng: RngStream):
    """Σ over Pauli terms, each term measured in its own basis; errors add in quadrature."""
    terms = model.terms or model.pauli_decomposition()
    estimate, variance = 0.0, 0.0
    for index, term in enumerate(terms):
        value, stderr = sampled_expectation_pauli(state, term, shots, rng.spawn(index))
        estimate += value
        variance += stderr**2
    return estimate, math.sqrt(variance)


# ==========================================
# 4. SHOT-AVERAGED DENSITY MATRICES
# ==========================================

def density_from_shots(shots: ShotEnsemble) -> np.ndarray:
    if shots.states is None or len(shots.states) == 0:
        raise ValueError('density_from_shots needs a nonempty ensemble of per-shot states')
    states = np.asarray(shots.states, dtype=complex)
    rho = states.T @ states.conj() / states.shape[0]
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def principal_state(rho):
    """
    Eigenvector of the largest eigenvalue and that eigenvalue. Ties go to the last vector in
    LAPACK's ascending order. The phase is fixed so the largest component is real positive.
    """
    rho = check_hermitian(rho, tol=1e-9)
    dec = eig_hermitian(rho)
    vector = dec.eigenvectors[:, -1]
    pivot = vector[np.argmax(np.abs(vector))]
    vector = vector * (abs(pivot) / pivot)
    return StateVector.from_amplitudes(vector, normalize=True), float(dec.eigenvalues[-1])


def sample_pure_shots(rho, shots: int, rng: RngStream) -> ShotEnsemble:
    """Unravel a density matrix into per-shot pure states, one eigenvector drawn per shot."""
    if shots < 1:
        raise ValueError('shots must be >= 1')
    dec = eig_hermitian(check_hermitian(rho, tol=1e-9))
    weights = np.clip(dec.eigenvalues, 0.0, None)
    counts = rng.multinomial(shots, weights / weights.sum())
    picks = np.repeat(np.arange(dec.dim), counts)
    return ShotEnsemble(shots, states=dec.eigenvectors[:, picks].T.copy())


def shot_statistics(ensemble: ShotEnsemble, observable) -> dict:
    """Distribution of a per-shot quantity: observable(amplitudes) -> float."""
    if ensemble.states is None:
        raise ValueError('shot statistics need per-shot states')
    values = np.array([observable(state) for state in ensemble.states])
    low, median, high = np.quantile(values, [0.16, 0.5, 0.84])
    return {
        'mean': float(values.mean()),
        'std': float(values.std()),
        'q16': float(low),
        'q50': float(median),
        'q84': float(high),
    }
