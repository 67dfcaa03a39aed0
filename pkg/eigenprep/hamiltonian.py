"""
Hamiltonian construction: weighted Pauli strings, dense Hermitian matrices, and every model the
experiments use (two-spin adiabatic pair, Heisenberg chain, single-qubit coefficient form,
one-parameter families, random Hermitian matrices, x-mixer, staggered field).

Qubit 0 is the leftmost letter of a Pauli string and the most significant bit of a basis index.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .conf import numeric_config
from .numerics import RngStream, check_hermitian, eig_hermitian

DENSE_QUBIT_LIMIT = 14

PAULI_MATRICES = {
    'I': np.eye(2, dtype=complex),
    'X': np.array([[0, 1], [1, 0]], dtype=complex),
    'Y': np.array([[0, -1j], [1j, 0]], dtype=complex),
    'Z': np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    letters: str
    coefficient: float = 1.0

    def __post_init__(self):
        letters = self.letters.upper()
        if not letters or set(letters) - set('IXYZ'):
            raise ValueError(f'Pauli string must use letters I, X, Y, Z: {self.letters!r}')
        if not math.isfinite(self.coefficient):
            raise ValueError(f'Pauli coefficient must be finite, got {self.coefficient}')
        object.__setattr__(self, 'letters', letters)
        object.__setattr__(self, 'coefficient', float(self.coefficient))

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {'I'}

    def _mask(self, chars) -> int:
        n = self.n_qubits
        return sum(1 << (n - 1 - q) for q, c in enumerate(self.letters) if c in chars)

    @property
    def flip_mask(self) -> int:
        return self._mask('XY')

    @property
    def sign_mask(self) -> int:
        return self._mask('YZ')

    def phases(self) -> np.ndarray:
        """P|x> = phase(x) |x ^ flip_mask>, without the coefficient."""
        index = np.arange(2**self.n_qubits, dtype=np.uint64)
        parity = np.bitwise_count(index & np.uint64(self.sign_mask)) & 1
        return (1j ** self.letters.count('Y')) * (1.0 - 2.0 * parity)

    def apply(self, amplitudes) -> np.ndarray:
        amplitudes = np.asarray(amplitudes)
        index = np.arange(amplitudes.shape[0])
        out = np.empty_like(amplitudes, dtype=complex)
        out[index ^ self.flip_mask] = self.coefficient * self.phases() * amplitudes
        return out

    def matrix(self) -> np.ndarray:
        dim = 2**self.n_qubits
        index = np.arange(dim)
        m = np.zeros((dim, dim), dtype=complex)
        m[index ^ self.flip_mask, index] = self.coefficient * self.phases()
        return m


def pauli_coefficient(matrix, letters: str) -> float:
    """tr(P H) / 2^n for a Hermitian H; real up to rounding."""
    unit = PauliString(letters)
    index = np.arange(matrix.shape[0])
    trace = np.sum(unit.phases() * matrix[index, index ^ unit.flip_mask])
    return float(trace.real) / matrix.shape[0]


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """
    A Hermitian operator as Pauli terms, a dense matrix, or both. When both are given they
    have to agree.
    """

    n_qubits: int
    terms: tuple = ()
    matrix: np.ndarray | None = None
    name: str = ''
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError(f'n_qubits must be >= 1, got {self.n_qubits}')
        terms = tuple(self.terms)
        for term in terms:
            if term.n_qubits != self.n_qubits:
                raise ValueError(f'term {term.letters} has {term.n_qubits} letters, expected {self.n_qubits}')
        object.__setattr__(self, 'terms', terms)

        if self.matrix is not None:
            dim = 2**self.n_qubits
            matrix = check_hermitian(self.matrix)
            if matrix.shape != (dim, dim):
                raise ValueError(f'matrix shape {matrix.shape} does not match {self.n_qubits} qubits')
            matrix = 0.5 * (matrix + matrix.conj().T)
            matrix.setflags(write=False)
            object.__setattr__(self, 'matrix', matrix)
            if terms:
                deviation = float(np.abs(self._from_terms() - matrix).max())
                if deviation > numeric_config().eigen_residual_tol:
                    raise ValueError(f'dense and Pauli representations differ by {deviation:.3e}')

    def __repr__(self):
        label = self.name or 'hamiltonian'
        return f'<HamiltonianModel {label}: {self.n_qubits} qubits, {len(self.terms)} terms>'

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def _from_terms(self) -> np.ndarray:
        if self.n_qubits > DENSE_QUBIT_LIMIT:
            raise ValueError(f'{self.n_qubits} qubits is beyond the dense limit of {DENSE_QUBIT_LIMIT}')
        dense = np.zeros((self.dim, self.dim), dtype=complex)
        for term in self.terms:
            dense += term.matrix()
        return dense

    @cached_property
    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        dense = self._from_terms()
        dense.setflags(write=False)
        return dense

    @cached_property
    def spectrum(self):
        return eig_hermitian(self.dense)

    def apply(self, amplitudes) -> np.ndarray:
        if self.matrix is None and self.terms:
            return sum(term.apply(amplitudes) for term in self.terms)
        return self.dense @ np.asarray(amplitudes)

    def pauli_decomposition(self, tol=1e-12) -> tuple:
        """Project the dense matrix onto all 4^n Pauli strings, keeping |c| > tol."""
        dense = self.dense
        found = []
        for letters in itertools.product('IXYZ', repeat=self.n_qubits):
            coefficient = pauli_coefficient(dense, ''.join(letters))
            if abs(coefficient) > tol:
                found.append(PauliString(''.join(letters), coefficient))
        return tuple(found)

    def scaled(self, factor: float) -> 'HamiltonianModel':
        return linear_combination([(factor, self)])


def linear_combination(pairs, name='') -> HamiltonianModel:
    """Σ w_i H_i. Pauli terms are merged by letters when every model carries them."""
    pairs = list(pairs)
    n = pairs[0][1].n_qubits
    if any(model.n_qubits != n for _, model in pairs):
        raise ValueError('cannot combine Hamiltonians on different qubit counts')

    if all(model.matrix is None and model.terms for _, model in pairs):
        merged = {}
        for weight, model in pairs:
            for term in model.terms:
                merged[term.letters] = merged.get(term.letters, 0.0) + weight * term.coefficient
        terms = tuple(PauliString(k, v) for k, v in merged.items() if v != 0.0)
        if terms:
            return HamiltonianModel(n, terms=terms, name=name)

    matrix = sum(weight * model.dense for weight, model in pairs)
    return HamiltonianModel(n, matrix=np.array(matrix, dtype=complex), name=name)


# ==========================================
# MODELS
# ==========================================

def from_terms(terms, name='', **parameters) -> HamiltonianModel:
    terms = tuple(t if isinstance(t, PauliString) else PauliString(*t) for t in terms)
    return HamiltonianModel(terms[0].n_qubits, terms=terms, name=name, parameters=parameters)


def single_qubit(c_i: float, c_x: float, c_y: float, c_z: float) -> HamiltonianModel:
    return from_terms(
        [('I', c_i), ('X', c_x), ('Y', c_y), ('Z', c_z)],
        name='single_qubit',
        c_i=c_i, c_x=c_x, c_y=c_y, c_z=c_z,
    )


def _letters(n, placements) -> str:
    chars = ['I'] * n
    for qubit, letter in placements:
        chars[qubit] = letter
    return ''.join(chars)


def heisenberg_chain(sites: int, coupling: float, magnetic_field: float, periodic=True, dense=True) -> HamiltonianModel:
    """J Σ σ_j·σ_k over nearest neighbours plus h Σ σ^z_j."""
    if sites < 2:
        raise ValueError(f'Heisenberg chain needs at least 2 sites, got {sites}')
    if dense and sites > DENSE_QUBIT_LIMIT:
        raise ValueError(f'dense mode supports at most {DENSE_QUBIT_LIMIT} sites, got {sites}')

    bonds = [(j, j + 1) for j in range(sites - 1)]
    if periodic:
        bonds.append((sites - 1, 0))
    terms = [
        PauliString(_letters(sites, [(j, axis), (k, axis)]), coupling)
        for j, k in bonds
        for axis in 'XYZ'
    ]
    terms += [PauliString(_letters(sites, [(j, 'Z')]), magnetic_field) for j in range(sites)]
    return HamiltonianModel(
        sites,
        terms=tuple(terms),
        name='heisenberg',
        parameters={'sites': sites, 'coupling': coupling, 'field': magnetic_field, 'periodic': periodic},
    )


def staggered_field(sites: int) -> HamiltonianModel:
    """Σ_j (-1)^j σ^z_j with sites counted from 1; its ground state is |0101...>."""
    terms = [PauliString(_letters(sites, [(q, 'Z')]), (-1.0) ** (q + 1)) for q in range(sites)]
    return HamiltonianModel(sites, terms=tuple(terms), name='staggered_field', parameters={'sites': sites})


def two_spin_initial() -> HamiltonianModel:
    return from_terms([('XI', 1.0), ('IX', 1.0)], name='two_spin_initial')


def two_spin_target() -> HamiltonianModel:
    return from_terms(
        [('XX', -1.0), ('YY', 1.0), ('ZZ', 0.5), ('ZI', -1.0), ('IZ', -1.0)],
        name='two_spin_target',
    )


def two_spin_pair():
    return two_spin_initial(), two_spin_target()


def two_spin_ground_states():
    """
    Closed-form ground states of the two-spin pair, normalized. Spin-up is |0> (Z = +1), so
    the target ground state is |00> + (sqrt(2) - 1)|11> up to normalization.
    """
    initial = 0.5 * np.array([1, -1, -1, 1], dtype=complex)
    target = np.array([1.0, 0.0, 0.0, math.sqrt(2.0) - 1.0], dtype=complex)
    return initial, target / np.linalg.norm(target)


def x_mixer(n_qubits: int) -> HamiltonianModel:
    if n_qubits < 1:
        raise ValueError('x-mixer needs at least one qubit')
    terms = [PauliString(_letters(n_qubits, [(q, 'X')])) for q in range(n_qubits)]
    return HamiltonianModel(n_qubits, terms=tuple(terms), name='x_mixer')


def x_mixer_ground_state(n_qubits: int) -> np.ndarray:
    """|->^n: amplitude (-1)^popcount(x) / sqrt(2^n)."""
    index = np.arange(2**n_qubits, dtype=np.uint64)
    signs = 1.0 - 2.0 * (np.bitwise_count(index) & 1)
    return signs.astype(complex) / math.sqrt(2**n_qubits)


def random_hermitian(n_qubits: int, rng: RngStream) -> HamiltonianModel:
    """
    Strictly-upper entries get real and imaginary parts uniform on [-1, 1], the diagonal is
    real uniform on [-1, 1], and the result is A + A^H.
    """
    if n_qubits < 1:
        raise ValueError('random Hermitian needs at least one qubit')
    dim = 2**n_qubits
    upper = np.triu_indices(dim, k=1)
    count = upper[0].size
    a = np.zeros((dim, dim), dtype=complex)
    a[upper] = rng.uniform(-1.0, 1.0, count) + 1j * rng.uniform(-1.0, 1.0, count)
    a[np.diag_indices(dim)] = rng.uniform(-1.0, 1.0, dim)
    return HamiltonianModel(
        n_qubits, matrix=a + a.conj().T, name='random_hermitian', parameters={'seed': rng.seed}
    )


def interpolate(h0: HamiltonianModel, h_target: HamiltonianModel, f: float) -> HamiltonianModel:
    """f·H0 + (1 - f)·HT. The endpoints return the inputs themselves."""
    if h0.n_qubits != h_target.n_qubits:
        raise ValueError(f'dimension mismatch: {h0.n_qubits} vs {h_target.n_qubits} qubits')
    if f == 1.0:
        return h0
    if f == 0.0:
        return h_target
    return linear_combination([(f, h0), (1.0 - f, h_target)], name='interpolated')


@dataclass(frozen=True, eq=False)
class HamiltonianFamily:
    """H(phi) = base + phi * perturbation."""

    base: HamiltonianModel
    perturbation: HamiltonianModel

    def __post_init__(self):
        if self.base.n_qubits != self.perturbation.n_qubits:
            raise ValueError('family members must act on the same number of qubits')


def family_at(family: HamiltonianFamily, phi: float) -> HamiltonianModel:
    if phi == 0.0:
        return family.base
    return linear_combination([(1.0, family.base), (phi, family.perturbation)], name='family')


# Coefficients (c_I, c_X, c_Y, c_Z) of the single-qubit family used by the scan and
# Hellmann-Feynman experiments.
SINGLE_QUBIT_BASE = (-0.08496, -0.89134, 0.26536, 0.57205)
SINGLE_QUBIT_PERTURBATION = (-0.84537, 0.00673, -0.29354, 0.18477)


def single_qubit_family() -> HamiltonianFamily:
    return HamiltonianFamily(single_qubit(*SINGLE_QUBIT_BASE), single_qubit(*SINGLE_QUBIT_PERTURBATION))


def total_magnetization(n_qubits: int) -> HamiltonianModel:
    terms = [PauliString(_letters(n_qubits, [(q, 'Z')])) for q in range(n_qubits)]
    return HamiltonianModel(n_qubits, terms=tuple(terms), name='magnetization')
