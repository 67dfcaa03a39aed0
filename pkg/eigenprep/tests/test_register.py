import numpy as np
from django.test import SimpleTestCase

from eigenprep.hamiltonian import PauliString, two_spin_target
from eigenprep.numerics import RngStream
from eigenprep.register import (
    CNOT,
    HADAMARD,
    PAULI_X,
    ShotEnsemble,
    StateVector,
    apply_controlled_unitary,
    apply_unitary,
    density_from_shots,
    expectation_model,
    expectation_pauli,
    init_basis,
    measure_qubit,
    operator_matrix,
    principal_state,
    sample_bitstrings,
    sample_pure_shots,
    sampled_expectation_model,
    sampled_expectation_pauli,
    shot_statistics,
)


class RegisterTests(SimpleTestCase):
    def test_qubit_zero_is_most_significant(self):
        self.assertEqual(np.argmax(init_basis(2, '01').probabilities()), 1)
        self.assertEqual(np.argmax(init_basis(3, '100').probabilities()), 4)

    def test_init_basis_validation(self):
        with self.assertRaises(ValueError):
            init_basis(2, '011')
        with self.assertRaises(ValueError):
            init_basis(2, '0a')

    def test_state_must_be_normalized(self):
        with self.assertRaises(ValueError):
            StateVector(1, [1.0, 1.0])
        state = StateVector.from_amplitudes([1.0, 1.0], normalize=True)
        self.assertAlmostEqual(state.probabilities().sum(), 1.0)

    def test_single_qubit_gate_targets(self):
        state = apply_unitary(init_basis(2, '00'), PAULI_X, [0])
        self.assertEqual(np.argmax(state.probabilities()), int('10', 2))

    def test_controlled_gate(self):
        flipped = apply_controlled_unitary(init_basis(2, '10'), PAULI_X, 0, [1])
        self.assertAlmostEqual(flipped.probabilities()[int('11', 2)], 1.0)
        untouched = apply_controlled_unitary(init_basis(2, '01'), PAULI_X, 0, [1])
        self.assertAlmostEqual(untouched.probabilities()[int('01', 2)], 1.0)

    def test_operator_matrix_builds_cnot(self):
        np.testing.assert_allclose(operator_matrix(PAULI_X, [1], 2, control=0), CNOT)

    def test_bad_targets(self):
        state = init_basis(2, '00')
        with self.assertRaises(ValueError):
            apply_unitary(state, PAULI_X, [2])
        with self.assertRaises(ValueError):
            apply_controlled_unitary(state, PAULI_X, 0, [0])

    def test_measurement_collapses(self):
        plus = apply_unitary(init_basis(1, '0'), HADAMARD, [0])
        record, collapsed = measure_qubit(plus, 0, RngStream(3))
        self.assertAlmostEqual(record.probability, 0.5)
        self.assertAlmostEqual(collapsed.probabilities()[record.outcome], 1.0)

    def test_sample_bitstrings(self):
        plus = apply_unitary(init_basis(2, '00'), HADAMARD, [0])
        ensemble = sample_bitstrings(plus, 4000, RngStream(4))
        self.assertEqual(sum(ensemble.counts.values()), 4000)
        self.assertEqual(set(ensemble.counts), {'00', '10'})

    def test_pauli_expectations(self):
        state = init_basis(2, '01')
        self.assertAlmostEqual(expectation_pauli(state, PauliString('ZI')), 1.0)
        self.assertAlmostEqual(expectation_pauli(state, PauliString('IZ')), -1.0)
        self.assertAlmostEqual(expectation_pauli(state, PauliString('ZZ', 2.0)), -2.0)

    def test_y_basis_convention(self):
        plus_i = StateVector(1, np.array([1, 1j]) / np.sqrt(2))
        value, stderr = sampled_expectation_pauli(plus_i, PauliString('Y'), 1000, RngStream(0))
        self.assertEqual(value, 1.0)
        self.assertEqual(stderr, 0.0)

    def test_sampled_energy_is_unbiased(self):
        state = StateVector.from_amplitudes([0.6, 0.3, -0.2j, 0.7], normalize=True)
        h = two_spin_target()
        estimate, stderr = sampled_expectation_model(state, h, 20000, RngStream(11))
        self.assertLess(abs(estimate - expectation_model(state, h)), 5 * stderr)


class ShotEnsembleTests(SimpleTestCase):
    def test_density_from_identical_shots_is_pure(self):
        psi = StateVector.from_amplitudes([1, 1j], normalize=True)
        rho = density_from_shots(ShotEnsemble(5, states=np.tile(psi.amplitudes, (5, 1))))
        state, weight = principal_state(rho)
        self.assertAlmostEqual(weight, 1.0)
        self.assertAlmostEqual(state.fidelity(psi), 1.0)

    def test_unravel_mixed_state(self):
        rho = np.diag([0.75, 0.25]).astype(complex)
        ensemble = sample_pure_shots(rho, 8000, RngStream(8))
        stats = shot_statistics(ensemble, lambda amps: float(abs(amps[0]) ** 2))
        self.assertAlmostEqual(stats['mean'], 0.75, delta=0.02)

    def test_counts_must_match_shots(self):
        with self.assertRaises(ValueError):
            ShotEnsemble(3, counts={'0': 2})
