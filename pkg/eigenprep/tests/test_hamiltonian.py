import math

import numpy as np
from django.test import SimpleTestCase

from eigenprep.hamiltonian import (
    HamiltonianFamily,
    HamiltonianModel,
    PauliString,
    family_at,
    from_terms,
    heisenberg_chain,
    interpolate,
    linear_combination,
    random_hermitian,
    single_qubit,
    single_qubit_family,
    staggered_field,
    total_magnetization,
    two_spin_ground_states,
    two_spin_pair,
    x_mixer,
    x_mixer_ground_state,
)
from eigenprep.numerics import RngStream
from eigenprep.rodeo import exact_level_slope


class PauliStringTests(SimpleTestCase):
    def test_letters_are_validated(self):
        with self.assertRaises(ValueError):
            PauliString('XQ')
        with self.assertRaises(ValueError):
            PauliString('X', math.inf)

    def test_matrix_uses_msb_convention(self):
        expected = np.kron(np.array([[0, 1], [1, 0]]), np.diag([1, -1]))
        np.testing.assert_allclose(PauliString('XZ').matrix(), expected)

    def test_apply_matches_matrix(self):
        pauli = PauliString('YXZ', -0.7)
        psi = RngStream(1).uniform(-1, 1, 8) + 1j * RngStream(2).uniform(-1, 1, 8)
        np.testing.assert_allclose(pauli.apply(psi), pauli.matrix() @ psi, atol=1e-14)


class HamiltonianModelTests(SimpleTestCase):
    def test_two_spin_ground_energy(self):
        _, target = two_spin_pair()
        self.assertAlmostEqual(target.spectrum.eigenvalues[0], 0.5 - 2 * math.sqrt(2), places=10)
        self.assertAlmostEqual(target.spectrum.eigenvalues[0], -2.328, places=3)

    def test_two_spin_closed_form_ground_states(self):
        initial, target = two_spin_pair()
        phi0, phiT = two_spin_ground_states()
        self.assertAlmostEqual(abs(np.vdot(initial.spectrum.eigenvectors[:, 0], phi0)), 1.0, places=10)
        self.assertAlmostEqual(abs(np.vdot(target.spectrum.eigenvectors[:, 0], phiT)), 1.0, places=10)

    def test_pauli_decomposition_round_trip(self):
        model = from_terms([('XX', -1.0), ('YY', 1.0), ('ZZ', 0.5), ('ZI', -1.0)])
        recovered = {t.letters: t.coefficient for t in HamiltonianModel(2, matrix=model.dense).pauli_decomposition()}
        self.assertEqual(set(recovered), {'XX', 'YY', 'ZZ', 'ZI'})
        self.assertAlmostEqual(recovered['ZZ'], 0.5)

    def test_inconsistent_representations_rejected(self):
        with self.assertRaises(ValueError):
            HamiltonianModel(1, terms=(PauliString('Z'),), matrix=np.eye(2))

    def test_linear_combination_merges_terms(self):
        combined = linear_combination([(1.0, from_terms([('Z', 1.0)])), (2.0, from_terms([('Z', 0.5), ('X', 1.0)]))])
        coefficients = {t.letters: t.coefficient for t in combined.terms}
        self.assertEqual(coefficients, {'Z': 2.0, 'X': 2.0})

    def test_interpolation_endpoints(self):
        h0, hT = two_spin_pair()
        self.assertIs(interpolate(h0, hT, 1.0), h0)
        self.assertIs(interpolate(h0, hT, 0.0), hT)
        np.testing.assert_allclose(interpolate(h0, hT, 0.25).dense, 0.25 * h0.dense + 0.75 * hT.dense)


class ModelTests(SimpleTestCase):
    def test_heisenberg_ring(self):
        h = heisenberg_chain(10, 1.0, 3.0)
        self.assertEqual(len(h.terms), 40)
        self.assertEqual(len(heisenberg_chain(10, 1.0, 3.0, periodic=False).terms), 37)
        with self.assertRaises(ValueError):
            heisenberg_chain(1, 1.0, 0.0)

    def test_heisenberg_conserves_magnetization(self):
        for sites, periodic in ((4, True), (5, False), (10, True)):
            h = heisenberg_chain(sites, 1.0, 3.0, periodic=periodic).dense
            m = total_magnetization(sites).dense
            self.assertLess(np.linalg.norm(h @ m - m @ h), 1e-10)

    def test_staggered_field_ground_state(self):
        h = staggered_field(6)
        self.assertEqual(int(np.argmax(np.abs(h.spectrum.eigenvectors[:, 0]))), int('010101', 2))
        self.assertAlmostEqual(h.spectrum.eigenvalues[0], -6.0)

    def test_x_mixer_ground_state(self):
        ground = x_mixer_ground_state(3)
        self.assertAlmostEqual(abs(np.vdot(x_mixer(3).spectrum.eigenvectors[:, 0], ground)), 1.0, places=10)

    def test_random_hermitian_is_reproducible(self):
        a = random_hermitian(3, RngStream(42))
        b = random_hermitian(3, RngStream(42))
        np.testing.assert_array_equal(a.dense, b.dense)
        np.testing.assert_allclose(a.dense, a.dense.conj().T)
        self.assertEqual(a.parameters['seed'], 42)

    def test_single_qubit_eigenvalues(self):
        h = single_qubit(-0.08496, -0.89134, 0.26536, 0.57205)
        np.testing.assert_allclose(h.spectrum.eigenvalues, [-1.1768, 1.0069], atol=2e-4)


class FamilyTests(SimpleTestCase):
    def test_family_is_linear_in_phi(self):
        family = single_qubit_family()
        np.testing.assert_allclose(family_at(family, 0.1).dense,
                                   family.base.dense + 0.1 * family.perturbation.dense)
        self.assertIs(family_at(family, 0.0), family.base)

    def test_level_slopes(self):
        family = single_qubit_family()
        _, slope0 = exact_level_slope(family, 0)
        _, slope1 = exact_level_slope(family, 1)
        self.assertAlmostEqual(slope0, -0.8653, delta=0.8653 * 0.01)
        self.assertAlmostEqual(slope1, -0.8254, delta=0.8254 * 0.01)

    def test_family_members_must_match(self):
        with self.assertRaises(ValueError):
            HamiltonianFamily(single_qubit(0, 0, 0, 1), x_mixer(2))
