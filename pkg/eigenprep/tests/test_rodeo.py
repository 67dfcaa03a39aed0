import math

import numpy as np
from django.test import SimpleTestCase, tag

from eigenprep.exceptions import ConfigError
from eigenprep.hamiltonian import (
    SINGLE_QUBIT_BASE,
    heisenberg_chain,
    random_hermitian,
    single_qubit,
    single_qubit_family,
)
from eigenprep.numerics import RngStream, gaussian_sample
from eigenprep.register import StateVector, init_basis
from eigenprep.rodeo import (
    RodeoConfig,
    eigenspace_overlap,
    eigenstate_overlaps,
    energy_scan,
    exact_level_slope,
    gaussian_average_factor,
    hellmann_feynman,
    match_eigenvalue,
    residual_estimates,
    run_rodeo_exact,
    run_rodeo_sampled,
    sequential_scan,
    spectral_weights,
    success_probability_asymptotic,
    success_probability_formula,
    uniform_average_factor,
    uniform_time_success,
)

EIGENVALUES = (-1.1768, 1.0069)


class SingleRunTests(SimpleTestCase):
    def setUp(self):
        self.h = single_qubit(*SINGLE_QUBIT_BASE)
        self.initial = init_basis(1, '0')

    def test_exact_run_matches_closed_form(self):
        times = [0.7, 1.3, -2.1]
        outcome = run_rodeo_exact(self.initial, self.h, RodeoConfig(0.3, 1.0, 3, times=times))
        energies, weights = spectral_weights(self.initial, self.h)
        expected = success_probability_formula(weights, energies, 0.3, times)
        self.assertAlmostEqual(outcome.success_probability, expected, delta=1e-10)
        self.assertEqual(len(outcome.cycle_probabilities), 3)
        self.assertAlmostEqual(np.linalg.norm(outcome.post_selected_state.amplitudes), 1.0)

    def test_resonant_cycles_filter_toward_the_eigenstate(self):
        energy = self.h.spectrum.eigenvalues[0]
        before = eigenspace_overlap(self.initial, self.h, energy)
        outcome = run_rodeo_exact(self.initial, self.h, RodeoConfig(energy, 5.0, 6), RngStream(11))
        self.assertGreater(eigenspace_overlap(outcome.post_selected_state, self.h, energy), before)

    def test_times_length_must_match_cycles(self):
        with self.assertRaises(ValueError):
            RodeoConfig(0.0, 1.0, 3, times=[1.0, 2.0])
        with self.assertRaises(ValueError):
            RodeoConfig(0.0, 1.0, 0)

    def test_sampled_frequency_agrees_with_exact(self):
        config = RodeoConfig(1.0, 2.0, 3, times=gaussian_sample(RngStream(3), 0.0, 2.0, 3))
        exact = run_rodeo_exact(self.initial, self.h, config).success_probability
        sampled = run_rodeo_sampled(self.initial, self.h, config, 10_000, RngStream(4))
        self.assertLess(abs(sampled.success_frequency - exact), 5 * sampled.stderr)

    def test_sampled_outcome_ignores_thread_count(self):
        config = RodeoConfig(1.0, 2.0, 2, seed=9)
        one = run_rodeo_sampled(self.initial, self.h, config, 300, RngStream(8), threads=1)
        four = run_rodeo_sampled(self.initial, self.h, config, 300, RngStream(8), threads=4)
        self.assertEqual(one.successes, four.successes)


class RandomInstanceTests(SimpleTestCase):
    """Exact runs, the closed form and the sampled circuit on seeded random problems."""

    INSTANCES = 30

    def instance(self, index):
        rng = RngStream(4040).spawn(index)
        n = int(rng.integers(1, 7))
        h = random_hermitian(n, rng)
        amplitudes = rng.uniform(-1.0, 1.0, h.dim) + 1j * rng.uniform(-1.0, 1.0, h.dim)
        initial = StateVector.from_amplitudes(amplitudes, normalize=True)
        cycles = int(rng.integers(1, 7))
        sigma = float(rng.uniform(0.3, 1.5))
        eigenvalues = h.spectrum.eigenvalues
        energy = float(rng.uniform(eigenvalues[0], eigenvalues[-1]))
        config = RodeoConfig(energy, sigma, cycles, times=gaussian_sample(rng, 0.0, sigma, cycles))
        return initial, h, config, rng

    def test_exact_run_matches_closed_form(self):
        for index in range(self.INSTANCES):
            initial, h, config, _ = self.instance(index)
            with self.subTest(instance=index, n_qubits=h.n_qubits, cycles=config.cycles):
                energies, weights = spectral_weights(initial, h)
                expected = success_probability_formula(weights, energies, config.energy, config.times)
                self.assertAlmostEqual(run_rodeo_exact(initial, h, config).success_probability, expected, delta=1e-10)

    @tag('slow')
    def test_sampled_frequency_agrees_with_exact(self):
        shots = 4000
        for index in range(self.INSTANCES):
            initial, h, config, rng = self.instance(index)
            with self.subTest(instance=index, n_qubits=h.n_qubits, cycles=config.cycles):
                exact = run_rodeo_exact(initial, h, config).success_probability
                sampled = run_rodeo_sampled(initial, h, config, shots, rng.spawn(1))
                stderr = math.sqrt(exact * (1.0 - exact) / shots)
                self.assertLess(abs(sampled.success_frequency - exact), 5 * stderr + 1.0 / shots)


class ClosedFormTests(SimpleTestCase):
    def test_formula_requires_normalized_weights(self):
        with self.assertRaises(ValueError):
            success_probability_formula([0.5, 0.4], [0.0, 1.0], 0.0, [1.0])

    def test_formula_on_resonance(self):
        self.assertAlmostEqual(success_probability_formula([0.3, 0.7], [0.0, 1.0], 0.0, [math.pi]), 0.3)

    def test_gaussian_factor_against_sampling(self):
        times = gaussian_sample(RngStream(21), 0.0, 1.5, 200_000)
        for delta_e in (0.2, 0.8, 2.0):
            sampled = np.mean(np.cos(delta_e * times / 2.0) ** 2)
            self.assertAlmostEqual(sampled / float(gaussian_average_factor(delta_e, 1.5)), 1.0, delta=0.02)

    def test_asymptotic_limits(self):
        self.assertAlmostEqual(success_probability_asymptotic(0.4, 0.0, 3.0, 5), 0.4)
        self.assertAlmostEqual(success_probability_asymptotic(0.4, 10.0, 3.0, 3), 0.4 / 8)
        with self.assertRaises(ValueError):
            success_probability_asymptotic(1.5, 0.0, 1.0, 1)

    def test_uniform_factor(self):
        self.assertAlmostEqual(float(uniform_average_factor(0.0, 8.0)), 1.0)
        self.assertAlmostEqual(float(uniform_average_factor(math.pi / 8.0, 8.0)), 0.5)
        value, stderr = uniform_time_success(init_basis(1, '0'), single_qubit(0, 0, 0, 1), 1.0, 8.0, 1, 2000,
                                             RngStream(5))
        self.assertLess(abs(value - 1.0), 1e-12)
        self.assertEqual(stderr, 0.0)

    def test_residual_estimates(self):
        f_a, f_g = residual_estimates(0.5, 1)
        self.assertAlmostEqual(f_a, math.sqrt(1.0 / 3.0))
        self.assertAlmostEqual(f_g, math.sqrt(0.2))
        self.assertEqual(residual_estimates(1.0, 4), (0.0, 0.0))
        with self.assertRaises(ValueError):
            residual_estimates(0.0, 2)


class ScanTests(SimpleTestCase):
    def setUp(self):
        self.h = single_qubit(*SINGLE_QUBIT_BASE)
        self.initial = init_basis(1, '0')

    def test_background_far_from_the_spectrum(self):
        scan = energy_scan(self.initial, self.h, [-3.5, 3.5], 7.0, 3, 400, RngStream(31))
        for success, stderr in zip(scan.success, scan.stderr):
            self.assertLess(abs(success - 0.125), 3 * stderr + 1e-3)

    def test_scan_is_independent_of_threads(self):
        grid = np.linspace(-2, 2, 9)
        one = energy_scan(self.initial, self.h, grid, 2.0, 3, 50, RngStream(2), threads=1)
        three = energy_scan(self.initial, self.h, grid, 2.0, 3, 50, RngStream(2), threads=3)
        np.testing.assert_array_equal(one.success, three.success)

    def test_scan_grid_must_increase(self):
        with self.assertRaises(ValueError):
            energy_scan(self.initial, self.h, [1.0, 0.0], 2.0, 3, 10, RngStream(2))

    def test_sequential_scan_recovers_both_levels(self):
        report = sequential_scan(self.initial, self.h, -2.0, 2.0, 3, 3.5, 41, 3, 400, RngStream(20220107),
                                 sigma0=2.0)
        self.assertEqual(len(report.peaks), 2)
        for peak, expected in zip(report.peaks, sorted(EIGENVALUES)):
            self.assertLess(abs(peak.energy - expected), 1e-3 * abs(expected))
            self.assertEqual(peak.passes, 3)
        self.assertEqual(report.terminated, [])

    def test_sequential_scan_arguments(self):
        with self.assertRaises(ValueError):
            sequential_scan(self.initial, self.h, -2.0, 2.0, 3, 1.0, 41, 3, 10, RngStream(1))
        with self.assertRaises(ValueError):
            sequential_scan(self.initial, self.h, 2.0, -2.0, 3, 3.5, 41, 3, 10, RngStream(1))


class PreparationTests(SimpleTestCase):
    def test_label_without_eigenvalue(self):
        with self.assertRaises(ConfigError):
            match_eigenvalue(single_qubit(*SINGLE_QUBIT_BASE), 5.0)
        self.assertAlmostEqual(match_eigenvalue(single_qubit(*SINGLE_QUBIT_BASE), -1.18), -1.17681, places=4)

    @tag('slow')
    def test_heisenberg_ring_overlaps(self):
        h = heisenberg_chain(10, 1.0, 3.0)
        frame = eigenstate_overlaps(init_basis(10, '0101010101'), h, [-18.1, -16.4], [0, 9], 5.0, 20, RngStream(6))
        np.testing.assert_allclose(frame['N=0'], [0.110, 0.209], atol=0.05)
        self.assertTrue((frame['N=9'] > 0.9).all())


class HellmannFeynmanTests(SimpleTestCase):
    def test_exact_slopes(self):
        family = single_qubit_family()
        for level, slope in ((0, -0.8653), (1, -0.8254)):
            self.assertAlmostEqual(exact_level_slope(family, level)[1], slope, delta=0.01 * abs(slope))

    def test_asymmetric_grid(self):
        with self.assertRaises(ValueError):
            hellmann_feynman(single_qubit_family(), 0, [-0.1, 0.0, 0.2], init_basis(1, '0'), RngStream(1),
                             -2.5, 2.5)

    @tag('slow')
    def test_scanned_slopes(self):
        family = single_qubit_family()
        for level, slope in ((0, -0.8653), (1, -0.8254)):
            result = hellmann_feynman(family, level, [-0.2, -0.1, 0.0, 0.1, 0.2], init_basis(1, '0'),
                                      RngStream(20220109 + level), -2.5, 2.5, sigma0=2.0)
            self.assertLess(abs(result.slope - slope), 0.01 * abs(slope))
            self.assertAlmostEqual(result.energy, EIGENVALUES[level], delta=2e-3)
