import math

import numpy as np
from django.test import SimpleTestCase, override_settings, tag

from eigenprep.conf import reset_numeric_config
from eigenprep.numerics import RngStream
from eigenprep.pulse import (
    DeviceModel,
    Dissipator,
    GrapeConfig,
    PulseSequence,
    composition_bound,
    control_operators,
    drift_hamiltonian,
    embed_unitary,
    gate_fidelity,
    grape_gradient,
    grape_objective,
    grape_optimize,
    lindblad_evolve,
    mhz_to_angular,
    propagate_pulse,
    rms_amplitude,
    with_rates,
)

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def random_pulse(device, duration, rng, scale=0.05):
    samples = int(round(duration * 8))
    return PulseSequence(duration, rng.uniform(-scale, scale, (len(device.channel_names), samples)))


class DeviceTests(SimpleTestCase):
    def test_units(self):
        self.assertAlmostEqual(mhz_to_angular(1000.0), 2 * math.pi)
        device = DeviceModel.from_mhz(200, 3)
        self.assertAlmostEqual(device.anharmonicity_mhz, 200)
        self.assertEqual(device.dim, 9)
        self.assertEqual(device.channel_names, ('I1', 'Q1', 'I2', 'Q2'))
        self.assertEqual(list(device.computational_indices), [0, 1, 3, 4])

    def test_drift_levels(self):
        device = DeviceModel.from_mhz(200, 0, n_transmons=1)
        alpha = device.anharmonicity
        np.testing.assert_allclose(np.diag(drift_hamiltonian(device)).real, [0.0, -alpha, -4 * alpha])

    def test_coupling_mixes_single_excitations(self):
        device = DeviceModel.from_mhz(200, 3)
        h = drift_hamiltonian(device)
        self.assertAlmostEqual(h[1, 3].real, -device.coupling)
        np.testing.assert_allclose(h, h.conj().T)
        for operator in control_operators(device):
            np.testing.assert_allclose(operator, operator.conj().T)

    def test_presets_supply_coherence_times(self):
        device = DeviceModel.from_mhz(200, 3, preset='ibmq_belem')
        self.assertEqual(device.t1, (102_600.0, 70_400.0))
        self.assertEqual(with_rates(device, t1=(1.0, 2.0)).t1, (1.0, 2.0))
        with self.assertRaises(ValueError):
            DeviceModel.from_mhz(200, 3, preset='ibmq_nowhere')
        with self.assertRaises(ValueError):
            DeviceModel.from_mhz(-200, 3)


class PulseShapeTests(SimpleTestCase):
    def test_whole_samples_only(self):
        with self.assertRaises(ValueError):
            PulseSequence(1.01, np.zeros((2, 8)))
        with self.assertRaises(ValueError):
            PulseSequence(1.0, np.zeros((2, 7)))

    def test_rms_of_a_constant_pulse(self):
        eps_cut = mhz_to_angular(30)
        channels = np.zeros((2, 80))
        channels[0] = eps_cut
        self.assertAlmostEqual(rms_amplitude(PulseSequence(10.0, channels), eps_cut), 1.0)
        self.assertEqual(rms_amplitude(PulseSequence(10.0, np.zeros((2, 80))), eps_cut), 0.0)

    def test_embedding_keeps_leakage_levels_fixed(self):
        device = DeviceModel.from_mhz(200, 0, n_transmons=1)
        embedded = embed_unitary(PAULI_X, device)
        np.testing.assert_allclose(embedded[:2, :2], PAULI_X)
        self.assertEqual(embedded[2, 2], 1.0)
        with self.assertRaises(ValueError):
            embed_unitary(CNOT, device)

    def test_gate_fidelity(self):
        self.assertAlmostEqual(gate_fidelity(CNOT, -1j * CNOT), 1.0)
        self.assertAlmostEqual(gate_fidelity(np.eye(2), PAULI_X), 0.0)


class GrapeTests(SimpleTestCase):
    def setUp(self):
        self.device = DeviceModel.from_mhz(200, 3)
        self.target = embed_unitary(CNOT, self.device)

    def test_analytic_gradient_matches_finite_differences(self):
        pulse = random_pulse(self.device, 2.0, RngStream(41))
        for subspace in ('full', 'computational'):
            analytic = grape_gradient(self.device, pulse, self.target, GrapeConfig(subspace=subspace))
            numeric = grape_gradient(self.device, pulse, self.target,
                                     GrapeConfig(subspace=subspace, gradient='finite_difference'))
            np.testing.assert_allclose(analytic, numeric, atol=1e-6)

    def test_zero_pulse_against_free_evolution(self):
        zero = PulseSequence.zeros(self.device, 15.0)
        free = propagate_pulse(self.device, zero)
        self.assertAlmostEqual(grape_objective(self.device, zero, free, GrapeConfig()), 0.5, places=12)
        result = grape_optimize(self.device, free, 15.0, GrapeConfig(max_iter=20), RngStream(1), initial=zero)
        self.assertAlmostEqual(result.objective, 0.5, delta=1e-6)
        self.assertTrue(result.converged)

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            GrapeConfig(gradient='adjoint')
        with self.assertRaises(ValueError):
            GrapeConfig(harshness=0)
        with self.assertRaises(ValueError):
            grape_optimize(self.device, CNOT, 15.0, GrapeConfig(), RngStream(1))

    @tag('slow')
    def test_single_transmon_pi_pulse(self):
        device = DeviceModel.from_mhz(200, 0, n_transmons=1)
        config = GrapeConfig(target_infidelity=1e-5)
        result = grape_optimize(device, embed_unitary(PAULI_X, device), 120.0, config, RngStream(20220115))
        self.assertLess(1.0 - result.fidelity, 1e-3)


class LindbladTests(SimpleTestCase):
    def test_closed_system_limit(self):
        device = DeviceModel.from_mhz(200, 3)
        pulse = random_pulse(device, 3.0, RngStream(5))
        rho0 = np.zeros((9, 9), dtype=complex)
        rho0[1, 1] = 1.0
        u = propagate_pulse(device, pulse)
        result = lindblad_evolve(device, rho0, pulse)
        np.testing.assert_allclose(result.rho, u @ rho0 @ u.conj().T, atol=1e-10)
        self.assertEqual(result.trace_log, 0.0)

    def test_relaxation_of_the_excited_level(self):
        device = DeviceModel.from_mhz(200, 0, t1=(1000.0,), levels=2, n_transmons=1)
        rho0 = np.diag([0.0, 1.0]).astype(complex)
        pulse = PulseSequence.zeros(device, 100.0)
        result = lindblad_evolve(device, rho0, pulse, dissipator='standard', record_every=400)
        self.assertAlmostEqual(result.rho[1, 1].real / math.exp(-0.1), 1.0, delta=0.02)
        self.assertAlmostEqual(np.trace(result.rho).real, 1.0)
        self.assertEqual(len(result.snapshots), 2)

    def test_renormalized_form_stays_a_density_matrix(self):
        device = DeviceModel.from_mhz(200, 3, t1=(500.0, 600.0), t2=(700.0, 800.0))
        rho0 = np.zeros((9, 9), dtype=complex)
        rho0[4, 4] = 1.0
        result = lindblad_evolve(device, rho0, random_pulse(device, 5.0, RngStream(6)))
        self.assertAlmostEqual(np.trace(result.rho).real, 1.0)
        self.assertGreater(np.linalg.eigvalsh(result.rho).min(), -1e-8)

    def test_renormalized_relaxation_rate(self):
        # the leaky channel only feeds the ground level, so 1 - rho00 / rho11 = exp(-t / T1)
        t1 = 100.0
        device = DeviceModel.from_mhz(200, 0, t1=(t1,), levels=2, n_transmons=1)
        rho0 = np.diag([0.0, 1.0]).astype(complex)
        result = lindblad_evolve(device, rho0, PulseSequence.zeros(device, 100.0), record_every=200)
        self.assertEqual(len(result.snapshots), 4)
        for t, rho in zip(result.times, result.snapshots):
            rate = -math.log(1.0 - rho[0, 0].real / rho[1, 1].real) / t
            self.assertAlmostEqual(rate * t1, 1.0, delta=0.02)
        self.assertAlmostEqual(result.rho[1, 1].real, 1.0 / (2.0 - math.exp(-1.0)), places=8)
        self.assertAlmostEqual(result.trace_log, math.log(2.0 - math.exp(-1.0)), places=8)

    @override_settings(EIGENPREP_NUMERICS={'trace_drift_tol': 1.0})
    def test_step_halving_shows_fourth_order(self):
        reset_numeric_config()
        self.addCleanup(reset_numeric_config)
        t1 = duration = 10.0
        device = DeviceModel.from_mhz(200, 0, t1=(t1,), levels=2, n_transmons=1)
        rho0 = np.diag([0.0, 1.0]).astype(complex)
        exact = 1.0 / (2.0 - math.exp(-duration / t1))
        errors = []
        for rate in (1, 2, 4):
            pulse = PulseSequence.zeros(device, duration, rate)
            errors.append(abs(lindblad_evolve(device, rho0, pulse).rho[1, 1].real - exact))
        for coarse, fine in zip(errors, errors[1:]):
            self.assertGreater(coarse / fine, 12.0)

    @tag('slow')
    def test_trace_drift_over_long_pulses(self):
        device = DeviceModel.from_mhz(200, 3, preset='ibmq_belem')
        rho0 = np.zeros((9, 9), dtype=complex)
        rho0[4, 4] = 1.0
        pulse = random_pulse(device, 2500.0, RngStream(25), scale=0.01)
        renormalized = lindblad_evolve(device, rho0, pulse)
        self.assertLess(renormalized.trace_drift, 1e-6)
        standard = lindblad_evolve(device, rho0, pulse, dissipator='standard')
        self.assertLess(abs(standard.trace_log), 1e-6)
        self.assertAlmostEqual(np.trace(standard.rho).real, 1.0)

    def test_invalid_inputs(self):
        device = DeviceModel.from_mhz(200, 0, levels=2, n_transmons=1)
        with self.assertRaises(ValueError):
            Dissipator(device, 'lossy')
        with self.assertRaises(ValueError):
            lindblad_evolve(device, np.diag([0.5, 0.6]).astype(complex), PulseSequence.zeros(device, 1.0))


class CompositionTests(SimpleTestCase):
    def test_bound(self):
        self.assertEqual(composition_bound([1.0, 1.0], 4), 0.0)
        self.assertAlmostEqual(composition_bound([0.99, 0.99], 4), 2 * math.sqrt(0.08))
