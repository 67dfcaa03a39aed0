import math

import numpy as np
from django.test import SimpleTestCase

from eigenprep.adiabatic import (
    EulerAngles,
    Schedule,
    confusion_build,
    confusion_forward,
    confusion_from_calibration,
    confusion_mitigate,
    confusion_solve,
    controlled_block,
    controlled_evolution_angles,
    controlled_gate_from_angles,
    evolve,
    fidelity_via_uncompute,
    interpolation_f,
    mitigated_expectation_zz,
    prepare,
    run_adiabatic,
    run_adiabatic_ode,
    sampled_fidelity_via_uncompute,
    short_time_propagators,
    two_spin_preparation,
)
from eigenprep.exceptions import SingularConfusionMatrixError
from eigenprep.hamiltonian import two_spin_pair
from eigenprep.numerics import RngStream, expm_unitary

GROUND_ENERGY = 0.5 - 2 * math.sqrt(2)


class ScheduleTests(SimpleTestCase):
    def test_interpolation_runs_from_h0_to_target(self):
        self.assertEqual(interpolation_f(0.0, 20.0), 1.0)
        self.assertAlmostEqual(interpolation_f(20.0, 20.0), 0.0)
        self.assertAlmostEqual(interpolation_f(10.0, 20.0), 0.5)
        with self.assertRaises(ValueError):
            interpolation_f(21.0, 20.0)

    def test_schedule_validation(self):
        with self.assertRaises(ValueError):
            Schedule(0.0, 10)
        with self.assertRaises(ValueError):
            Schedule(10.0, 0)
        self.assertEqual(len(Schedule(16.0, 160).times), 161)


class TwoSpinEvolutionTests(SimpleTestCase):
    def setUp(self):
        self.h0, self.target = two_spin_pair()
        self.initial = prepare(2, two_spin_preparation())

    def test_preparation_is_the_initial_ground_state(self):
        self.assertAlmostEqual(self.initial.fidelity(self.h0.spectrum.eigenvectors[:, 0]), 1.0, places=12)

    def test_fine_schedule_tracks_the_ground_state(self):
        trajectory = run_adiabatic(self.h0, self.target, Schedule(16.0, 160), self.initial)
        self.assertLess(1.0 - trajectory.final_fidelity, 1e-3)
        self.assertAlmostEqual(trajectory.fidelity[0], 1.0, places=12)

    def test_coarse_schedule_energy(self):
        trajectory = run_adiabatic(self.h0, self.target, Schedule(20.0, 20), self.initial)
        self.assertAlmostEqual(trajectory.final_energy, -2.328, delta=0.01)
        self.assertGreaterEqual(trajectory.final_energy, GROUND_ENERGY - 1e-12)
        self.assertEqual(len(trajectory.to_frame()), 21)

    def test_ideal_uncompute_returns_to_the_start(self):
        schedule = Schedule(20.0, 20)
        trajectory = run_adiabatic(self.h0, self.target, schedule, self.initial)
        np.testing.assert_allclose(trajectory.uncompute_fidelity, 1.0, atol=1e-10)
        self.assertAlmostEqual(fidelity_via_uncompute(self.h0, self.target, schedule, 7), 1.0, places=10)

    def test_sampled_uncompute(self):
        schedule = Schedule(20.0, 20)
        value, stderr = sampled_fidelity_via_uncompute(self.h0, self.target, schedule, 20, 8192, RngStream(5))
        self.assertEqual(value, 1.0)
        self.assertEqual(stderr, 0.0)

    def test_ode_agrees_with_fine_discretization(self):
        schedule = Schedule(16.0, 160)
        _, exact = run_adiabatic_ode(self.h0, self.target, 16.0, self.initial, times=schedule.times)
        stepped = evolve(self.initial.amplitudes, short_time_propagators(self.h0, self.target, schedule))
        self.assertGreater(abs(np.vdot(exact[-1], stepped[-1])), 0.999)


class ControlledEvolutionTests(SimpleTestCase):
    def test_angles_reproduce_the_controlled_propagator(self):
        rng = RngStream(2718)
        samples = [(-0.08496, -0.89134, 0.26536, 0.57205, 0.7), (0.3, 0.0, 0.0, 1.0, -2.1), (0.0, 1.0, 0.0, 0.0, 5.0)]
        samples += [tuple(rng.uniform(-2.0, 2.0, 4)) + (float(rng.uniform(-10.0, 10.0)),) for _ in range(200)]
        for c_i, c_x, c_y, c_z, t in samples:
            angles = controlled_evolution_angles(c_i, c_x, c_y, c_z, t)
            h = np.array([[c_i + c_z, c_x - 1j * c_y], [c_x + 1j * c_y, c_i - c_z]])
            np.testing.assert_allclose(controlled_gate_from_angles(angles), controlled_block(expm_unitary(h, t)),
                                       atol=1e-9)

    def test_zero_time_is_identity(self):
        angles = controlled_evolution_angles(0.5, 0.1, 0.2, 0.3, 0.0)
        self.assertEqual(angles, EulerAngles(0.0, 0.0, 0.0, 0.0))
        np.testing.assert_allclose(controlled_gate_from_angles(angles), np.eye(4), atol=1e-15)


class ConfusionMatrixTests(SimpleTestCase):
    def setUp(self):
        self.cm = confusion_build(0.05, 0.02, 0.08, 0.03)

    def test_columns_are_stochastic(self):
        np.testing.assert_allclose(self.cm.matrix.sum(axis=0), 1.0)

    def test_solve_inverts_forward(self):
        p = np.array([0.7, 0.1, 0.05, 0.15])
        np.testing.assert_allclose(confusion_solve(confusion_forward(p, self.cm), self.cm), p, atol=1e-10)

    def test_mitigation_clips_and_renormalizes(self):
        mitigated = confusion_mitigate([1000, 0, 0, 0], self.cm)
        self.assertTrue(np.all(mitigated >= 0))
        self.assertAlmostEqual(mitigated.sum(), 1.0)

    def test_singular_rates(self):
        with self.assertRaises(SingularConfusionMatrixError):
            confusion_build(0.6, 0.4, 0.0, 0.0)

    def test_calibration_counts(self):
        cm = confusion_from_calibration({'00': 90, '10': 6, '01': 4}, {'11': 85, '01': 10, '10': 5})
        (p01_q1, p10_q1), (p01_q2, p10_q2) = cm.rates
        self.assertAlmostEqual(p10_q1, 0.06)
        self.assertAlmostEqual(p01_q1, 0.10)
        self.assertAlmostEqual(p10_q2, 0.04)
        self.assertAlmostEqual(p01_q2, 0.05)

    def test_zz_expectation(self):
        self.assertAlmostEqual(mitigated_expectation_zz([0.5, 0.0, 0.0, 0.5]), 1.0)
        self.assertAlmostEqual(mitigated_expectation_zz([0.0, 0.5, 0.5, 0.0]), -1.0)
