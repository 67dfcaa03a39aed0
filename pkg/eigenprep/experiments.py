"""
Experiment runners behind the management commands. Each runner takes a validated config, a
seeded stream and an OutputSink, writes its tables as it goes and returns a report with the
summary rows and the outcome of any requested checks.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .adiabatic import (
    Schedule,
    basis_preparation,
    evolve,
    run_adiabatic,
    run_adiabatic_ode,
    sampled_fidelity_via_uncompute,
    short_time_propagators,
    two_spin_preparation,
)
from .exceptions import ConfigError
from .hamiltonian import HamiltonianFamily, two_spin_pair, x_mixer
from .helpers import build_confusion, build_hamiltonian, build_state
from .models import ExperimentRun
from .numerics import RngStream, expm_unitary, gaussian_sample
from .pulse import (
    DeviceModel,
    GrapeConfig,
    composition_bound,
    drift_hamiltonian,
    embed_unitary,
    emulate_adiabatic_with_pulses,
    grape_optimize,
    mhz_to_angular,
    rms_amplitude,
)
from .register import PAULI_X, StateVector, sampled_expectation_model
from .rodeo import (
    RodeoConfig,
    eigenstate_overlaps,
    energy_scan,
    hellmann_feynman,
    match_eigenvalue,
    prepared_observables,
    residual_vs_time,
    run_rodeo_exact,
    run_rodeo_sampled,
    sequential_scan,
    spectral_function,
    spectral_weights,
    success_probability_formula,
    uniform_average_factor,
    uniform_time_success,
)
from .vra import (
    ENERGY,
    RODEO,
    CostFunction,
    QaoaAnsatz,
    ansatz_diagnostics,
    ansatz_objective,
    excited_sweep,
    landscape_grid,
    multistart,
    sampled_rodeo_cost,
    two_stage,
)

logger = logging.getLogger(__name__)


@dataclass
class ExperimentReport:
    summary: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, label, value):
        self.summary.append((label, value))

    def check(self, name, value, expected, passed):
        self.checks[name] = {'value': _jsonable(value), 'expected': _jsonable(expected), 'passed': bool(passed)}
        if not passed:
            logger.warning('check %s failed: %s (expected %s)', name, value, expected)


def _jsonable(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if value is None:
        return None
    return float(value)


# below this magnitude a relative error is taken against the floor instead
RELATIVE_FLOOR = 1e-3


def relative_error(value, reference):
    reference = np.asarray(reference, dtype=float)
    return np.abs(np.asarray(value, dtype=float) - reference) / np.maximum(np.abs(reference), RELATIVE_FLOOR)


def _model(config, key, rng):
    h = build_hamiltonian(config[key], rng)
    if isinstance(h, HamiltonianFamily):
        raise ConfigError(f"'{key}' must be a single Hamiltonian, not a family")
    return h


# ==========================================
# 1. ADIABATIC EVOLUTION
# ==========================================

def _preparation(spec, n_qubits):
    if spec == 'two_spin':
        return two_spin_preparation()
    if spec == 'ground' or len(spec) != n_qubits:
        raise ConfigError(f"Uncompute needs a gate preparation: 'two_spin' or a {n_qubits}-bit string")
    return basis_preparation(spec)


def run_adiabatic_experiment(config, rng: RngStream, sink, threads=1, checks=None):
    checks = checks or {}
    report = ExperimentReport()
    h0 = _model(config, 'initial_hamiltonian', rng.spawn(1))
    h_target = _model(config, 'hamiltonian', rng.spawn(2))
    schedule = Schedule(config['schedule']['total_time'], config['schedule']['steps'])
    initial = build_state(config.get('initial_state', 'ground'), h0.n_qubits, h0)

    trajectory = run_adiabatic(h0, h_target, schedule, initial)
    frame = trajectory.to_frame()

    if 'uncompute' in config:
        block = config['uncompute']
        preparation = _preparation(block['preparation'], h0.n_qubits)
        confusion = build_confusion(config.get('readout'))
        states = evolve(initial.amplitudes, short_time_propagators(h0, h_target, schedule))
        estimates, errors, energies, energy_errors = [], [], [], []
        for k, psi in enumerate(states):
            stream = rng.spawn(100 + k)
            value, stderr = sampled_fidelity_via_uncompute(
                h0, h_target, schedule, k, block['shots'], stream.spawn(0),
                state=psi, preparation=preparation, confusion=confusion,
            )
            estimates.append(value)
            errors.append(stderr)
            energy, energy_stderr = sampled_expectation_model(
                StateVector.from_amplitudes(psi, normalize=True), h_target, block['shots'], stream.spawn(1)
            )
            energies.append(energy)
            energy_errors.append(energy_stderr)
        frame['uncompute_sampled'] = estimates
        frame['uncompute_stderr'] = errors
        frame['energy_sampled'] = energies
        frame['energy_stderr'] = energy_errors

    if config['schedule']['ode_check']:
        _, exact = run_adiabatic_ode(h0, h_target, schedule.total_time, initial, times=schedule.times)
        states = evolve(initial.amplitudes, short_time_propagators(h0, h_target, schedule))
        frame['ode_overlap'] = [abs(np.vdot(a, b)) for a, b in zip(exact, states)]
        deviation = 1.0 - frame['ode_overlap'].iloc[-1]
        report.add('discretization deviation vs ODE', f'{deviation:.3e}')
        if 'ode_deviation_max' in checks:
            report.check('ode_deviation_max', deviation, checks['ode_deviation_max'],
                         deviation <= checks['ode_deviation_max'])

    sink.table('trajectory', frame)

    ground = float(h_target.spectrum.eigenvalues[0])
    report.add('steps', schedule.steps)
    report.add('final fidelity', f'{trajectory.final_fidelity:.6f}')
    report.add('final <H_T>', f'{trajectory.final_energy:.6f}')
    report.add('ground energy of H_T', f'{ground:.6f}')

    if 'final_fidelity_min' in checks:
        threshold = checks['final_fidelity_min']
        report.check('final_fidelity_min', trajectory.final_fidelity, threshold, trajectory.final_fidelity >= threshold)
    if 'final_energy' in checks:
        expected, tol = checks['final_energy'], checks.get('final_energy_tol', 0.01)
        report.check('final_energy', trajectory.final_energy, expected, abs(trajectory.final_energy - expected) <= tol)
    return report


# ==========================================
# 2. RODEO SCANS
# ==========================================

def _background_check(report, scan, energies, weights, threshold_sigmas):
    """Mean success far from every weighted eigenvalue against the 2^-N floor."""
    occupied = energies[weights > 1e-12]
    distance = np.min(np.abs(scan.energies[:, None] - occupied[None, :]), axis=1)
    far = distance > 10.0 / scan.sigma if scan.sigma > 0 else np.zeros_like(distance, dtype=bool)
    floor = 2.0**-scan.cycles
    name = f'background_N{scan.cycles}'
    if not far.any():
        report.check(name, None, floor, False)
        return
    mean = float(scan.success[far].mean())
    stderr = float(math.sqrt(np.sum(scan.stderr[far] ** 2)) / far.sum())
    report.check(name, mean, floor, abs(mean - floor) <= threshold_sigmas * max(stderr, 1e-15))


def run_rodeo_scan_experiment(config, rng: RngStream, sink, threads=1, checks=None):
    checks = checks or {}
    report = ExperimentReport()
    h = _model(config, 'hamiltonian', rng.spawn(1))
    initial = build_state(config['initial_state'], h.n_qubits)
    energies, weights = spectral_weights(initial, h)
    sink.table('spectrum', spectral_function(initial, h))
    report.add('eigenvalues with weight', len(energies))

    grid = None
    if 'scan' in config:
        block = config['scan']
        grid = np.linspace(block['e_min'], block['e_max'], block['points'])
        frames = []
        for index, cycles in enumerate(block['cycles']):
            scan = energy_scan(initial, h, grid, block['sigma'], cycles, block['n_sets'], rng.spawn(10 + index),
                               threads, shots_per_set=block['shots_per_set'])
            frames.append(scan.to_frame())
            report.add(f'N={cycles} max success', f'{scan.success.max():.4f}')
            if 'background_sigmas' in checks:
                _background_check(report, scan, energies, weights, checks['background_sigmas'])
        sink.table('scan', pd.concat(frames, ignore_index=True))

    if 'sequential' in config:
        block = config['sequential']
        sequence = sequential_scan(
            initial, h, block['e_min'], block['e_max'], block['passes'], block['sigma_factor'],
            block['points_per_pass'], block['cycles'], block['n_sets'], rng.spawn(20),
            sigma0=block['sigma0'], threads=threads,
        )
        frames = []
        for pass_index, branch, scan in sequence.scans:
            frame = scan.to_frame()
            frame.insert(0, 'branch', branch)
            frame.insert(0, 'pass', pass_index)
            frames.append(frame)
        sink.table('sequential_scan', pd.concat(frames, ignore_index=True))
        sink.table('passes', sequence.passes_frame())

        peaks = pd.DataFrame([{'energy': p.energy, 'uncertainty': p.uncertainty, 'passes': p.passes}
                              for p in sequence.peaks], columns=['energy', 'uncertainty', 'passes'])
        if len(peaks):
            exact = h.spectrum.eigenvalues
            peaks['oracle'] = [float(exact[np.argmin(np.abs(exact - e))]) for e in peaks['energy']]
            peaks['relative_error'] = relative_error(peaks['energy'], peaks['oracle'])
        sink.table('peaks', peaks)
        for message in sequence.terminated:
            report.add('terminated branch', message)
        for _, row in peaks.iterrows():
            report.add('peak', f"{row['energy']:.6f} +/- {row['uncertainty']:.2e}")

        if 'peak_energies' in checks:
            tol = checks.get('peak_rel_tol', 1e-3)
            found = peaks['energy'].to_numpy()
            for expected in checks['peak_energies']:
                errors = relative_error(found, expected) if found.size else np.array([math.inf])
                best = float(errors.min())
                report.check(f'peak_{expected:g}', best, tol, best <= tol)

    if 'sampled' in config:
        block = config['sampled']
        times = gaussian_sample(rng.spawn(30), 0.0, block['sigma'], block['cycles'])
        rodeo = RodeoConfig(block['energy'], block['sigma'], block['cycles'], times=times)
        exact = run_rodeo_exact(initial, h, rodeo)
        formula = success_probability_formula(weights / weights.sum(), energies, block['energy'], times)
        sampled = run_rodeo_sampled(initial, h, rodeo, block['shots'], rng.spawn(31), threads)
        sink.table('sampled', pd.DataFrame([{
            'energy': block['energy'], 'cycles': block['cycles'], 'exact': exact.success_probability,
            'formula': formula, 'sampled': sampled.success_frequency, 'stderr': sampled.stderr,
            'shots': block['shots'],
        }]))
        report.add('exact / sampled success', f'{exact.success_probability:.5f} / {sampled.success_frequency:.5f}')
        if 'formula_tol' in checks:
            gap = abs(exact.success_probability - formula)
            report.check('formula_tol', gap, checks['formula_tol'], gap <= checks['formula_tol'])
        if 'sampled_stderrs' in checks:
            spread = math.sqrt(exact.success_probability * (1 - exact.success_probability) / block['shots'])
            distance = abs(sampled.success_frequency - exact.success_probability) / max(spread, 1e-15)
            report.check('sampled_stderrs', distance, checks['sampled_stderrs'], distance <= checks['sampled_stderrs'])

    if 'uniform' in config:
        block = config['uniform']
        if grid is None:
            grid = np.linspace(config['sequential']['e_min'], config['sequential']['e_max'], 41)
        rows = []
        for index, energy in enumerate(grid):
            mean, stderr = uniform_time_success(initial, h, energy, block['t_max'], block['cycles'],
                                                block['n_sets'], rng.spawn(40).spawn(index))
            expected = float(weights @ uniform_average_factor(energies - energy, block['t_max']) ** block['cycles'])
            rows.append({'energy': energy, 'success': mean, 'stderr': stderr, 'expected': expected})
        sink.table('uniform_scan', pd.DataFrame(rows))
    return report


# ==========================================
# 3. EIGENSTATE PREPARATION
# ==========================================

def run_rodeo_prepare_experiment(config, rng: RngStream, sink, threads=1, checks=None):
    checks = checks or {}
    report = ExperimentReport()
    h = _model(config, 'hamiltonian', rng.spawn(1))
    initial = build_state(config['initial_state'], h.n_qubits)
    block = config['prepare']

    overlaps = eigenstate_overlaps(initial, h, block['labels'], block['cycles'], block['sigma'], block['n_sets'],
                                   rng.spawn(2), threads)
    sink.table('overlaps', overlaps)
    columns = [f'N={n}' for n in block['cycles']]
    last = columns[-1]
    report.add('rows', len(overlaps))
    report.add(f'lowest overlap at {last}', f'{overlaps[last].min():.4f}')

    if 'residual' in config:
        residual = config['residual']
        energy = match_eigenvalue(h, residual['label'], initial)
        adiabatic_initial = None
        if 'adiabatic_initial' in residual:
            adiabatic_initial = build_hamiltonian(residual['adiabatic_initial'], rng.spawn(3))
        frame = residual_vs_time(initial, h, energy, residual['cycles'], residual['n_sets'], rng.spawn(4),
                                 sigma=residual['sigma'], adiabatic_initial=adiabatic_initial)
        sink.table('residual', frame)
        report.add('initial overlap', f"{frame.attrs['initial_overlap']:.4f}")

    if 'overlap_min' in checks:
        threshold = checks['overlap_min']
        # with reference rows given, only those rows are held to the threshold
        if 'reference' in checks:
            listed = [reference[0] for reference in checks['reference']]
            rows = overlaps[np.isclose(overlaps['label'].to_numpy()[:, None], listed).any(axis=1)]
        else:
            rows = overlaps
        for _, row in rows.iterrows():
            report.check(f"overlap_{row['label']:g}_{last}", row[last], threshold, row[last] >= threshold)
    if 'reference' in checks:
        tol = checks.get('reference_tol', 0.05)
        for reference in checks['reference']:
            label, values = reference[0], reference[1:]
            matched = overlaps[np.isclose(overlaps['label'], label)]
            if matched.empty:
                raise ConfigError(f'Reference row {label} is not among the prepared labels')
            row = matched.iloc[0]
            for column, cycles, expected in zip(columns, block['cycles'], values):
                if cycles == 0:
                    continue
                report.check(f'reference_{label:g}_{column}', row[column], expected - tol, row[column] >= expected - tol)
    return report


# ==========================================
# 4. HELLMANN-FEYNMAN
# ==========================================

def run_hellmann_feynman_experiment(config, rng: RngStream, sink, threads=1, checks=None):
    checks = checks or {}
    report = ExperimentReport()
    family = build_hamiltonian(config['hamiltonian'], rng.spawn(1))
    n = family.base.n_qubits
    initial = build_state(config.get('initial_state', '0' * n), n)
    block = config['hellmann_feynman']

    fits, points = [], []
    for level in block['levels']:
        result = hellmann_feynman(
            family, level, block['phi'], initial, rng.spawn(10 + level), block['e_min'], block['e_max'],
            passes=block['passes'], sigma_factor=block['sigma_factor'], points_per_pass=block['points_per_pass'],
            cycles=block['cycles'], n_sets=block['n_sets'], sigma0=block['sigma0'], threads=threads,
        )
        fits.append({
            'level': level, 'energy': result.energy, 'energy_error': result.energy_error,
            'slope': result.slope, 'slope_error': result.slope_error, 'curvature': result.curvature,
            'exact_energy': result.exact_energy, 'exact_slope': result.exact_slope,
        })
        frame = result.points.copy()
        frame.insert(0, 'level', level)
        points.append(frame)
        report.add(f'level {level}', f'E(0) = {result.energy:.5f}, dE/dphi = {result.slope:.5f} +/- {result.slope_error:.5f}')
    fit_frame = pd.DataFrame(fits)
    sink.table('points', pd.concat(points, ignore_index=True))
    sink.table('fit', fit_frame)

    if 'observables' in block:
        options = block['observables']
        confusion = build_confusion(config.get('readout'))
        frames = []
        for level in block['levels']:
            frame = prepared_observables(family, level, initial, options['sigma'], options['cycles'],
                                         rng.spawn(50 + level), trials=options['trials'], shots=options['shots'],
                                         confusion=confusion)
            frame.insert(0, 'level', level)
            frames.append(frame)
        sink.table('observables', pd.concat(frames, ignore_index=True))

    for key, column, tol_key in (('slopes', 'slope', 'slope_rel_tol'), ('energies', 'energy', 'energy_rel_tol')):
        if key not in checks:
            continue
        tol = checks.get(tol_key, 0.01)
        for level, expected in zip(block['levels'], checks[key]):
            value = float(fit_frame.loc[fit_frame['level'] == level, column].iloc[0])
            error = float(relative_error(value, expected))
            report.check(f'{column}_level{level}', value, expected, error <= tol)
    return report


# ==========================================
# 5. VARIATIONAL RODEO
# ==========================================

def _trace_table(result, label):
    frames = []
    for index, trace in enumerate(result.traces):
        frame = trace.to_frame()
        frame.insert(0, 'restart', index)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    table.insert(0, 'cost_kind', label)
    return table


def run_vra_experiment(config, rng: RngStream, sink, threads=1, checks=None):
    checks = checks or {}
    report = ExperimentReport()
    h_obj = _model(config, 'hamiltonian', rng.spawn(1))
    block = config['vra']
    mixer = build_hamiltonian(block['mixer'], rng.spawn(2)) if 'mixer' in block else x_mixer(h_obj.n_qubits)
    ansatz = QaoaAnsatz(mixer, h_obj, block['depth'])
    spectrum = h_obj.spectrum
    energy = block['energy'] if block['energy'] is not None else float(spectrum.eigenvalues[0])
    if block['n_sets']:
        rodeo = sampled_rodeo_cost(energy, block['sigma'], block['cycles'], block['n_sets'], rng.spawn(3))
    else:
        rodeo = CostFunction(RODEO, energy=energy, sigma=block['sigma'], cycles=block['cycles'])
    sink.table('spectrum', pd.DataFrame({'level': np.arange(spectrum.dim), 'eigenvalue': spectrum.eigenvalues}))
    report.add('parameters', ansatz.n_parameters)
    report.add('target energy', f'{energy:.5f}')
    mode = block['mode']

    if mode == 'sweep':
        grid = np.linspace(block['grid']['e_min'], block['grid']['e_max'], block['grid']['points'])
        summary, overlaps = excited_sweep(ansatz, grid, block['sigma'], block['cycles'], block['restarts'],
                                          block['max_iter'], rng.spawn(4), threads)
        sink.table('sweep', summary)
        sink.table('sweep_overlaps', overlaps)
        decided = summary[~summary['ambiguous']]
        fraction = float(decided['rule_holds'].mean()) if len(decided) else 0.0
        report.add('nearest-eigenvalue rule holds', f'{fraction:.0%} of {len(decided)} points')
        if 'rule_fraction_min' in checks:
            report.check('rule_fraction_min', fraction, checks['rule_fraction_min'],
                         len(decided) > 0 and fraction >= checks['rule_fraction_min'])

    elif mode == 'compare':
        diagnostics = ansatz_diagnostics(ansatz, rodeo)
        starts = rng.spawn(5)
        runs = {}
        for label, cost in ((ENERGY, CostFunction(ENERGY)), (RODEO, rodeo)):
            runs[label] = multistart(ansatz_objective(ansatz, cost), ansatz.n_parameters, block['restarts'], starts,
                                     block['max_iter'], diagnostics=diagnostics, threads=threads, stage=label)
        summaries = []
        for label, result in runs.items():
            frame = result.summary()
            frame.insert(0, 'cost_kind', label)
            summaries.append(frame)
            sink.table(f'trace_{label}', _trace_table(result, label))
        sink.table('restarts', pd.concat(summaries, ignore_index=True))
        best = {label: result.best.diagnostics[-1] for label, result in runs.items()}
        for label, values in best.items():
            report.add(f'{label}: ground overlap / success',
                       f"{values['ground_overlap']:.4f} / {values['rodeo_success']:.4f}")
        if 'success_min' in checks:
            value = best[RODEO]['rodeo_success']
            report.check('success_min', value, checks['success_min'], value >= checks['success_min'])
        if 'vra_beats_energy' in checks:
            value, reference = best[RODEO]['ground_overlap'], best[ENERGY]['ground_overlap']
            report.check('vra_beats_energy', value, reference, value >= reference)

    elif mode == 'two_stage':
        result = two_stage(ansatz, rodeo, block['stage1_iters'], block['stage2_iters'], block['restarts'],
                           rng.spawn(6), threads)
        sink.table('two_stage_traces', _trace_table(result, 'two_stage'))
        rows = []
        for index, trace in enumerate(result.traces):
            stage1_end = max(i for i, stage in enumerate(trace.stages) if stage == 'energy')
            rows.append({
                'restart': index,
                'stage1_success': trace.diagnostics[stage1_end]['rodeo_success'],
                'final_success': trace.diagnostics[-1]['rodeo_success'],
                'final_ground_overlap': trace.diagnostics[-1]['ground_overlap'],
            })
        frame = pd.DataFrame(rows)
        sink.table('two_stage', frame)
        best = frame.iloc[result.best_index]
        improvement = best['final_success'] / max(best['stage1_success'], 1e-15)
        report.add('stage-one / final success', f"{best['stage1_success']:.4f} / {best['final_success']:.4f}")
        if 'improvement_min' in checks:
            report.check('improvement_min', improvement, checks['improvement_min'],
                         improvement >= checks['improvement_min'])
        if 'success_min' in checks:
            report.check('success_min', best['final_success'], checks['success_min'],
                         best['final_success'] >= checks['success_min'])

    elif mode == 'landscape':
        options = block['landscape']
        grid = landscape_grid(h_obj, mixer, options['gamma_range'], options['beta_range'], options['resolution'],
                              {'energy': CostFunction(ENERGY), 'rodeo': rodeo})
        sink.table('landscape_energy', grid[['gamma', 'beta', 'energy']])
        sink.table('landscape_rodeo', grid[['gamma', 'beta', 'rodeo']])
        report.metadata['landscape'] = {
            'gamma_range': options['gamma_range'], 'beta_range': options['beta_range'],
            'resolution': options['resolution'], 'sigma': block['sigma'], 'cycles': block['cycles'],
            'energy': energy,
        }
        for name in ('energy', 'rodeo'):
            minimum = grid.loc[grid[name].idxmin()]
            report.add(f'{name} minimum at', f"gamma={minimum['gamma']:.4f}, beta={minimum['beta']:.4f}")
    return report


# ==========================================
# 6. PULSES
# ==========================================

def build_device(block) -> DeviceModel:
    try:
        return DeviceModel.from_mhz(
            block['anharmonicity_mhz'], block['coupling_mhz'], t1=block.get('t1_ns'), t2=block.get('t2_ns'),
            levels=block['levels'], n_transmons=block['n_transmons'], preset=block.get('preset'),
        )
    except ValueError as exc:
        raise ConfigError(f'Invalid device: {exc}')


def build_grape_config(block) -> GrapeConfig:
    return GrapeConfig(
        eps_cut=mhz_to_angular(block['eps_cut_mhz']), harshness=block['harshness'], penalty=block['penalty'],
        max_iter=block['max_iter'], target_infidelity=block['target_infidelity'], gradient=block['gradient'],
        subspace=block['subspace'], initial_scale=block['initial_scale'],
    )


def _adiabatic_pair(config, rng):
    if 'initial_hamiltonian' in config and 'hamiltonian' in config:
        return _model(config, 'initial_hamiltonian', rng.spawn(1)), _model(config, 'hamiltonian', rng.spawn(2))
    return two_spin_pair()


def _schedule(config):
    block = config.get('schedule') or {'total_time': 20.0, 'steps': 20}
    return Schedule(block['total_time'], block['steps'])


def gate_target(name, device: DeviceModel, duration, config, rng, step=1):
    """Device-space target unitary for the pulse ladder."""
    if name == 'free_evolution':
        return expm_unitary(drift_hamiltonian(device), duration)
    if name == 'x_pi':
        flip = PAULI_X if device.n_transmons == 1 else np.kron(PAULI_X, np.eye(2))
        return embed_unitary(-1j * flip, device)
    if device.n_transmons != 2:
        raise ConfigError('adiabatic_step targets need two transmons')
    h0, h_target = _adiabatic_pair(config, rng)
    schedule = _schedule(config)
    if step > schedule.steps:
        raise ConfigError(f'step {step} is beyond the {schedule.steps}-step schedule')
    return embed_unitary(short_time_propagators(h0, h_target, schedule)[step - 1], device)


def run_pulse_experiment(config, rng: RngStream, sink, threads=1, checks=None):
    checks = checks or {}
    report = ExperimentReport()
    device = build_device(config['device'])
    grape = build_grape_config(config['grape'])
    rate = config['grape']['rate']
    sink.record('device', device.to_record())
    report.add('device', device.name or f'{device.n_transmons} transmon(s), {device.levels} levels')

    if 'gates' in config:
        block = config['gates']
        rows = []
        for index, duration in enumerate(block['durations_ns']):
            target = gate_target(block['target'], device, duration, config, rng.spawn(90), block['step'])
            result = grape_optimize(device, target, duration, grape, rng.spawn(100 + index), rate)
            sink.record(f'pulses/ladder_{index}', result.pulse.to_record(device))
            rows.append({
                'tau_ns': duration, 'objective': result.objective, 'fidelity': result.fidelity,
                'infidelity': 1.0 - result.fidelity, 'rms_amplitude': rms_amplitude(result.pulse, grape.eps_cut),
                'status': result.status, 'iterations': result.iterations,
            })
            report.add(f'tau = {duration:g} ns', f'1 - F = {1.0 - result.fidelity:.2e} ({result.status})')
        ladder = pd.DataFrame(rows)
        sink.table('ladder', ladder)

        if 'objective' in checks:
            tol = checks.get('objective_tol', 1e-6)
            worst = float((ladder['objective'] - checks['objective']).abs().max())
            report.check('objective', worst, tol, worst <= tol)
        if 'rms_max' in checks:
            value = float(ladder['rms_amplitude'].max())
            report.check('rms_max', value, checks['rms_max'], value <= checks['rms_max'])
        if 'rms_monotone' in checks:
            ordered = ladder.sort_values('tau_ns')['rms_amplitude'].to_numpy()
            report.check('rms_monotone', ordered.tolist(), 1.0, bool(np.all(np.diff(ordered) < 0)))
        if 'gate_infidelity_max' in checks:
            value = float(ladder['infidelity'].max())
            report.check('gate_infidelity_max', value, checks['gate_infidelity_max'],
                         value <= checks['gate_infidelity_max'])

    if 'emulation' in config:
        block = config['emulation']
        h0, h_target = _adiabatic_pair(config, rng)
        schedule = _schedule(config)
        initial = build_state(config.get('initial_state', 'ground'), 2, h0)
        result = emulate_adiabatic_with_pulses(
            device, h0, h_target, schedule, initial, block['duration_ns'], grape, rng.spawn(200),
            dissipator=block['dissipator'], rate=rate, warm_start=block['warm_start'], threads=threads,
        )
        sink.table('trajectory', result.trajectory.to_frame())
        sink.table('gates', result.gates)
        if block['pulse_files']:
            for k, pulse in enumerate(result.pulses, start=1):
                sink.record(f'pulses/gate_{k:03d}', pulse.to_record(device))
        final = result.trajectory.final_fidelity
        report.add('final fidelity', f'{final:.5f}')
        report.add('final <H_T>', f'{result.trajectory.final_energy:.5f}')
        report.add('worst gate infidelity', f"{(1.0 - result.gates['gate_fidelity']).max():.2e}")
        report.metadata['composition_bound'] = composition_bound(result.gates['gate_fidelity'], device.dim)
        if 'fidelity_min' in checks:
            report.check('fidelity_min', final, checks['fidelity_min'], final >= checks['fidelity_min'])
    return report


RUNNERS = {
    ExperimentRun.Kind.ADIABATIC: run_adiabatic_experiment,
    ExperimentRun.Kind.RODEO_SCAN: run_rodeo_scan_experiment,
    ExperimentRun.Kind.RODEO_PREPARE: run_rodeo_prepare_experiment,
    ExperimentRun.Kind.HELLMANN_FEYNMAN: run_hellmann_feynman_experiment,
    ExperimentRun.Kind.VRA: run_vra_experiment,
    ExperimentRun.Kind.PULSE: run_pulse_experiment,
}
