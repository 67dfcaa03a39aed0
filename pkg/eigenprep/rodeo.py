"""
Rodeo algorithm: each cycle puts an ancilla in superposition, applies controlled exp(-iHt_n),
a phase P(E t_n) on the ancilla |1> branch, rotates back and measures. Keeping only all-|0>
ancilla records filters the object state toward eigenvectors with eigenvalue near E.

Success means the ancilla read |0> on every cycle; the |0>-branch operator on the object is
[I + exp(-i(H - E)t)] / 2.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from .adiabatic import ConfusionMatrix, Schedule, confusion_mitigate, evolve, sample_readout, short_time_propagators
from .conf import numeric_config
from .exceptions import BranchCrossingError, ConfigError, FilteredToNothingError, FitError
from .hamiltonian import HamiltonianFamily, HamiltonianModel, PauliString, family_at
from .numerics import (
    RngStream,
    expm_unitary,
    gaussian_peak_fit,
    gaussian_sample,
    parallel_map,
    polyfit_quadratic,
)
from .register import (
    HADAMARD,
    StateVector,
    apply_controlled_array,
    apply_unitary_array,
    expectation_pauli,
    measure_array,
    phase_gate,
    rotate_to_measurement_basis,
    sampled_expectation_pauli,
)

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-8
WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class RodeoConfig:
    energy: float
    sigma: float
    cycles: int
    times: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f'sigma must be >= 0, got {self.sigma}')
        if self.cycles < 1:
            raise ValueError(f'cycles must be >= 1, got {self.cycles}')
        if self.times is not None:
            times = np.asarray(self.times, dtype=float).reshape(-1)
            if times.size != self.cycles:
                raise ValueError(f'{times.size} times given for {self.cycles} cycles')
            object.__setattr__(self, 'times', times)

    def resolve_times(self, rng: RngStream | None = None) -> np.ndarray:
        """Explicit times, else Gaussian(0, sigma) draws from `seed` (or from `rng`)."""
        if self.times is not None:
            return self.times
        if rng is None:
            if self.seed is None:
                raise ValueError('rodeo times need an explicit list, a seed, or an rng')
            rng = RngStream(self.seed)
        return gaussian_sample(rng, 0.0, self.sigma, self.cycles)


@dataclass(frozen=True, eq=False)
class RodeoOutcome:
    success_probability: float
    post_selected_state: StateVector
    cycle_probabilities: np.ndarray
    times: np.ndarray


@dataclass(frozen=True, eq=False)
class SampledOutcome:
    shots: int
    successes: int
    final_states: list = field(default_factory=list)

    @property
    def success_frequency(self) -> float:
        return self.successes / self.shots

    @property
    def stderr(self) -> float:
        p = self.success_frequency
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.shots)


# ==========================================
# 1. SINGLE RUNS
# ==========================================

def run_rodeo_exact(initial: StateVector, h: HamiltonianModel, config: RodeoConfig, rng=None) -> RodeoOutcome:
    """Branch-operator evolution in the eigenbasis of H; no ancilla is simulated."""
    if initial.dim != h.dim:
        raise ValueError(f'initial state has dim {initial.dim}, Hamiltonian {h.dim}')
    times = config.resolve_times(rng)
    spectrum = h.spectrum
    shifted = spectrum.eigenvalues - config.energy
    coefficients = spectrum.eigenvectors.conj().T @ initial.amplitudes

    floor = numeric_config().underflow
    probabilities = []
    for cycle, t in enumerate(times, start=1):
        coefficients = coefficients * (0.5 * (1.0 + np.exp(-1j * shifted * t)))
        p = float(np.vdot(coefficients, coefficients).real)
        if p < floor:
            raise FilteredToNothingError(f'rodeo branch norm underflowed at cycle {cycle} (E={config.energy})')
        probabilities.append(p)
        coefficients = coefficients / math.sqrt(p)

    probabilities = np.array(probabilities)
    state = StateVector.from_amplitudes(spectrum.eigenvectors @ coefficients, normalize=True)
    return RodeoOutcome(float(np.prod(probabilities)), state, probabilities, times)


def _sampled_shot(initial, n, unitaries, config_energy, times, rng):
    """One full ancilla + object circuit; ancilla is qubit 0. Returns object amplitudes or None."""
    dim = initial.shape[0]
    register = np.zeros(2 * dim, dtype=complex)
    register[:dim] = initial
    targets = list(range(1, n + 1))
    for u, t in zip(unitaries, times):
        register = apply_unitary_array(register, n + 1, HADAMARD, [0])
        register = apply_controlled_array(register, n + 1, u, 0, targets)
        register = apply_unitary_array(register, n + 1, phase_gate(config_energy * t), [0])
        register = apply_unitary_array(register, n + 1, HADAMARD, [0])
        record, register = measure_array(register, n + 1, 0, rng)
        if record.outcome == 1:
            return None
        # outcome 0 leaves the ancilla in |0>, which is the reset state
    return register[:dim]


def run_rodeo_sampled(initial: StateVector, h: HamiltonianModel, config: RodeoConfig, shots: int,
                      rng: RngStream, threads=1) -> SampledOutcome:
    """Full circuit simulation with mid-circuit measurement; one derived stream per shot."""
    if shots < 1:
        raise ValueError('shots must be >= 1')
    times = config.resolve_times(rng)
    spectrum = h.spectrum
    unitaries = [expm_unitary(h.dense, t, spectrum) for t in times]

    def one_shot(index):
        return _sampled_shot(initial.amplitudes, h.n_qubits, unitaries, config.energy, times, rng.spawn(index))

    results = parallel_map(one_shot, range(shots), threads)
    survivors = [r for r in results if r is not None]
    return SampledOutcome(shots, len(survivors), survivors)


# ==========================================
# 2. CLOSED FORMS
# ==========================================

def success_probability_formula(weights, energies, energy, times) -> float:
    """
    Σ_k c_k^2 Π_n cos^2((E_k - E) t_n / 2): the branch-norm product of the circuit.

    For a single cycle this is the familiar Σ_k c_k^2 cos^2 form. Once N > 1 the weights
    are filtered between cycles, so the product sits inside the sum.
    """
    weights = np.asarray(weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f'weights must sum to 1, got {weights.sum()!r}')
    shifted = np.asarray(energies, dtype=float) - energy
    factors = np.cos(np.outer(np.asarray(times, dtype=float), shifted) / 2.0) ** 2
    return float(weights @ np.prod(factors, axis=0))


def gaussian_average_factor(delta_e, sigma):
    """Mean of cos^2(dE t / 2) over t ~ N(0, sigma^2)."""
    return 0.5 * (1.0 + np.exp(-(np.asarray(delta_e) ** 2) * sigma**2 / 2.0))


def success_probability_asymptotic(p, delta_e, sigma, cycles) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f'p must lie in [0, 1], got {p}')
    if sigma < 0:
        raise ValueError(f'sigma must be >= 0, got {sigma}')
    return float(p * gaussian_average_factor(delta_e, sigma) ** cycles)


def uniform_average_factor(delta_e, t_max):
    """Mean of cos^2(dE t / 2) over t uniform on [-t_max, t_max]."""
    x = np.asarray(delta_e, dtype=float) * t_max
    return 0.5 + 0.5 * np.sinc(x / np.pi)


def geometric_mean_factor(delta_e, times) -> float:
    """exp(mean log cos^2(dE t / 2)); tends to 1/4 once dE*t spreads over many periods."""
    values = np.cos(delta_e * np.asarray(times, dtype=float) / 2.0) ** 2
    return float(np.exp(np.mean(np.log(np.clip(values, 1e-300, None)))))


def residual_estimates(p, cycles):
    """(F_A, F_G): residual orthogonal amplitude with 2^-N and 4^-N suppression."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f'p must lie in (0, 1], got {p}')
    arithmetic = 2.0**-cycles * (1.0 - p)
    geometric = 4.0**-cycles * (1.0 - p)
    return math.sqrt(arithmetic / (p + arithmetic)), math.sqrt(geometric / (p + geometric))


# ==========================================
# 3. SPECTRAL DATA
# ==========================================

def spectral_weights(initial: StateVector, h: HamiltonianModel):
    """(energies, weights) of the initial state, degenerate levels merged, zero weights dropped."""
    spectrum = h.spectrum
    weights = spectrum.weights(initial.amplitudes)
    energies = spectrum.eigenvalues
    merged_e, merged_w = [], []
    for energy, weight in zip(energies, weights):
        if merged_e and abs(energy - merged_e[-1]) <= DEGENERACY_TOL * max(1.0, abs(energy)):
            merged_w[-1] += weight
        else:
            merged_e.append(energy)
            merged_w.append(weight)
    merged_e, merged_w = np.array(merged_e), np.array(merged_w)
    keep = merged_w > WEIGHT_FLOOR
    return merged_e[keep], merged_w[keep]


def spectral_function(initial: StateVector, h: HamiltonianModel) -> pd.DataFrame:
    energies, weights = spectral_weights(initial, h)
    return pd.DataFrame({'energy': energies, 'weight': weights})


def eigenspace_overlap(state: StateVector, h: HamiltonianModel, energy: float) -> float:
    spectrum = h.spectrum
    mask = np.abs(spectrum.eigenvalues - energy) <= DEGENERACY_TOL * max(1.0, abs(energy))
    return float(spectrum.weights(state.amplitudes)[mask].sum())


# ==========================================
# 4. ENERGY SCANS
# ==========================================

@dataclass(frozen=True, eq=False)
class ScanResult:
    energies: np.ndarray
    success: np.ndarray
    stderr: np.ndarray
    n_sets: int
    sigma: float
    cycles: int

    def __post_init__(self):
        if np.any(np.diff(self.energies) <= 0):
            raise ValueError('scan grid must be strictly increasing')

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'energy': self.energies,
            'success': self.success,
            'stderr': self.stderr,
            'sigma': self.sigma,
            'cycles': self.cycles,
        })


def energy_scan(initial, h, grid, sigma, cycles, n_sets, rng: RngStream, threads=1,
                shots_per_set=None) -> ScanResult:
    """
    Mean success probability over `n_sets` Gaussian t-lists at every grid energy. Grid point i
    draws from rng.spawn(i). With `shots_per_set` each t-list contributes a binomial estimate
    instead of the exact probability.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError('energy grid is empty')
    if n_sets < 1:
        raise ValueError('n_sets must be >= 1')
    energies, weights = spectral_weights(initial, h)
    weights = weights / weights.sum()

    def scan_point(index):
        stream = rng.spawn(index)
        times = gaussian_sample(stream, 0.0, sigma, n_sets * cycles).reshape(n_sets, cycles)
        phases = (energies[None, None, :] - grid[index]) * times[:, :, None] / 2.0
        per_set = np.prod(np.cos(phases) ** 2, axis=1) @ weights
        if shots_per_set:
            per_set = stream.binomial(shots_per_set, np.clip(per_set, 0.0, 1.0)) / shots_per_set
        spread = per_set.std(ddof=1) if n_sets > 1 else 0.0
        return per_set.mean(), spread / math.sqrt(n_sets)

    results = np.array(parallel_map(scan_point, range(grid.size), threads))
    return ScanResult(grid, results[:, 0], results[:, 1], n_sets, sigma, cycles)


def uniform_time_success(initial, h, energy, t_max, cycles, n_sets, rng: RngStream):
    """
    Mean success probability (and its standard error) when every t_n is drawn uniformly from
    [-t_max, t_max]. Off-resonant levels are then suppressed by ½ + sin(dE t_max) / (2 dE t_max)
    per cycle on average.
    """
    if t_max <= 0:
        raise ValueError(f't_max must be > 0, got {t_max}')
    if n_sets < 1:
        raise ValueError('n_sets must be >= 1')
    energies, weights = spectral_weights(initial, h)
    times = rng.uniform(-t_max, t_max, size=(n_sets, cycles))
    phases = (energies[None, None, :] - energy) * times[:, :, None] / 2.0
    per_set = np.prod(np.cos(phases) ** 2, axis=1) @ (weights / weights.sum())
    spread = per_set.std(ddof=1) if n_sets > 1 else 0.0
    return float(per_set.mean()), float(spread / math.sqrt(n_sets))


@dataclass(frozen=True)
class PeakEstimate:
    energy: float
    uncertainty: float
    passes: int


@dataclass
class SequentialScanReport:
    peaks: list = field(default_factory=list)
    passes: list = field(default_factory=list)  # per-pass dicts: branch, window, sigma, center
    scans: list = field(default_factory=list)  # (pass, branch, ScanResult)
    terminated: list = field(default_factory=list)

    def estimates(self):
        return [(p.energy, p.uncertainty) for p in self.peaks]

    def passes_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.passes)


def _significant_peaks(scan: ScanResult, background: float):
    threshold = background + 3.0 * scan.stderr
    indices, _ = find_peaks(scan.success)
    # plateau edges: include a maximum sitting on the grid boundary
    if scan.success.size > 1 and scan.success[0] > scan.success[1]:
        indices = np.append(indices, 0)
    if scan.success.size > 1 and scan.success[-1] > scan.success[-2]:
        indices = np.append(indices, scan.success.size - 1)
    return sorted(int(i) for i in indices if scan.success[i] > threshold[i])


def _fit_peak(scan: ScanResult, index: int, half_width: float):
    near = np.abs(scan.energies - scan.energies[index]) <= half_width
    if near.sum() < 5:
        near = np.argsort(np.abs(scan.energies - scan.energies[index]))[:5]
    return gaussian_peak_fit(scan.energies[near], scan.success[near])


def sequential_scan(initial, h, e_min, e_max, passes, sigma_factor, points_per_pass, cycles, n_sets,
                    rng: RngStream, sigma0=None, threads=1) -> SequentialScanReport:
    """
    Multi-resolution scan. Pass j uses sigma_0 K^(j-1) and a window K^(j-1) times narrower,
    re-centred on the Gaussian fit of each surviving peak from the previous pass.
    """
    if passes < 1:
        raise ValueError('passes must be >= 1')
    if sigma_factor <= 1:
        raise ValueError(f'sigma factor K must exceed 1, got {sigma_factor}')
    if points_per_pass < 5:
        raise ValueError('points_per_pass must be >= 5')
    if e_max <= e_min:
        raise ValueError(f'empty energy window [{e_min}, {e_max}]')

    width = e_max - e_min
    if sigma0 is None:
        # a peak of width 1/sigma spans four grid points
        sigma0 = (points_per_pass - 1) / (4.0 * width)
    background = 2.0**-cycles
    report = SequentialScanReport()
    branches = [(0.5 * (e_min + e_max), None)]
    sigma = sigma0

    for pass_index in range(1, passes + 1):
        next_branches = []
        for branch_index, (center, _) in enumerate(branches):
            low, high = center - 0.5 * width, center + 0.5 * width
            grid = np.linspace(low, high, points_per_pass)
            stream = rng.spawn(pass_index * 1000 + branch_index)
            scan = energy_scan(initial, h, grid, sigma, cycles, n_sets, stream, threads)
            report.scans.append((pass_index, branch_index, scan))
            logger.info('scan pass %d: window [%.5f, %.5f], sigma %.3f', pass_index, low, high, sigma)

            found = _significant_peaks(scan, background)
            if pass_index > 1:
                # keep the strongest peak in a refinement window
                found = found and [max(found, key=lambda i: scan.success[i])]
            if not found:
                message = f'pass {pass_index}: no peak above background {background:.4f} + 3 stderr in [{low:.5f}, {high:.5f}]'
                logger.warning(message)
                report.terminated.append(message)
                continue
            for index in found:
                try:
                    fit = _fit_peak(scan, index, 3.0 / sigma)
                except FitError as exc:
                    report.terminated.append(f'pass {pass_index}: peak fit failed near {grid[index]:.5f}: {exc}')
                    continue
                if not low <= fit.center <= high:
                    report.terminated.append(f'pass {pass_index}: fitted centre {fit.center:.5f} left the window')
                    continue
                report.passes.append({
                    'pass': pass_index, 'branch': len(next_branches), 'window_low': low,
                    'window_high': high, 'sigma': sigma, 'center': fit.center,
                    'center_error': fit.center_error, 'height': fit.height, 'width': fit.width,
                })
                next_branches.append((fit.center, fit))
        branches = next_branches
        if not branches:
            break
        width /= sigma_factor
        sigma *= sigma_factor

    report.peaks = sorted(
        (PeakEstimate(center, fit.center_error, passes) for center, fit in branches),
        key=lambda p: p.energy,
    )
    return report


# ==========================================
# 5. EIGENSTATE PREPARATION
# ==========================================

def match_eigenvalue(h: HamiltonianModel, label: float, initial: StateVector | None = None) -> float:
    """Oracle eigenvalue a rounded label refers to (labels carry about three significant digits)."""
    if initial is not None:
        energies, _ = spectral_weights(initial, h)
    else:
        energies = np.unique(np.round(h.spectrum.eigenvalues, 10))
    tolerance = 5e-3 * abs(label) + 1e-3
    nearest = energies[np.argmin(np.abs(energies - label))]
    if abs(nearest - label) > tolerance:
        listing = ', '.join(f'{e:.4f}' for e in energies)
        raise ConfigError(f'no eigenvalue matches label {label}; available: {listing}')
    return float(nearest)


def eigenstate_overlaps(initial, h, labels, cycles_list, sigma, n_sets, rng: RngStream, threads=1) -> pd.DataFrame:
    """
    Mean post-selected overlap |<E_j|psi_F>|^2 (summed over the E_j eigenspace) after N cycles
    with E = E_j. N = 0 gives the initial overlap.
    """
    rows = []
    for row_index, label in enumerate(labels):
        energy = match_eigenvalue(h, label, initial)
        row = {'label': label, 'energy': energy}
        for cycles in cycles_list:
            if cycles == 0:
                row['N=0'] = eigenspace_overlap(initial, h, energy)
                continue
            streams = [rng.spawn(row_index * 10_000 + cycles * 100 + s) for s in range(n_sets)]
            config = RodeoConfig(energy, sigma, cycles)

            def overlap(stream):
                outcome = run_rodeo_exact(initial, h, config, stream)
                return eigenspace_overlap(outcome.post_selected_state, h, energy)

            row[f'N={cycles}'] = float(np.mean(parallel_map(overlap, streams, threads)))
        rows.append(row)
        logger.info('overlap row E=%.4f: %s', energy, {k: round(v, 4) for k, v in row.items() if k.startswith('N=')})
    return pd.DataFrame(rows)


def residual_vs_time(initial, h, energy, cycles_list, n_sets, rng: RngStream, sigma=1.0,
                     adiabatic_initial: HamiltonianModel | None = None, adiabatic_steps_per_unit=4):
    """
    Residual Δ = ||psi_F - P_E psi_F|| against total propagation time Σ|t_n|, next to the
    F_A / F_G estimates; with `adiabatic_initial`, also adiabatic evolution over the same time.
    """
    p = eigenspace_overlap(initial, h, energy)
    spectrum = h.spectrum
    rows = []
    for cycles in cycles_list:
        residuals, totals = [], []
        for s in range(n_sets):
            stream = rng.spawn(cycles * 10_000 + s)
            outcome = run_rodeo_exact(initial, h, RodeoConfig(energy, sigma, cycles), stream)
            kept = eigenspace_overlap(outcome.post_selected_state, h, energy)
            residuals.append(math.sqrt(max(1.0 - kept, 0.0)))
            totals.append(float(np.abs(outcome.times).sum()))
        f_a, f_g = residual_estimates(p, cycles)
        row = {
            'cycles': cycles, 'total_time': float(np.mean(totals)),
            'residual': float(np.mean(residuals)), 'f_arithmetic': f_a, 'f_geometric': f_g,
        }
        if adiabatic_initial is not None:
            total = max(row['total_time'], 1e-3)
            schedule = Schedule(total, max(20, int(math.ceil(adiabatic_steps_per_unit * total))))
            # overlap with the target eigenspace, not with a tracked level
            final = evolve(initial.amplitudes, short_time_propagators(adiabatic_initial, h, schedule))[-1]
            state = StateVector.from_amplitudes(final, normalize=True)
            row['adiabatic_residual'] = math.sqrt(max(1.0 - eigenspace_overlap(state, h, energy), 0.0))
        rows.append(row)
    frame = pd.DataFrame(rows)
    frame.attrs['initial_overlap'] = p
    frame.attrs['ground_energy'] = float(spectrum.eigenvalues[0])
    return frame


# ==========================================
# 6. HELLMANN-FEYNMAN
# ==========================================

@dataclass(frozen=True, eq=False)
class HellmannFeynmanResult:
    level: int
    energy: float
    energy_error: float
    slope: float
    slope_error: float
    curvature: float
    points: pd.DataFrame
    exact_energy: float
    exact_slope: float


def _check_symmetric(phi_grid):
    phi = np.sort(np.asarray(phi_grid, dtype=float))
    if phi.size < 3 or not np.allclose(phi, -phi[::-1], atol=1e-12):
        raise ValueError('phi grid must bracket 0 symmetrically with at least three points')
    return phi


def exact_level_slope(family: HamiltonianFamily, level: int, step=1e-4):
    """(E_level(0), central-difference dE/dphi) from the eigensolver."""
    def level_energy(phi):
        return float(family_at(family, phi).spectrum.eigenvalues[level])

    return level_energy(0.0), (level_energy(step) - level_energy(-step)) / (2.0 * step)


def hellmann_feynman(family: HamiltonianFamily, level: int, phi_grid, initial: StateVector, rng: RngStream,
                     e_min, e_max, passes=3, sigma_factor=3.5, points_per_pass=41, cycles=3, n_sets=400,
                     sigma0=None, threads=1) -> HellmannFeynmanResult:
    """
    Scan the `level`-th eigenvalue (ascending at phi = 0) across phi_grid with sequential scans,
    fit E(phi) quadratically, and read E(0) and dE/dphi off the fit.
    """
    phi = _check_symmetric(phi_grid)
    base_levels = family.base.spectrum.eigenvalues
    if not 0 <= level < base_levels.size:
        raise ValueError(f'level {level} outside 0..{base_levels.size - 1}')

    window = (e_max - e_min) / sigma_factor
    order = np.argsort(np.abs(phi), kind='stable')
    tracked = {}
    for step, index in enumerate(order):
        value = float(phi[index])
        h = family_at(family, value)
        report = sequential_scan(initial, h, e_min, e_max, passes, sigma_factor, points_per_pass,
                                 cycles, n_sets, rng.spawn(step), sigma0=sigma0, threads=threads)
        if not report.peaks:
            raise FitError(f'no eigenvalue recovered at phi={value}')
        if not tracked:
            reference = float(base_levels[level])
        else:
            nearest_phi = min(tracked, key=lambda p: abs(p - value))
            reference = tracked[nearest_phi][0]
        peak = min(report.peaks, key=lambda p: abs(p.energy - reference))
        if tracked and abs(peak.energy - reference) > window:
            raise BranchCrossingError(value, reference, peak.energy, window)
        tracked[value] = (peak.energy, peak.uncertainty)

    energies = np.array([tracked[float(p)][0] for p in phi])
    errors = np.array([tracked[float(p)][1] for p in phi])
    sigma = errors if np.all(errors > 0) else None
    fit = polyfit_quadratic(phi, energies, sigma=sigma)
    exact_energy, exact_slope = exact_level_slope(family, level)
    points = pd.DataFrame({'phi': phi, 'energy': energies, 'uncertainty': errors})
    logger.info('Hellmann-Feynman level %d: E(0)=%.6f, slope=%.5f +/- %.5f', level, fit.c0, fit.c1, fit.errors[1])
    return HellmannFeynmanResult(
        level=level, energy=fit.c0, energy_error=float(fit.errors[0]), slope=fit.c1,
        slope_error=float(fit.errors[1]), curvature=fit.c2, points=points,
        exact_energy=exact_energy, exact_slope=exact_slope,
    )


def prepared_observables(family: HamiltonianFamily, level: int, initial: StateVector, sigma, cycles,
                         rng: RngStream, trials=10, shots=5000, confusion=None) -> pd.DataFrame:
    """
    <X>, <Y>, <Z>, <H(0)>, <H(1)> of the rodeo-prepared single-qubit eigenstate: exact values
    and the mean/stderr of `trials` sampled Pauli measurements of `shots` shots each, read out
    through an optional confusion matrix and mitigated.
    """
    base, perturbation = family.base, family.perturbation
    if base.n_qubits != 1:
        raise ValueError('prepared observables are defined for single-qubit families')
    energy = float(base.spectrum.eigenvalues[level])
    paulis = {name: PauliString(name) for name in 'XYZ'}

    exact_state = StateVector.from_amplitudes(base.spectrum.eigenvectors[:, level])
    exact = {name: expectation_pauli(exact_state, p) for name, p in paulis.items()}

    samples = {name: [] for name in paulis}
    for trial in range(trials):
        stream = rng.spawn(trial)
        outcome = run_rodeo_exact(initial, base, RodeoConfig(energy, sigma, cycles), stream)
        for offset, (name, pauli) in enumerate(paulis.items()):
            samples[name].append(_sampled_single_qubit(outcome.post_selected_state, pauli, shots,
                                                       stream.spawn(offset), confusion))

    def combine(coefficients, values):
        c_i, c_x, c_y, c_z = coefficients
        return c_i + c_x * values['X'] + c_y * values['Y'] + c_z * values['Z']

    rows = []
    measured = {name: np.array(v) for name, v in samples.items()}
    for name in paulis:
        rows.append(_observable_row(name, exact[name], measured[name]))
    for name, model in (('H0', base), ('H1', perturbation)):
        coefficients = _single_qubit_coefficients(model)
        per_trial = combine(coefficients, measured)
        rows.append(_observable_row(name, combine(coefficients, exact), per_trial))
    return pd.DataFrame(rows)


def _observable_row(name, exact, values):
    spread = values.std(ddof=1) if values.size > 1 else 0.0
    return {'observable': name, 'exact': float(exact), 'mean': float(values.mean()),
            'stderr': float(spread / math.sqrt(values.size))}


def _single_qubit_coefficients(model: HamiltonianModel):
    by_letter = {t.letters: t.coefficient for t in model.terms} if model.terms else {
        t.letters: t.coefficient for t in model.pauli_decomposition()
    }
    return tuple(by_letter.get(letter, 0.0) for letter in 'IXYZ')


def _sampled_single_qubit(state: StateVector, pauli: PauliString, shots, rng: RngStream,
                          confusion: ConfusionMatrix | None):
    if confusion is None:
        return sampled_expectation_pauli(state, pauli, shots, rng)[0]
    rotated = rotate_to_measurement_basis(state.amplitudes, 1, pauli)
    probabilities = np.abs(rotated) ** 2
    counts = sample_readout(probabilities / probabilities.sum(), confusion, shots, rng)
    mitigated = confusion_mitigate(counts, confusion)
    return float(mitigated[0] - mitigated[1])
