"""
Variational rodeo: a QAOA ansatz whose parameters are tuned against one minus the rodeo success
probability instead of (or after) the energy.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pandas as pd
from scipy.optimize import minimize

from .conf import numeric_config
from .exceptions import DegenerateSpectrumError
from .hamiltonian import HamiltonianModel
from .numerics import RngStream, central_gradient, gaussian_sample, parallel_map
from .register import StateVector
from .rodeo import gaussian_average_factor

logger = logging.getLogger(__name__)

ENERGY = 'energy'
OVERLAP = 'one_minus_overlap'
RODEO = 'one_minus_rodeo_success'
COST_KINDS = (ENERGY, OVERLAP, RODEO)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class QaoaAnsatz:
    """Parameters are laid out (gamma_1..gamma_p, beta_1..beta_p)."""

    h_mix: HamiltonianModel
    h_obj: HamiltonianModel
    depth: int

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f'depth must be >= 1, got {self.depth}')
        if self.h_mix.dim != self.h_obj.dim:
            raise ValueError('mixer and objective Hamiltonians act on different registers')

    @property
    def n_parameters(self) -> int:
        return 2 * self.depth

    @cached_property
    def initial_state(self) -> np.ndarray:
        spectrum = self.h_mix.spectrum
        gap = spectrum.eigenvalues[1] - spectrum.eigenvalues[0] if spectrum.dim > 1 else math.inf
        if gap < 1e-9:
            raise DegenerateSpectrumError(gap, 1e-9)
        return spectrum.eigenvectors[:, 0]


def qaoa_state(ansatz: QaoaAnsatz, parameters) -> StateVector:
    """Π_{j=p..1} exp(-i H_mix beta_j) exp(-i H_obj gamma_j) |psi_0>."""
    parameters = np.asarray(parameters, dtype=float)
    if parameters.shape != (ansatz.n_parameters,):
        raise ValueError(f'expected {ansatz.n_parameters} parameters, got {parameters.shape}')
    if not np.all(np.isfinite(parameters)):
        raise ValueError('ansatz parameters must be finite')
    obj, mix = ansatz.h_obj.spectrum, ansatz.h_mix.spectrum
    gammas, betas = parameters[: ansatz.depth], parameters[ansatz.depth:]

    psi = ansatz.initial_state
    for gamma, beta in zip(gammas, betas):
        psi = obj.eigenvectors @ (np.exp(-1j * obj.eigenvalues * gamma) * (obj.eigenvectors.conj().T @ psi))
        psi = mix.eigenvectors @ (np.exp(-1j * mix.eigenvalues * beta) * (mix.eigenvectors.conj().T @ psi))
    return StateVector.from_amplitudes(psi, normalize=True)


# ==========================================
# COSTS
# ==========================================

@dataclass(frozen=True, eq=False)
class CostFunction:
    kind: str
    energy: float | None = None
    sigma: float | None = None
    cycles: int | None = None
    target: np.ndarray | None = None
    times: np.ndarray | None = None  # (n_sets, cycles) fixed draws for the sampled rodeo cost

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f'unknown cost kind {self.kind!r}; expected one of {COST_KINDS}')
        if self.kind == RODEO:
            if self.energy is None or self.sigma is None or self.cycles is None:
                raise ValueError('the rodeo cost needs energy, sigma and cycles')
            if self.sigma < 0 or self.cycles < 1:
                raise ValueError(f'invalid rodeo parameters sigma={self.sigma}, cycles={self.cycles}')
        if self.times is not None:
            times = np.atleast_2d(np.asarray(self.times, dtype=float))
            if times.shape[1] != self.cycles:
                raise ValueError(f'sampled times have {times.shape[1]} columns for {self.cycles} cycles')
            object.__setattr__(self, 'times', times)

    def level_factors(self, energies) -> np.ndarray:
        """Per-eigenvalue success factor: Gaussian-averaged, or the mean over the fixed t-sets."""
        energies = np.asarray(energies, dtype=float)
        if self.times is None:
            return gaussian_average_factor(energies - self.energy, self.sigma) ** self.cycles
        phases = (energies[None, None, :] - self.energy) * self.times[:, :, None] / 2.0
        return np.mean(np.prod(np.cos(phases) ** 2, axis=1), axis=0)


def sampled_rodeo_cost(energy, sigma, cycles, n_sets, rng: RngStream) -> CostFunction:
    times = gaussian_sample(rng, 0.0, sigma, n_sets * cycles).reshape(n_sets, cycles)
    return CostFunction(RODEO, energy=energy, sigma=sigma, cycles=cycles, times=times)


def overlap_cost(h_obj: HamiltonianModel, level=0) -> CostFunction:
    """Overlap cost against an oracle eigenvector; a test instrument, not a practical target."""
    return CostFunction(OVERLAP, target=h_obj.spectrum.eigenvectors[:, level])


def evaluate_cost(cost: CostFunction, state: StateVector, h_obj: HamiltonianModel) -> float:
    if state.dim != h_obj.dim:
        raise ValueError(f'state has dim {state.dim}, Hamiltonian {h_obj.dim}')
    if cost.kind == OVERLAP:
        if cost.target is None:
            raise ValueError('overlap cost needs an oracle target state')
        return 1.0 - abs(np.vdot(cost.target, state.amplitudes)) ** 2

    spectrum = h_obj.spectrum
    weights = spectrum.weights(state.amplitudes)
    if cost.kind == ENERGY:
        return float(weights @ spectrum.eigenvalues)
    return float(1.0 - weights @ cost.level_factors(spectrum.eigenvalues))


def steepest_direction(kind, weights, energies, energy=None, sigma=None, cycles=None, ground_index=0):
    """
    Steepest-ascent direction for |c_n|^2 under each cost: the per-level figure of merit minus
    its weighted mean, so Σ |c_n|^2 Δ_n = 0.
    """
    weights = np.asarray(weights, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if weights.shape != energies.shape:
        raise ValueError('weights and energies differ in length')
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f'weights must sum to 1, got {weights.sum()!r}')

    if kind == ENERGY:
        merit = -energies
    elif kind == OVERLAP:
        merit = np.zeros_like(weights)
        merit[ground_index] = 1.0
    elif kind == RODEO:
        merit = CostFunction(RODEO, energy=energy, sigma=sigma, cycles=cycles).level_factors(energies)
    else:
        raise ValueError(f'unknown cost kind {kind!r}')
    return merit - weights @ merit


# ==========================================
# OPTIMIZATION
# ==========================================

@dataclass
class OptimizationTrace:
    costs: list = field(default_factory=list)
    parameters: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    status: int = 0
    message: str = ''

    def record(self, cost, parameters, diagnostics=None, stage=''):
        self.costs.append(float(cost))
        self.parameters.append(np.array(parameters, dtype=float))
        self.diagnostics.append(diagnostics or {})
        self.stages.append(stage)

    @property
    def iterations(self) -> int:
        return len(self.costs) - 1

    @property
    def final_cost(self) -> float:
        return self.costs[-1]

    @property
    def final_parameters(self) -> np.ndarray:
        return self.parameters[-1]

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.array(self.costs))

    def extend(self, other: 'OptimizationTrace') -> 'OptimizationTrace':
        """Concatenate; the first point of `other` repeats our last one and is dropped."""
        return OptimizationTrace(
            self.costs + other.costs[1:], self.parameters + other.parameters[1:],
            self.diagnostics + other.diagnostics[1:], self.stages + other.stages[1:],
            other.status, other.message,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.diagnostics)
        frame.insert(0, 'cost', self.costs)
        frame.insert(0, 'stage', self.stages)
        frame.insert(0, 'iteration', np.arange(len(self.costs)))
        wrapped = np.mod(np.array(self.parameters), TWO_PI)
        for index in range(wrapped.shape[1]):
            frame[f'theta_{index}'] = wrapped[:, index]
        return frame


def bfgs_minimize(fn, x0, max_iter, fd_step=None, gtol=None, diagnostics=None, stage='') -> OptimizationTrace:
    """
    scipy BFGS with central finite-difference gradients. Parameters stay unconstrained; they
    are wrapped into [0, 2pi) only in reports. Line-search failure ends the trace with its status.
    """
    step = numeric_config().fd_step if fd_step is None else fd_step
    gtol = numeric_config().gradient_tol if gtol is None else gtol
    x0 = np.asarray(x0, dtype=float)
    trace = OptimizationTrace()

    def observe(x, cost=None):
        value = fn(x) if cost is None else cost
        trace.record(value, x, diagnostics(x) if diagnostics else None, stage)
        logger.debug('%s iteration %d: cost %.10f', stage or 'bfgs', trace.iterations, value)

    observe(x0)
    if max_iter == 0:
        return trace

    def callback(intermediate_result):
        observe(intermediate_result.x, intermediate_result.fun)

    result = minimize(
        fn, x0, method='BFGS', jac=lambda x: central_gradient(fn, x, step),
        callback=callback, options={'maxiter': max_iter, 'gtol': gtol},
    )
    trace.status, trace.message = int(result.status), str(result.message)
    if result.status == 1:
        logger.warning('%s stopped on the iteration cap (%d)', stage or 'bfgs', max_iter)
    elif result.status == 2:
        logger.warning('%s line search failed: %s', stage or 'bfgs', result.message)
    return trace


def ansatz_objective(ansatz: QaoaAnsatz, cost: CostFunction):
    def objective(parameters):
        return evaluate_cost(cost, qaoa_state(ansatz, parameters), ansatz.h_obj)

    return objective


def ansatz_diagnostics(ansatz: QaoaAnsatz, rodeo: CostFunction | None = None):
    """Energy, ground-state overlap and (when given) rodeo success of the ansatz output."""
    ground = ansatz.h_obj.spectrum.eigenvectors[:, 0]
    energy_cost = CostFunction(ENERGY)

    def diagnostics(parameters):
        state = qaoa_state(ansatz, parameters)
        values = {
            'energy': evaluate_cost(energy_cost, state, ansatz.h_obj),
            'ground_overlap': abs(np.vdot(ground, state.amplitudes)) ** 2,
        }
        if rodeo is not None:
            values['rodeo_success'] = 1.0 - evaluate_cost(rodeo, state, ansatz.h_obj)
        return values

    return diagnostics


def random_start(rng: RngStream, n_parameters) -> np.ndarray:
    return rng.uniform(0.0, TWO_PI, n_parameters)


@dataclass(frozen=True, eq=False)
class MultistartResult:
    traces: list
    best_index: int

    @property
    def best(self) -> OptimizationTrace:
        return self.traces[self.best_index]

    def summary(self) -> pd.DataFrame:
        rows = []
        for index, trace in enumerate(self.traces):
            rows.append({'restart': index, 'final_cost': trace.final_cost, 'iterations': trace.iterations,
                         'status': trace.status, **trace.diagnostics[-1]})
        return pd.DataFrame(rows)


def _pick_best(traces) -> int:
    finals = np.array([t.final_cost for t in traces])
    return int(np.flatnonzero(finals <= finals.min() + 1e-12)[0])


def multistart(fn, n_parameters, n_starts, rng: RngStream, max_iter, diagnostics=None, threads=1,
               stage='') -> MultistartResult:
    """BFGS from `n_starts` uniform starts on [0, 2pi)^d; start s draws from rng.spawn(s)."""
    if n_starts < 1:
        raise ValueError('n_starts must be >= 1')

    def run(index):
        x0 = random_start(rng.spawn(index), n_parameters)
        return bfgs_minimize(fn, x0, max_iter, diagnostics=diagnostics, stage=stage)

    traces = parallel_map(run, range(n_starts), threads)
    best = _pick_best(traces)
    logger.info('multistart: best restart %d of %d, cost %.8f', best, n_starts, traces[best].final_cost)
    return MultistartResult(traces, best)


def excited_sweep(ansatz: QaoaAnsatz, grid, sigma, cycles, n_starts, max_iter, rng: RngStream,
                  threads=1, gap_tol=1e-9):
    """
    Optimize the rodeo cost at every grid energy and report which eigenstate dominates the
    result. Returns (per-energy summary, long overlap table over all eigenstates).
    """
    spectrum = ansatz.h_obj.spectrum
    if spectrum.min_gap() < gap_tol:
        raise DegenerateSpectrumError(spectrum.min_gap(), gap_tol)
    eigenvalues = spectrum.eigenvalues
    rows, overlaps = [], []
    for point, energy in enumerate(grid):
        cost = CostFunction(RODEO, energy=float(energy), sigma=sigma, cycles=cycles)
        result = multistart(ansatz_objective(ansatz, cost), ansatz.n_parameters, n_starts,
                            rng.spawn(point), max_iter, threads=threads, stage='vra')
        state = qaoa_state(ansatz, result.best.final_parameters)
        weights = spectrum.weights(state.amplitudes)
        distances = np.abs(eigenvalues - energy)
        nearest = int(np.argmin(distances))
        ambiguous = bool(np.sum(distances <= distances[nearest] + 1e-9) > 1)
        dominant = int(np.argmax(weights))
        if ambiguous:
            logger.warning('E=%.5f sits midway between eigenvalues; target window is degenerate', energy)
        elif dominant != nearest:
            logger.warning('E=%.5f: dominant level %d, nearest level %d', energy, dominant, nearest)
        rows.append({
            'energy': float(energy), 'nearest_level': nearest, 'dominant_level': dominant,
            'dominant_overlap': float(weights[dominant]), 'rule_holds': dominant == nearest,
            'ambiguous': ambiguous, 'final_cost': result.best.final_cost,
        })
        overlaps.extend(
            {'energy': float(energy), 'level': level, 'eigenvalue': float(value), 'overlap': float(weight)}
            for level, (value, weight) in enumerate(zip(eigenvalues, weights))
        )
    return pd.DataFrame(rows), pd.DataFrame(overlaps)


def two_stage(ansatz: QaoaAnsatz, rodeo: CostFunction, stage1_iters, stage2_iters, n_starts, rng: RngStream,
              threads=1) -> MultistartResult:
    """Energy minimization, then the rodeo cost from wherever stage one ended."""
    energy_fn = ansatz_objective(ansatz, CostFunction(ENERGY))
    rodeo_fn = ansatz_objective(ansatz, rodeo)
    diagnostics = ansatz_diagnostics(ansatz, rodeo)

    def run(index):
        x0 = random_start(rng.spawn(index), ansatz.n_parameters)
        first = bfgs_minimize(energy_fn, x0, stage1_iters, diagnostics=diagnostics, stage='energy')
        if stage2_iters == 0:
            return first
        second = bfgs_minimize(rodeo_fn, first.final_parameters, stage2_iters, diagnostics=diagnostics, stage='vra')
        return first.extend(second)

    traces = parallel_map(run, range(n_starts), threads)
    return MultistartResult(traces, _pick_best(traces))


def landscape_grid(h_obj: HamiltonianModel, h_mix: HamiltonianModel, gamma_range, beta_range, resolution,
                   costs: dict) -> pd.DataFrame:
    """
    Depth-one cost landscapes on a resolution x resolution lattice, long format with one column
    per named cost. The x-mixer spectrum is spaced by 2, so beta repeats with period pi.
    """
    if resolution < 2:
        raise ValueError('landscape resolution must be >= 2')
    ansatz = QaoaAnsatz(h_mix, h_obj, depth=1)
    gammas = np.linspace(gamma_range[0], gamma_range[1], resolution)
    betas = np.linspace(beta_range[0], beta_range[1], resolution)
    rows = []
    for gamma in gammas:
        for beta in betas:
            state = qaoa_state(ansatz, [gamma, beta])
            row = {'gamma': gamma, 'beta': beta}
            for name, cost in costs.items():
                row[name] = evaluate_cost(cost, state, h_obj)
            rows.append(row)
    return pd.DataFrame(rows)
