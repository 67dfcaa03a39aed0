"""
Dense complex linear algebra shared by every simulator module: tensor products, Hermitian
eigendecomposition, unitary exponentials, seeded sampling and least-squares fitting.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy import optimize

from .conf import numeric_config
from .exceptions import ConvergenceError, FitError, NotHermitianError, NotUnitaryError, NumericalError

logger = logging.getLogger(__name__)

RNG_ALGORITHM = 'philox4x64-boxmuller'
_U64 = 2**64


# ==========================================
# 1. RANDOM STREAMS
# ==========================================

def derive_seed(parent_seed: int, task_index: int) -> int:
    """child_seed = hash(parent_seed, task_index), via numpy's SeedSequence mixing."""
    sequence = np.random.SeedSequence([int(parent_seed), int(task_index)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


class RngStream:
    """
    Seeded counter-based stream (Philox 4x64). Single owner: parallel callers take
    `spawn(i)` children instead of sharing one stream.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < _U64:
            raise ValueError(f'seed must be an unsigned 64-bit integer, got {seed}')
        self.seed = seed
        self._generator = np.random.Generator(np.random.Philox(seed))

    def __repr__(self):
        return f'RngStream(seed={self.seed}, algorithm={self.algorithm!r})'

    def spawn(self, task_index: int) -> 'RngStream':
        return RngStream(derive_seed(self.seed, task_index))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size)

    def binomial(self, n, p, size=None):
        return self._generator.binomial(n, p, size)

    def multinomial(self, n, pvals):
        return self._generator.multinomial(n, pvals)


def gaussian_sample(rng: RngStream, mean: float, sigma: float, count: int) -> np.ndarray:
    """Box-Muller normals; both outputs of each uniform pair are used."""
    if sigma < 0:
        raise ValueError(f'sigma must be >= 0, got {sigma}')
    if count < 0:
        raise ValueError(f'count must be >= 0, got {count}')
    if count == 0:
        return np.empty(0)
    pairs = (count + 1) // 2
    u1 = 1.0 - rng.uniform(size=pairs)  # (0, 1]
    u2 = rng.uniform(size=pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    normals = np.column_stack((radius * np.cos(angle), radius * np.sin(angle))).ravel()[:count]
    return mean + sigma * normals


def parallel_map(fn, items, threads=1):
    """Ordered map; results never depend on `threads`."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ==========================================
# 2. MATRICES
# ==========================================

def kron(*matrices) -> np.ndarray:
    if not matrices:
        raise ValueError('kron needs at least one operand')
    return reduce(np.kron, (np.asarray(m) for m in matrices))


def max_asymmetry(h) -> float:
    h = np.asarray(h)
    return float(np.abs(h - h.conj().T).max()) if h.size else 0.0


def check_hermitian(h, tol=None) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f'expected a square matrix, got shape {h.shape}')
    tol = numeric_config().hermitian_tol if tol is None else tol
    asym = max_asymmetry(h)
    if asym > tol * max(1.0, float(np.abs(h).max())):
        raise NotHermitianError(asym, tol)
    return h


def check_unitary(u, tol=None) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f'expected a square matrix, got shape {u.shape}')
    tol = numeric_config().unitary_tol if tol is None else tol
    deviation = float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))
    if deviation > tol:
        raise NotUnitaryError(deviation, tol)
    return u


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def weights(self, amplitudes) -> np.ndarray:
        """|<E_k|psi>|^2 for every eigenvector."""
        return np.abs(self.eigenvectors.conj().T @ np.asarray(amplitudes)) ** 2

    def min_gap(self) -> float:
        if self.dim < 2:
            return math.inf
        return float(np.diff(self.eigenvalues).min())


def jacobi_eigh(h: np.ndarray, tol=None, max_sweeps=None):
    """
    Cyclic Jacobi for complex Hermitian matrices. Each rotation first strips the phase of
    a_pq, then applies the real symmetric 2x2 rotation that zeroes it.
    """
    config = numeric_config()
    tol = config.jacobi_tol if tol is None else tol
    max_sweeps = config.jacobi_max_sweeps if max_sweeps is None else max_sweeps

    a = np.array(h, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(float(np.linalg.norm(a)), 1e-300)

    for sweep in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(np.abs(a) ** 2) - np.sum(np.abs(np.diag(a)) ** 2)), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = a[p, q]
                magnitude = abs(b)
                if magnitude <= tol * scale * 1e-3:
                    continue
                phase = np.conj(b / magnitude)
                theta = 0.5 * math.atan2(2.0 * magnitude, a[q, q].real - a[p, p].real)
                c, s = math.cos(theta), math.sin(theta)
                rotation = np.array([[c, s], [-s * phase, c * phase]])
                pair = [p, q]
                a[:, pair] = a[:, pair] @ rotation
                a[pair, :] = rotation.conj().T @ a[pair, :]
                a[p, q] = a[q, p] = 0.0
                v[:, pair] = v[:, pair] @ rotation
    else:
        raise ConvergenceError(f'Jacobi did not converge in {max_sweeps} sweeps', status='max_sweeps')

    logger.debug('jacobi converged after %d sweeps (dim %d)', sweep, n)
    eigenvalues = np.diag(a).real.copy()
    order = np.argsort(eigenvalues, kind='stable')
    return eigenvalues[order], v[:, order]


def eig_hermitian(h, method='lapack', check=True) -> EigenDecomposition:
    """
    Ascending eigenpairs of a Hermitian matrix. `method="lapack"` calls LAPACK's divide-and-
    conquer `eigh`; `method="jacobi"` runs the cyclic Jacobi solver above.
    """
    config = numeric_config()
    h = check_hermitian(h)
    h = 0.5 * (h + h.conj().T)

    if method == 'lapack':
        eigenvalues, eigenvectors = np.linalg.eigh(h)
    elif method == 'jacobi':
        eigenvalues, eigenvectors = jacobi_eigh(h)
    else:
        raise ValueError(f'unknown eigensolver {method!r}')

    if check and h.size:
        norm = max(float(np.abs(eigenvalues).max()), 1.0)
        residual = float(np.linalg.norm(h @ eigenvectors - eigenvectors * eigenvalues, axis=0).max())
        if residual > config.eigen_residual_tol * norm:
            raise NumericalError(f'eigen residual {residual:.3e} exceeds {config.eigen_residual_tol:.1e}*||H||')
    return EigenDecomposition(eigenvalues, eigenvectors)


def expm_unitary(h, t: float, decomposition: EigenDecomposition | None = None) -> np.ndarray:
    """e^{-iHt} through the eigenbasis of H."""
    dec = decomposition if decomposition is not None else eig_hermitian(h)
    v = dec.eigenvectors
    return (v * np.exp(-1j * dec.eigenvalues * t)) @ v.conj().T


def central_gradient(fn, x, step=None) -> np.ndarray:
    step = numeric_config().fd_step if step is None else step
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        shift = np.zeros_like(x)
        shift[i] = step
        grad[i] = (fn(x + shift) - fn(x - shift)) / (2.0 * step)
    return grad


# ==========================================
# 3. FITTING
# ==========================================

@dataclass(frozen=True, eq=False)
class QuadraticFit:
    c0: float
    c1: float
    c2: float
    covariance: np.ndarray

    def __iter__(self):
        return iter((self.c0, self.c1, self.c2))

    @property
    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def polyfit_quadratic(xs, ys, sigma=None) -> QuadraticFit:
    """
    Least squares for c0 + c1 x + c2 x^2. With `sigma` the covariance uses the given
    absolute errors; without it, the residual variance.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape:
        raise ValueError('xs and ys differ in length')
    if np.unique(x).size < 3:
        raise FitError('quadratic fit needs at least three distinct x values')

    weights = np.ones_like(x) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    design = np.vander(x, 3, increasing=True) * weights[:, None]
    coefficients, _, rank, _ = np.linalg.lstsq(design, y * weights, rcond=None)
    if rank < 3:
        raise FitError(f'quadratic design matrix is rank deficient (rank {rank})')

    normal = np.linalg.inv(design.T @ design)
    if sigma is None:
        dof = x.size - 3
        residual = y - np.vander(x, 3, increasing=True) @ coefficients
        variance = float(residual @ residual) / dof if dof > 0 else 0.0
        covariance = normal * variance
    else:
        covariance = normal
    return QuadraticFit(*map(float, coefficients), covariance=covariance)


@dataclass(frozen=True, eq=False)
class PeakFit:
    center: float
    height: float
    width: float
    background: float
    errors: np.ndarray  # 1-sigma for (center, height, width, background)

    @property
    def center_error(self) -> float:
        return float(self.errors[0])


def _gaussian(params, x):
    center, height, width, background = params
    return background + height * np.exp(-((x - center) ** 2) / (2.0 * width**2))


def _gaussian_jacobian(params, x):
    center, height, width, _ = params
    shape = np.exp(-((x - center) ** 2) / (2.0 * width**2))
    return np.column_stack(
        (
            height * shape * (x - center) / width**2,
            shape,
            height * shape * (x - center) ** 2 / width**3,
            np.ones_like(x),
        )
    )


def gaussian_peak_fit(xs, ys, max_iter=None) -> PeakFit:
    """Levenberg-Marquardt fit of b + h exp(-(x-c)^2 / 2w^2) with an analytic Jacobian."""
    config = numeric_config()
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 4:
        raise FitError('peak fit needs at least four points')
    if y.max() - y.min() <= config.flat_tol * max(1.0, float(np.abs(y).max())):
        raise FitError('no peak: data is flat')

    guess = np.array([x[np.argmax(y)], y.max() - y.min(), (x.max() - x.min()) / 6.0, y.min()])
    result = optimize.least_squares(
        lambda p: _gaussian(p, x) - y,
        guess,
        jac=lambda p: _gaussian_jacobian(p, x),
        method='lm',
        max_nfev=max_iter or config.peak_fit_max_iter,
    )
    if result.status <= 0:
        raise FitError(f'peak fit did not converge: {result.message}', best=result.x)

    center, height, width, background = result.x
    dof = max(x.size - 4, 1)
    variance = 2.0 * result.cost / dof
    jac = result.jac
    try:
        covariance = np.linalg.inv(jac.T @ jac) * variance
    except np.linalg.LinAlgError:
        covariance = np.linalg.pinv(jac.T @ jac) * variance
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    return PeakFit(float(center), float(height), float(abs(width)), float(background), errors)
