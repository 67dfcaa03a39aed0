class EigenprepError(Exception):
    """Base class for every error raised by the eigenprep package."""


class ConfigError(EigenprepError):
    """An experiment config or preset could not be loaded or validated."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


# ==========================================
# NUMERICAL FAILURES
# ==========================================

class NumericalError(EigenprepError):
    """A computation could not produce a trustworthy result."""


class NotHermitianError(NumericalError):
    def __init__(self, max_asymmetry, tolerance):
        super().__init__(
            f'matrix is not Hermitian: max |A - A^H| entry {max_asymmetry:.3e} exceeds {tolerance:.1e}'
        )
        self.max_asymmetry = max_asymmetry
        self.tolerance = tolerance


class NotUnitaryError(NumericalError):
    def __init__(self, deviation, tolerance):
        super().__init__(f'matrix is not unitary: ||U^H U - I|| = {deviation:.3e} exceeds {tolerance:.1e}')
        self.deviation = deviation
        self.tolerance = tolerance


class FitError(NumericalError):
    """A least-squares fit failed; `best` holds the last parameters when there are any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConvergenceError(NumericalError):
    def __init__(self, message, best=None, status=None):
        super().__init__(message)
        self.best = best
        self.status = status


class FilteredToNothingError(NumericalError):
    """Every rodeo cycle has to keep some amplitude; this is raised when none survives."""


class TraceDriftError(NumericalError):
    def __init__(self, drift, dt):
        super().__init__(
            f'density-matrix trace drifted by {drift:.3e} at dt={dt:g} ns; rerun with a smaller dt'
        )
        self.drift = drift
        self.dt = dt


class SingularConfusionMatrixError(NumericalError):
    def __init__(self, qubit, p01, p10):
        super().__init__(
            f'confusion matrix is singular on qubit {qubit}: p01 + p10 = {p01 + p10:.4f} >= 1'
        )
        self.qubit = qubit


class BranchCrossingError(NumericalError):
    def __init__(self, phi, previous, current, window):
        super().__init__(
            f'tracked eigenvalue jumped from {previous:.6f} to {current:.6f} at phi={phi:g} '
            f'(window {window:.4f}); the branch crosses another level'
        )
        self.phi = phi


class DegenerateSpectrumError(NumericalError):
    def __init__(self, gap, tolerance):
        super().__init__(f'spectrum is degenerate: minimum gap {gap:.3e} below {tolerance:.1e}')
        self.gap = gap
