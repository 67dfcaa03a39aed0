"""
Global numeric tolerances.

Every tolerance the kernel checks against lives in one record, overridable through
``settings.EIGENPREP_NUMERICS``. The kernel must also work from plain scripts where Django
settings were never configured, so a missing settings module falls back to the defaults.
"""

from dataclasses import dataclass, fields, replace
from functools import lru_cache

from django.core.exceptions import ImproperlyConfigured


@dataclass(frozen=True)
class NumericConfig:
    hermitian_tol: float = 1e-12
    eigen_residual_tol: float = 1e-10
    unitary_tol: float = 1e-8
    norm_tol: float = 1e-10
    jacobi_max_sweeps: int = 100
    jacobi_tol: float = 1e-14
    peak_fit_max_iter: int = 2000
    flat_tol: float = 1e-12
    fd_step: float = 1e-5
    gradient_tol: float = 1e-8
    psd_tol: float = 1e-8
    trace_drift_tol: float = 1e-4
    underflow: float = 1e-300


def _settings_overrides():
    try:
        from django.conf import settings

        return dict(getattr(settings, 'EIGENPREP_NUMERICS', {}) or {})
    except ImproperlyConfigured:
        return {}


@lru_cache(maxsize=1)
def numeric_config() -> NumericConfig:
    overrides = _settings_overrides()
    known = {f.name for f in fields(NumericConfig)}
    unknown = set(overrides) - known
    if unknown:
        raise ImproperlyConfigured(f'EIGENPREP_NUMERICS has unknown keys: {sorted(unknown)}')
    return replace(NumericConfig(), **overrides)


def reset_numeric_config():
    """Drop the cached record, e.g. after ``override_settings`` in tests."""
    numeric_config.cache_clear()
