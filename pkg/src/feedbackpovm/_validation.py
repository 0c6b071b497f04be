"""Input validation helpers used at public entry points."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DimensionError, NotPSDError, ParameterError

HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-10


def check_dim(dim) -> int:
    if not isinstance(dim, numbers.Integral) or isinstance(dim, bool):
        raise DimensionError(f"dimension must be an integer, got {dim!r}")
    if dim < 2:
        raise DimensionError(f"dimension must be >= 2, got {dim}")
    return int(dim)


def check_unit_interval(value, name: str, *, open_left=False, open_right=False) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a real number, got {value!r}") from None
    lo_ok = value > 0.0 if open_left else value >= 0.0
    hi_ok = value < 1.0 if open_right else value <= 1.0
    if not (lo_ok and hi_ok and np.isfinite(value)):
        raise ParameterError(f"{name} must lie in the unit interval, got {value}")
    return value


def check_square(op, name: str = "operator") -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {op.shape}")
    check_dim(op.shape[0])
    return op


def is_hermitian(op, atol: float = HERMITIAN_ATOL) -> bool:
    op = np.asarray(op)
    return bool(np.allclose(op, op.conj().T, rtol=0.0, atol=atol))


def check_hermitian(op, name: str = "operator", atol: float = 1e-10) -> np.ndarray:
    op = check_square(op, name)
    if not is_hermitian(op, atol):
        raise ParameterError(f"{name} is not Hermitian")
    return op


def check_density_matrix(rho, name: str = "rho", *, allow_subnormalized=False,
                         atol: float = 1e-8) -> np.ndarray:
    """Validate a (possibly sub-normalized) density matrix."""
    rho = check_hermitian(rho, name)
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if evals.min() < -PSD_ATOL:
        raise NotPSDError(f"{name} has negative eigenvalue {evals.min():.3e}")
    tr = float(np.trace(rho).real)
    if allow_subnormalized:
        if tr > 1.0 + atol:
            raise ParameterError(f"{name} has trace {tr} > 1")
    elif abs(tr - 1.0) > atol:
        raise ParameterError(f"{name} has trace {tr}, expected 1")
    return rho


def check_random_state(seed) -> np.random.Generator:
    """Counter-based generator from an int seed (or pass a Generator through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))
