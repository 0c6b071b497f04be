"""Truncated Fock-space linear algebra.

Operators are plain ``(d, d)`` complex numpy arrays in the photon-number
basis ``|0>, |1>, ..., |d-1>``; pure states are length-``d`` vectors.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import comb, eval_genlaguerre, gammaln
from scipy.stats import poisson

from ._validation import check_dim, check_hermitian, check_square, check_unit_interval
from .exceptions import NotPSDError, TruncationError

DEFAULT_DIM = 15
TAIL_TOL = 1e-8
PSD_CLAMP_TOL = 1e-8

__all__ = [
    "DEFAULT_DIM", "annihilation", "creation", "number_operator",
    "coherent_amplitudes", "coherent_tail_mass", "coherent_state",
    "displacement", "displacement_elements", "psd_sqrt", "splitting_kraus",
    "apply_loss", "apply_loss_adjoint", "superposition_state", "ket2dm",
]


def annihilation(dim: int) -> np.ndarray:
    """Lowering operator with ``a[n-1, n] = sqrt(n)``."""
    dim = check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).conj().T


def number_operator(dim: int) -> np.ndarray:
    dim = check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def coherent_tail_mass(alpha: complex, dim: int) -> float:
    """Probability weight of ``|alpha>`` on photon numbers ``>= dim``."""
    return float(poisson.sf(dim - 1, abs(alpha) ** 2))


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Unnormalized first ``dim`` Fock amplitudes of ``|alpha>`` (no tail check)."""
    n = np.arange(dim)
    alpha = complex(alpha)
    if alpha == 0:
        amps = np.zeros(dim, dtype=complex)
        amps[0] = 1.0
        return amps
    log_mag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def coherent_state(alpha: complex, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Coherent state ``|alpha>`` truncated to ``dim`` levels and renormalized.

    Raises
    ------
    TruncationError
        If the discarded tail carries weight ``>= 1e-8``.
    """
    dim = check_dim(dim)
    tail = coherent_tail_mass(alpha, dim)
    if tail >= TAIL_TOL:
        raise TruncationError(
            f"|alpha|={abs(alpha):.3g} leaves tail mass {tail:.2e} beyond dim={dim}")
    amps = coherent_amplitudes(alpha, dim)
    return amps / np.linalg.norm(amps)


def displacement(beta: complex, dim: int = DEFAULT_DIM, pad: int = 0) -> np.ndarray:
    """Displacement operator ``exp(beta a^dag - beta^* a)`` on ``dim`` levels.

    The anti-Hermitian generator is diagonalized in ``dim + pad`` levels and
    the result cropped to ``dim``.  With ``pad=0`` this is the exponential of
    the truncated generator: exactly unitary, with ``D(b) D(-b) = I``, but
    wrong near the top levels.  A positive ``pad`` moves those edge errors
    out of the returned block (see :func:`displacement_elements` for exact
    entries).
    """
    dim = check_dim(dim)
    tail = coherent_tail_mass(beta, dim)
    if tail >= TAIL_TOL:
        raise TruncationError(
            f"|beta|={abs(beta):.3g} leaves D(beta)|0> tail mass {tail:.2e} beyond dim={dim}")
    big = dim + pad
    a = annihilation(big)
    generator = beta * a.conj().T - np.conj(beta) * a
    # generator = -i H with H Hermitian
    herm = 1j * generator
    w, v = np.linalg.eigh(0.5 * (herm + herm.conj().T))
    full = (v * np.exp(-1j * w)) @ v.conj().T
    return full[:dim, :dim]


def displacement_elements(beta: complex, rows: int, cols: int) -> np.ndarray:
    """Exact matrix elements ``<m|D(beta)|n>`` for ``m < rows``, ``n < cols``.

    Uses the associated-Laguerre closed form, so no truncation is involved.
    """
    beta = complex(beta)
    x = abs(beta) ** 2
    out = np.empty((rows, cols), dtype=complex)
    for m in range(rows):
        for n in range(cols):
            if m >= n:
                lo, hi, z = n, m, beta
            else:
                lo, hi, z = m, n, -np.conj(beta)
            pref = np.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * x)
            out[m, n] = pref * z ** (hi - lo) * eval_genlaguerre(lo, hi - lo, x)
    return out


def psd_sqrt(op: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in ``(-1e-8, 0)`` are clamped to zero; anything more negative
    raises :class:`NotPSDError`.
    """
    op = check_hermitian(op)
    w, v = np.linalg.eigh(0.5 * (op + op.conj().T))
    if w.min() < -PSD_CLAMP_TOL:
        raise NotPSDError(f"eigenvalue {w.min():.3e} below clamp tolerance")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


@lru_cache(maxsize=None)
def _binomial_table(dim: int):
    n = np.arange(dim)
    k = n[:, None]
    mask = k <= n[None, :]
    root = np.where(mask, np.sqrt(comb(n[None, :], k)), 0.0)
    power = np.where(mask, n[None, :] - k, 0)
    return root, power, mask


def splitting_kraus(reflect: float, dim: int) -> np.ndarray:
    """Kraus operators of splitting off amplitude fraction ``reflect``.

    Returns ``A`` with shape ``(dim, dim, dim)``; ``A[k]`` is the operator on
    the transmitted mode when ``k`` photons leave through the reflected port:
    ``A[k][n-k, n] = sqrt(C(n, k)) r^k t^(n-k)`` with ``t = sqrt(1 - r^2)``.
    """
    r = float(reflect)
    t = np.sqrt(max(0.0, 1.0 - r * r))
    root, power, mask = _binomial_table(dim)
    k = np.arange(dim)
    # 0**0 == 1 keeps the r -> 1 and r -> 0 limits exact
    coeff = root * np.power(r, k)[:, None] * np.where(mask, np.power(t, power), 0.0)
    ops = np.zeros((dim, dim, dim))
    kk, nn = np.nonzero(mask)
    ops[kk, nn - kk, nn] = coeff[kk, nn]
    return ops


def _loss(rho: np.ndarray, kraus: np.ndarray) -> np.ndarray:
    # works on a single matrix or a leading batch axis
    return np.einsum("kij,...jl,kml->...im", kraus, rho, kraus)


def _loss_adjoint(op: np.ndarray, kraus: np.ndarray) -> np.ndarray:
    return np.einsum("kji,...jl,klm->...im", kraus, op, kraus)


def apply_loss(rho: np.ndarray, transmittance: float) -> np.ndarray:
    """Pure-loss channel with energy transmittance ``transmittance``.

    Lowering-only, so the ``d``-level block of the output is exact for any
    input supported on ``d`` levels.
    """
    rho = check_square(rho, "rho")
    eta = check_unit_interval(transmittance, "transmittance")
    if eta == 1.0:
        return rho.copy()
    return _loss(rho, splitting_kraus(np.sqrt(1.0 - eta), rho.shape[0]))


def apply_loss_adjoint(op: np.ndarray, transmittance: float) -> np.ndarray:
    """Heisenberg-picture loss channel (acts on POVM elements)."""
    op = check_square(op, "op")
    eta = check_unit_interval(transmittance, "transmittance")
    if eta == 1.0:
        return op.copy()
    return _loss_adjoint(op, splitting_kraus(np.sqrt(1.0 - eta), op.shape[0]))


def superposition_state(sign: int, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Single-rail qubit ``(|0> + sign |1>)/sqrt(2)``."""
    dim = check_dim(dim)
    vec = np.zeros(dim, dtype=complex)
    vec[0] = 1.0
    vec[1] = 1.0 if sign > 0 else -1.0
    return vec / np.sqrt(2.0)


def ket2dm(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    return np.outer(vec, vec.conj())
