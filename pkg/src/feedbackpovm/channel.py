"""Physics of one receiver stage.

A stage splits off a fraction ``r^2`` of the remaining signal with a beam
splitter (equivalently: one time bin of weight ``w``), displaces it by
``beta`` and detects it with an on/off photon counter.  The remaining mode is
passed to the next stage.

Imperfect stages (efficiency ``eta``, visibility ``xi``, dark counts) are
modelled by splitting the reflected light further into an interfering,
detected part, a non-interfering detected part and an undetected part, each
with its own fresh vacuum ancilla.  For a single full-measurement stage this
is the same two-mode construction as :func:`two_mode_off_probability`, which
is kept as an independent cross-check.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import gammaln

from . import fock
from ._validation import check_square, check_unit_interval
from .exceptions import ConsistencyError, ParameterError

Outcome = Union[str, bool]

N_MAX_ON = 25
PROB_TOL = 1e-10


@dataclass(frozen=True)
class StageParams:
    """Parameters of stage ``index``.

    ``reflect`` is the amplitude reflectance ``r``; the last stage of a
    receiver always has ``reflect == 1``.  ``weight`` is the stage's share of
    the temporal mode, used only to apportion dark counts.
    """

    beta: complex
    reflect: float
    index: int = 1
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", complex(self.beta))
        r = float(self.reflect)
        if not (0.0 < r <= 1.0):
            raise ParameterError(f"reflect must lie in (0, 1], got {r}")
        object.__setattr__(self, "reflect", r)
        check_unit_interval(self.weight, "weight")

    @property
    def transmit(self) -> float:
        return float(np.sqrt(max(0.0, 1.0 - self.reflect ** 2)))


@dataclass(frozen=True)
class ImperfectionParams:
    """Detector and interference imperfections.

    ``dark_rate`` is the dark-count probability rate per full state; stage
    ``i`` sees ``dark_rate * w_i``.  With ``calibrated=True`` the efficiency is
    absorbed into the amplitude calibration (``sqrt(eta) alpha -> alpha``) and
    the click model uses unit efficiency; ``efficiency`` is then only recorded.
    """

    efficiency: float = 1.0
    visibility: float = 1.0
    dark_rate: float = 0.0
    discard_fraction: float = 0.0
    calibrated: bool = False

    def __post_init__(self):
        check_unit_interval(self.efficiency, "efficiency")
        check_unit_interval(self.visibility, "visibility")
        check_unit_interval(self.discard_fraction, "discard_fraction", open_right=True)
        if not (np.isfinite(self.dark_rate) and self.dark_rate >= 0):
            raise ParameterError(f"dark_rate must be >= 0, got {self.dark_rate}")

    @property
    def effective_efficiency(self) -> float:
        return 1.0 if self.calibrated else float(self.efficiency)

    @property
    def is_ideal(self) -> bool:
        return (self.effective_efficiency == 1.0 and self.visibility == 1.0
                and self.dark_rate == 0.0 and self.discard_fraction == 0.0)

    def replace(self, **changes) -> "ImperfectionParams":
        return ImperfectionParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ImperfectionParams":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown imperfection fields: {sorted(unknown)}")
        return cls(**doc)


IDEAL = ImperfectionParams()


def _kraus_zero_coeffs(gamma: np.ndarray, dim: int) -> np.ndarray:
    # <-gamma|k> weights multiplying the splitting Kraus operators
    k = np.arange(dim)
    gamma = np.atleast_1d(np.asarray(gamma, dtype=complex))
    with np.errstate(divide="ignore"):
        mag = np.exp(-0.5 * np.abs(gamma)[:, None] ** 2 - 0.5 * gammaln(k + 1))
    return mag * (-np.conj(gamma))[:, None] ** k


def _kraus_zero(reflect: float, gamma, dim: int) -> np.ndarray:
    """``<0|_R D_R(gamma) U_BS(reflect)`` without any division by ``t``."""
    coeffs = _kraus_zero_coeffs(gamma, dim)
    ops = fock.splitting_kraus(reflect, dim)
    out = np.einsum("bk,kij->bij", coeffs, ops)
    return out[0] if np.ndim(gamma) == 0 else out


@dataclass(frozen=True)
class _StageModel:
    """Beam-splitter cascade equivalent of one (possibly imperfect) stage."""

    reflect_a: float        # interfering + detected share of the full mode
    gamma: complex          # displacement seen by that share
    reflect_b: float        # non-interfering detected share, relative to remainder
    loss_transmit: float    # undetected share, as transmittance of the last split
    total_transmit: float   # tau^2: energy left for the next stage
    off_factor: float       # dark counts and non-interfering displacement light


def _stage_model(stage: StageParams, imp: ImperfectionParams | None) -> _StageModel:
    imp = imp or IDEAL
    eta = imp.effective_efficiency
    xi = imp.visibility
    r2 = stage.reflect ** 2
    tau2 = max(0.0, 1.0 - r2)
    ca2 = r2 * eta * xi
    rest1 = 1.0 - ca2
    cb2 = r2 * eta * (1.0 - xi)
    cb_rel2 = cb2 / rest1 if rest1 > 0 else 0.0
    rest2 = rest1 - cb2
    tc2 = min(1.0, tau2 / rest2) if rest2 > 0 else 0.0
    f = np.exp(-imp.dark_rate * stage.weight - (1.0 - xi) * eta * abs(stage.beta) ** 2)
    return _StageModel(np.sqrt(ca2), np.sqrt(eta * xi) * stage.beta, np.sqrt(cb_rel2),
                       tc2, tau2, float(f))


def kraus_zero(stage: StageParams, dim: int = fock.DEFAULT_DIM) -> np.ndarray:
    """No-click Kraus operator of an ideal stage.

    Equal to ``exp(-|b|^2/2) exp(-a b^* r/t) t^(a^dag a)`` for ``r < 1`` and to
    ``|0><-b|`` in the ``r -> 1`` limit.
    """
    return _kraus_zero(stage.reflect, stage.beta, dim)


def kraus_n(stage: StageParams, n: int, dim: int = fock.DEFAULT_DIM) -> np.ndarray:
    """``n``-click Kraus operator of an ideal stage, ``<n|_R D_R(b) U_BS``."""
    if n < 0:
        raise ParameterError("photon count must be non-negative")
    if n == 0:
        return kraus_zero(stage, dim)
    ops = fock.splitting_kraus(stage.reflect, dim)
    d_row = fock.displacement_elements(stage.beta, n + 1, dim)[n]
    return np.einsum("k,kij->ij", d_row, ops)


def _off_map(rho: np.ndarray, model: _StageModel) -> np.ndarray:
    dim = rho.shape[-1]
    ka = _kraus_zero(model.reflect_a, model.gamma, dim)
    if model.reflect_b > 0:
        ka = _kraus_zero(model.reflect_b, 0.0, dim) @ ka
    out = ka @ rho @ ka.conj().T
    if model.loss_transmit < 1.0:
        out = fock._loss(out, fock.splitting_kraus(np.sqrt(1.0 - model.loss_transmit), dim))
    return model.off_factor * out


def _total_map(rho: np.ndarray, model: _StageModel) -> np.ndarray:
    if model.total_transmit == 1.0:
        return rho.copy()
    dim = rho.shape[-1]
    return fock._loss(rho, fock.splitting_kraus(np.sqrt(1.0 - model.total_transmit), dim))


def _off_adjoint(op: np.ndarray, model: _StageModel) -> np.ndarray:
    dim = op.shape[-1]
    ka = _kraus_zero(model.reflect_a, model.gamma, dim)
    if model.reflect_b > 0:
        ka = _kraus_zero(model.reflect_b, 0.0, dim) @ ka
    if model.loss_transmit < 1.0:
        op = fock._loss_adjoint(op, fock.splitting_kraus(np.sqrt(1.0 - model.loss_transmit), dim))
    return model.off_factor * (ka.conj().T @ op @ ka)


def _total_adjoint(op: np.ndarray, model: _StageModel) -> np.ndarray:
    if model.total_transmit == 1.0:
        return op.copy()
    dim = op.shape[-1]
    return fock._loss_adjoint(op, fock.splitting_kraus(np.sqrt(1.0 - model.total_transmit), dim))


def _is_on(outcome: Outcome) -> bool:
    if isinstance(outcome, (bool, np.bool_)):
        return bool(outcome)
    if outcome in ("on", "off"):
        return outcome == "on"
    raise ParameterError(f"outcome must be 'on' or 'off', got {outcome!r}")


def stage_map(rho: np.ndarray, stage: StageParams, outcome: Outcome,
              imperfections: ImperfectionParams | None = None):
    """Apply one stage conditioned on ``outcome``.

    Returns the unnormalized post-measurement state of the remaining mode and
    the outcome probability (its trace).  ``rho`` may itself be sub-normalized,
    in which case the probability is joint with whatever produced ``rho``.

    The click branch is the stage's unconditional channel (pure loss with
    transmittance ``t^2``) minus the no-click branch; this equals the infinite
    Kraus sum over ``n >= 1`` photons (see :func:`on_map_kraus_sum`).
    """
    rho = check_square(rho, "rho")
    model = _stage_model(stage, imperfections)
    off = _off_map(rho, model)
    out = _total_map(rho, model) - off if _is_on(outcome) else off
    prob = float(np.trace(out).real)
    scale = max(1.0, float(np.trace(rho).real))
    if prob < -PROB_TOL * scale or prob > (1.0 + PROB_TOL) * scale:
        raise ConsistencyError(f"stage probability {prob} outside [0, 1]")
    return out, prob


def on_map_kraus_sum(rho: np.ndarray, stage: StageParams,
                     n_max: int = N_MAX_ON) -> np.ndarray:
    """Ideal click branch as the explicit sum ``sum_{n=1}^{n_max} K_n rho K_n^dag``."""
    rho = check_square(rho, "rho")
    dim = rho.shape[0]
    out = np.zeros_like(rho)
    for n in range(1, n_max + 1):
        k = kraus_n(stage, n, dim)
        out += k @ rho @ k.conj().T
    return out


def coherent_click_mean(signal_amp: complex, beta: complex,
                        imperfections: ImperfectionParams | None = None,
                        nu_bin: float = 0.0) -> float:
    """Mean click number for a coherent signal: ``nu + eta(|s|^2 + |b|^2 + 2 xi Re[s^* b])``.

    The no-click probability is ``exp(-m)``.
    """
    imp = imperfections or IDEAL
    s, b = complex(signal_amp), complex(beta)
    m = nu_bin + imp.effective_efficiency * (
        abs(s) ** 2 + abs(b) ** 2 + 2.0 * imp.visibility * (np.conj(s) * b).real)
    if m < -1e-15:
        raise ParameterError(f"negative mean count {m}")
    return max(float(m), 0.0)


def single_stage_error(efficiency: float, visibility: float, dark_rate: float,
                       beta: float) -> float:
    """Closed-form error of one imperfect stage on ``|+>`` vs ``|->``.

    ``1/2 + eta xi beta exp(-nu - eta beta^2)`` for real ``beta``.
    """
    return 0.5 + efficiency * visibility * beta * np.exp(-dark_rate - efficiency * beta ** 2)


@lru_cache(maxsize=32)
def _two_mode_splitter(xi: float, dim: int) -> np.ndarray:
    # mode order (ancilla 0) x (signal 1); photon-number conserving, so the
    # truncated generator is exact on states with fewer than dim photons
    a = fock.annihilation(dim)
    eye = np.eye(dim)
    a0, a1 = np.kron(a, eye), np.kron(eye, a)
    theta = np.arccos(np.sqrt(xi))
    gen = theta * (a0.conj().T @ a1 - a1.conj().T @ a0)
    w, v = np.linalg.eigh(1j * gen)
    out = (v * np.exp(-1j * w)) @ v.conj().T
    out.flags.writeable = False
    return out


def two_mode_off_probability(rho: np.ndarray, beta: complex,
                             imperfections: ImperfectionParams | None = None,
                             nu_bin: float | None = None) -> float:
    """No-click probability of a full-measurement stage via the explicit two-mode model.

    The signal is split by ``B(xi)`` onto a vacuum ancilla; only the signal
    mode is displaced (by ``sqrt(xi) beta``), both modes hit a detector of
    efficiency ``eta``, and the non-interfering part of the displacement beam
    adds ``(1 - xi) eta |beta|^2`` to the mean count.
    """
    rho = check_square(rho, "rho")
    imp = imperfections or IDEAL
    nu = imp.dark_rate if nu_bin is None else nu_bin
    eta, xi = imp.effective_efficiency, imp.visibility
    dim = rho.shape[0]
    vac = np.zeros((dim, dim), dtype=complex)
    vac[0, 0] = 1.0
    u = _two_mode_splitter(float(xi), dim)
    joint = u @ np.kron(vac, rho) @ u.conj().T
    no_click = np.diag((1.0 - eta) ** np.arange(dim)).astype(complex)
    disp = fock.displacement(np.sqrt(xi) * beta, dim, pad=dim + 10)
    signal_off = disp.conj().T @ no_click @ disp
    povm_off = np.exp(-nu - (1.0 - xi) * eta * abs(beta) ** 2) * np.kron(no_click, signal_off)
    return float(np.trace(joint @ povm_off).real)
