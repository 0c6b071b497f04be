"""Detector tomography with coherent probes and iterative maximum likelihood.

Pipeline: :class:`ProbeSet` -> :func:`generate_dataset` -> :func:`ml_reconstruct`
-> :func:`truncate_povm` -> :func:`error_from_povm`.
:class:`MLDetectorTomography` wraps the reconstruction as an estimator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import fock
from ._validation import check_dim, check_random_state
from .channel import IDEAL, ImperfectionParams
from .exceptions import (DataInconsistencyError, DimensionError, NotPSDError,
                         ParameterError, ReconstructionError)
from .povm import PovmSet
from .receiver import StageSchedule, povm_elements

DEFAULT_MAGNITUDES = (0.4, 0.6, 0.8, 1.0)
DEFAULT_PHASES = 8
PROB_FLOOR = 1e-12
GAIN_TOL = 1e-11
MAX_ITER = 50_000
COMPLETENESS_TOL = 1e-8
MONOTONE_TOL = 1e-10


# --------------------------------------------------------------------------
# probes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeSet:
    """Coherent probe states cropped to the reconstruction dimension.

    Each probe is ``|alpha><alpha|`` on ``dim`` levels, renormalized; the
    discarded weight is kept in ``tail_mass``.
    """

    alphas: np.ndarray
    dim: int = 5

    def __post_init__(self):
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=complex))
        if alphas.ndim != 1 or len(alphas) == 0:
            raise ParameterError("alphas must be a non-empty 1-d sequence")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "dim", check_dim(self.dim))

    @classmethod
    def default(cls, dim: int = 5) -> "ProbeSet":
        """Vacuum plus four magnitudes at eight equally spaced phases (33 probes)."""
        phases = np.exp(1j * np.pi * np.arange(DEFAULT_PHASES) / 4)
        alphas = [0.0] + [m * p for m in DEFAULT_MAGNITUDES for p in phases]
        return cls(np.asarray(alphas), dim)

    def __len__(self):
        return len(self.alphas)

    @property
    def tail_mass(self) -> np.ndarray:
        return np.array([fock.coherent_tail_mass(a, self.dim) for a in self.alphas])

    @property
    def states(self) -> np.ndarray:
        """``(K, dim, dim)`` density matrices."""
        kets = np.stack([fock.coherent_amplitudes(a, self.dim) for a in self.alphas])
        kets /= np.linalg.norm(kets, axis=1, keepdims=True)
        return np.einsum("ki,kj->kij", kets, kets.conj())

    def frame_matrix(self) -> np.ndarray:
        """Rows ``vec(rho_k^T)`` so that ``frame @ vec(Pi) = Tr[rho_k Pi]``."""
        rhos = self.states
        return rhos.transpose(0, 2, 1).reshape(len(self), -1)

    def report(self) -> dict:
        """Spanning diagnostics of the probe frame on Hermitian operators.

        The frame is split into real-linear form; ``rank`` counts singular
        values above ``1e-10 * s_max`` and ``condition_number`` is the ratio of
        the largest to the smallest of those.
        """
        d = self.dim
        rows = []
        for rho in self.states:
            # Tr[rho H] for H spanned by the d^2 real Hermitian basis
            re, im = rho.real, rho.imag
            iu = np.triu_indices(d, 1)
            rows.append(np.concatenate([np.diag(re), 2 * re[iu], 2 * im[iu]]))
        s = np.linalg.svd(np.asarray(rows), compute_uv=False)
        keep = s > 1e-10 * s[0]
        return {
            "n_probes": len(self),
            "dim": d,
            "rank": int(keep.sum()),
            "hermitian_dimension": d * d,
            "null_directions": int(d * d - keep.sum()),
            "condition_number": float(s[0] / s[keep][-1]),
            "max_tail_mass": float(self.tail_mass.max()),
        }

    def to_dict(self) -> dict:
        return {"dim": self.dim,
                "probes": [{"re": float(a.real), "im": float(a.imag)} for a in self.alphas]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ProbeSet":
        unknown = set(doc) - {"dim", "probes"}
        if unknown:
            raise ParameterError(f"unknown probe manifest fields: {sorted(unknown)}")
        alphas = [complex(p["re"], p["im"]) for p in doc["probes"]]
        return cls(np.asarray(alphas), int(doc.get("dim", 5)))


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CountDataset:
    """Outcome counts ``f[k, l]`` for probe ``k`` and outcome ``l``."""

    counts: np.ndarray
    labels: tuple
    shots: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 2 or counts.shape[1] != len(self.labels):
            raise DimensionError("counts must be (K, L) with one label per column")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ParameterError("counts must be finite and non-negative")
        if self.shots < 1:
            raise ParameterError("shots must be >= 1")
        sums = counts.sum(axis=1)
        if np.max(np.abs(sums - self.shots)) > 1e-9 * self.shots:
            raise ParameterError("every probe row must sum to the shot count")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))

    @property
    def n_probes(self) -> int:
        return self.counts.shape[0]

    @property
    def n_outcomes(self) -> int:
        return self.counts.shape[1]

    def permuted(self, order) -> "CountDataset":
        order = list(order)
        return CountDataset(self.counts[:, order], tuple(self.labels[i] for i in order),
                            self.shots, dict(self.meta))

    def parity_grouped(self) -> "CountDataset":
        if set(self.labels) <= {"even", "odd"}:
            return self
        odd = np.array([lab.split(",").count("on") % 2 == 1 for lab in self.labels])
        counts = np.stack([self.counts[:, ~odd].sum(axis=1), self.counts[:, odd].sum(axis=1)], 1)
        return CountDataset(counts, ("even", "odd"), self.shots, dict(self.meta))


def generate_dataset(schedule: StageSchedule, imperfections: ImperfectionParams | None = None,
                     probes: ProbeSet | None = None, mode: str = "exact", shots: int = 10_000,
                     seed: int = 0, grouping: str = "full") -> CountDataset:
    """Counts the receiver would record for each probe.

    ``exact`` returns ``shots * P(l | rho_k)``; ``sampled`` draws multinomial
    counts from a Philox stream seeded by ``seed``.  Probabilities use the
    probe states at the probe set's dimension, where the POVM block is exact,
    so exact data are exactly reproducible by some POVM on that space.
    """
    probes = probes or ProbeSet.default()
    if mode not in ("exact", "sampled"):
        raise ParameterError(f"mode must be 'exact' or 'sampled', got {mode!r}")
    if grouping not in ("full", "parity"):
        raise ParameterError(f"grouping must be 'full' or 'parity', got {grouping!r}")
    if shots < 1:
        raise ParameterError("shots must be >= 1")
    povm = povm_elements(schedule, imperfections or IDEAL, probes.dim)
    if grouping == "parity":
        povm = povm.parity_grouped()
    probs = np.clip(povm.probabilities(probes.states), 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    if mode == "exact":
        counts = shots * probs
    else:
        rng = check_random_state(seed)
        counts = rng.multinomial(shots, probs).astype(float)
    meta = {"mode": mode, "seed": seed, "schedule": schedule.to_dict(),
            "imperfections": (imperfections or IDEAL).to_dict()}
    return CountDataset(counts, povm.labels, int(shots), meta)


# --------------------------------------------------------------------------
# reconstruction
# --------------------------------------------------------------------------

@dataclass
class Reconstruction:
    povm: PovmSet
    loglik: np.ndarray          # log-likelihood before each update and after the last
    n_iter: int
    converged: bool
    completeness_residual: float

    @property
    def loglik_final(self) -> float:
        return float(self.loglik[-1])


def _loglik(counts, q) -> float:
    mask = counts > 0
    return float(np.sum(counts[mask] * np.log(q[mask])))


def ml_reconstruct(dataset: CountDataset, probes: ProbeSet, init=None,
                   max_iter: int = MAX_ITER, tol: float = GAIN_TOL,
                   floor: float = PROB_FLOOR, callback=None) -> Reconstruction:
    """Iterative maximum-likelihood POVM estimate.

    Each step replaces ``Pi_l`` by ``L^-1 R_l Pi_l R_l L^-1`` with
    ``R_l = sum_k f_kl / Tr[rho_k Pi_l] rho_k`` and
    ``L = (sum_l R_l Pi_l R_l)^(1/2)``, which keeps ``sum_l Pi_l = I``.

    Parameters
    ----------
    dataset : CountDataset
    probes : ProbeSet
        Must have one probe per dataset row; the reconstruction dimension is
        ``probes.dim``.
    init : array (L, d, d), optional
        Starting POVM; defaults to ``(sum_k f_kl / (N K)) * I``.
    max_iter : int
    tol : float
        Stop once an iteration raises the log-likelihood by less than
        ``tol * |loglik|``.  ``tol <= 0`` runs to ``max_iter``.
    floor : float
        Lower clamp on model probabilities inside ``R_l``.
    callback : callable, optional
        Called as ``callback(iteration, povm_array, loglik)``.

    Raises
    ------
    DataInconsistencyError
        An outcome with counts has exactly zero model probability.
    ReconstructionError
        Loss of positivity, completeness, or likelihood monotonicity.
    """
    counts = dataset.counts
    k, n_out = counts.shape
    if len(probes) != k:
        raise DimensionError(f"{len(probes)} probes for {k} dataset rows")
    d = probes.dim
    frame = probes.frame_matrix()                 # (K, d*d)
    rhos = probes.states
    if init is None:
        weights = counts.sum(axis=0) / (dataset.shots * k)
        pis = weights[:, None, None] * np.eye(d)[None]
    else:
        pis = np.asarray(init, dtype=complex).copy()
        if pis.shape != (n_out, d, d):
            raise DimensionError(f"init must have shape {(n_out, d, d)}")
    pis = pis.astype(complex)
    eye = np.eye(d)
    trace = []
    converged = False
    q_prev = None
    resid = float(np.abs(pis.sum(axis=0) - eye).max())
    it = 0
    while True:
        q = (frame @ pis.reshape(n_out, -1).T).real       # (K, L)
        if np.any((counts > 0) & (q <= 0)):
            kk, ll = np.argwhere((counts > 0) & (q <= 0))[0]
            raise DataInconsistencyError(
                f"outcome {dataset.labels[ll]!r} has counts for probe {kk} but zero probability")
        q = np.maximum(q, floor)
        if trace:
            # summing log-ratios keeps gains far below the rounding of loglik itself
            gain = _loglik(counts, q / q_prev)
            ll_now = trace[-1] + gain
            if gain < -MONOTONE_TOL * max(1.0, abs(ll_now)):
                raise ReconstructionError(
                    f"log-likelihood decreased by {-gain:.3e} at iteration {it}")
            trace.append(ll_now)
            if tol > 0 and gain < tol * abs(ll_now):
                converged = True
                break
        else:
            ll_now = _loglik(counts, q)
            trace.append(ll_now)
        q_prev = q
        if it >= max_iter:
            break
        ratio = counts / q                                # (K, L)
        r_ops = np.einsum("kl,kij->lij", ratio, rhos)
        m_ops = r_ops @ pis @ r_ops
        total = m_ops.sum(axis=0)
        total = 0.5 * (total + total.conj().T)
        w, v = np.linalg.eigh(total)
        if w.min() < -fock.PSD_CLAMP_TOL:
            raise ReconstructionError(f"normalizer lost positivity (eigenvalue {w.min():.3e})")
        if w.max() <= 0:
            raise ReconstructionError("normalizer vanished")
        w = np.clip(w, np.finfo(float).tiny, None)
        inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
        pis = inv_sqrt @ m_ops @ inv_sqrt
        pis = 0.5 * (pis + pis.conj().transpose(0, 2, 1))
        resid = float(np.abs(pis.sum(axis=0) - eye).max())
        if resid > COMPLETENESS_TOL:
            raise ReconstructionError(f"completeness residual {resid:.2e} at iteration {it + 1}")
        it += 1
        if callback is not None:
            callback(it, pis, ll_now)
    for p in pis:
        try:
            fock.psd_sqrt(p)
        except NotPSDError as exc:
            raise ReconstructionError(str(exc)) from exc
    return Reconstruction(PovmSet(pis, dataset.labels), np.asarray(trace), it, converged, resid)


def truncate_povm(povm: PovmSet, d_target: int = 2) -> PovmSet:
    """Top-left ``d_target`` blocks; completeness then only holds approximately."""
    return povm.truncated(d_target)


def error_from_povm(povm: PovmSet) -> float:
    """Parity-decision error ``(<-|Pi_even|-> + <+|Pi_odd|+>) / 2`` on the qubit block."""
    grouped = povm.parity_grouped()
    if set(grouped.labels) != {"even", "odd"}:
        raise ParameterError("POVM labels must be outcome records or parity classes")
    two = grouped.truncated(2)
    plus = fock.superposition_state(+1, 2)
    minus = fock.superposition_state(-1, 2)
    even, odd = two["even"], two["odd"]
    return float(0.5 * ((minus.conj() @ even @ minus).real + (plus.conj() @ odd @ plus).real))


class MLDetectorTomography(BaseEstimator):
    """Estimator interface to :func:`ml_reconstruct`.

    ``fit`` accepts a :class:`CountDataset` or a ``(K, L)`` count array.
    ``predict_proba`` returns outcome probabilities for coherent amplitudes
    or density matrices.
    """

    def __init__(self, probes=None, max_iter=MAX_ITER, tol=GAIN_TOL, floor=PROB_FLOOR):
        self.probes = probes
        self.max_iter = max_iter
        self.tol = tol
        self.floor = floor

    def _probes(self) -> ProbeSet:
        return self.probes if self.probes is not None else ProbeSet.default()

    def fit(self, X, y=None):
        if not isinstance(X, CountDataset):
            X = np.asarray(X, dtype=float)
            if X.ndim != 2:
                raise DimensionError("counts must be a 2-d array")
            labels = y if y is not None else tuple(str(i) for i in range(X.shape[1]))
            X = CountDataset(X, tuple(labels), int(round(X[0].sum())))
        rec = ml_reconstruct(X, self._probes(), max_iter=self.max_iter, tol=self.tol,
                             floor=self.floor)
        self.reconstruction_ = rec
        self.povm_ = rec.povm
        self.loglik_ = rec.loglik_final
        self.loglik_trace_ = rec.loglik
        self.n_iter_ = rec.n_iter
        return self

    def _as_states(self, X) -> np.ndarray:
        d = self.povm_.dim
        X = np.asarray(X)
        if X.ndim == 3:
            return X.astype(complex)
        return ProbeSet(X.ravel(), d).states

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "povm_")
        return self.povm_.probabilities(self._as_states(X))

    def predict(self, X) -> np.ndarray:
        """Most likely outcome label per input."""
        idx = self.predict_proba(X).argmax(axis=1)
        return np.asarray(self.povm_.labels)[idx]

    def transform(self, X) -> np.ndarray:
        return self.predict_proba(X)

    def score(self, X, y=None) -> float:
        """Mean log-likelihood per shot of a dataset under the fitted POVM."""
        check_is_fitted(self, "povm_")
        if not isinstance(X, CountDataset):
            raise ParameterError("score expects a CountDataset")
        q = np.maximum(self.povm_.probabilities(self._probes().states), self.floor)
        return _loglik(X.counts, q) / (X.shots * X.n_probes)
