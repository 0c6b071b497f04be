"""The M-stage adaptive displacement receiver.

Stage ``i`` displaces its share of the signal by ``beta_i``, whose sign flips
after every click (``sign_rule``) and whose magnitude is either fixed per
stage or read from a tree indexed by the full outcome history.  The decision
is ``|+>`` for an even number of clicks and ``|->`` for an odd number.

Three independent evaluation routes exist and are cross-checked in the tests:

* :func:`outcome_probability` composes :func:`channel.stage_map` along one path;
* :func:`outcome_distribution` runs all branches at once (batched numpy);
* :func:`povm_elements` builds the Heisenberg-picture POVM.
"""
from __future__ import annotations

import csv
import io
import numbers
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fock
from ._validation import check_square, check_unit_interval
from .channel import (IDEAL, ImperfectionParams, StageParams, _kraus_zero, _off_adjoint,
                      _stage_model, _total_adjoint, coherent_click_mean, stage_map)
from .exceptions import ParameterError, ScheduleError, TruncationWarning
from .povm import PovmSet

HOMODYNE_ERROR = 0.101

# Per-M detector settings of the experiment: dark counts per state and
# SSPD efficiencies.  Visibility and the 2 % feedback-delay discard are common.
EXPERIMENT_DARK_RATES = {1: 2.38e-3, 2: 2.38e-3, 3: 2.04e-3, 4: 1.91e-3, 5: 2.00e-3}
EXPERIMENT_EFFICIENCIES = {1: 0.514, 2: 0.514, 3: 0.411, 4: 0.307, 5: 0.236}
EXPERIMENT_VISIBILITY = 0.98
EXPERIMENT_DISCARD = 0.02


# --------------------------------------------------------------------------
# outcome records and schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class OutcomeRecord:
    """Ordered on/off events; ``events[0]`` is the earliest bin."""

    events: tuple

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(bool(e) for e in self.events))

    @property
    def n_on(self) -> int:
        return sum(self.events)

    @property
    def parity(self) -> str:
        return "odd" if self.n_on % 2 else "even"

    @property
    def index(self) -> int:
        idx = 0
        for e in self.events:
            idx = 2 * idx + int(e)
        return idx

    def __len__(self):
        return len(self.events)

    def __str__(self):
        return ",".join("on" if e else "off" for e in self.events)

    @classmethod
    def from_string(cls, text: str) -> "OutcomeRecord":
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if any(p not in ("on", "off") for p in parts):
            raise ParameterError(f"cannot parse outcome record {text!r}")
        return cls(tuple(p == "on" for p in parts))

    @classmethod
    def from_index(cls, index: int, stages: int) -> "OutcomeRecord":
        return cls(tuple(bool((index >> (stages - 1 - i)) & 1) for i in range(stages)))


def all_records(stages: int) -> list:
    return [OutcomeRecord.from_index(i, stages) for i in range(2 ** stages)]


def sign_rule(history, initial_sign: int = -1) -> int:
    """Displacement sign after ``history``: flips once per click."""
    n_on = sum(bool(e) for e in history)
    return initial_sign * (-1) ** n_on


def _node_index(history) -> int:
    # nodes of stage i (0-based) occupy [2^i - 1, 2^(i+1) - 1)
    depth = len(history)
    idx = 0
    for e in history:
        idx = 2 * idx + int(bool(e))
    return 2 ** depth - 1 + idx


@dataclass(frozen=True)
class StageSchedule:
    """Full receiver parametrization.

    Parameters
    ----------
    weights : sequence of float
        Bin weights ``w_i = t_i / T``; positive and summing to one.
    magnitudes : sequence of float
        ``|beta_i|`` per stage (``adaptive=False``, length ``M``) or one per
        history node (``adaptive=True``, length ``2^M - 1``, breadth-first,
        earliest event most significant).
    adaptive : bool
    initial_sign : {-1, +1}
    """

    weights: tuple
    magnitudes: tuple
    adaptive: bool = False
    initial_sign: int = -1

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        mags = tuple(float(x) for x in self.magnitudes)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "magnitudes", mags)
        m = len(w)
        if m < 1:
            raise ScheduleError("at least one stage required")
        if any(x <= 0 for x in w) or abs(sum(w) - 1.0) > 1e-12:
            raise ScheduleError(f"bin weights must be positive and sum to 1, got {w}")
        expected = 2 ** m - 1 if self.adaptive else m
        if len(mags) != expected:
            raise ScheduleError(
                f"{'adaptive' if self.adaptive else 'fixed'} schedule with M={m} needs "
                f"{expected} magnitudes, got {len(mags)}")
        if any(x < 0 or not np.isfinite(x) for x in mags):
            raise ScheduleError("magnitudes must be finite and non-negative")
        if self.initial_sign not in (-1, 1):
            raise ScheduleError("initial_sign must be +1 or -1")

    @classmethod
    def fixed(cls, weights, magnitudes, initial_sign=-1) -> "StageSchedule":
        return cls(tuple(weights), tuple(magnitudes), False, initial_sign)

    @classmethod
    def tree(cls, weights, magnitudes, initial_sign=-1) -> "StageSchedule":
        return cls(tuple(weights), tuple(magnitudes), True, initial_sign)

    @classmethod
    def equal_bins(cls, stages: int, magnitudes) -> "StageSchedule":
        mags = np.broadcast_to(np.asarray(magnitudes, dtype=float), (stages,))
        return cls.fixed([1.0 / stages] * stages, mags)

    @property
    def stages(self) -> int:
        return len(self.weights)

    def reflectances(self) -> np.ndarray:
        """Amplitude reflectances ``r_i``; ``r_i^2 = w_i / (1 - sum_{j<i} w_j)``."""
        w = np.asarray(self.weights)
        remaining = 1.0 - np.concatenate([[0.0], np.cumsum(w)[:-1]])
        r2 = np.clip(w / remaining, 0.0, 1.0)
        r2[-1] = 1.0
        return np.sqrt(r2)

    def magnitude(self, history) -> float:
        if len(history) >= self.stages:
            raise ScheduleError("history longer than the schedule")
        if self.adaptive:
            return self.magnitudes[_node_index(history)]
        return self.magnitudes[len(history)]

    def beta(self, history) -> float:
        return sign_rule(history, self.initial_sign) * self.magnitude(history)

    def stage_params(self, history) -> StageParams:
        i = len(history)
        return StageParams(self.beta(history), self.reflectances()[i], i + 1, self.weights[i])

    def as_adaptive(self) -> "StageSchedule":
        if self.adaptive:
            return self
        tree = [self.magnitudes[i] for i in range(self.stages) for _ in range(2 ** i)]
        return StageSchedule.tree(self.weights, tree, self.initial_sign)

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "magnitudes": list(self.magnitudes),
                "adaptive": self.adaptive, "initial_sign": self.initial_sign}

    @classmethod
    def from_dict(cls, doc: dict) -> "StageSchedule":
        unknown = set(doc) - {"weights", "magnitudes", "adaptive", "initial_sign"}
        if unknown:
            raise ScheduleError(f"unknown schedule fields: {sorted(unknown)}")
        return cls(tuple(doc["weights"]), tuple(doc["magnitudes"]),
                   bool(doc.get("adaptive", False)), int(doc.get("initial_sign", -1)))


OPTIMAL_M2_SCHEDULE = StageSchedule.tree((0.336, 0.664), (0.643, 0.514, 0.390))
TOMOGRAPHY_M2_SCHEDULE = StageSchedule.tree((0.30, 0.70), (0.63, 0.51, 0.39))
DELAY_STUDY_SCHEDULE = StageSchedule.fixed((0.31, 0.69), (0.71, 0.49))


def experimental_imperfections(stages: int) -> ImperfectionParams:
    """Experimental operating point for ``M`` stages (calibrated-efficiency model)."""
    if stages not in EXPERIMENT_DARK_RATES:
        raise ParameterError(f"no experimental preset for M={stages}")
    return ImperfectionParams(
        efficiency=EXPERIMENT_EFFICIENCIES[stages], visibility=EXPERIMENT_VISIBILITY,
        dark_rate=EXPERIMENT_DARK_RATES[stages],
        discard_fraction=EXPERIMENT_DISCARD if stages > 1 else 0.0, calibrated=True)


# --------------------------------------------------------------------------
# inputs
# --------------------------------------------------------------------------

def as_density_matrix(state, dim: int = fock.DEFAULT_DIM) -> np.ndarray:
    """Accept ``'+'``, ``'-'``, a coherent amplitude, a ket or a density matrix."""
    if isinstance(state, str):
        if state not in ("+", "-"):
            raise ParameterError(f"unknown named state {state!r}")
        return fock.ket2dm(fock.superposition_state(1 if state == "+" else -1, dim))
    if isinstance(state, numbers.Number):
        return fock.ket2dm(fock.coherent_state(complex(state), dim))
    arr = np.asarray(state, dtype=complex)
    if arr.ndim == 1:
        return fock.ket2dm(arr)
    return check_square(arr, "input state")


def apply_delay_loss(schedule: StageSchedule,
                     imperfections: ImperfectionParams | None = None) -> float:
    """Input transmittance equivalent to discarding counts after each feedback."""
    imp = imperfections or IDEAL
    return 1.0 - imp.discard_fraction


# --------------------------------------------------------------------------
# batched branch propagation
# --------------------------------------------------------------------------

def _stage_betas(schedule: StageSchedule, stage: int) -> np.ndarray:
    """Signed displacements of every history node of ``stage`` (0-based)."""
    h = np.arange(2 ** stage)
    n_on = np.array([bin(x).count("1") for x in h])
    signs = schedule.initial_sign * (-1.0) ** n_on
    if schedule.adaptive:
        mags = np.asarray(schedule.magnitudes[2 ** stage - 1: 2 ** (stage + 1) - 1])
    else:
        mags = np.full(2 ** stage, schedule.magnitudes[stage])
    return (signs * mags).astype(complex)


def _branch_probabilities(rhos: np.ndarray, schedule: StageSchedule,
                          imp: ImperfectionParams) -> np.ndarray:
    """Joint probabilities of all ``2^M`` records for a stack of inputs.

    Returns shape ``(B, 2^M)`` with columns ordered by :attr:`OutcomeRecord.index`.
    """
    dim = rhos.shape[-1]
    keep = apply_delay_loss(schedule, imp)
    if keep < 1.0:
        rhos = fock._loss(rhos, fock.splitting_kraus(np.sqrt(1.0 - keep), dim))
    states = rhos[:, None]
    refl = schedule.reflectances()
    m = schedule.stages
    for i in range(m):
        betas = _stage_betas(schedule, i)
        base = _stage_model(StageParams(betas[0], refl[i], i + 1, schedule.weights[i]), imp)
        eta = imp.effective_efficiency
        ka = _kraus_zero(base.reflect_a, np.sqrt(eta * imp.visibility) * betas, dim)
        if base.reflect_b > 0:
            ka = _kraus_zero(base.reflect_b, 0.0, dim) @ ka
        factors = np.exp(-imp.dark_rate * schedule.weights[i]
                         - (1.0 - imp.visibility) * eta * np.abs(betas) ** 2)
        if i == m - 1:
            p_off = factors * np.einsum("hij,bhjk,hik->bh", ka, states, ka.conj()).real
            p_tot = np.einsum("bhii->bh", states).real
            return np.stack([p_off, p_tot - p_off], axis=-1).reshape(len(rhos), -1)
        off = ka @ states @ ka.conj().transpose(0, 2, 1)
        if base.loss_transmit < 1.0:
            off = fock._loss(off, fock.splitting_kraus(np.sqrt(1.0 - base.loss_transmit), dim))
        off *= factors[None, :, None, None]
        total = fock._loss(states, fock.splitting_kraus(np.sqrt(1.0 - base.total_transmit), dim))
        states = np.stack([off, total - off], axis=2).reshape(len(rhos), -1, dim, dim)
    raise AssertionError("unreachable")


def _check_truncation(fn, dim: int, *args, **kwargs):
    value = fn(dim, *args, **kwargs)
    again = fn(dim + 5, *args, **kwargs)
    if np.max(np.abs(np.asarray(value) - np.asarray(again))) > 1e-8:
        warnings.warn(f"result changes by more than 1e-8 between dim={dim} and dim={dim + 5}",
                      TruncationWarning, stacklevel=3)
    return value


def outcome_distribution(state, schedule: StageSchedule,
                         imperfections: ImperfectionParams | None = None,
                         dim: int = fock.DEFAULT_DIM, check_truncation: bool = True) -> dict:
    """Map every :class:`OutcomeRecord` to its probability for ``state``."""
    imp = imperfections or IDEAL

    def run(d):
        rho = as_density_matrix(state, d) if not isinstance(state, np.ndarray) else \
            _pad(as_density_matrix(state, state.shape[0]), d)
        return _branch_probabilities(rho[None], schedule, imp)[0]

    probs = _check_truncation(run, dim) if check_truncation else run(dim)
    return {rec: float(p) for rec, p in zip(all_records(schedule.stages), probs)}


def _pad(rho: np.ndarray, dim: int) -> np.ndarray:
    if rho.shape[0] >= dim:
        return rho[:dim, :dim]
    out = np.zeros((dim, dim), dtype=complex)
    out[:rho.shape[0], :rho.shape[0]] = rho
    return out


def outcome_probability(state, schedule: StageSchedule, record,
                        imperfections: ImperfectionParams | None = None,
                        dim: int = fock.DEFAULT_DIM) -> float:
    """``Tr E_{e_M} o ... o E_{e_1}(rho)`` composed stage by stage."""
    if isinstance(record, str):
        record = OutcomeRecord.from_string(record)
    elif not isinstance(record, OutcomeRecord):
        record = OutcomeRecord(tuple(record))
    if len(record) != schedule.stages:
        raise ScheduleError(f"record has {len(record)} events, schedule has {schedule.stages} stages")
    rho = as_density_matrix(state, dim)
    rho = fock.apply_loss(rho, apply_delay_loss(schedule, imperfections))
    prob = float(np.trace(rho).real)
    for i, e in enumerate(record.events):
        rho, prob = stage_map(rho, schedule.stage_params(record.events[:i]),
                              "on" if e else "off", imperfections)
    return prob


def povm_elements(schedule: StageSchedule, imperfections: ImperfectionParams | None = None,
                  dim: int = fock.DEFAULT_DIM) -> PovmSet:
    """POVM of every outcome record, ``Pi = E_1^dag o ... o E_M^dag (I)``.

    All stage operators only lower photon number, so the ``dim``-level block
    of each element is exact.
    """
    imp = imperfections or IDEAL
    records = all_records(schedule.stages)
    keep = apply_delay_loss(schedule, imp)
    elements = []
    for rec in records:
        op = np.eye(dim, dtype=complex)
        for i in reversed(range(schedule.stages)):
            model = _stage_model(schedule.stage_params(rec.events[:i]), imp)
            off = _off_adjoint(op, model)
            op = _total_adjoint(op, model) - off if rec.events[i] else off
        if keep < 1.0:
            op = fock.apply_loss_adjoint(op, keep)
        elements.append(0.5 * (op + op.conj().T))
    return PovmSet(np.stack(elements), tuple(str(r) for r in records))


# --------------------------------------------------------------------------
# error probability and references
# --------------------------------------------------------------------------

_ODD_CACHE: dict = {}


def _odd_mask(stages: int) -> np.ndarray:
    if stages not in _ODD_CACHE:
        _ODD_CACHE[stages] = np.array([r.n_on % 2 == 1 for r in all_records(stages)])
    return _ODD_CACHE[stages]


def _pm_inputs(dim: int) -> np.ndarray:
    return np.stack([as_density_matrix("+", dim), as_density_matrix("-", dim)])


def _error_maps(dim: int, schedule, imp) -> float:
    probs = _branch_probabilities(_pm_inputs(dim), schedule, imp)
    odd = _odd_mask(schedule.stages)
    return 0.5 * (probs[0, odd].sum() + probs[1, ~odd].sum())


def _error_povm(dim: int, schedule, imp) -> float:
    grouped = povm_elements(schedule, imp, dim).parity_grouped()
    plus, minus = _pm_inputs(dim)
    return 0.5 * (np.trace(minus @ grouped["even"]).real + np.trace(plus @ grouped["odd"]).real)


def error_probability(schedule: StageSchedule, imperfections: ImperfectionParams | None = None,
                      dim: int = fock.DEFAULT_DIM, route: str = "maps",
                      check_truncation: bool = True) -> float:
    """Parity-decision error for equiprobable ``|+>`` and ``|->``.

    ``route='maps'`` propagates the states; ``route='povm'`` evaluates the
    parity-grouped POVM.  The two agree to rounding.
    """
    imp = imperfections or IDEAL
    fn = {"maps": _error_maps, "povm": _error_povm}.get(route)
    if fn is None:
        raise ParameterError(f"unknown route {route!r}")
    if check_truncation:
        return float(_check_truncation(fn, dim, schedule, imp))
    return float(fn(dim, schedule, imp))


def fast_error_probability(schedule: StageSchedule,
                           imperfections: ImperfectionParams | None = None) -> float:
    """Error probability on the two-level block, where ``|+-> `` live exactly."""
    return float(_error_maps(2, schedule, imperfections or IDEAL))


def helstrom_bound(eta: float = 1.0) -> float:
    """Minimum error for ``|+>`` vs ``|->`` after loss ``eta``: ``(1 - sqrt(eta)) / 2``."""
    eta = check_unit_interval(eta, "eta")
    return 0.5 * (1.0 - np.sqrt(eta))


def homodyne_reference() -> float:
    return HOMODYNE_ERROR


# --------------------------------------------------------------------------
# Monte-Carlo trajectories
# --------------------------------------------------------------------------

@dataclass
class OutcomeTable:
    """Empirical outcome counts next to the exact model probabilities."""

    records: list
    counts: np.ndarray
    probabilities: np.ndarray
    n_shots: int
    meta: dict = field(default_factory=dict)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n_shots

    def error_rate(self, true_sign: int) -> float:
        """Fraction of shots whose parity decision disagrees with ``true_sign``."""
        wrong = "odd" if true_sign > 0 else "even"
        mask = np.array([r.parity == wrong for r in self.records])
        return float(self.counts[mask].sum() / self.n_shots)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["record", "count", "frequency", "probability"])
        for rec, c, f, p in zip(self.records, self.counts, self.frequencies, self.probabilities):
            writer.writerow([str(rec), int(c), repr(float(f)), repr(float(p))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def bin_amplitudes(alpha: complex, schedule: StageSchedule) -> np.ndarray:
    """Signal amplitude in each time bin, ``alpha * sqrt(w_i)``."""
    return complex(alpha) * np.sqrt(np.asarray(schedule.weights))


def spatial_amplitudes(alpha: complex, schedule: StageSchedule) -> np.ndarray:
    """Signal amplitude reaching detector ``i`` in the beam-splitter picture."""
    r = schedule.reflectances()
    t = np.sqrt(np.clip(1.0 - r ** 2, 0.0, None))
    through = np.concatenate([[1.0], np.cumprod(t)[:-1]])
    return complex(alpha) * r * through


def _coherent_leaf_probabilities(alpha, schedule, imp) -> np.ndarray:
    amps = bin_amplitudes(alpha * np.sqrt(apply_delay_loss(schedule, imp)), schedule)
    probs = np.ones(1)
    for i in range(schedule.stages):
        betas = _stage_betas(schedule, i)
        p_off = np.array([np.exp(-coherent_click_mean(
            amps[i], b, imp, imp.dark_rate * schedule.weights[i])) for b in betas])
        probs = np.stack([probs * p_off, probs * (1.0 - p_off)], axis=-1).ravel()
    return probs


def _node_off_probabilities(leaves: np.ndarray, stages: int) -> list:
    """Conditional no-click probability at every history node, per stage."""
    cond = []
    for i in range(stages):
        blocks = leaves.reshape(2 ** i, 2, -1).sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = blocks[:, 0] / blocks.sum(axis=1)
        cond.append(np.nan_to_num(p, nan=1.0))
    return cond


def simulate_trajectories(state, schedule: StageSchedule,
                          imperfections: ImperfectionParams | None = None,
                          n_shots: int = 10_000, seed: int = 0,
                          dim: int = fock.DEFAULT_DIM,
                          batch_size: int = 1 << 16) -> OutcomeTable:
    """Sample detection records shot by shot.

    Each stage's click is drawn from its conditional probability given the
    history so far.  For a coherent input (a complex amplitude) the clicks are
    Bernoulli with mean count from :func:`channel.coherent_click_mean`.  Batch
    ``j`` of ``batch_size`` shots uses a Philox stream jumped ``j`` times, so
    results depend only on ``(seed, shot index)``.
    """
    if n_shots < 1:
        raise ParameterError("n_shots must be >= 1")
    imp = imperfections or IDEAL
    m = schedule.stages
    if isinstance(state, numbers.Number) and not isinstance(state, bool):
        leaves = _coherent_leaf_probabilities(complex(state), schedule, imp)
    else:
        rho = as_density_matrix(state, dim)
        leaves = _branch_probabilities(rho[None], schedule, imp)[0]
    leaves = np.clip(leaves, 0.0, None)
    cond = _node_off_probabilities(leaves, m)
    counts = np.zeros(2 ** m, dtype=np.int64)
    root = np.random.Philox(seed)
    for j, start in enumerate(range(0, n_shots, batch_size)):
        n = min(batch_size, n_shots - start)
        rng = np.random.Generator(root.jumped(j))
        u = rng.random((n, m))
        node = np.zeros(n, dtype=np.int64)
        for i in range(m):
            node = 2 * node + (u[:, i] >= cond[i][node])
        counts += np.bincount(node, minlength=2 ** m)
    return OutcomeTable(all_records(m), counts, leaves, n_shots,
                        {"seed": seed, "schedule": schedule.to_dict(), "imperfections": imp.to_dict()})


# --------------------------------------------------------------------------
# feedback-delay model
# --------------------------------------------------------------------------

def _segments(schedule: StageSchedule, history, stale: float) -> list:
    """(weight, beta) pieces of the bin following ``history``.

    During the first ``stale`` (in kept-time units) of a bin the modulators
    still hold the previous bin's displacement, at the previous bin's rate.
    """
    i = len(history)
    w = schedule.weights[i]
    beta = schedule.beta(history)
    if i == 0 or stale <= 0:
        return [(w, beta)]
    u = min(stale, w)
    prev_w = schedule.weights[i - 1]
    prev_beta = schedule.beta(history[:-1])
    pieces = [(u, prev_beta * np.sqrt(u / prev_w))]
    if w - u > 0:
        pieces.append((w - u, beta * np.sqrt((w - u) / w)))
    return pieces


def delay_error_probability(schedule: StageSchedule, discard_fraction: float,
                            settle_fraction: float = 0.0,
                            imperfections: ImperfectionParams | None = None) -> float:
    """Error probability when counts are discarded for a window after each bin.

    ``discard_fraction`` is the total discarded share of the state,
    ``(M - 1) dt / T``; it enters as linear input loss.  ``settle_fraction`` is
    the modulator settling time per feedback as a share of ``T``.  Any part of
    it not covered by the discard window is detected with the stale
    displacement.  With ``settle_fraction=0`` this reduces to
    :func:`error_probability`.
    """
    imp = (imperfections or IDEAL).replace(discard_fraction=discard_fraction)
    m = schedule.stages
    per_gap = discard_fraction / (m - 1) if m > 1 else 0.0
    stale = max(settle_fraction - per_gap, 0.0) / (1.0 - discard_fraction)
    dim = 2
    total_err = 0.0
    for sign in (1, -1):
        rho = fock.apply_loss(as_density_matrix("+" if sign > 0 else "-", dim),
                              1.0 - discard_fraction)
        branches = [((), rho)]
        remaining = 1.0
        for i in range(m):
            new = []
            for hist, state in branches:
                off = state
                rem = remaining
                for w_seg, beta in _segments(schedule, hist, stale):
                    refl = np.sqrt(min(1.0, w_seg / rem)) if rem > 0 else 1.0
                    if i == m - 1 and abs(rem - w_seg) < 1e-12:
                        refl = 1.0
                    off, _ = stage_map(off, StageParams(beta, refl, i + 1, w_seg), "off", imp)
                    rem -= w_seg
                total = fock.apply_loss(state, min(1.0, max(rem, 0.0) / remaining))
                new.append((hist + (False,), off))
                new.append((hist + (True,), total - off))
            remaining -= schedule.weights[i]
            branches = new
        for hist, state in branches:
            odd = sum(hist) % 2 == 1
            if odd == (sign > 0):
                total_err += 0.5 * float(np.trace(state).real)
    return total_err


def delay_sweep(schedule: StageSchedule, discard_fractions, settle_fraction: float = 0.0,
                imperfections: ImperfectionParams | None = None) -> np.ndarray:
    return np.array([delay_error_probability(schedule, d, settle_fraction, imperfections)
                     for d in discard_fractions])
