"""Derivative-free search over receiver schedules.

Parameters are mapped to the real line before Nelder-Mead runs:

* bin weights by stick breaking, ``w_i = s_i * (1 - sum_{j<i} w_j)`` with the
  split fraction ``s_i = 0.01 + 0.98 * sigmoid(x_i)``;
* magnitudes by ``|beta| = 1.5 * sigmoid(y)``.

Signs are never free; the receiver's sign rule fixes them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import qmc
from sklearn.base import BaseEstimator

from .channel import IDEAL, ImperfectionParams
from .exceptions import OptimizationFailure, ParameterError
from .receiver import StageSchedule, fast_error_probability

SPLIT_BOUNDS = (0.01, 0.99)
MAGNITUDE_BOUNDS = (0.0, 1.5)
XATOL = 1e-6
MAX_EVALS = 20_000
VARIANTS = ("fixed", "adaptive")


@dataclass(frozen=True)
class OptimizationProblem:
    """What to optimize: stage count, magnitude variant, noise model.

    ``fixed_weights`` pins the bin weights, leaving only the magnitudes free.
    """

    stages: int
    variant: str = "adaptive"
    imperfections: ImperfectionParams = IDEAL
    fixed_weights: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.stages, (int, np.integer)) or self.stages < 1:
            raise ParameterError(f"stages must be a positive integer, got {self.stages!r}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.stages > 8:
            raise ParameterError("more than 8 stages is outside the supported range")
        if self.fixed_weights is not None:
            w = tuple(float(x) for x in self.fixed_weights)
            if len(w) != self.stages:
                raise ParameterError("fixed_weights needs one entry per stage")
            StageSchedule.fixed(w, [0.0] * self.stages)  # validates the weights
            object.__setattr__(self, "fixed_weights", w)

    @property
    def n_magnitudes(self) -> int:
        return 2 ** self.stages - 1 if self.variant == "adaptive" else self.stages

    @property
    def n_weights(self) -> int:
        return 0 if self.fixed_weights is not None else self.stages - 1

    @property
    def n_params(self) -> int:
        return self.n_weights + self.n_magnitudes

    # -- transforms ---------------------------------------------------------
    def weights_from_splits(self, splits) -> tuple:
        w, remaining = [], 1.0
        for s in splits:
            w.append(s * remaining)
            remaining -= w[-1]
        w.append(remaining)
        return tuple(w)

    def decode(self, x) -> StageSchedule:
        """Schedule for an unconstrained parameter vector."""
        x = np.asarray(x, dtype=float)
        nw = self.n_weights
        if self.fixed_weights is not None:
            weights = self.fixed_weights
        else:
            lo, hi = SPLIT_BOUNDS
            weights = self.weights_from_splits(lo + (hi - lo) * expit(x[:nw]))
        mags = MAGNITUDE_BOUNDS[1] * expit(x[nw:])
        return StageSchedule(weights, tuple(mags), self.variant == "adaptive")

    def encode(self, schedule: StageSchedule) -> np.ndarray:
        """Inverse of :meth:`decode`, clipping values that sit on a bound."""
        if schedule.stages != self.stages:
            raise ParameterError("schedule has the wrong number of stages")
        if self.variant == "adaptive":
            schedule = schedule.as_adaptive()
        elif schedule.adaptive:
            raise ParameterError("cannot encode an adaptive schedule as fixed magnitudes")
        parts = []
        if self.fixed_weights is None:
            lo, hi = SPLIT_BOUNDS
            w = np.asarray(schedule.weights)
            remaining = 1.0 - np.concatenate([[0.0], np.cumsum(w)[:-1]])
            splits = np.clip(w[:-1] / remaining[:-1], lo + 1e-9, hi - 1e-9)
            parts.append(logit((splits - lo) / (hi - lo)))
        mags = np.clip(np.asarray(schedule.magnitudes) / MAGNITUDE_BOUNDS[1], 1e-9, 1 - 1e-9)
        parts.append(logit(mags))
        return np.concatenate(parts)

    def sample_starts(self, n: int, seed) -> np.ndarray:
        """Latin-hypercube starting points over the bounded box."""
        sampler = qmc.LatinHypercube(d=self.n_params, seed=np.random.default_rng(seed))
        u = sampler.random(n)
        u = np.clip(u, 1e-6, 1 - 1e-6)
        # u is already the normalized position inside each bound
        return logit(u)

    def objective(self, x) -> float:
        return fast_error_probability(self.decode(x), self.imperfections)


@dataclass
class OptimizationResult:
    schedule: StageSchedule
    error: float
    trace: np.ndarray                 # every objective value, in evaluation order
    restarts: list = field(default_factory=list)
    problem: OptimizationProblem | None = None

    def to_dict(self) -> dict:
        return {
            "error_probability": self.error,
            "schedule": self.schedule.to_dict(),
            "stages": self.problem.stages if self.problem else self.schedule.stages,
            "variant": self.problem.variant if self.problem else None,
            "imperfections": self.problem.imperfections.to_dict() if self.problem else None,
            "restarts": self.restarts,
            "evaluations": int(len(self.trace)),
        }


def _run_one(problem: OptimizationProblem, x0, trace: list) -> tuple:
    def f(x):
        val = problem.objective(x)
        trace.append(val)
        return val

    start = f(x0)
    if problem.n_params == 0:
        return np.asarray(x0), start, start, 1
    res = minimize(f, x0, method="Nelder-Mead",
                   options={"xatol": XATOL, "fatol": np.inf, "maxfev": MAX_EVALS,
                            "adaptive": problem.n_params > 6})
    return res.x, float(res.fun), start, int(res.nfev) + 1


def optimize(problem: OptimizationProblem, restarts: int = 4, seed: int = 0,
             warm_starts=()) -> OptimizationResult:
    """Multi-start Nelder-Mead minimization of the error probability.

    Parameters
    ----------
    problem : OptimizationProblem
    restarts : int
        Number of Latin-hypercube starting points.
    seed : int
        Seeds the start sampler; the search itself is deterministic.
    warm_starts : iterable of StageSchedule
        Extra starting points tried before the sampled ones.

    Raises
    ------
    OptimizationFailure
        If no run gets below 0.5.
    """
    if restarts < 1 and not warm_starts:
        raise ParameterError("restarts must be >= 1")
    starts = [problem.encode(s) for s in warm_starts]
    if restarts > 0:
        starts.extend(problem.sample_starts(restarts, seed))
    trace: list = []
    best_x, best_val, info = None, np.inf, []
    for k, x0 in enumerate(starts):
        x, val, start_val, nfev = _run_one(problem, np.asarray(x0, dtype=float), trace)
        info.append({"start": k, "warm": k < len(warm_starts), "start_error": start_val,
                     "final_error": val, "evaluations": nfev})
        if val < best_val:
            best_x, best_val = x, val
    if not best_val < 0.5 - 1e-12:
        raise OptimizationFailure(
            f"no restart improved on 0.5 (best {best_val}) for M={problem.stages}")
    return OptimizationResult(problem.decode(best_x), float(best_val), np.asarray(trace),
                              info, problem)


def refine_stage(schedule: StageSchedule, variant: str) -> StageSchedule:
    """Embed an ``M``-stage optimum into ``M + 1`` stages by halving the last bin.

    The new stage reuses each parent node's magnitude, so the result starts
    close to the smaller receiver's error.
    """
    w = list(schedule.weights)
    last = w.pop()
    w += [0.5 * last, 0.5 * last]
    m = schedule.stages
    if variant == "fixed":
        mags = list(schedule.magnitudes) if not schedule.adaptive else \
            [schedule.magnitudes[2 ** i - 1] for i in range(m)]
        return StageSchedule.fixed(w, mags + [mags[-1]])
    tree = list(schedule.as_adaptive().magnitudes)
    leaves = tree[2 ** (m - 1) - 1:]
    return StageSchedule.tree(w, tree + [x for x in leaves for _ in range(2)])


def optimize_range(max_stages: int, variant: str = "adaptive",
                   imperfections=None, restarts: int = 4, seed: int = 0,
                   per_stage_imperfections=None) -> list:
    """Optimize ``M = 1..max_stages``, warm-starting each from the previous optimum.

    ``per_stage_imperfections`` (a callable ``M -> ImperfectionParams``)
    overrides ``imperfections`` when given.
    """
    results, prev = [], None
    for m in range(1, max_stages + 1):
        imp = per_stage_imperfections(m) if per_stage_imperfections else (imperfections or IDEAL)
        warm = []
        if prev is not None:
            warm.append(refine_stage(prev.schedule, variant))
        if variant == "adaptive" and m > 1:
            fixed = optimize(OptimizationProblem(m, "fixed", imp), restarts=restarts, seed=seed,
                             warm_starts=[refine_stage(prev.schedule, "fixed")] if prev else ())
            warm.append(fixed.schedule.as_adaptive())
        prev = optimize(OptimizationProblem(m, variant, imp), restarts=restarts, seed=seed,
                        warm_starts=warm)
        results.append(prev)
    return results


def sweep_t1(t1_grid, imperfections=None, variant: str = "adaptive",
             restarts: int = 2, seed: int = 0) -> list:
    """Two-stage error with the first bin width pinned at each grid value.

    Magnitudes are re-optimized at every point, warm-started from the
    neighbouring point.  Returns a list of :class:`OptimizationResult`.
    """
    grid = np.asarray(t1_grid, dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise ParameterError("t1/T grid values must lie in (0, 1)")
    imp = imperfections or IDEAL
    out, prev = [], None
    for t1 in grid:
        problem = OptimizationProblem(2, variant, imp, fixed_weights=(t1, 1.0 - t1))
        warm = [StageSchedule(problem.fixed_weights, prev.schedule.magnitudes,
                              prev.schedule.adaptive)] if prev is not None else []
        prev = optimize(problem, restarts=restarts, seed=seed, warm_starts=warm)
        out.append(prev)
    return out


class ReceiverOptimizer(BaseEstimator):
    """Estimator wrapper around :func:`optimize`.

    ``fit`` takes no data; the objective is the exact model error.  After
    fitting, ``predict`` maps outcome records to the decided sign.

    Examples
    --------
    >>> est = ReceiverOptimizer(stages=1, restarts=2).fit()
    >>> round(est.error_, 4)
    0.0711
    """

    def __init__(self, stages=2, variant="adaptive", imperfections=None,
                 restarts=4, seed=0):
        self.stages = stages
        self.variant = variant
        self.imperfections = imperfections
        self.restarts = restarts
        self.seed = seed

    def fit(self, X=None, y=None):
        problem = OptimizationProblem(self.stages, self.variant, self.imperfections or IDEAL)
        self.result_ = optimize(problem, restarts=self.restarts, seed=self.seed)
        self.schedule_ = self.result_.schedule
        self.error_ = self.result_.error
        return self

    def predict(self, records) -> np.ndarray:
        """+1 for an even number of clicks, -1 for odd."""
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "schedule_")
        out = []
        for rec in records:
            events = rec.events if hasattr(rec, "events") else rec
            if isinstance(events, str):
                events = [p.strip() == "on" for p in events.split(",")]
            out.append(-1 if sum(bool(e) for e in events) % 2 else 1)
        return np.asarray(out)

    def score(self, X=None, y=None) -> float:
        """Success probability ``1 - P_e`` of the fitted schedule."""
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "error_")
        return 1.0 - self.error_
