"""Reference checks of the package against known results.

Each ``check_*`` function returns a :class:`CheckResult`; :func:`run_all`
runs the lot.  The test suite and the ``regress`` subcommand both use them.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import fock
from .channel import ImperfectionParams, single_stage_error, two_mode_off_probability
from .optimizer import OptimizationProblem, optimize, optimize_range
from .receiver import (HOMODYNE_ERROR, EXPERIMENT_DARK_RATES, EXPERIMENT_DISCARD, OPTIMAL_M2_SCHEDULE,
                       TOMOGRAPHY_M2_SCHEDULE, EXPERIMENT_VISIBILITY, DELAY_STUDY_SCHEDULE,
                       StageSchedule, delay_sweep, error_probability, helstrom_bound,
                       homodyne_reference, outcome_distribution, povm_elements,
                       simulate_trajectories)
from .tomography import ProbeSet, error_from_povm, generate_dataset, ml_reconstruct

M1_ERROR = 0.0711
M1_MAGNITUDE = 1 / np.sqrt(2)
M2_ERROR = 0.040
M2_PARAMS = (0.336, 0.643, 0.514, 0.390)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    runtime: float = 0.0
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail} ({self.runtime:.1f} s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.runtime = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def m2_imperfections() -> ImperfectionParams:
    """Visibility 0.98, 2.38e-3 dark counts per state and 2 % discard loss."""
    return ImperfectionParams(visibility=EXPERIMENT_VISIBILITY, dark_rate=EXPERIMENT_DARK_RATES[2],
                              discard_fraction=EXPERIMENT_DISCARD)


@_timed
def check_single_stage_optimum(seed: int = 0) -> CheckResult:
    res = optimize(OptimizationProblem(1, "fixed"), restarts=2, seed=seed)
    mag = res.schedule.magnitudes[0]
    ok = abs(res.error - M1_ERROR) <= 1e-3 and abs(mag - M1_MAGNITUDE) <= 5e-3
    return CheckResult("single-stage optimum", ok,
                       f"P_e={res.error:.5f} (target 0.0711+-1e-3), |beta|={mag:.4f} "
                       f"(target 0.707+-5e-3)", values={"error": res.error, "magnitude": mag})


def _m2_adaptive(seed=0):
    return optimize(OptimizationProblem(2, "adaptive"), restarts=4, seed=seed)


@_timed
def check_two_stage_optimum(seed: int = 0) -> CheckResult:
    res = _m2_adaptive(seed)
    s = res.schedule
    got = (s.weights[0],) + s.magnitudes
    dev = max(abs(a - b) for a, b in zip(got, M2_PARAMS))
    ok = abs(res.error - M2_ERROR) <= 5e-4 and dev <= 0.02
    return CheckResult("two-stage adaptive optimum", ok,
                       f"P_e={res.error:.5f} (target 0.040+-5e-4), params="
                       f"({', '.join(f'{x:.3f}' for x in got)}), max deviation {dev:.4f} (<= 0.02)",
                       values={"error": res.error, "params": got})


@_timed
def check_fixed_magnitude_penalty(seed: int = 0) -> CheckResult:
    adaptive = _m2_adaptive(seed).error
    fixed = optimize(OptimizationProblem(2, "fixed"), restarts=4, seed=seed).error
    gap = fixed - adaptive
    return CheckResult("fixed-magnitude penalty", 0 < gap < 0.005,
                       f"fixed {fixed:.5f} - adaptive {adaptive:.5f} = {gap:.5f} (in (0, 0.005))",
                       values={"fixed": fixed, "adaptive": adaptive})


@_timed
def check_monotone_in_stages(max_stages: int = 5, seed: int = 0, restarts: int = 1) -> CheckResult:
    errs = [r.error for r in optimize_range(max_stages, "adaptive", restarts=restarts, seed=seed)]
    floor = helstrom_bound(1.0)
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    inside = all(floor < e < M1_ERROR for e in errs[1:])
    refs = floor == 0.0 and homodyne_reference() == HOMODYNE_ERROR == 0.101
    return CheckResult("optimized error decreases with stage count", decreasing and inside and refs,
                       "P_e(M)=" + ", ".join(f"{e:.5f}" for e in errs) +
                       f"; helstrom={floor}, homodyne={homodyne_reference()}",
                       values={"errors": errs})


@_timed
def check_single_stage_closed_form() -> CheckResult:
    grid_eta = np.linspace(0.2, 1.0, 5)
    grid_xi = np.linspace(0.8, 1.0, 5)
    grid_nu = np.linspace(0.0, 0.01, 5)
    grid_beta = np.linspace(-1.0, -0.2, 5)
    dim = 15
    plus = fock.ket2dm(fock.superposition_state(+1, dim))
    minus = fock.ket2dm(fock.superposition_state(-1, dim))
    worst = 0.0
    for eta in grid_eta:
        for xi in grid_xi:
            for nu in grid_nu:
                imp = ImperfectionParams(efficiency=eta, visibility=xi, dark_rate=nu)
                for beta in grid_beta:
                    p_off_minus = two_mode_off_probability(minus, beta, imp)
                    p_on_plus = 1.0 - two_mode_off_probability(plus, beta, imp)
                    numeric = 0.5 * (p_off_minus + p_on_plus)
                    worst = max(worst, abs(numeric - single_stage_error(eta, xi, nu, beta)))
    return CheckResult("imperfect single-stage closed form", worst <= 1e-10,
                       f"max |closed form - two-mode model| = {worst:.2e} over 625 points "
                       f"(<= 1e-10)", values={"max_abs_diff": worst})


@_timed
def check_loss_on_superpositions() -> CheckResult:
    worst = 0.0
    for eta in (0.0, 0.25, 0.5, 1.0):
        for sign in (+1, -1):
            rho = fock.ket2dm(fock.superposition_state(sign, 2))
            out = fock.apply_loss(rho, eta)
            c = sign * np.sqrt(eta)
            expected = 0.5 * np.array([[2 - eta, c], [c, eta]])
            worst = max(worst, float(np.abs(out - expected).max()))
    return CheckResult("loss channel on |+-> states", worst <= 1e-12,
                       f"max entry deviation {worst:.1e} (<= 1e-12)", values={"max_abs_diff": worst})


def _random_schedule(rng, stages):
    w = rng.dirichlet(np.ones(stages))
    w = np.clip(w, 0.02, None)
    w /= w.sum()
    adaptive = bool(rng.integers(2))
    n = 2 ** stages - 1 if adaptive else stages
    return StageSchedule(tuple(w), tuple(rng.uniform(0.0, 1.2, n)), adaptive)


def _random_state(rng, dim, support):
    g = rng.normal(size=(support, support)) + 1j * rng.normal(size=(support, support))
    rho = np.zeros((dim, dim), dtype=complex)
    rho[:support, :support] = g @ g.conj().T
    return rho / np.trace(rho).real


@_timed
def check_povm_completeness(n_schedules: int = 50, seed: int = 7, dim: int = 10) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_c, worst_p = 0.0, 0.0
    for _ in range(n_schedules):
        m = int(rng.integers(1, 5))
        sched = _random_schedule(rng, m)
        imp = ImperfectionParams(efficiency=rng.uniform(0.5, 1), visibility=rng.uniform(0.9, 1),
                                 dark_rate=rng.uniform(0, 0.01),
                                 discard_fraction=rng.uniform(0, 0.05)) \
            if rng.random() < 0.5 else None
        povm = povm_elements(sched, imp, dim)
        worst_c = max(worst_c, povm.completeness_residual())
        rho = _random_state(rng, dim, 4)
        dist = outcome_distribution(rho, sched, imp, dim, check_truncation=False)
        maps = np.array([dist[r] for r in dist])
        worst_p = max(worst_p, float(np.abs(povm.probabilities(rho)[0] - maps).max()))
    ok = worst_c <= 1e-8 and worst_p <= 1e-9
    return CheckResult("POVM completeness and map agreement", ok,
                       f"{n_schedules} schedules: completeness {worst_c:.1e} (<= 1e-8), "
                       f"Tr[rho Pi] vs maps {worst_p:.1e} (<= 1e-9)",
                       values={"completeness": worst_c, "probability": worst_p})


def tomography_schedules() -> list:
    """Ten receivers with at most three stages, ideal and imperfect."""
    imp = m2_imperfections()
    eff = ImperfectionParams(efficiency=0.8, visibility=0.97, dark_rate=0.005)
    return [
        (StageSchedule.fixed([1.0], [1 / np.sqrt(2)]), None),
        (StageSchedule.fixed([1.0], [0.5]), eff),
        (TOMOGRAPHY_M2_SCHEDULE, None),
        (TOMOGRAPHY_M2_SCHEDULE, imp),
        (OPTIMAL_M2_SCHEDULE, None),
        (DELAY_STUDY_SCHEDULE, imp),
        (StageSchedule.equal_bins(2, 0.6), eff),
        (StageSchedule.equal_bins(3, 0.6), None),
        (StageSchedule.tree((0.2, 0.3, 0.5), (0.7, 0.6, 0.4, 0.5, 0.3, 0.4, 0.3)), None),
        (StageSchedule.tree((0.25, 0.35, 0.4), (0.65, 0.55, 0.4, 0.5, 0.35, 0.45, 0.3)), imp),
    ]


@_timed
def check_tomography_recovers_povm(max_iter: int = 50_000) -> CheckResult:
    probes = ProbeSet.default(5)
    worst_el, worst_pe, worst_drop = 0.0, 0.0, 0.0
    rows = []
    for sched, imp in tomography_schedules():
        data = generate_dataset(sched, imp, probes, mode="exact", shots=10_000)
        # gain-based stopping disabled: the element bound applies at the iteration cap
        rec = ml_reconstruct(data, probes, max_iter=max_iter, tol=0.0)
        truth = povm_elements(sched, imp, probes.dim)
        el = max(float(np.linalg.norm(a - b)) for a, b in zip(rec.povm.elements, truth.elements))
        pe = abs(error_from_povm(rec.povm) - error_probability(sched, imp))
        drop = float(max(0.0, -np.min(np.diff(rec.loglik)) / abs(rec.loglik[-1])))
        worst_el, worst_pe, worst_drop = max(worst_el, el), max(worst_pe, pe), max(worst_drop, drop)
        rows.append({"stages": sched.stages, "element_error": el, "error_gap": pe,
                     "iterations": rec.n_iter})
    ok = worst_el <= 1e-4 and worst_pe <= 1e-3 and worst_drop <= 1e-10
    per = ", ".join(f"{r['element_error']:.1e}" for r in rows)
    return CheckResult("ML tomography recovers the model POVM", ok,
                       f"max element Frobenius {worst_el:.2e} (<= 1e-4) [per schedule: {per}]; "
                       f"max |P_e gap| {worst_pe:.1e} (<= 1e-3); max relative loglik drop "
                       f"{worst_drop:.1e} (<= 1e-10)",
                       values={"rows": rows, "element": worst_el, "pe_gap": worst_pe,
                               "loglik_drop": worst_drop})


@_timed
def check_monte_carlo(n_shots: int = 1_000_000, seed: int = 2024) -> CheckResult:
    out = []
    ok = True
    for label, imp, target in (("ideal", None, M2_ERROR),
                               ("imperfect", m2_imperfections(), None)):
        if target is None:
            target = error_probability(OPTIMAL_M2_SCHEDULE, imp)
        half = n_shots // 2
        plus = simulate_trajectories("+", OPTIMAL_M2_SCHEDULE, imp, half, seed)
        minus = simulate_trajectories("-", OPTIMAL_M2_SCHEDULE, imp, half, seed + 1)
        emp = 0.5 * (plus.error_rate(+1) + minus.error_rate(-1))
        sigma = np.sqrt(target * (1 - target) / (2 * half))
        z = (emp - target) / sigma
        ok &= abs(z) <= 3
        out.append(f"{label} {emp:.5f} vs {target:.5f} ({z:+.2f} sigma)")
    return CheckResult("Monte-Carlo error rate", bool(ok),
                       f"{n_shots} shots: " + "; ".join(out) + " (|z| <= 3)")


@_timed
def check_delay_curve(settle_fraction: float = 0.02) -> CheckResult:
    grid = np.linspace(0.0, 0.1, 21)
    pe = delay_sweep(DELAY_STUDY_SCHEDULE, grid, settle_fraction, m2_imperfections())
    k = int(np.argmin(pe))
    ok = 0 < k < len(grid) - 1 and np.all(np.diff(pe[:k + 1]) < 0) and np.all(np.diff(pe[k:]) > 0)
    return CheckResult("discard-window curve has an interior minimum", bool(ok),
                       f"P_e falls from {pe[0]:.4f} to {pe[k]:.4f} at dt/T={grid[k]:.3f}, "
                       f"then rises to {pe[-1]:.4f}", values={"grid": grid, "pe": pe})


CHECKS = (
    check_single_stage_optimum,
    check_two_stage_optimum,
    check_fixed_magnitude_penalty,
    check_monotone_in_stages,
    check_single_stage_closed_form,
    check_loss_on_superpositions,
    check_povm_completeness,
    check_tomography_recovers_povm,
    check_monte_carlo,
    check_delay_curve,
)


def run_all(verbose: bool = True) -> list:
    results = []
    for i, check in enumerate(CHECKS, 1):
        res = check()
        results.append(res)
        if verbose:
            print(f"{i:2d}. {res.line()}", flush=True)
    return results
