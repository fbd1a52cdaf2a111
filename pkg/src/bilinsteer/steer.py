"""End-to-end steering pipelines and the numerical studies built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .approx import BernsteinOperator, bernstein_eval, mollify, smooth_exponent
from .control import (
    DEFAULT_A_MAX,
    cancellation_control,
    check_admissibility,
    default_delta,
    hold_control,
    log_ratio,
    static_control,
    two_phase_control,
)
from .errors import ContractError, DomainError, InsufficientDataError
from .grid import Field, SpatialGrid, SupportMask, l2_norm, laplacian_array, linf_norm
from .io import write_csv
from .pde import (
    NonlinearitySpec,
    Segment,
    Trajectory,
    _laplacian_matrix,
    forcing_nonlinearity,
    integrate,
    resolvent_smooth,
    simulate,
    zero_nonlinearity,
)

SUCCESS = "success"
EXHAUSTED = "exhausted-T"
INADMISSIBLE = "inadmissible"


@dataclass(frozen=True, eq=False)
class SteeringProblem:
    grid: SpatialGrid
    y0: Field
    yd: Field
    O: SupportMask
    nonlinearity: NonlinearitySpec
    epsilon: float
    T0: float = 1.0
    steps_per_T: int = 500
    delta: Optional[float] = None
    a_max: float = DEFAULT_A_MAX
    delta_E: Optional[float] = None
    rho: float = 0.5
    T_min: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not 0 < self.rho < 1:
            raise DomainError("shrink factor rho must lie in (0, 1)")
        if not self.T_min > 0:
            raise DomainError("T_min must be positive")
        if not self.T0 > 0:
            raise DomainError("T0 must be positive")
        if self.steps_per_T < 100:
            raise DomainError("need at least 100 steps per steering horizon")
        for obj in (self.y0, self.yd, self.O):
            if obj.grid != self.grid:
                raise ContractError("states and mask must live on the problem grid")

    @property
    def zero_threshold(self) -> float:
        return self.delta if self.delta is not None else default_delta(self.y0)


@dataclass(eq=False)
class SteeringReport:
    outcome: str
    T: Optional[float]
    final_error: Optional[float]
    epsilon: float
    control: dict = field(default_factory=dict)
    attempts: list = field(default_factory=list)
    slope: Optional[float] = None
    intercept: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    trajectory: Optional[Trajectory] = None

    @property
    def success(self) -> bool:
        return self.outcome == SUCCESS

    def to_dict(self, emit_trajectory=False, max_snapshots=11) -> dict:
        out = {
            "outcome": self.outcome,
            "T": self.T,
            "final_error": self.final_error,
            "epsilon": self.epsilon,
            "control": self.control,
            "attempts": self.attempts,
            "empirical": {"slope": self.slope, "intercept": self.intercept},
            "diagnostics": self.diagnostics,
        }
        if emit_trajectory and self.trajectory is not None:
            tr = self.trajectory
            idx = np.unique(np.linspace(0, len(tr) - 1, max_snapshots).round().astype(int))
            out["trajectory"] = {
                "manifest": tr.manifest(),
                "times": tr.times[idx].tolist(),
                "states": [tr.states[i].tolist() for i in idx],
            }
        return out


def fit_loglog(T, err):
    """Least-squares fit log err = slope * log T + intercept over positive errors."""
    T = np.asarray(T, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = (err > 0) & (T > 0)
    if ok.sum() < 2:
        return None, None
    slope, intercept = np.polyfit(np.log(T[ok]), np.log(err[ok]), 1)
    return float(slope), float(intercept)


def _apriori_constant(traj: Trajectory, y0: Field) -> float:
    return float(traj.norms().max() / (1.0 + l2_norm(y0)))


def _geometric_search(problem, a, compare_to, bar, nonlinearity, T_start):
    """Try T = T_start*rho, T_start*rho^2, ... until ||y(T) - compare_to|| < bar."""
    attempts = []
    T = T_start
    while True:
        T *= problem.rho
        if T < problem.T_min:
            return None, attempts
        ctrl = static_control(a, T)
        traj = simulate(problem.grid, problem.y0, ctrl, nonlinearity, T, T / problem.steps_per_T)
        err = l2_norm(traj.final - compare_to)
        attempts.append({"T": T, "dt": traj.dt, "error": err})
        if err < bar:
            return (T, ctrl, traj), attempts


def _admissibility_or_none(problem, a_max=None):
    rep = check_admissibility(problem.y0, problem.yd, problem.O, problem.zero_threshold,
                              problem.a_max if a_max is None else a_max)
    return rep


def steer_theorem1(problem: SteeringProblem) -> SteeringReport:
    """Static control a/T with a = ln(yd/y0) on O, T shrunk geometrically from T0."""
    rep = _admissibility_or_none(problem)
    if not rep.passed:
        return SteeringReport(INADMISSIBLE, None, None, problem.epsilon,
                              diagnostics={"admissibility": rep.to_dict()})
    a = log_ratio(problem.y0, problem.yd, problem.O, rep.delta, problem.a_max)
    null = not np.any(a.values)
    found, attempts = _geometric_search(problem, a, problem.yd, problem.epsilon,
                                        problem.nonlinearity, problem.T0)
    slope, intercept = fit_loglog([r["T"] for r in attempts], [r["error"] for r in attempts])
    diag = {"admissibility": rep.to_dict(), "a_linf": linf_norm(a), "null_control": null}
    if found is None:
        last = attempts[-1] if attempts else {"T": None, "error": None}
        return SteeringReport(EXHAUSTED, last["T"], last["error"], problem.epsilon,
                              attempts=attempts, slope=slope, intercept=intercept, diagnostics=diag)
    T, ctrl, traj = found
    diag["apriori_K"] = _apriori_constant(traj, problem.y0)
    manifest = {"kind": "null" if null else "static", **ctrl.describe()}
    return SteeringReport(SUCCESS, T, attempts[-1]["error"], problem.epsilon, control=manifest,
                          attempts=attempts, slope=slope, intercept=intercept, diagnostics=diag,
                          trajectory=traj)


def default_r_schedule(grid: SpatialGrid, r0=0.2, factor=0.5):
    """r0, r0*factor, ... down to a quarter of the grid spacing."""
    out = []
    r = r0
    while r >= grid.h / 4:
        out.append(r)
        r *= factor
    return out


def steer_corollary1(problem: SteeringProblem, r_schedule=None) -> SteeringReport:
    """Global control with a mollified exponent a_r = ln(h_r), h = yd/y0 on {y0 != 0}."""
    if not problem.O.is_full:
        raise ContractError("the mollified pipeline needs the control to act on the whole domain")
    rep = _admissibility_or_none(problem, a_max=np.inf)
    if not (rep.support and rep.sign and rep.zero_sets):
        return SteeringReport(INADMISSIBLE, None, None, problem.epsilon,
                              diagnostics={"admissibility": rep.to_dict()})
    grid, eps = problem.grid, problem.epsilon
    u, w = problem.y0.values, problem.yd.values
    on = np.abs(u) >= rep.delta
    ratio = np.zeros_like(u)
    ratio[on] = w[on] / u[on]
    h = Field(grid, ratio)
    y0_inf = linf_norm(problem.y0)

    r_log = []
    chosen = None
    for r in (r_schedule or default_r_schedule(grid)):
        hr = mollify(h, r)
        gap = l2_norm(hr - h)
        r_log.append({"r": r, "h_gap": gap, "bound": y0_inf * gap})
        if y0_inf * gap < eps / 2:
            chosen = (r, hr)
            break
    diag = {"admissibility": rep.to_dict(), "mollifier": r_log}
    if chosen is None:
        diag["reason"] = "mollifier tolerance not reached on the r schedule"
        return SteeringReport(EXHAUSTED, None, None, eps, diagnostics=diag)
    r, hr = chosen
    a_r = smooth_exponent(h, r)
    target_r = hr * problem.y0  # e^{a_r} y0
    found, attempts = _geometric_search(problem, a_r, target_r, eps / 2, problem.nonlinearity, problem.T0)
    slope, intercept = fit_loglog([x["T"] for x in attempts], [x["error"] for x in attempts])
    diag.update({"r": r, "a_r_linf": linf_norm(a_r)})
    if found is None:
        return SteeringReport(EXHAUSTED, attempts[-1]["T"] if attempts else None, None, eps,
                              attempts=attempts, slope=slope, intercept=intercept, diagnostics=diag)
    T, ctrl, traj = found
    final = l2_norm(traj.final - problem.yd)
    diag["smoothed_target_error"] = attempts[-1]["error"]
    diag["apriori_K"] = _apriori_constant(traj, problem.y0)
    outcome = SUCCESS if final < eps else EXHAUSTED
    return SteeringReport(outcome, T, final, eps, control={"kind": "static-mollified", "r": r, **ctrl.describe()},
                          attempts=attempts, slope=slope, intercept=intercept, diagnostics=diag,
                          trajectory=traj)


def growth_rate_bound(grid: SpatialGrid, g: Field) -> float:
    """Largest eigenvalue of the symmetric operator Delta_h + diag(g).

    It is the logarithmic L2 norm of the hold dynamics, so errors grow at most
    like exp(t * max(0, value)); never larger than linf(g).
    """
    A = _laplacian_matrix(grid) + sp.diags(g.values)
    if grid.size <= 400:
        return float(np.linalg.eigvalsh(A.toarray())[-1])
    try:
        val = eigsh(A, k=1, which="LA", tol=1e-10, return_eigenvectors=False)
        return float(val[0])
    except ArpackNoConvergence:
        return float(np.max(g.values))


def steer_fixed_time(problem: SteeringProblem, T: float, case: str = "a", *,
                     amplification: str = "spectral", hold_tol: float = 1e-6,
                     g_max: Optional[float] = None, r_schedule=None,
                     hold_cfl: float = 0.5) -> SteeringReport:
    """Reach yd at a prescribed time T: steer, hold yd as an equilibrium, cancel f.

    ``amplification`` selects the phase-1 error bar: "gronwall" divides epsilon
    by exp(T linf(g)); "spectral" by exp(T max(0, lambda_max(Delta_h + g))),
    which is never larger.
    """
    eps, grid = problem.epsilon, problem.grid
    f = problem.nonlinearity
    if not problem.O.is_full:
        raise ContractError("prescribed-time steering needs the control on the whole domain")
    if f.growth is None:
        raise ContractError(f"nonlinearity {f.name!r} declares no linear-growth constant")
    if not 0 < T <= problem.T0:
        raise DomainError(f"prescribed time must lie in (0, T0], got {T}")
    if case not in ("a", "b"):
        raise DomainError(f"case must be 'a' or 'b', got {case!r}")
    if amplification not in ("gronwall", "spectral"):
        raise DomainError(f"unknown amplification bound {amplification!r}")
    diag = {"case": case, "amplification": amplification}

    target = problem.yd
    hold_eps = eps
    if case == "b":
        if np.any(problem.yd.values < -problem.zero_threshold):
            diag["reason"] = "case (b) needs a nonnegative target"
            return SteeringReport(INADMISSIBLE, None, None, eps, diagnostics=diag)
        r_log, chosen = [], None
        for r in (r_schedule or default_r_schedule(grid)):
            y_eps = mollify(problem.yd, r)
            gap = l2_norm(problem.yd - y_eps)
            r_log.append({"r": r, "target_gap": gap})
            if gap < eps / 2:
                chosen = (r, y_eps)
                break
        diag["mollifier"] = r_log
        if chosen is None:
            diag["reason"] = "no mollified target within epsilon/2"
            return SteeringReport(EXHAUSTED, None, None, eps, diagnostics=diag)
        diag["r"], target = chosen
        hold_eps = eps / 2

    g, residual = hold_control(target)
    g_inf = linf_norm(g)
    scale = max(l2_norm(Field(grid, laplacian_array(grid, target.values))), np.finfo(float).tiny)
    diag.update({"hold_residual": residual, "hold_residual_rel": residual / scale, "g_linf": g_inf})
    if case == "a":
        limit = g_max if g_max is not None else 0.1 / grid.h**2
        diag["g_max"] = limit
        if residual > hold_tol * scale or g_inf > limit:
            diag["reason"] = "target is not an admissible equilibrium (hold residual or g unbounded)"
            return SteeringReport(INADMISSIBLE, None, None, eps, diagnostics=diag)

    kappa = growth_rate_bound(grid, g)
    rate = g_inf if amplification == "gronwall" else max(0.0, min(kappa, g_inf))
    bar = hold_eps * math.exp(-T * rate)
    diag.update({"growth_rate": kappa, "phase1_bar": bar})

    phase1 = replace(problem, yd=target, nonlinearity=zero_nonlinearity(), epsilon=bar, T0=T)
    rep = _admissibility_or_none(phase1)
    if not rep.passed:
        diag["admissibility"] = rep.to_dict()
        return SteeringReport(INADMISSIBLE, None, None, eps, diagnostics=diag)
    a = log_ratio(phase1.y0, target, phase1.O, rep.delta, phase1.a_max)
    found, attempts = _geometric_search(phase1, a, target, bar, phase1.nonlinearity, T)
    if found is None:
        diag["reason"] = "phase 1 did not reach the amplified bar"
        return SteeringReport(EXHAUSTED, None, None, eps, attempts=attempts, diagnostics=diag)
    T1, ctrl1, _ = found
    steps = problem.steps_per_T
    steps2 = max(steps, int(math.ceil((T - T1) * g_inf / hold_cfl)))
    segments = (Segment(0.0, T1 / steps, steps), Segment(T1, (T - T1) / steps2, steps2))
    schedule = two_phase_control(ctrl1.pieces[0].field, g, T1, T)
    phi = integrate(grid, problem.y0, schedule, zero_nonlinearity(), segments)
    full = cancellation_control(schedule, phi, f, problem.delta_E)
    traj = integrate(grid, problem.y0, full, f, segments)

    gap = np.sqrt(grid.h**grid.d) * np.linalg.norm(traj.states - phi.states, axis=1)
    rel = gap / np.maximum(1.0, phi.norms())
    final = l2_norm(traj.final - problem.yd)
    diag.update({
        "T1": T1,
        "phase1_error": attempts[-1]["error"],
        "phi_final_error": l2_norm(phi.final - problem.yd),
        "max_rel_gap_to_phi": float(rel.max()),
        "equivalent_to_phi": bool(rel.max() <= 1e-9),
        "steps": [steps, steps2],
    })
    outcome = SUCCESS if final < eps else EXHAUSTED
    return SteeringReport(outcome, T, final, eps, control={"kind": "two-phase-cancellation", **full.describe()},
                          attempts=attempts, diagnostics=diag, trajectory=traj)


# -- studies -----------------------------------------------------------------------


def default_degree(T: float, epsilon: float, cap: int = 10_000) -> int:
    """n = ceil(4 log(1/eps) / T^2), capped."""
    return int(min(cap, math.ceil(4.0 / T**2 * math.log(1.0 / min(epsilon, 0.5)))))


def bernstein_pipeline_demo(problem: SteeringProblem, T: float, n: Optional[int] = None) -> dict:
    """Replace F(t) = f(t, y(t)) by its Bernstein polynomial and compare trajectories."""
    if n is None:
        n = default_degree(T, problem.epsilon)
    if n < 1:
        raise DomainError("degree must be >= 1")
    grid, f = problem.grid, problem.nonlinearity
    rep = _admissibility_or_none(problem)
    if not rep.passed:
        raise ContractError("bernstein demo needs an admissible problem")
    a = log_ratio(problem.y0, problem.yd, problem.O, rep.delta, problem.a_max)
    ctrl = static_control(a, T)
    dt = T / problem.steps_per_T
    traj = simulate(grid, problem.y0, ctrl, f, T, dt)

    # F is the forcing the integrator actually applies at each step midpoint,
    # f(t_m, e^{dt a/2T} y_k), interpolated linearly in time between midpoints
    vol = np.sqrt(grid.h**grid.d)
    steps = traj.step_sizes()
    mids = traj.times[:-1] + 0.5 * steps
    half = np.exp(0.5 * steps[0] * ctrl.pieces[0].field.values)
    applied = np.array([f.func(mids[k], half * traj.states[k]) for k in range(len(steps))])

    def F(t):
        j = int(np.searchsorted(mids, t))
        if j == 0:
            return applied[0]
        if j == len(mids):
            return applied[-1]
        w = (t - mids[j - 1]) / (mids[j] - mids[j - 1])
        return (1 - w) * applied[j - 1] + w * applied[j]

    op = BernsteinOperator(np.array([F(k * T / n) for k in range(n + 1)]))

    def F_n(t):
        return bernstein_eval(op, min(max(t / T, 0.0), 1.0))

    traj_n = simulate(grid, problem.y0, ctrl, forcing_nonlinearity("bernstein", F_n), T, dt)

    f_gap = max(vol * np.linalg.norm(F_n(mids[k]) - applied[k]) for k in range(len(steps)))
    traj_gap = float((vol * np.linalg.norm(traj.states - traj_n.states, axis=1)).max())
    bound = float(math.exp(linf_norm(a)) * T * f_gap)

    # exponential variation-of-constants form of the auxiliary system at t = T
    acc = np.exp(a.values) * problem.y0.values
    for k in range(len(steps)):
        s = traj_n.times[k]
        integrand = laplacian_array(grid, traj_n.states[k]) + F_n(s)
        acc = acc + steps[k] * np.exp((T - s) / T * a.values) * integrand
    vcf_res = float(vol * np.linalg.norm(traj_n.states[-1] - acc))

    return {
        "T": T,
        "n": n,
        "dt": dt,
        "a_linf": linf_norm(a),
        "trajectory_gap": traj_gap,
        "forcing_gap": float(f_gap),
        "gronwall_bound": bound,
        "bound_holds": bool(traj_gap <= bound + 1e-6),
        "vcf_residual": vcf_res,
        "final_error": l2_norm(traj.final - problem.yd),
        "final_error_aux": l2_norm(traj_n.final - problem.yd),
    }


@dataclass
class ConvergenceTable:
    rows: list
    slope: Optional[float]
    intercept: Optional[float]

    @property
    def M4(self) -> Optional[float]:
        return None if self.intercept is None else math.exp(self.intercept)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "slope": self.slope, "intercept": self.intercept, "M4": self.M4}

    def to_csv(self, path):
        write_csv(path, ["T", "dt", "error", "slope_running"],
                  [[r["T"], r["dt"], r["error"], r["slope_running"]] for r in self.rows])


def convergence_study(problem: SteeringProblem, T_list) -> ConvergenceTable:
    """Steering error e(T) under a/T for each T, with a log-log fit e ~ M4 T^slope."""
    T_list = [float(t) for t in T_list]
    if len(T_list) < 3:
        raise InsufficientDataError("need at least three steering times")
    if any(b >= a for a, b in zip(T_list, T_list[1:])):
        raise DomainError("T_list must be strictly decreasing")
    if T_list[-1] < problem.T_min:
        raise DomainError(f"all T must be >= T_min={problem.T_min}")
    rep = _admissibility_or_none(problem)
    if not rep.passed:
        raise ContractError("convergence study needs an admissible problem")
    a = log_ratio(problem.y0, problem.yd, problem.O, rep.delta, problem.a_max)
    rows = []
    for T in T_list:
        traj = simulate(problem.grid, problem.y0, static_control(a, T), problem.nonlinearity,
                        T, T / problem.steps_per_T)
        err = l2_norm(traj.final - problem.yd)
        running = None
        if rows and rows[-1]["error"] > 0 and err > 0:
            running = math.log(rows[-1]["error"] / err) / math.log(rows[-1]["T"] / T)
        rows.append({"T": T, "dt": traj.dt, "error": err, "slope_running": running})
    slope, intercept = fit_loglog([r["T"] for r in rows], [r["error"] for r in rows])
    return ConvergenceTable(rows, slope, intercept)


def resolvent_prefilter(problem: SteeringProblem, lam_list, T: Optional[float] = None) -> dict:
    """Smooth y0 by lam R(lam; Delta_h) and propagate the initial gap to time T."""
    lam_list = [float(x) for x in lam_list]
    if any(x <= 0 for x in lam_list):
        raise DomainError("resolvent parameters must be positive")
    if any(b <= a for a, b in zip(lam_list, lam_list[1:])):
        raise DomainError("lambda list must be increasing")
    if T is None:
        T = problem.T0 * problem.rho
    rep = _admissibility_or_none(problem)
    if not rep.passed:
        raise ContractError("resolvent prefilter needs an admissible problem")
    a = log_ratio(problem.y0, problem.yd, problem.O, rep.delta, problem.a_max)
    ctrl = static_control(a, T)
    dt = T / problem.steps_per_T
    f = problem.nonlinearity
    base = simulate(problem.grid, problem.y0, ctrl, f, T, dt)
    K = math.exp(linf_norm(a) + f.lipschitz * T)
    rows = []
    for lam in lam_list:
        y0s = resolvent_smooth(problem.y0, lam)
        traj = simulate(problem.grid, y0s, ctrl, f, T, dt)
        init = l2_norm(y0s - problem.y0)
        gap = l2_norm(traj.final - base.final)
        rows.append({"lambda": lam, "initial_gap": init, "trajectory_gap": gap,
                     "bound": K * init, "bound_holds": bool(gap <= K * init * (1 + 1e-12) + 1e-15)})
    return {"T": T, "K": K, "rows": rows}
