"""Admissibility checks and synthesis of the constructive control laws."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, DomainError, SynthesisError
from .grid import Field, SupportMask, l2_norm, laplacian_array, linf_norm
from .pde import CancellationTerm, ControlPiece, ControlSchedule, NonlinearitySpec, Trajectory

DEFAULT_A_MAX = 50.0


def default_delta(y: Field) -> float:
    """Zero threshold 1e-8 * linf(y); falls back to tiny() for the zero field."""
    return max(1e-8 * linf_norm(y), np.finfo(float).tiny)


@dataclass
class AdmissibilityReport:
    support: bool
    sign: bool
    zero_sets: bool
    bounded: bool
    violations: dict = field(default_factory=dict)
    delta: float = 0.0
    a_max: float = DEFAULT_A_MAX

    @property
    def passed(self) -> bool:
        return self.support and self.sign and self.zero_sets and self.bounded

    def flags(self) -> dict:
        return {"support": self.support, "sign": self.sign, "zero_sets": self.zero_sets, "bounded": self.bounded}

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            **self.flags(),
            "delta": self.delta,
            "a_max": self.a_max,
            "violations": {k: [int(i) for i in v] for k, v in self.violations.items()},
        }


def _check_grids(*objs):
    g = objs[0].grid
    if any(o.grid != g for o in objs[1:]):
        raise DimensionError("inputs live on different grids")


def check_admissibility(y0: Field, yd: Field, O: SupportMask, delta: float | None = None,
                        a_max: float = DEFAULT_A_MAX) -> AdmissibilityReport:
    """Nodewise test of the hypotheses on (y0, yd, O); |value| < delta counts as zero."""
    _check_grids(y0, yd, O)
    if delta is None:
        delta = default_delta(y0)
    if not (delta > 0 and a_max > 0):
        raise DomainError("delta and a_max must be positive")
    u, w, inO = y0.values, yd.values, O.values
    z0 = np.abs(u) < delta
    zd = np.abs(w) < delta

    support_bad = ~inO & (np.abs(u - w) >= delta)
    sign_bad = inO & ~z0 & ~zd & (u * w < 0)
    zero_bad = inO & (z0 != zd)
    both = inO & ~z0 & ~zd & (u * w > 0)
    ratio = np.ones_like(u)
    ratio[both] = w[both] / u[both]
    bound_bad = both & (np.abs(np.log(ratio)) > a_max)

    viol = {
        "support": np.flatnonzero(support_bad),
        "sign": np.flatnonzero(sign_bad),
        "zero_sets": np.flatnonzero(zero_bad),
        "bounded": np.flatnonzero(bound_bad),
    }
    return AdmissibilityReport(
        support=not support_bad.any(),
        sign=not sign_bad.any(),
        zero_sets=not zero_bad.any(),
        bounded=not bound_bad.any(),
        violations=viol,
        delta=float(delta),
        a_max=float(a_max),
    )


def log_ratio(y0: Field, yd: Field, O: SupportMask, delta: float | None = None,
              a_max: float = DEFAULT_A_MAX) -> Field:
    """Exponent a = ln(yd / y0) on O where |y0| >= delta, zero elsewhere."""
    report = check_admissibility(y0, yd, O, delta, a_max)
    if not report.passed:
        failed = [k for k, ok in report.flags().items() if not ok]
        raise SynthesisError(f"(y0, yd) not admissible: {', '.join(failed)}", report)
    u, w = y0.values, yd.values
    on = O.values & (np.abs(u) >= report.delta)
    a = np.zeros_like(u)
    a[on] = np.log(w[on] / u[on])
    return Field(y0.grid, a)


def static_control(a: Field, T: float) -> ControlSchedule:
    if not T > 0:
        raise DomainError(f"steering time must be positive, got {T}")
    return ControlSchedule.constant(a / T, T)


def hold_control(yd: Field, delta: float | None = None):
    """Coefficient g = -Delta_h yd / yd making yd a steady state of y_t = Delta y + g y.

    Returns ``(g, residual)`` where residual is the full-domain L2 norm of
    Delta_h yd + g yd. It vanishes unless Delta_h yd is nonzero on the zero
    set of yd.
    """
    if delta is None:
        delta = default_delta(yd)
    grid = yd.grid
    lap = laplacian_array(grid, yd.values)
    on = np.abs(yd.values) >= delta
    g = np.zeros(grid.size)
    g[on] = -lap[on] / yd.values[on]
    residual = l2_norm(Field(grid, lap + g * yd.values))
    return Field(grid, g), residual


def two_phase_control(q1: Field, g: Field, T1: float, T: float) -> ControlSchedule:
    if not 0 < T1 < T:
        raise DomainError(f"need 0 < T1 < T, got T1={T1}, T={T}")
    return ControlSchedule((ControlPiece(0.0, float(T1), q1), ControlPiece(float(T1), float(T), g)))


def cancellation_control(q: ControlSchedule, phi: Trajectory, f: NonlinearitySpec,
                         delta_E: float | None = None) -> ControlSchedule:
    """Add -f(t, phi)/phi on {|phi| > delta_E} to the schedule q.

    ``phi`` must be the f = 0 trajectory under ``q``.
    """
    if f.growth is None:
        raise ContractError(f"nonlinearity {f.name!r} declares no linear-growth constant")
    if phi.T < q.T - 0.5 * phi.dt:
        raise ContractError("reference trajectory does not cover the schedule")
    if f.is_zero:
        return q
    if delta_E is None:
        delta_E = default_delta(phi.initial)
    return q.with_cancellation(CancellationTerm(phi, f, float(delta_E), float(f.growth)))
