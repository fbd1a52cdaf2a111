"""Time integration of y_t = Delta y + v(x,t) y + f(t, y) with zero Dirichlet data.

Each step of size dt from t to t + dt (midpoint t_m = t + dt/2) does

    y_half = exp(dt/2 * v(t_m)) * y
    y      = exp(dt/2 * v(t_m)) * (CN(y_half) + dt * f(t_m, y_half))

where CN is one Crank-Nicolson step of the heat equation. The multiplicative
substeps are exact, so arbitrarily large |v| never destabilises the scheme.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import (
    BlowUpError,
    ContractError,
    DimensionError,
    DomainError,
    ScheduleError,
    SolverError,
)
from .grid import Field, SpatialGrid, l2_norm, laplacian_array
from .io import write_csv
from .tridiag import TridiagonalSolver

# -- linear operators --------------------------------------------------------

_cache_lock = threading.Lock()


@lru_cache(maxsize=16)
def _laplacian_matrix(grid: SpatialGrid):
    """Sparse Delta_h; shared, so callers must not modify it in place."""
    n = grid.N
    T = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / grid.h**2
    if grid.d == 1:
        return T.tocsc()
    eye = sp.identity(n)
    return (sp.kron(T, eye) + sp.kron(eye, T)).tocsc()


@lru_cache(maxsize=64)
def _shifted_solver(grid: SpatialGrid, shift: float, scale: float):
    """Factorization of ``shift * I - scale * Delta_h`` (1D: Thomas, 2D: sparse LU)."""
    try:
        if grid.d == 1:
            s = scale / grid.h**2
            return TridiagonalSolver(-s, np.full(grid.N, shift + 2.0 * s), -s).solve
        A = shift * sp.identity(grid.size, format="csc") - scale * _laplacian_matrix(grid)
        return splu(A.tocsc()).solve
    except (ZeroDivisionError, RuntimeError) as exc:
        raise SolverError(f"factorization failed for shift={shift}, scale={scale}") from exc


def _solver(grid, shift, scale):
    with _cache_lock:
        return _shifted_solver(grid, float(shift), float(scale))


def heat_step_array(grid: SpatialGrid, u: np.ndarray, dt: float) -> np.ndarray:
    rhs = u + 0.5 * dt * laplacian_array(grid, u)
    return _solver(grid, 1.0, 0.5 * dt)(rhs)


def step_heat(u: Field, dt: float) -> Field:
    """One Crank-Nicolson step of y_t = Delta y."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    return Field(u.grid, heat_step_array(u.grid, u.values, dt))


def resolvent_smooth(u: Field, lam: float) -> Field:
    """Return lam * (lam I - Delta_h)^{-1} u."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    solve = _solver(u.grid, lam, 1.0)
    return Field(u.grid, solve(lam * u.values))


# -- nonlinearities ------------------------------------------------------------

@dataclass(frozen=True)
class NonlinearitySpec:
    """Pointwise reaction term f(t, y)(x) = func(t, y(x)).

    ``growth`` is the constant C in |f(t,y)(x)| <= C |y(x)| when the term
    satisfies such a bound, else None.
    """

    name: str
    func: Callable[[float, np.ndarray], np.ndarray]
    lipschitz: float
    growth: Optional[float] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lipschitz < 0:
            raise DomainError("Lipschitz constant must be nonnegative")
        if self.growth is not None and self.growth < 0:
            raise DomainError("growth constant must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def __call__(self, t, y):
        if isinstance(y, Field):
            return Field(y.grid, self.func(t, y.values))
        return self.func(t, y)

    def describe(self) -> dict:
        return {"name": self.name, "lipschitz": self.lipschitz, "growth": self.growth, **self.params}


def zero_nonlinearity() -> NonlinearitySpec:
    return NonlinearitySpec("zero", lambda t, y: np.zeros_like(y), 0.0, 0.0)


def linear_nonlinearity(c: float) -> NonlinearitySpec:
    return NonlinearitySpec("linear", lambda t, y: c * y, abs(c), abs(c), {"c": c})


def sine_nonlinearity(c: float) -> NonlinearitySpec:
    return NonlinearitySpec("sine", lambda t, y: c * np.sin(y), abs(c), abs(c), {"c": c})


def tanh_nonlinearity(c: float) -> NonlinearitySpec:
    return NonlinearitySpec("tanh", lambda t, y: c * np.tanh(y), abs(c), abs(c), {"c": c})


def source_nonlinearity(c: float, omega: float = 1.0) -> NonlinearitySpec:
    """f(t, y) = c * cos(omega t); Lipschitz in t but without a growth bound."""
    return NonlinearitySpec(
        "source",
        lambda t, y: np.full_like(y, c * np.cos(omega * t)),
        abs(c * omega),
        None,
        {"c": c, "omega": omega},
    )


def forcing_nonlinearity(name: str, forcing: Callable[[float], np.ndarray]) -> NonlinearitySpec:
    """State-independent forcing f(t, y) = forcing(t)."""
    return NonlinearitySpec(name, lambda t, y: np.asarray(forcing(t), dtype=float), 0.0, None)


PRESETS = {
    "zero": lambda **kw: zero_nonlinearity(),
    "linear": lambda c=0.3: linear_nonlinearity(c),
    "sine": lambda c=0.5: sine_nonlinearity(c),
    "tanh": lambda c=0.5: tanh_nonlinearity(c),
    "source": lambda c=1.0, omega=1.0: source_nonlinearity(c, omega),
}


def make_nonlinearity(name: str, **params) -> NonlinearitySpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ContractError(f"unknown nonlinearity preset {name!r}") from None
    return factory(**params)


# -- trajectories ---------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """``steps`` uniform steps of size ``dt`` starting at ``t0``."""

    t0: float
    dt: float
    steps: int

    @property
    def t1(self) -> float:
        return self.t0 + self.steps * self.dt


@dataclass(eq=False)
class Trajectory:
    grid: SpatialGrid
    times: np.ndarray
    states: np.ndarray  # shape (K+1, grid.size)
    segments: tuple

    @property
    def dt(self) -> float:
        """Step size; for piecewise-uniform runs, the step of the first segment."""
        return self.segments[0].dt

    @property
    def uniform(self) -> bool:
        return len(self.segments) == 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def __len__(self):
        return len(self.times)

    def state(self, k) -> Field:
        return Field(self.grid, self.states[k])

    @property
    def initial(self) -> Field:
        return self.state(0)

    @property
    def final(self) -> Field:
        return self.state(-1)

    def step_sizes(self) -> np.ndarray:
        return np.concatenate([np.full(s.steps, s.dt) for s in self.segments])

    def norms(self) -> np.ndarray:
        g = self.grid
        return np.sqrt(g.h**g.d) * np.linalg.norm(self.states, axis=1)

    def to_csv(self, path):
        header = ["t"] + [f"node_{i}" for i in range(self.grid.size)]
        rows = ([t, *y] for t, y in zip(self.times, self.states))
        write_csv(path, header, rows)

    def manifest(self, control=None, nonlinearity=None) -> dict:
        out = {
            "grid": {"d": self.grid.d, "N": self.grid.N},
            "dt": self.dt if self.uniform else None,
            "segments": [{"t0": s.t0, "dt": s.dt, "steps": s.steps} for s in self.segments],
            "T": self.T,
        }
        if control is not None:
            out["control"] = control.describe()
        if nonlinearity is not None:
            out["nonlinearity"] = nonlinearity.name
        return out


# -- control schedules --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ControlPiece:
    t_start: float
    t_end: float
    field: Field


@dataclass(frozen=True, eq=False)
class CancellationTerm:
    """v_cancel(x, t) = -f(t, phi)(x) / phi(x) on {|phi| > delta_E}, zero elsewhere.

    ``reference`` is the trajectory phi of the f = 0 system under the base
    schedule. The term is applied with the reaction substep at the same
    intermediate state the integrator feeds to f, so that the semilinear run
    reproduces phi step by step.
    """

    reference: Trajectory
    nonlinearity: NonlinearitySpec
    delta_E: float
    bound: float

    def _quotient(self, t, phi):
        out = np.zeros_like(phi)
        E = np.abs(phi) > self.delta_E
        out[E] = -self.nonlinearity.func(t, phi)[E] / phi[E]
        return out

    def at_half_state(self, k, t_mid, half_multiplier):
        return self._quotient(t_mid, half_multiplier * self.reference.states[k])

    def at_node(self, k):
        return self._quotient(self.reference.times[k], self.reference.states[k])


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    pieces: tuple
    cancellation: Optional[CancellationTerm] = None

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ScheduleError("schedule has no pieces")
        if pieces[0].t_start != 0.0:
            raise ScheduleError("first piece must start at t = 0")
        grid = pieces[0].field.grid
        for p in pieces:
            if not p.t_start < p.t_end:
                raise ScheduleError(f"empty piece [{p.t_start}, {p.t_end})")
            if p.field.grid != grid:
                raise DimensionError("control pieces live on different grids")
        for a, b in zip(pieces, pieces[1:]):
            if abs(a.t_end - b.t_start) > 1e-12 * max(1.0, abs(b.t_start)):
                raise ScheduleError(f"gap or overlap between {a.t_end} and {b.t_start}")
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def constant(cls, field_: Field, T: float):
        return cls((ControlPiece(0.0, float(T), field_),))

    @property
    def grid(self):
        return self.pieces[0].field.grid

    @property
    def T(self) -> float:
        return self.pieces[-1].t_end

    def piece_index(self, t: float) -> int:
        for i, p in enumerate(self.pieces[:-1]):
            if t < p.t_end:
                return i
        return len(self.pieces) - 1

    def field_at(self, t: float) -> np.ndarray:
        return self.pieces[self.piece_index(t)].field.values

    def with_cancellation(self, term: CancellationTerm):
        return ControlSchedule(self.pieces, term)

    def describe(self) -> dict:
        out = {
            "pieces": [
                {"t_start": p.t_start, "t_end": p.t_end, "linf": float(np.max(np.abs(p.field.values)))}
                for p in self.pieces
            ]
        }
        if self.cancellation is not None:
            c = self.cancellation
            out["cancellation"] = {"nonlinearity": c.nonlinearity.name, "delta_E": c.delta_E, "bound": c.bound}
        return out


def null_control(grid: SpatialGrid, T: float) -> ControlSchedule:
    return ControlSchedule.constant(Field.zeros(grid), T)


# -- integration ---------------------------------------------------------------

def uniform_segment(T: float, dt: float) -> Segment:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if T < dt:
        raise ScheduleError(f"horizon T={T} shorter than one step dt={dt}")
    K = int(round(T / dt))
    if abs(K * dt - T) <= 1e-9 * T:
        dt = T / K
    return Segment(0.0, dt, K)


def integrate(grid: SpatialGrid, y0: Field, control: ControlSchedule,
              nonlinearity: NonlinearitySpec, segments) -> Trajectory:
    """Advance ``y0`` through consecutive uniform segments."""
    if y0.grid != grid or control.grid != grid:
        raise DimensionError("initial state, control and grid disagree")
    segments = tuple(segments)
    end = segments[-1].t1
    if control.T < end - 0.5 * min(s.dt for s in segments):
        raise ScheduleError(f"control covers [0, {control.T}] but simulation runs to {end}")
    cancel = control.cancellation
    if cancel is not None:
        ref = cancel.reference
        if tuple(ref.segments) != segments:
            raise ContractError("cancellation reference was computed on a different time grid")

    total = sum(s.steps for s in segments)
    times = np.empty(total + 1)
    states = np.empty((total + 1, grid.size))
    y = np.array(y0.values, dtype=float)
    times[0], states[0] = 0.0, y
    k = 0
    cached = (None, None, None)
    for seg in segments:
        dt = seg.dt
        solve = _solver(grid, 1.0, 0.5 * dt)
        for j in range(seg.steps):
            t = seg.t0 + j * dt
            t_mid = t + 0.5 * dt
            idx = control.piece_index(t_mid)
            if cached[0] != (idx, dt):
                half = np.exp(0.5 * dt * control.pieces[idx].field.values)
                cached = ((idx, dt), half, None)
            half = cached[1]
            y_half = half * y
            y_new = solve(y_half + 0.5 * dt * laplacian_array(grid, y_half))
            if not nonlinearity.is_zero:
                forcing = nonlinearity.func(t_mid, y_half)
                if cancel is not None:
                    forcing = forcing + cancel.at_half_state(k, t_mid, half) * y_half
                y_new = y_new + dt * forcing
            y = half * y_new
            k += 1
            if not np.all(np.isfinite(y)):
                raise BlowUpError(k, t + dt)
            times[k] = seg.t0 + (j + 1) * dt
            states[k] = y
    return Trajectory(grid, times, states, segments)


def simulate(grid: SpatialGrid, y0: Field, control: ControlSchedule,
             nonlinearity: NonlinearitySpec, T: float, dt: float) -> Trajectory:
    return integrate(grid, y0, control, nonlinearity, (uniform_segment(T, dt),))


def _total_multiplier(control, traj, k):
    v = control.field_at(traj.times[k])
    if control.cancellation is not None:
        v = v + control.cancellation.at_node(k)
    return v


def vcf_residual(trajectory: Trajectory, control: ControlSchedule,
                 nonlinearity: NonlinearitySpec) -> float:
    """L2 gap between y(T) and the left-endpoint Duhamel sum

        S_h(T) y0 + sum_k dt S_h(T - t_k) (v(t_k) y_k + f(t_k, y_k)).

    The sum is accumulated as acc <- S_h(dt) (acc + dt g_k), so the cost is
    one heat step per trajectory step.
    """
    grid = trajectory.grid
    acc = trajectory.states[0].copy()
    for k, dt in enumerate(trajectory.step_sizes()):
        y = trajectory.states[k]
        g = _total_multiplier(control, trajectory, k) * y
        if not nonlinearity.is_zero:
            g = g + nonlinearity.func(trajectory.times[k], y)
        acc = heat_step_array(grid, acc + dt * g, dt)
    return l2_norm(Field(grid, trajectory.states[-1] - acc))


def steering_identity_residual(trajectory: Trajectory, a: Field,
                               nonlinearity: NonlinearitySpec, y_target: Field) -> float:
    """L2 norm of (y(T) - y_target) - sum_k dt exp((T - t_k)/T a) (Delta_h y_k + f(t_k, y_k))."""
    grid = trajectory.grid
    if a.grid != grid or y_target.grid != grid:
        raise DimensionError("exponent, target and trajectory disagree")
    T = trajectory.T
    total = np.zeros(grid.size)
    for k, dt in enumerate(trajectory.step_sizes()):
        t = trajectory.times[k]
        y = trajectory.states[k]
        integrand = laplacian_array(grid, y)
        if not nonlinearity.is_zero:
            integrand = integrand + nonlinearity.func(t, y)
        total += dt * np.exp((T - t) / T * a.values) * integrand
    return l2_norm(Field(grid, trajectory.states[-1] - y_target.values - total))
