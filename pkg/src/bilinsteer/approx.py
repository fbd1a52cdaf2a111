"""Bernstein polynomial approximation and mollifier smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, HypothesisViolation
from .grid import Field, SpatialGrid, linf_norm

# -- Bernstein polynomials ------------------------------------------------------


def bernstein_basis(n: int, t: float) -> np.ndarray:
    """Values b_0(t) .. b_n(t) of the degree-n Bernstein basis.

    Built by the ratio recurrence b_{k+1}/b_k = (n-k)/(k+1) * t/(1-t),
    started at the mode of the distribution and normalised by the sum, so
    neither factorials nor (1-t)^n are ever formed and large n cannot
    overflow or underflow the dominant terms.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    if n < 0:
        raise DomainError("degree must be nonnegative")
    b = np.zeros(n + 1)
    if t == 0.0:
        b[0] = 1.0
        return b
    if t == 1.0:
        b[n] = 1.0
        return b
    if n == 0:
        b[0] = 1.0
        return b
    k = np.arange(n)
    up = (n - k) / (k + 1) * (t / (1.0 - t))  # b_{k+1} / b_k
    mode = min(int((n + 1) * t), n)
    b[mode] = 1.0
    b[mode + 1:] = np.cumprod(up[mode:])
    b[:mode] = np.cumprod(1.0 / up[:mode][::-1])[::-1]
    return b / b.sum()


@dataclass(frozen=True, eq=False)
class BernsteinOperator:
    """B_n(u)(t) = sum_k C(n,k) t^k (1-t)^(n-k) u(k/n) on [0, 1].

    ``samples`` has shape (n+1,) for scalar u or (n+1, m) for vector u.
    """

    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim == 0 or s.shape[0] < 2:
            raise DomainError("need at least two samples (degree n >= 1)")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0] - 1

    @classmethod
    def from_function(cls, u, n: int):
        return cls(np.array([u(k / n) for k in range(n + 1)], dtype=float))


def bernstein_eval(op: BernsteinOperator, t: float):
    b = bernstein_basis(op.n, t)
    out = b @ op.samples
    return float(out) if np.ndim(out) == 0 else out


def bernstein_derivative(op: BernsteinOperator, t: float):
    """n * sum_k C(n-1,k) t^k (1-t)^(n-1-k) (u((k+1)/n) - u(k/n))."""
    b = bernstein_basis(op.n - 1, t)
    out = op.n * (b @ np.diff(op.samples, axis=0))
    return float(out) if np.ndim(out) == 0 else out


def bernstein_tail_bound(M: float, eta: float, n: int) -> float:
    """Bound M / (2 eta^2 n) on the far-from-t part of B_n(u)(t) - u(t)."""
    if M < 0:
        raise DomainError("M must be nonnegative")
    if not 0 < eta <= 1:
        raise DomainError(f"eta must lie in (0, 1], got {eta}")
    if not n >= 1:
        raise DomainError(f"degree must be >= 1, got {n}")
    return M / (2.0 * eta**2 * n)


def bernstein_total_bound(lipschitz: float, M: float, eta: float, n: int) -> float:
    """Uniform error bound lipschitz * eta + M / (2 eta^2 n) for a Lipschitz u."""
    return lipschitz * eta + bernstein_tail_bound(M, eta, n)


# -- mollifier -------------------------------------------------------------------


def _bump(s2):
    """exp(1/(|x|^2 - 1)) for |x|^2 < 1, else 0; ``s2`` is |x|^2."""
    out = np.zeros_like(s2, dtype=float)
    inside = s2 < 1.0
    out[inside] = np.exp(1.0 / (s2[inside] - 1.0))
    return out


@lru_cache(maxsize=16)
def bump_normalizer(d: int, resolution: int = 2000) -> float:
    """c such that c * exp(1/(|x|^2-1)) has unit mass on the unit ball.

    Composite midpoint rule with ``resolution`` cells per axis on [-1, 1]^d.
    The integrand is smooth with all derivatives vanishing on the sphere, so
    the rule converges faster than any power of the resolution.
    """
    if d not in (1, 2):
        raise DomainError("dimension must be 1 or 2")
    if resolution < 1000:
        raise DomainError("resolution must be at least 1000 points per axis")
    step = 2.0 / resolution
    x = -1.0 + step * (np.arange(resolution) + 0.5)
    if d == 1:
        integral = _bump(x * x).sum() * step
    else:
        # row by row to keep memory flat
        integral = sum(_bump(xi * xi + x * x).sum() for xi in x) * step * step
    return 1.0 / integral


@dataclass(frozen=True)
class MollifierParams:
    r: float
    resolution: int = 2000  # for the normaliser
    substeps: int = 20  # lattice spacing min(h, r / substeps)

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError(f"mollifier radius must be positive, got {self.r}")

    def c(self, d: int) -> float:
        return bump_normalizer(d, self.resolution)


@lru_cache(maxsize=32)
def _kernel(d: int, h: float, r: float, substeps: int, resolution: int):
    """Lattice offsets inside B(0, r) and their midpoint-rule weights."""
    spacing = min(h, r / substeps)
    m = int(np.floor(r / spacing))
    o = np.arange(-m, m + 1) * spacing
    if d == 1:
        offsets = o[:, None]
    else:
        o1, o2 = np.meshgrid(o, o, indexing="ij")
        offsets = np.column_stack([o1.ravel(), o2.ravel()])
    s2 = np.sum(offsets**2, axis=1) / r**2
    keep = s2 < 1.0
    offsets, s2 = offsets[keep], s2[keep]
    c = bump_normalizer(d, resolution)
    weights = c * _bump(s2) * (spacing / r) ** d
    # discrete unit mass; the quadrature defect is O(1e-8) at substeps=20
    weights = weights / weights.sum()
    return offsets, weights


def _sample_extended(grid: SpatialGrid, values: np.ndarray, points) -> np.ndarray:
    """Nearest-node sampling of a grid function extended by zero outside (0,1)^d."""
    h, N = grid.h, grid.N
    inside = np.ones(points[0].shape, dtype=bool)
    idx = []
    for p in points:
        i = np.rint(p / h).astype(np.int64) - 1
        inside &= (p > 0.0) & (p < 1.0) & (i >= 0) & (i < N)
        idx.append(np.clip(i, 0, N - 1))
    flat = idx[0] if grid.d == 1 else idx[0] * N + idx[1]
    return np.where(inside, values[flat], 0.0)


def convolve_bump(h_field: Field, r: float, params: MollifierParams | None = None) -> Field:
    """k_r = phi_r * h with h extended by zero, by quadrature over B(x, r)."""
    params = params or MollifierParams(r)
    grid = h_field.grid
    offsets, weights = _kernel(grid.d, grid.h, float(r), params.substeps, params.resolution)
    out = np.zeros(grid.size)
    for off, w in zip(offsets, weights):
        pts = [grid.coords[i] - off[i] for i in range(grid.d)]
        out += w * _sample_extended(grid, h_field.values, pts)
    return Field(grid, out)


def mollify(h_field: Field, r: float, params: MollifierParams | None = None,
            tol: float | None = None) -> Field:
    """h_r = phi_r * h + r; strictly positive, bounded by max(h) + r."""
    if not r > 0:
        raise DomainError(f"mollifier radius must be positive, got {r}")
    vals = h_field.values
    if tol is None:
        tol = max(1e-8 * linf_norm(h_field), np.finfo(float).tiny)
    if np.any(vals < -tol):
        raise HypothesisViolation(f"h must be nonnegative; min value {vals.min():.3g}")
    clipped = Field(h_field.grid, np.maximum(vals, 0.0))
    k = convolve_bump(clipped, r, params).values
    # a convex combination of values in [0, max h]; clip rounding excursions
    k = np.clip(k, 0.0, clipped.values.max())
    return Field(h_field.grid, k + r)


def smooth_exponent(h_field: Field, r: float, delta: float | None = None,
                    params: MollifierParams | None = None) -> Field:
    """a_r = ln(h_r); finite because h_r >= r."""
    hr = mollify(h_field, r, params, tol=delta)
    return Field(hr.grid, np.log(hr.values))
