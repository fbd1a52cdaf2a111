"""Uniform Cartesian grids on the unit interval/square with zero Dirichlet closure.

Only interior nodes are stored. In 2D the flat index of node (i, j) is
``i * N + j`` where ``i`` runs along x1 and ``j`` along x2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionError, InvalidGridError


@dataclass(frozen=True)
class SpatialGrid:
    d: int
    N: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise InvalidGridError(f"dimension must be 1 or 2, got {self.d}")
        if int(self.N) != self.N or self.N < 3:
            raise InvalidGridError(f"need at least 3 interior nodes per axis, got {self.N}")

    @property
    def h(self) -> float:
        return 1.0 / (self.N + 1)

    @property
    def size(self) -> int:
        return self.N**self.d

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return np.arange(1, self.N + 1) * self.h

    @cached_property
    def coords(self) -> tuple:
        """Node coordinates, one flat array per axis (lexicographic order)."""
        if self.d == 1:
            c = (self.axis.copy(),)
        else:
            x1, x2 = np.meshgrid(self.axis, self.axis, indexing="ij")
            c = (x1.ravel(), x2.ravel())
        for a in c:
            a.flags.writeable = False
        return c


def build_grid(d: int, N: int) -> SpatialGrid:
    return SpatialGrid(int(d), int(N))


class Field:
    """Real values on the interior nodes of a grid. Immutable."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: SpatialGrid, values):
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size != grid.size:
            raise DimensionError(f"expected {grid.size} values, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(*coords)`` at the interior nodes."""
        vals = np.broadcast_to(np.asarray(func(*grid.coords), dtype=float), (grid.size,))
        return cls(grid, vals)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"Field(d={self.grid.d}, N={self.grid.N}, linf={linf_norm(self):.4g})"

    def _other(self, other):
        if isinstance(other, Field):
            _check_same(self, other)
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def as_array(self) -> np.ndarray:
        """Values reshaped to the grid (N,) or (N, N); a read-only view."""
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True, eq=False)
class SupportMask:
    grid: SpatialGrid
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=bool).reshape(-1)
        if arr.size != self.grid.size:
            raise DimensionError(f"mask needs {self.grid.size} entries, got {arr.size}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def full(cls, grid):
        return cls(grid, np.ones(grid.size, dtype=bool))

    @classmethod
    def from_function(cls, grid, predicate):
        return cls(grid, np.broadcast_to(predicate(*grid.coords), (grid.size,)))

    @property
    def is_full(self) -> bool:
        return bool(self.values.all())

    def indicator(self) -> Field:
        return Field(self.grid, self.values.astype(float))


def _check_same(*objs):
    g = objs[0].grid
    for o in objs[1:]:
        if o.grid != g:
            raise DimensionError(f"grid mismatch: {g} vs {o.grid}")
    return g


def laplacian_array(grid: SpatialGrid, u: np.ndarray) -> np.ndarray:
    """Second-order stencil on a raw value array; used by the time steppers."""
    inv_h2 = 1.0 / grid.h**2
    if grid.d == 1:
        out = -2.0 * u
        out[1:] += u[:-1]
        out[:-1] += u[1:]
        return out * inv_h2
    U = u.reshape(grid.shape)
    out = -4.0 * U
    out[1:, :] += U[:-1, :]
    out[:-1, :] += U[1:, :]
    out[:, 1:] += U[:, :-1]
    out[:, :-1] += U[:, 1:]
    return (out * inv_h2).ravel()


def apply_laplacian(grid: SpatialGrid, u: Field) -> Field:
    if u.grid != grid:
        raise DimensionError(f"field lives on {u.grid}, not {grid}")
    return Field(grid, laplacian_array(grid, u.values))


def discrete_gradient(grid: SpatialGrid, u: Field) -> list:
    """Centered differences along each axis; boundary neighbours are zero."""
    if u.grid != grid:
        raise DimensionError(f"field lives on {u.grid}, not {grid}")
    U = np.pad(u.as_array(), 1)
    inv = 0.5 / grid.h
    if grid.d == 1:
        return [Field(grid, (U[2:] - U[:-2]) * inv)]
    g1 = (U[2:, 1:-1] - U[:-2, 1:-1]) * inv
    g2 = (U[1:-1, 2:] - U[1:-1, :-2]) * inv
    return [Field(grid, g1), Field(grid, g2)]


def inner(u: Field, w: Field) -> float:
    g = _check_same(u, w)
    return float(g.h**g.d * np.dot(u.values, w.values))


def l2_norm(u: Field) -> float:
    g = u.grid
    m = np.max(np.abs(u.values))
    if m == 0.0:
        return 0.0
    # scale first so tiny or huge fields neither underflow nor overflow
    return float(m * np.sqrt(g.h**g.d) * np.linalg.norm(u.values / m))


def linf_norm(u: Field) -> float:
    return float(np.max(np.abs(u.values)))


def discrete_eigenvalue(grid: SpatialGrid, k: int = 1) -> float:
    """Eigenvalue of -Delta_h for sin(k pi x) along one axis."""
    return 2.0 / grid.h**2 * (1.0 - np.cos(k * np.pi * grid.h))


# -- serialization ---------------------------------------------------------

def field_to_csv(u: Field, path):
    Path(path).write_text("".join(f"{v:.17g}\n" for v in u.values))


def field_from_csv(grid: SpatialGrid, path) -> Field:
    vals = [float(line) for line in Path(path).read_text().split() if line.strip()]
    return Field(grid, vals)


def field_to_dict(u: Field) -> dict:
    return {"d": u.grid.d, "N": u.grid.N, "values": [float(v) for v in u.values]}


def field_from_dict(obj: dict) -> Field:
    return Field(build_grid(obj["d"], obj["N"]), obj["values"])


def field_to_json(u: Field) -> str:
    from .io import dumps

    return dumps(field_to_dict(u))


def field_from_json(text: str) -> Field:
    return field_from_dict(json.loads(text))
