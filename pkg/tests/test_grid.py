import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bilinsteer.errors import DimensionError, InvalidGridError
from bilinsteer.grid import (
    Field,
    SupportMask,
    apply_laplacian,
    build_grid,
    discrete_eigenvalue,
    discrete_gradient,
    field_from_csv,
    field_from_dict,
    field_from_json,
    field_to_csv,
    field_to_dict,
    field_to_json,
    inner,
    l2_norm,
    linf_norm,
)

finite = st.floats(-10, 10, allow_nan=False)


def random_field(grid, seed):
    return Field(grid, np.random.default_rng(seed).standard_normal(grid.size))


def test_build_grid_examples():
    g = build_grid(1, 3)
    assert g.h == 0.25 and g.size == 3
    g = build_grid(2, 9)
    assert abs(g.h - 0.1) < 1e-15 and g.size == 81 and g.shape == (9, 9)


@pytest.mark.parametrize("d,N", [(1, 2), (2, 0), (3, 10), (0, 5)])
def test_build_grid_rejects(d, N):
    with pytest.raises(InvalidGridError):
        build_grid(d, N)


def test_coords_lexicographic():
    g = build_grid(2, 3)
    x1, x2 = g.coords
    # flat index i*N + j with axis 0 = x1
    assert x1[1] == 0.25 and x2[1] == 0.5
    assert x1[3] == 0.5 and x2[3] == 0.25


def test_field_is_immutable_and_finite():
    g = build_grid(1, 5)
    u = Field.zeros(g)
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    with pytest.raises(AttributeError):
        u.values = np.ones(5)
    with pytest.raises(ValueError):
        Field(g, [0, 1, np.nan, 0, 0])
    with pytest.raises(DimensionError):
        Field(g, np.ones(4))


def test_laplacian_zero_and_stencil():
    g = build_grid(1, 3)
    assert np.all(apply_laplacian(g, Field.zeros(g)).values == 0)
    out = apply_laplacian(g, Field(g, [1.0, 0.0, 0.0]))
    np.testing.assert_allclose(out.values, np.array([-2.0, 1.0, 0.0]) / g.h**2)


def test_laplacian_eigenfunction(grid1, sin1):
    lap = apply_laplacian(grid1, sin1)
    rel = l2_norm(lap + sin1 * np.pi**2) / l2_norm(sin1 * np.pi**2)
    assert rel < 1e-3
    # the discrete eigenvalue is exact up to rounding
    mu = discrete_eigenvalue(grid1)
    assert mu == pytest.approx(2 / grid1.h**2 * (1 - np.cos(np.pi * grid1.h)), rel=1e-15)
    assert l2_norm(lap + sin1 * mu) < 1e-9 * mu


def test_laplacian_2d_separable():
    g = build_grid(2, 29)
    u = Field.from_function(g, lambda a, b: np.sin(np.pi * a) * np.sin(2 * np.pi * b))
    mu = discrete_eigenvalue(g, 1) + discrete_eigenvalue(g, 2)
    assert l2_norm(apply_laplacian(g, u) + u * mu) < 1e-9 * mu


def test_laplacian_grid_mismatch():
    with pytest.raises(DimensionError):
        apply_laplacian(build_grid(1, 5), Field.zeros(build_grid(1, 6)))


@pytest.mark.parametrize("d,N", [(1, 40), (2, 12)])
def test_laplacian_symmetric_negative_definite(d, N):
    g = build_grid(d, N)
    for seed in range(5):
        u, w = random_field(g, seed), random_field(g, seed + 100)
        lu, lw = apply_laplacian(g, u), apply_laplacian(g, w)
        assert inner(lu, w) == pytest.approx(inner(u, lw), rel=1e-12)
        assert inner(lu, u) < 0


def test_gradient_quadratic_exact():
    g = build_grid(1, 99)
    u = Field.from_function(g, lambda x: x * (1 - x))
    (du,) = discrete_gradient(g, u)
    # centred differences are exact on quadratics; u vanishes on the boundary
    assert np.max(np.abs(du.values - (1 - 2 * g.coords[0]))) < 1e-10
    assert np.all(discrete_gradient(g, Field.zeros(g))[0].values == 0)


def test_gradient_2d_second_order():
    errs = []
    for N in (24, 49, 99):
        g = build_grid(2, N)
        u = Field.from_function(g, lambda a, b: np.sin(np.pi * a) * np.sin(np.pi * b))
        exact = np.pi * np.cos(np.pi * g.coords[0]) * np.sin(np.pi * g.coords[1])
        errs.append(l2_norm(discrete_gradient(g, u)[0] - Field(g, exact)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_norm_examples(grid1, sin1):
    z = Field.zeros(grid1)
    assert l2_norm(z) == linf_norm(z) == inner(z, z) == 0
    assert abs(l2_norm(sin1) - 1 / np.sqrt(2)) < 1e-3
    u, w = random_field(grid1, 1), random_field(grid1, 2)
    assert inner(u, w) == inner(w, u)
    assert inner(u, u) == pytest.approx(l2_norm(u) ** 2, rel=1e-14)


@given(arrays(float, 16, elements=finite), arrays(float, 16, elements=finite), finite)
def test_norm_homogeneity_and_triangle(a, b, c):
    g = build_grid(1, 16)
    u, w = Field(g, a), Field(g, b)
    for norm in (l2_norm, linf_norm):
        assert norm(u * c) == pytest.approx(abs(c) * norm(u), rel=1e-12, abs=1e-300)
        assert norm(u + w) <= norm(u) + norm(w) + 1e-12
        assert norm(u) >= 0


@pytest.mark.parametrize("d,sizes", [(1, (49, 99, 199)), (2, (24, 49, 99))])
def test_discrete_leibniz_order(d, sizes):
    errs = []
    for N in sizes:
        g = build_grid(d, N)
        if d == 1:
            a = Field.from_function(g, lambda x: np.sin(np.pi * x) * np.exp(x))
            y = Field.from_function(g, lambda x: x * (1 - x) * np.cos(x))
        else:
            a = Field.from_function(g, lambda p, q: np.sin(np.pi * p) * np.sin(np.pi * q) * np.exp(p * q))
            y = Field.from_function(g, lambda p, q: p * q * (1 - p) * (1 - q))
        ga, gy = discrete_gradient(g, a), discrete_gradient(g, y)
        cross = Field.zeros(g)
        for i in range(d):
            cross = cross + ga[i] * gy[i]
        rhs = y * apply_laplacian(g, a) + cross * 2.0 + a * apply_laplacian(g, y)
        errs.append(l2_norm(apply_laplacian(g, a * y) - rhs))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.0)


def test_field_io_round_trip(tmp_path):
    g = build_grid(2, 5)
    u = random_field(g, 7)
    field_to_csv(u, tmp_path / "u.csv")
    assert np.array_equal(field_from_csv(g, tmp_path / "u.csv").values, u.values)
    assert len((tmp_path / "u.csv").read_text().split()) == g.size
    assert np.array_equal(field_from_dict(field_to_dict(u)).values, u.values)
    text = field_to_json(u)
    assert set(json.loads(text)) == {"d", "N", "values"}
    assert np.array_equal(field_from_json(text).values, u.values)


def test_support_mask():
    g = build_grid(2, 9)
    full = SupportMask.full(g)
    assert full.is_full and full.indicator().values.sum() == 81
    half = SupportMask.from_function(g, lambda a, b: a < 0.5)
    assert not half.is_full and half.values.sum() == 36
