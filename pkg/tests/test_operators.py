import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnlplap.core import Field, Grid
from dnlplap.evolution import barrier_speed, exact_barrier
from dnlplap.operators import (
    gradient,
    p_laplacian,
    p_laplacian_jacobian,
    pde_residual,
    phi_inverse,
    phi_of,
)

p_values = st.floats(2.0, 10.0)


def random_values(grid, seed, zero_boundary=True):
    v = np.random.default_rng(seed).uniform(-1, 1, grid.shape)
    if zero_boundary:
        v[grid.boundary_mask] = 0.0
    return v


# time nonlinearity -------------------------------------------------------------


def test_phi_examples():
    assert phi_of(-3.0, 2) == -3.0
    assert phi_of(2.0, 3) == 4.0
    assert phi_of(0.0, 2.5) == 0.0
    assert phi_inverse(4.0, 3) == 2.0
    assert phi_inverse(-8.0, 3) == pytest.approx(-2 * math.sqrt(2), rel=1e-15)
    x = np.linspace(-5, 5, 11)
    assert np.array_equal(phi_inverse(x, 2), x)


# |s| >= 1e-30 keeps |s|^(p-1) above the underflow limit for p <= 10
magnitudes = st.one_of(st.just(0.0), st.floats(1e-30, 100), st.floats(-100, -1e-30))


@given(magnitudes, p_values)
def test_phi_inverse_round_trip(s, p):
    back = float(phi_inverse(phi_of(s, p), p))
    assert back == pytest.approx(s, rel=1e-12, abs=0)


@given(st.floats(-50, 50), st.floats(-50, 50), p_values)
def test_phi_is_odd_and_increasing(a, b, p):
    assert phi_of(-a, p) == -phi_of(a, p)
    if a < b:
        assert phi_of(a, p) < phi_of(b, p)


# gradient ----------------------------------------------------------------------


def test_gradient_examples():
    g = Grid.uniform(11)
    assert np.all(gradient(g.sample(lambda x: 0 * x + 4.0)).components == 0)
    assert np.allclose(gradient(g.sample(lambda x: 3 * x - 1)).components, 3.0, rtol=0, atol=1e-13)
    d = gradient(g.sample(lambda x: x**2)).components[0]
    assert d[5] == pytest.approx(1.0, abs=1e-14)
    # second order one-sided at the ends: exact on quadratics too
    assert d[0] == pytest.approx(0.0, abs=1e-13) and d[-1] == pytest.approx(2.0, abs=1e-13)


def test_gradient_2d_components():
    g = Grid.uniform(9, dim=2)
    vf = gradient(g.sample(lambda x, y: 2 * x - 5 * y))
    assert vf.components.shape == (2, 9, 9)
    assert np.allclose(vf.components[0], 2) and np.allclose(vf.components[1], -5)


def test_stencil_needs_three_nodes():
    with pytest.raises(ValueError):
        p_laplacian(Field(Grid.uniform(2), [0.0, 0.0]), 3)
    with pytest.raises(ValueError):
        gradient(Field(Grid.uniform(2), [0.0, 0.0]))


# p-Laplacian -------------------------------------------------------------------


def test_p2_paraboloid_gives_four():
    g = Grid.uniform(21, -1, 1, dim=2)
    lap = p_laplacian(g.sample(lambda x, y: x**2 + y**2), 2).values
    assert np.allclose(lap[1:-1, 1:-1], 4.0, atol=1e-10)
    assert np.all(lap[g.boundary_mask] == 0)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.5])
@pytest.mark.parametrize("dim", [1, 2])
def test_affine_is_p_harmonic(p, dim):
    g = Grid.uniform(13, dim=dim)
    u = g.sample(lambda *x: 0.3 + sum((k + 1.5) * c for k, c in enumerate(x)))
    assert np.max(np.abs(p_laplacian(u, p).values)) < 1e-10


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_barrier_profile_value_converges(p):
    # Δ_p (B|x|^kappa) = n B^(p-1) kappa^(p-1) away from the origin
    B = 0.7
    exact = B ** (p - 1) * (p / (p - 1)) ** (p - 1)
    errs = []
    for n in (201, 401, 801):
        g = Grid.uniform(n, -1, 1)
        lap = p_laplacian(exact_barrier(B, 0.0, 0.0, 0.0, p, g, 0.0), p).values
        away = (np.abs(g.coords[0]) > 0.1) & ~g.boundary_mask
        errs.append(np.max(np.abs(lap[away] - exact)))
    assert errs[0] < 1e-2 * exact
    assert errs[1] < errs[0] / 2 and errs[2] < errs[1] / 2


@given(st.integers(1, 2), st.integers(0, 2**32 - 1), p_values)
def test_p_laplacian_is_odd_exactly(dim, seed, p):
    g = Grid.uniform(9, dim=dim)
    u = Field(g, random_values(g, seed))
    assert np.array_equal(p_laplacian(-u, p).values, -p_laplacian(u, p).values)


@given(st.integers(1, 2), st.integers(0, 2**32 - 1), p_values, st.floats(1e-3, 1e3))
def test_p_laplacian_homogeneity(dim, seed, p, c):
    g = Grid.uniform(9, dim=dim)
    u = Field(g, random_values(g, seed))
    lhs = p_laplacian(u.scaled(c), p).values
    rhs = c ** (p - 1) * p_laplacian(u, p).values
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * np.max(np.abs(rhs)))


def _neighbour_monotone(u, p, bump):
    base = p_laplacian(u, p).values
    worst = 0.0
    for j in np.ndindex(u.grid.shape):
        v = u.values.copy()
        v[j] += bump
        diff = p_laplacian(u.with_values(v), p).values - base
        diff[j] = 0.0  # only neighbours of j
        worst = max(worst, -float(np.min(diff)))
    return worst


@given(st.integers(0, 2**32 - 1), p_values, st.floats(1e-6, 1.0))
def test_stencil_monotone_1d(seed, p, bump):
    g = Grid.uniform(12)
    u = Field(g, random_values(g, seed))
    assert _neighbour_monotone(u, p, bump) <= 1e-12 * max(1.0, np.max(np.abs(p_laplacian(u, p).values)))


@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1.0))
def test_stencil_monotone_2d_linear_case(seed, bump):
    g = Grid.uniform(7, dim=2)
    u = Field(g, random_values(g, seed))
    assert _neighbour_monotone(u, 2.0, bump) <= 1e-12


def _exact_plap(grad, hess, coords, p):
    # |∇u|^(p-2) (Δu + (p-2) ∇u·D²u·∇u / |∇u|^2)
    gr = [f(*coords) for f in grad]
    H = [[f(*coords) for f in row] for row in hess]
    g2 = sum(c * c for c in gr)
    lap = sum(H[k][k] for k in range(len(gr)))
    inf = sum(gr[a] * H[a][b] * gr[b] for a in range(len(gr)) for b in range(len(gr)))
    return g2 ** ((p - 2) / 2) * (lap + (p - 2) * inf / g2)


SMOOTH = {
    1: (
        lambda x: np.sin(x) + 2 * x,
        [lambda x: np.cos(x) + 2],
        [[lambda x: -np.sin(x)]],
    ),
    2: (
        lambda x, y: np.exp(x) + np.sin(y) + 2 * y,
        [lambda x, y: np.exp(x), lambda x, y: np.cos(y) + 2],
        [[lambda x, y: np.exp(x), lambda x, y: 0 * x], [lambda x, y: 0 * x, lambda x, y: -np.sin(y)]],
    ),
}


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
@pytest.mark.parametrize("dim", [1, 2])
def test_p_laplacian_convergence_order(p, dim):
    u_fn, grad, hess = SMOOTH[dim]
    hs, errs = [], []
    for n in (17, 33, 65, 129):
        g = Grid.uniform(n, dim=dim)
        lap = p_laplacian(g.sample(u_fn), p).values
        exact = _exact_plap(grad, hess, g.coords, p)
        inside = ~g.boundary_mask
        errs.append(np.max(np.abs(lap[inside] - exact[inside])))
        hs.append(g.hmin)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.0


@pytest.mark.parametrize("p", [2.0, 3.0, 5.0])
@pytest.mark.parametrize("dim", [1, 2])
def test_jacobian_matches_finite_differences(p, dim):
    g = Grid.uniform(7, dim=dim)
    u = g.sample(lambda *x: np.prod([np.sin(np.pi * c) for c in x], axis=0) + 0.3 * x[0] * (1 - x[0]))
    J = p_laplacian_jacobian(u, p).toarray()
    inside = np.flatnonzero(~g.boundary_mask.ravel())
    base = p_laplacian(u, p).values.ravel()[inside]
    eps = 1e-7
    for col, node in enumerate(inside):
        v = u.values.ravel().copy()
        v[node] += eps
        fd = (p_laplacian(u.with_values(v.reshape(g.shape)), p).values.ravel()[inside] - base) / eps
        assert np.allclose(J[:, col], fd, rtol=1e-4, atol=1e-4 * max(1.0, np.max(np.abs(fd))))


def test_regularised_flux_differs_only_near_zero_gradient():
    g = Grid.uniform(11)
    u = g.sample(lambda x: 5 * x)
    assert np.allclose(p_laplacian(u, 3, eps=1e-8).values, p_laplacian(u, 3).values, atol=1e-12)
    with pytest.raises(ValueError):
        p_laplacian(u, 3, eps=-1.0)


@given(st.floats(-10, 10), p_values)
def test_flat_gradient_flux_is_zero(c, p):
    # a constant field has zero flux for every p, no regularisation needed
    g = Grid.uniform(9)
    assert np.all(p_laplacian(Field(g, np.full(9, c)), p).values == 0)


# PDE residual ------------------------------------------------------------------


def test_residual_of_affine_steady_state_is_zero():
    g = Grid.uniform(11)
    u0 = g.sample(lambda x: 1 + 2 * x, 0.0)
    u1 = g.sample(lambda x: 1 + 2 * x, 0.1)
    assert np.max(np.abs(pde_residual(u0, u1, 3).values)) < 1e-10


def _barrier_residual(n, p, B=1.0, inflate=1.0, dt=1e-3):
    g = Grid.uniform(n, -1, 1)
    A = barrier_speed(B, p, 1) * inflate
    prof = exact_barrier(B, 0.0, 0.0, 0.0, p, g, 0.0).values
    u0 = Field(g, prof, 0.0)
    u1 = Field(g, prof + A * dt, dt)
    res = pde_residual(u0, u1, p).values
    away = (np.abs(g.coords[0]) >= 0.05) & ~g.boundary_mask
    return res[away]


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_barrier_residual_vanishes_under_refinement(p):
    r = [np.max(np.abs(_barrier_residual(n, p))) for n in (401, 801, 1601)]
    assert r[1] < r[0] / 2 and r[2] < r[1] / 2


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_doubled_speed_gives_strict_supersolution(p):
    assert np.min(_barrier_residual(201, p, inflate=2.0)) > 0


def test_residual_rejects_bad_pairs():
    g = Grid.uniform(5)
    u = Field(g, np.zeros(5), 1.0)
    with pytest.raises(ValueError):
        pde_residual(u, u, 2)
    with pytest.raises(ValueError):
        pde_residual(u, Field(Grid.uniform(6), np.zeros(6), 2.0), 2)
