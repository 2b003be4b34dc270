"""Ground states of the p-Laplacian: Rayleigh quotient, its minimisation, and a 1D shooting oracle."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import factorized

from .core import Field, Grid, as_exponent
from .operators import interior_numbering, p_laplacian_jacobian, p_laplacian_values, phi_of

log = logging.getLogger(__name__)


class EigenError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroundState:
    lam: float
    phi: Field
    p_norm: float
    residual_sup: float
    iterations: int = 0
    history: tuple[float, ...] = ()  # quotient after each accepted step


def sine_bump(grid: Grid) -> Field:
    """prod_i sin(pi (x_i - a_i)/(b_i - a_i)), exactly zero on the boundary."""
    v = np.ones(grid.shape)
    for c, a, b in zip(grid.coords, grid.lower, grid.upper):
        v = v * np.sin(np.pi * (c - a) / (b - a))
    v[grid.boundary_mask] = 0.0
    return Field(grid, v)


def _energy_gradients(values: np.ndarray, h, axis: int):
    """Half-node gradients normal to ``axis`` on every face, with trapezoid face weights.

    Inside they coincide with the stencil's half-node gradients; on boundary
    rows the transverse difference is one-sided and the face weight halved.
    """
    ndim = values.ndim
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    comps = []
    weight = np.full(values[lo].shape, float(np.prod(h)))
    for b in range(ndim):
        if b == axis:
            comps.append((values[hi] - values[lo]) / h[axis])
        else:
            c = np.gradient(values, h[b], axis=b, edge_order=1)
            comps.append(0.5 * (c[hi] + c[lo]))
            edge = [slice(None)] * ndim
            edge[b] = [0, -1]
            weight[tuple(edge)] *= 0.5
    return comps, weight


def dirichlet_energy(u: Field, p) -> float:
    """Discrete ∫|∇u|^p: face sums of |G|^p averaged over the axis directions."""
    p = as_exponent(p).p
    total = 0.0
    for axis in range(u.grid.dim):
        comps, weight = _energy_gradients(u.values, u.grid.h, axis)
        total += float(np.sum(weight * sum(c * c for c in comps) ** (0.5 * p)))
    return total / u.grid.dim


def rayleigh_quotient(u: Field, p) -> float:
    """Discrete ∫|∇u|^p / ∫|u|^p with trapezoidal node weights."""
    if np.any(u.values[u.grid.boundary_mask] != 0):
        raise ValueError("the Rayleigh quotient needs u = 0 on Dirichlet nodes")
    p = as_exponent(p).p
    den = float(np.sum(u.grid.trapezoid_weights * np.abs(u.values) ** p))
    if den == 0.0:
        raise ZeroDivisionError("u vanishes identically")
    return dirichlet_energy(u, p) / den


@lru_cache(maxsize=16)
def _laplace_solver(grid: Grid):
    """Factorised -Δ_h (p = 2 stencil) on interior nodes, used as a Sobolev preconditioner."""
    zero = Field(grid, np.zeros(grid.shape))
    mat = -p_laplacian_jacobian(zero, 2.0)
    return factorized(sp.csc_matrix(mat))


def _normalize(values: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    return values / np.sum(grid.trapezoid_weights * np.abs(values) ** p) ** (1.0 / p)


def euler_lagrange_residual(phi: Field, lam: float, p) -> float:
    """sup |Δ_p φ + λ |φ|^(p-2) φ| over interior nodes."""
    p = as_exponent(p).p
    r = p_laplacian_values(phi.values, phi.grid.h, p) + lam * phi_of(phi.values, p)
    return float(np.max(np.abs(r[phi.grid.interior])))


def ground_state(
    grid: Grid,
    p,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    initial: Field | None = None,
    precondition: bool = True,
) -> GroundState:
    """Minimise the Rayleigh quotient by projected descent.

    Each iteration moves along Δ_p u + λ|u|^(p-2)u (preconditioned by the
    inverse discrete Laplacian unless ``precondition`` is False) with a
    backtracking search on the quotient, clamps negatives to 0 and
    renormalises ||u||_p = 1.  Stops once an accepted step lowers the
    quotient by less than ``tol`` times its value.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    p = as_exponent(p).p
    u = (initial if initial is not None else sine_bump(grid)).values.copy()
    u[grid.boundary_mask] = 0.0
    u = _normalize(np.maximum(u, 0.0), grid, p)
    q = rayleigh_quotient(Field(grid, u), p)
    flat, _ = interior_numbering(grid)
    solve = _laplace_solver(grid) if precondition else None
    # preconditioned steps above 1 overshoot (alpha = 1 is inverse iteration when p = 2)
    alpha = alpha_max = 1.0 if precondition else math.inf
    if not precondition:
        alpha = 0.25 * grid.hmin**2
    history = [q]
    for it in range(1, max_iter + 1):
        d = p_laplacian_values(u, grid.h, p) + q * phi_of(u, p)
        direction = np.zeros_like(u)
        direction.ravel()[flat] = solve(d.ravel()[flat]) if solve else d.ravel()[flat]
        while True:
            trial = np.maximum(u + alpha * direction, 0.0)
            if np.any(trial):
                q_trial = rayleigh_quotient(Field(grid, trial), p)
                if q_trial < q:
                    break
            alpha *= 0.5
            if alpha < 1e-30:
                return _finish(grid, u, p, it, "line search exhausted", history)
        decrease = q - q_trial
        u = _normalize(trial, grid, p)
        q = rayleigh_quotient(Field(grid, u), p)
        history.append(q)
        if decrease < tol * q:
            return _finish(grid, u, p, it, "converged", history)
        alpha = min(2.0 * alpha, alpha_max)
    raise EigenError(f"no convergence in {max_iter} iterations (quotient {q:.12g})")


def _finish(grid, u, p, iterations, reason, history) -> GroundState:
    phi = Field(grid, u)
    lam = rayleigh_quotient(phi, p)
    log.debug("ground state after %d iterations (%s): lambda=%.12g", iterations, reason, lam)
    return GroundState(lam, phi, phi.lp_norm(p), euler_lagrange_residual(phi, lam, p), iterations, tuple(history))


def closed_form_lambda_1d(p, length: float = 1.0) -> float:
    """(p-1) (pi_p / L)^p with pi_p = 2 pi / (p sin(pi/p)), the classical 1D first eigenvalue."""
    p = as_exponent(p).p
    pi_p = 2.0 * math.pi / (p * math.sin(math.pi / p))
    return (p - 1.0) * (pi_p / length) ** p


# shooting oracle -------------------------------------------------------------


def _first_zero(lam: float, p: float, n_steps: int, x_max: float) -> float:
    """First zero of u for u' = phi_inverse(v), v' = -lam phi_of(u), u(0)=0, v(0)=1 (RK4)."""
    h = x_max / n_steps
    q = 1.0 / (p - 1.0)

    def rhs(u, v):
        return math.copysign(abs(v) ** q, v), -lam * math.copysign(abs(u) ** (p - 1.0), u)

    u, v, x = 0.0, 1.0, 0.0
    for _ in range(n_steps):
        k1u, k1v = rhs(u, v)
        k2u, k2v = rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v)
        k3u, k3v = rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v)
        k4u, k4v = rhs(u + h * k3u, v + h * k3v)
        un = u + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        vn = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if un <= 0.0 < u:
            # cubic Hermite interpolation of u on [x, x + h]
            du0 = math.copysign(abs(v) ** q, v)
            du1 = math.copysign(abs(vn) ** q, vn)
            return x + h * _hermite_root(u, un, h * du0, h * du1)
        u, v, x = un, vn, x + h
    return math.inf


def _hermite_root(y0, y1, m0, m1) -> float:
    """Root in [0, 1] of the cubic Hermite interpolant (y0 > 0 >= y1)."""
    def f(s):
        s2, s3 = s * s, s * s * s
        return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * m1

    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shooting_lambda_1d(p, tol: float = 1e-10, n_steps: int = 20_000) -> float:
    """First Dirichlet eigenvalue on (0, 1) by bisection on the first zero of the shooting ODE.

    Bisection runs on lambda until the first zero of u lies at x = 1 within
    ``tol`` (relative width of the lambda bracket).  The zero position must
    decrease strictly as lambda grows; this is asserted on every evaluation.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    p = as_exponent(p).p
    seen: list[tuple[float, float]] = []

    def zero_at(lam):
        z = _first_zero(lam, p, n_steps, 2.5)
        for lam_prev, z_prev in seen:
            if (lam - lam_prev) * (z - z_prev) > 0 or (lam != lam_prev and z == z_prev != math.inf):
                raise AssertionError(f"first zero not decreasing in lambda near {lam:.6g}")
        seen.append((lam, z))
        return z

    lo, hi = 1.0, 1.0
    while zero_at(lo) <= 1.0:
        lo *= 0.5
        if lo < 1e-12:
            raise EigenError("could not bracket lambda from below")
    while zero_at(hi) > 1.0:
        hi *= 2.0
        if hi > 1e12:
            raise EigenError("could not bracket lambda from above")
    while hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        if zero_at(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

