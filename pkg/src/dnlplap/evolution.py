"""Time integration of |u_t|^(p-2) u_t = Δ_p u with Dirichlet data.

The time nonlinearity is strictly monotone, so the explicit scheme inverts it
pointwise and advances u_t = sign(Δ_p u) |Δ_p u|^(1/(p-1)).  The implicit
scheme solves phi_of((u' - u)/dt) = Δ_p u' by damped Newton.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .core import Field, Grid, Trajectory, as_exponent, read_snapshot, write_snapshot
from .operators import (
    face_gradients,
    interior_numbering,
    p_laplacian_jacobian,
    p_laplacian_values,
    phi_inverse,
    phi_of,
)

log = logging.getLogger(__name__)

DT_FLOOR = 1e-12
ROUNDING_FLOOR = 8 * np.finfo(float).eps


class StepRejected(ValueError):
    """An explicit step larger than the admissible one was requested."""

    def __init__(self, dt, admissible):
        super().__init__(f"dt={dt:.6g} exceeds the admissible explicit step {admissible:.6g}")
        self.dt = dt
        self.admissible = admissible


class ConvergenceError(RuntimeError):
    """Newton iteration for an implicit step did not reach the tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual sup-norm {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class EvolutionConfig:
    scheme: str = "explicit"
    cfl_sigma: float = 0.4
    t_end: float = 0.1
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.scheme not in ("explicit", "implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.cfl_sigma <= 1:
            raise ValueError("cfl_sigma must lie in (0, 1]")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (self.newton_tol > 0 and self.newton_max_iter > 0 and self.snapshot_stride > 0):
            raise ValueError("tolerances, iteration caps and strides must be positive")


def _max_face_gradient(values: np.ndarray, h) -> np.ndarray:
    """Largest |G| over the half-nodes touching each interior node."""
    out = np.zeros(tuple(n - 2 for n in values.shape))
    for axis in range(values.ndim):
        comps = face_gradients(values, h, axis)
        mag = np.sqrt(sum(c * c for c in comps))
        lo = [slice(None)] * values.ndim
        hi = [slice(None)] * values.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        out = np.maximum(out, np.maximum(mag[tuple(lo)], mag[tuple(hi)]))
    return out


def _stable_dt_values(values, lap, grid: Grid, p: float, sigma: float) -> float:
    h = grid.hmin
    cap = sigma * h ** (p / (p - 1.0))
    inner = lap[grid.interior]
    if p == 2.0:
        d_max = 1.0
    else:
        grad = _max_face_gradient(values, grid.h)
        floor = DT_FLOOR * float(np.max(np.abs(inner))) + 1e-300
        with np.errstate(over="ignore"):
            coef = (p - 1.0) * grad ** (p - 2.0) * (np.abs(inner) + floor) ** ((2.0 - p) / (p - 1.0))
        coef[grad == 0] = 0.0
        d_max = float(np.max(coef))
    return min(sigma * h * h / (2 * grid.dim * d_max + DT_FLOOR), cap)


def stable_dt(u: Field, p, sigma: float = 0.4) -> float:
    """Explicit step bound from the linearised diffusion coefficient, capped by sigma*h**kappa.

    The coefficient at a node is (p-1) |G|^(p-2) |Δ_p u|^((2-p)/(p-1)), with
    |G| the largest half-node gradient touching the node and |Δ_p u| floored
    at 1e-12 of its maximum so the bound is invariant under u -> c u.
    """
    p = as_exponent(p).p
    lap = p_laplacian_values(u.values, u.grid.h, p)
    return _stable_dt_values(u.values, lap, u.grid, p, sigma)


def dyadic_step(bound: float, cap: float) -> float:
    """Largest cap * 2**-k (k >= 0) not above ``bound``, up to 1e-9 relative.

    The ratio cap/bound is invariant under u -> c u and under the intrinsic
    rescaling, but the bound itself is ill-conditioned where Δ_p u is near 0
    (it scales like |Δ_p u|^((p-2)/(p-1))).  Snapping to dyadic fractions of
    the cap makes those runs take identical step sequences.
    """
    k = max(0, math.ceil(math.log2(cap / bound) - 1e-9))
    return cap * 2.0**-k


def _explicit_update(values, lap, dt, p):
    new = values + dt * phi_inverse(lap, p)
    mask = np.zeros(values.shape, dtype=bool)
    mask[(slice(1, -1),) * values.ndim] = True
    return np.where(mask, new, values)


def step_explicit(u: Field, dt: float, p) -> Field:
    """One forward step u + dt * phi_inverse(Δ_p u) at interior nodes."""
    p = as_exponent(p).p
    lap = p_laplacian_values(u.values, u.grid.h, p)
    admissible = _stable_dt_values(u.values, lap, u.grid, p, 1.0)
    if not 0 < dt <= admissible * (1 + 1e-12):
        raise StepRejected(dt, admissible)
    return Field(u.grid, _explicit_update(u.values, lap, dt, p), u.time + dt)


def _jacobian_eps(values, grid: Grid) -> float:
    grads = [np.max(np.abs(c)) for ax in range(grid.dim) for c in face_gradients(values, grid.h, ax)]
    return 1e-8 * max(max(grads), 1e-300)


def step_implicit(
    u: Field, dt: float, p, cfg: EvolutionConfig | None = None, jac_eps: float | None = None
) -> Field:
    """Backward step: solve phi_of((u' - u)/dt) - Δ_p u' = 0 at interior nodes.

    Damped Newton with an eps-regularised Jacobian (the residual itself is
    unregularised); relaxed fixed-point sweeps are the fallback when the line
    search stalls.  The target is ``newton_tol``, raised to the rounding
    level of the stencil when that is bigger (on rough data |Δ_p u| reaches
    1e7 and the residual cannot get below ~1e-9).  Raises
    :class:`ConvergenceError` otherwise.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    cfg = cfg or EvolutionConfig(scheme="implicit")
    p = as_exponent(p).p
    grid = u.grid
    flat, _ = interior_numbering(grid)
    u0 = u.values.ravel()
    base = u0[flat]
    if jac_eps is None:
        jac_eps = _jacobian_eps(u.values, grid)

    work = u0.copy()

    def lap_of(x):
        work[flat] = x
        return p_laplacian_values(work.reshape(grid.shape), grid.h, p).ravel()[flat]

    def residual(x):
        return phi_of((x - base) / dt, p) - lap_of(x)

    def tolerance(x):
        # rounding of u (relative eps) moves Δ_p u by about (p-1)|G|^(p-2)|u|/h^2 per face
        work[flat] = x
        vals = work.reshape(grid.shape)
        gmax = max(
            float(np.max(np.sqrt(sum(c * c for c in face_gradients(vals, grid.h, ax))), initial=0.0))
            for ax in range(grid.dim)
        )
        stencil = 2 * grid.dim * (p - 1.0) * gmax ** (p - 2.0) * float(np.max(np.abs(vals))) / grid.hmin**2
        time_term = float(np.max(np.abs(phi_of((x - base) / dt, p)), initial=0.0))
        return max(cfg.newton_tol, ROUNDING_FLOOR * (stencil + time_term))

    # explicit predictor
    x = base + dt * phi_inverse(lap_of(base), p)
    res = residual(x)
    norm = np.max(np.abs(res), initial=0.0)
    tol = tolerance(x)
    fallbacks = 0
    for _ in range(cfg.newton_max_iter):
        if norm <= tol:
            break
        s = (x - base) / dt
        s_eps = 1e-8 * np.max(np.abs(s), initial=0.0) + 1e-300
        dphi = (p - 1.0) * (s * s + s_eps * s_eps) ** (0.5 * (p - 2.0)) / dt
        work[flat] = x
        jac = sp.diags(dphi) - p_laplacian_jacobian(Field(grid, work.reshape(grid.shape)), p, jac_eps)
        step = spsolve(jac.tocsc(), -res)
        l2 = np.linalg.norm(res)
        alpha = 1.0
        while alpha > 1e-6:
            trial = x + alpha * step
            r_trial = residual(trial)
            if np.all(np.isfinite(r_trial)) and np.linalg.norm(r_trial) <= (1 - 1e-4 * alpha) * l2:
                break
            alpha *= 0.5
        else:
            # line search stalled: relaxed fixed point x <- base + dt*phi_inverse(Δ_p x), kept only if it helps
            fallbacks += 1
            trial = x
            for _ in range(20):
                trial = 0.5 * trial + 0.5 * (base + dt * phi_inverse(lap_of(trial), p))
            r_trial = residual(trial)
            if not (np.all(np.isfinite(r_trial)) and np.linalg.norm(r_trial) < l2):
                break
        x, res = trial, r_trial
        norm = np.max(np.abs(res), initial=0.0)
        tol = tolerance(x)
    if not norm <= tol:
        raise ConvergenceError(
            f"implicit step at t={u.time:.6g} with dt={dt:.3g} did not converge "
            f"({fallbacks} fixed-point fallbacks)",
            norm,
        )
    out = u0.copy()
    out[flat] = x
    return Field(grid, out.reshape(grid.shape), u.time + dt)


def evolve_ensemble(
    initial: Sequence[Field], bc_value: float | None, cfg: EvolutionConfig, p
) -> list[Trajectory]:
    """Evolve several initial data on one shared time grid.

    Boundary nodes keep their initial values; ``bc_value`` (None to skip)
    is the constant those values must equal.

    Explicit steps are the smallest :func:`stable_dt` over the members,
    snapped down by :func:`dyadic_step`; the implicit scheme uses the fixed
    step cfl_sigma * h**kappa.  The final step lands exactly on ``t_end``.
    """
    p = as_exponent(p)
    initial = list(initial)
    grid = initial[0].grid
    for g in initial:
        if not g.grid.matches(grid):
            raise ValueError("ensemble members must share a grid")
        if bc_value is not None and np.any(g.values[grid.boundary_mask] != bc_value):
            raise ValueError("initial data violates the boundary condition")
    states = [g.values.copy() for g in initial]
    records = [[Field(grid, s, 0.0)] for s in states]
    steps, dts = [0], [0.0]
    jac_eps = [_jacobian_eps(s, grid) for s in states]
    cap = cfg.cfl_sigma * grid.hmin**p.kappa  # intrinsic step, fixed for the implicit scheme
    t, n = 0.0, 0
    while t < cfg.t_end:
        if cfg.scheme == "explicit":
            laps = [p_laplacian_values(s, grid.h, p.p) for s in states]
            bound = min(_stable_dt_values(s, lap, grid, p.p, cfg.cfl_sigma) for s, lap in zip(states, laps))
            dt = dyadic_step(bound, cap)
        else:
            dt = cap
        # a remainder below 1e-6 of a step is folded into this one
        last = t + dt * (1 + 1e-6) >= cfg.t_end
        if last:
            dt = cfg.t_end - t
        if cfg.scheme == "explicit":
            states = [_explicit_update(s, lap, dt, p.p) for s, lap in zip(states, laps)]
        else:
            states = [
                step_implicit(Field(grid, s, t), dt, p, cfg, eps).values.copy()
                for s, eps in zip(states, jac_eps)
            ]
        t = cfg.t_end if last else t + dt
        n += 1
        if last or n % cfg.snapshot_stride == 0:
            for rec, s in zip(records, states):
                rec.append(Field(grid, s, t))
            steps.append(n)
            dts.append(dt)
    log.debug("evolved %d members to t=%g in %d steps", len(states), t, n)
    return [Trajectory(tuple(rec), p, bc_value, tuple(steps), tuple(dts)) for rec in records]


def explicit_horizon(g: Field, p, n_steps: int, sigma: float = 0.4) -> float:
    """Time reached by ``n_steps`` explicit steps of :func:`evolve` from ``g``.

    For p > 2 the stable step can shrink by orders of magnitude within a few
    steps, so a horizon chosen from the first step alone may need far more
    steps than intended.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    p = as_exponent(p)
    grid = g.grid
    cap = sigma * grid.hmin**p.kappa
    s, t = g.values, 0.0
    for _ in range(n_steps):
        lap = p_laplacian_values(s, grid.h, p.p)
        dt = dyadic_step(_stable_dt_values(s, lap, grid, p.p, sigma), cap)
        s = _explicit_update(s, lap, dt, p.p)
        t += dt
    return t


def evolve(g: Field, bc_value: float | None, cfg: EvolutionConfig, p) -> Trajectory:
    """Integrate from ``g`` (time 0) to ``cfg.t_end``, recording every stride-th step."""
    return evolve_ensemble([g], bc_value, cfg, p)[0]


def exact_separable(phi: Field, lam: float, t: float, p) -> Field:
    """exp(-lam^(1/(p-1)) t) * phi, the separable solution built on a ground state."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    p = as_exponent(p).p
    return Field(phi.grid, math.exp(-(lam ** (1.0 / (p - 1.0))) * t) * phi.values, t)


def barrier_speed(B: float, p, n: int) -> float:
    """A = (p/(p-1)) n^(1/(p-1)) B, the time slope making the barrier an exact solution."""
    p = as_exponent(p)
    return p.kappa * n ** (1.0 / (p.p - 1.0)) * B


def exact_barrier(B, x0, t0, eta, p, grid: Grid, t: float) -> Field:
    """eta + A (t - t0) + B |x - x0|^(p/(p-1)) sampled on ``grid`` at time ``t``."""
    if not B > 0:
        raise ValueError("B must be positive")
    p = as_exponent(p)
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (grid.dim,))
    r = np.sqrt(sum((c - a) ** 2 for c, a in zip(grid.coords, x0)))
    A = barrier_speed(B, p, grid.dim)
    return Field(grid, eta + A * (t - t0) + B * r**p.kappa, t)


# trajectory export -----------------------------------------------------------


def export_trajectory(traj: Trajectory, directory) -> Path:
    """Write one snapshot file per record plus ``times.csv`` (step,time,dt,sup_norm)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "times.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "dt", "sup_norm"])
        for k, (snap, step, dt) in enumerate(zip(traj.snapshots, traj.steps, traj.dts)):
            write_snapshot(snap, traj.p, directory / f"snap_{k:06d}.txt")
            w.writerow([step, format(snap.time, ".17g"), format(dt, ".17g"), format(snap.sup_norm, ".17g")])
    return directory


def load_trajectory(directory, bc_value: float | None = 0.0) -> Trajectory:
    directory = Path(directory)
    with open(directory / "times.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    snaps, p = [], None
    for k in range(len(rows)):
        field, p = read_snapshot(directory / f"snap_{k:06d}.txt")
        snaps.append(field)
    steps = tuple(int(r["step"]) for r in rows)
    dts = tuple(float(r["dt"]) for r in rows)
    return Trajectory(tuple(snaps), p, bc_value, steps, dts)


def heat_mode(grid: Grid, t: float) -> Field:
    """exp(-pi^2 t) sin(pi x) on (0, 1): closed-form p = 2 solution."""
    v = math.exp(-math.pi**2 * t) * np.sin(np.pi * grid.coords[0])
    v[grid.boundary_mask] = 0.0
    return Field(grid, v, t)


__all__ = [
    "ConvergenceError",
    "EvolutionConfig",
    "StepRejected",
    "barrier_speed",
    "evolve",
    "evolve_ensemble",
    "exact_barrier",
    "exact_separable",
    "explicit_horizon",
    "export_trajectory",
    "heat_mode",
    "load_trajectory",
    "stable_dt",
    "step_explicit",
    "step_implicit",
]
