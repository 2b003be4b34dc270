"""Measurements on trajectories: modulus functions, regularity ratios, barriers, comparison, large-time fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import Field, SpaceTimeCylinder, Trajectory, as_exponent, cylinder_nodes
from .eigen import GroundState, rayleigh_quotient
from .evolution import EvolutionConfig, barrier_speed, evolve

log = logging.getLogger(__name__)

PAIR_BUDGET = 20_000_000
_BLOCK = 2_000_000  # pair differences held in memory at once


# modulus functions -----------------------------------------------------------


def loglip_modulus(r):
    """-r ln r below 1/e, constant 1/e above."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("the log-Lipschitz modulus needs r > 0")
    with np.errstate(divide="ignore"):
        out = np.where(r < math.exp(-1.0), -r * np.log(r), math.exp(-1.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModulusProps:
    below_threshold: bool
    deriv_bound: bool
    curvature_bound: bool

    @property
    def all(self) -> bool:
        return self.below_threshold and self.deriv_bound and self.curvature_bound


def loglip_modulus_props(r: float) -> ModulusProps:
    """Flags for r < e^-2, phi'(r) >= 1 and |phi''(r)| <= phi'(r)/r, given phi(r) < 1/8."""
    if not loglip_modulus(r) < 0.125:
        raise ValueError(f"precondition phi(r) < 1/8 fails at r={r!r}")
    d1 = -1.0 - math.log(r)
    d2 = 1.0 / r
    return ModulusProps(r < math.exp(-2.0), d1 >= 1.0, d2 <= d1 / r)


def _check_gamma(gamma: float, p=None):
    upper = 1.5 if p is None else min(1.5, as_exponent(p).kappa)
    if not 1.0 < gamma < upper:
        raise ValueError(f"gamma must lie in (1, {upper:.6g}), got {gamma!r}")


def lip_threshold(gamma: float) -> float:
    """r0 = (1/gamma)^(1/(gamma-1)), where r - r^gamma stops increasing."""
    return (1.0 / gamma) ** (1.0 / (gamma - 1.0))


def lip_modulus(r, gamma: float, p=None):
    """r - r^gamma up to r0, then frozen at its maximum r0 - r0^gamma."""
    _check_gamma(gamma, p)
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("the Lipschitz modulus needs r > 0")
    r0 = lip_threshold(gamma)
    out = np.where(r <= r0, r - r**gamma, r0 - r0**gamma)
    return float(out) if out.ndim == 0 else out


def lip_modulus_bound(gamma: float) -> tuple[float, float]:
    """(r1, value at r1) with r1 = (1/(2 gamma))^(1/(gamma-1))."""
    r1 = (0.5 / gamma) ** (1.0 / (gamma - 1.0))
    return r1, r1 * (1.0 - 0.5 / gamma)


def lip_modulus_props(r: float, gamma: float, p=None) -> ModulusProps:
    """Flags for r < r1, phi'(r) >= 1/2 and |phi''(r)| <= phi'(r)/r, given phi(r) below its value at r1."""
    r1, cap = lip_modulus_bound(gamma)
    if not lip_modulus(r, gamma, p) < cap:
        raise ValueError(f"precondition fails at r={r!r}, gamma={gamma!r}")
    d1 = 1.0 - gamma * r ** (gamma - 1.0)
    d2 = gamma * (gamma - 1.0) * r ** (gamma - 2.0)
    return ModulusProps(r < r1, d1 >= 0.5, d2 <= d1 / r)


# regularity ratios -----------------------------------------------------------


@dataclass(frozen=True)
class ModulusReport:
    radius: float
    lip_ratio: float
    time_holder_ratio: float
    loglip_ratio: float
    combined_ratio: float
    pair_count: int

    def as_row(self) -> list:
        return [self.radius, self.lip_ratio, self.time_holder_ratio, self.loglip_ratio,
                self.combined_ratio, self.pair_count]


def _exhaustive_pairs(n: int, block: int):
    """All i < j over range(n), in blocks of roughly ``block`` pairs."""
    rows = max(1, block // max(n, 1))
    for i0 in range(0, n - 1, rows):
        i = np.arange(i0, min(i0 + rows, n - 1))
        I, J = np.meshgrid(i, np.arange(n), indexing="ij")
        keep = J > I
        yield I[keep], J[keep]


def _sampled_pairs(n: int, k: int, rng: np.random.Generator, block: int):
    """k uniform random ordered pairs of distinct indices, in blocks."""
    done = 0
    while done < k:
        m = min(block, k - done)
        i = rng.integers(0, n, m)
        j = rng.integers(0, n - 1, m)
        j = j + (j >= i)
        done += m
        yield i, j


def _pairs(n: int, budget: int, rng, block: int):
    total = n * (n - 1) // 2
    if total <= budget:
        return total, _exhaustive_pairs(n, block)
    return budget, _sampled_pairs(n, budget, rng, block)


def modulus_report(
    traj: Trajectory, cyl: SpaceTimeCylinder, pair_budget: int = PAIR_BUDGET, seed: int = 0
) -> ModulusReport:
    """Difference quotients over Q_{R/2}, normalised by R over half the oscillation on Q_{2R}.

    Equal-time pairs give lip_ratio and loglip_ratio (the latter divides by
    the log-Lipschitz modulus of |dx| and is not normalised), equal-position
    pairs give time_holder_ratio and all pairs give combined_ratio.  Each
    family is scanned exhaustively up to ``pair_budget`` pairs and
    subsampled uniformly with ``seed`` above it.  Half the oscillation is
    the sup-norm of u minus its mid-range, so the ratios do not move when a
    constant is added.
    """
    if pair_budget < 1:
        raise ValueError("pair_budget must be positive")
    p = cyl.p
    outer = cyl.double()
    if not outer.fits_in(traj):
        raise ValueError("the doubled cylinder does not fit inside the trajectory")
    inner = cylinder_nodes(cyl.shrink_half(), traj)
    if inner.empty:
        raise ValueError("the half cylinder selects no node/snapshot pairs")
    big = cylinder_nodes(outer, traj)
    flat = traj.values.reshape(len(traj), -1)
    big_vals = flat[np.ix_(big.snapshots, big.nodes)]
    half_osc = 0.5 * float(np.max(big_vals) - np.min(big_vals))
    scale = cyl.radius / half_osc if half_osc > 0 else 0.0

    V = flat[np.ix_(inner.snapshots, inner.nodes)]  # (S, N)
    X = traj.grid.points[inner.nodes]
    T = traj.times[inner.snapshots]
    S, N = V.shape
    rng = np.random.default_rng(seed)
    theta = p.theta

    lip = loglip = 0.0
    if N > 1:
        _, pairs = _pairs(N, max(1, pair_budget // S), rng, max(1, _BLOCK // S))
        for i, j in pairs:
            dx = np.linalg.norm(X[i] - X[j], axis=1)
            du = np.max(np.abs(V[:, i] - V[:, j]), axis=0)
            lip = max(lip, float(np.max(du / dx)))
            loglip = max(loglip, float(np.max(du / loglip_modulus(dx))))
    hold = 0.0
    if S > 1:
        _, pairs = _pairs(S, max(1, pair_budget // N), rng, max(1, _BLOCK // N))
        for i, j in pairs:
            dt = np.abs(T[i] - T[j]) ** theta
            du = np.max(np.abs(V[i, :] - V[j, :]), axis=1)
            hold = max(hold, float(np.max(du / dt)))
    comb = 0.0
    count = 0
    if S * N > 1:
        Vf = V.ravel()
        Xf = np.repeat(X[None, :, :], S, axis=0).reshape(S * N, -1)
        Tf = np.repeat(T, N)
        count, pairs = _pairs(S * N, pair_budget, rng, _BLOCK)
        for i, j in pairs:
            denom = np.linalg.norm(Xf[i] - Xf[j], axis=1) + np.abs(Tf[i] - Tf[j]) ** theta
            comb = max(comb, float(np.max(np.abs(Vf[i] - Vf[j]) / denom)))
    return ModulusReport(cyl.radius, lip * scale, hold * scale, loglip, comb * scale, int(count))


def comparison_check(traj_lo: Trajectory, traj_hi: Trajectory) -> float:
    """max over nodes and snapshots of (lo - hi)^+."""
    if not traj_lo.grid.matches(traj_hi.grid):
        raise ValueError("trajectories live on different grids")
    if len(traj_lo) != len(traj_hi) or not np.allclose(traj_lo.times, traj_hi.times, rtol=1e-12, atol=0):
        raise ValueError("trajectories have different time stamps")
    return float(np.max(np.maximum(traj_lo.values - traj_hi.values, 0.0)))


# barrier ---------------------------------------------------------------------


@dataclass(frozen=True)
class BarrierConstants:
    eta: float
    A: float
    B: float
    grad_bound: float


def barrier_constants(eta: float, grad_bound: float, p, n: int) -> BarrierConstants:
    """Constants making eta + A(t - t0) + B|x|^kappa dominate a function with Lipschitz bound grad_bound.

    B^(p-1) is the larger of the value that lifts the profile over the cone
    grad_bound*|x| and 2^(p-1); A then makes the profile an exact solution.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not grad_bound >= 0:
        raise ValueError("grad_bound must be nonnegative")
    p = as_exponent(p)
    q = p.p - 1.0
    b_pow = max((1.0 / p.p) * p.theta**q * grad_bound**p.p / eta, 2.0**q)
    B = b_pow ** (1.0 / q)
    return BarrierConstants(float(eta), barrier_speed(B, p, n), B, float(grad_bound))


class BarrierViolation(ValueError):
    """The barrier failed to dominate the trajectory; ``nodes`` lists (node, snapshot) pairs."""

    def __init__(self, where: str, nodes):
        self.where = where
        self.nodes = list(nodes)
        shown = ", ".join(f"(node {a}, snapshot {b})" for a, b in self.nodes[:10])
        more = "" if len(self.nodes) <= 10 else f" and {len(self.nodes) - 10} more"
        super().__init__(f"barrier domination fails on the {where} at {shown}{more}")


def _snap_index(values, target, what):
    k = int(np.argmin(np.abs(values - target)))
    if abs(values[k] - target) > 1e-9 * max(1.0, abs(target)):
        raise ValueError(f"{what} {target!r} is not on the trajectory")
    return k


def time_holder_via_barrier(traj: Trajectory, x0, t0: float, radius: float | None = None) -> float:
    """Hölder constant in time at (x0, t0), certified by the explicit barrier.

    The solution is rescaled to the unit cylinder B_1 x [0, 1] above
    (x0, t0) (space by ``radius``, time by radius**kappa, values by the
    oscillation on that cylinder).  With L the largest of the half-node
    gradients there and the radial quotients |w(y, 0)|/|y|, the barrier
    built from eta = L s^theta must dominate |w| on the parabolic boundary
    and at every recorded time inside, for each recorded s in (0, 1].
    Returns sup_t |u(x0, t) - u(x0, t0)| / |t - t0|^theta in original units.
    """
    p = traj.p
    grid = traj.grid
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (grid.dim,))
    pts = grid.points
    node0 = int(np.argmin(np.linalg.norm(pts - x0, axis=1)))
    if np.linalg.norm(pts[node0] - x0) > 1e-9 * max(1.0, float(np.max(np.abs(x0)))):
        raise ValueError(f"x0={tuple(x0)} is not a grid node")
    if grid.boundary_mask.ravel()[node0]:
        raise ValueError("x0 must be an interior node")
    k0 = _snap_index(traj.times, t0, "t0")
    if k0 == len(traj) - 1:
        raise ValueError("t0 must precede the last snapshot")
    if radius is None:
        wall = min(min(c - a, b - c) for c, a, b in zip(x0, grid.lower, grid.upper))
        radius = min(wall, (traj.times[-1] - t0) ** p.theta)
    if not radius > 0:
        raise ValueError("radius must be positive")

    flat = traj.values.reshape(len(traj), -1)
    y = (pts - pts[node0]) / radius
    dist = np.linalg.norm(y, axis=1)
    ball = np.flatnonzero(dist <= 1.0 + 1e-12)
    s_all = (traj.times - traj.times[k0]) / radius**p.kappa
    snaps = np.flatnonzero((s_all >= 0) & (s_all <= 1.0 + 1e-12))
    block = flat[np.ix_(snaps, ball)]
    osc = float(np.max(block) - np.min(block))
    du = flat[snaps, node0] - flat[k0, node0]
    dt = traj.times[snaps] - traj.times[k0]
    if osc == 0.0:
        return 0.0
    w = (block - flat[k0, node0]) / osc  # rows follow ``snaps``, row 0 is t0
    s = s_all[snaps]

    # Lipschitz bound of w: grid-edge quotients inside the ball, plus radial quotients at s = 0
    in_ball = np.zeros(grid.size, dtype=bool)
    in_ball[ball] = True
    pos = np.full(grid.size, -1)
    pos[ball] = np.arange(ball.size)
    shape = grid.shape
    idx = np.array(np.unravel_index(ball, shape)).T
    ring = np.zeros(ball.size, dtype=bool)  # ball nodes with a neighbour outside the ball
    L = 0.0
    for ax in range(grid.dim):
        for step in (-1, 1):
            nb = idx.copy()
            nb[:, ax] += step
            inside = (nb[:, ax] >= 0) & (nb[:, ax] < shape[ax])
            flat_nb = np.ravel_multi_index(tuple(np.clip(nb, 0, np.array(shape) - 1).T), shape)
            ok = inside & in_ball[flat_nb]
            ring |= ~ok
            if step == 1 and np.any(ok):
                diff = np.abs(w[:, ok] - w[:, pos[flat_nb[ok]]])
                L = max(L, float(np.max(diff)) * radius / grid.h[ax])
    off = dist[ball] > 0
    if np.any(off):
        L = max(L, float(np.max(np.abs(w[0, off]) / dist[ball][off])))

    kappa = p.kappa
    for m in range(1, len(snaps)):
        eta = L * s[m] ** p.theta
        bc = barrier_constants(eta, L, p, grid.dim)
        barrier = bc.eta + bc.A * s[: m + 1, None] + bc.B * dist[ball][None, :] ** kappa
        bad = np.abs(w[: m + 1]) > barrier * (1 + 1e-12)
        edge = bad.copy()
        edge[1:, :] &= ring[None, :]
        if np.any(edge):
            sn, nd = np.nonzero(edge)
            raise BarrierViolation("parabolic boundary", zip(ball[nd], snaps[sn]))
        if np.any(bad):
            sn, nd = np.nonzero(bad)
            raise BarrierViolation("cylinder interior", zip(ball[nd], snaps[sn]))
    later = dt > 0
    return float(np.max(np.abs(du[later]) / dt[later] ** p.theta))


def holder_slope(traj: Trajectory, x0, t0: float, window: tuple[float, float]) -> float:
    """Least-squares slope of log|u(x0, t) - u(x0, t0)| against log(t - t0) for t - t0 in ``window``."""
    grid = traj.grid
    x0 = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (grid.dim,))
    node = int(np.argmin(np.linalg.norm(grid.points - x0, axis=1)))
    k0 = _snap_index(traj.times, t0, "t0")
    series = traj.values.reshape(len(traj), -1)[:, node]
    dt = traj.times - traj.times[k0]
    du = np.abs(series - series[k0])
    keep = (dt >= window[0]) & (dt <= window[1]) & (du > 0)
    if np.count_nonzero(keep) < 3:
        raise ValueError("fewer than 3 usable samples in the fitting window")
    return float(np.polyfit(np.log(dt[keep]), np.log(du[keep]), 1)[0])


# large-time behaviour --------------------------------------------------------


@dataclass(frozen=True)
class LargeTimeRecord:
    t: float
    rq: float  # nan once u vanishes identically
    fit_c: float
    sup_dist: float

    def as_row(self) -> list:
        return [self.t, self.rq, self.fit_c, self.sup_dist]


def fit_multiple(v: np.ndarray, phi: np.ndarray) -> tuple[float, float]:
    """c minimising max|v - c phi| and the minimum, with c in [-2, 2] * sup|v|/sup|phi|.

    The objective is convex and piecewise linear, so the minimax fit is the
    linear programme min s subject to |v - c phi| <= s nodewise.
    """
    v = np.ravel(v)
    phi = np.ravel(phi)
    span = 2.0 * float(np.max(np.abs(v))) / float(np.max(np.abs(phi)))
    if span == 0.0:
        return 0.0, 0.0

    def dist(c):
        return float(np.max(np.abs(v - c * phi)))

    ones = np.ones_like(v)
    A = np.block([[-phi[:, None], -ones[:, None]], [phi[:, None], -ones[:, None]]])
    res = linprog([0.0, 1.0], A_ub=A, b_ub=np.concatenate([-v, v]),
                  bounds=[(-span, span), (0, None)], method="highs")
    if res.success:
        return float(res.x[0]), dist(res.x[0])
    log.warning("minimax fit failed (%s); falling back to a dense scan", res.message)
    grid = np.linspace(-span, span, 10_000)
    vals = [dist(c) for c in grid]
    k = int(np.argmin(vals))
    return float(grid[k]), float(vals[k])


def largetime_experiment(g: Field, p, gs: GroundState, cfg: EvolutionConfig) -> list[LargeTimeRecord]:
    """Evolve ``g`` and compare exp(lambda^(1/(p-1)) t) u(t) with multiples of the ground state."""
    p = as_exponent(p)
    if not g.grid.matches(gs.phi.grid):
        raise ValueError("initial datum and ground state live on different grids")
    if np.any(np.abs(g.values) > gs.phi.values + 1e-12 * gs.phi.sup_norm):
        raise ValueError("the initial datum must satisfy |g| <= phi")
    traj = evolve(g, 0.0, cfg, p)
    rate = gs.lam ** (1.0 / (p.p - 1.0))
    out = []
    for snap in traj:
        if not np.any(snap.values):
            out.append(LargeTimeRecord(snap.time, math.nan, 0.0, 0.0))
            continue
        v = math.exp(rate * snap.time) * snap.values
        c, d = fit_multiple(v, gs.phi.values)
        out.append(LargeTimeRecord(snap.time, rayleigh_quotient(snap, p), c, d))
    return out


def quotient_increase(records: list[LargeTimeRecord]) -> float:
    """Largest relative rise of the Rayleigh quotient between consecutive records (diagnostic)."""
    rq = np.array([r.rq for r in records if math.isfinite(r.rq)])
    if rq.size < 2:
        return 0.0
    return float(max(0.0, np.max(np.diff(rq) / rq[:-1])))


__all__ = [
    "BarrierConstants",
    "BarrierViolation",
    "LargeTimeRecord",
    "ModulusProps",
    "ModulusReport",
    "barrier_constants",
    "comparison_check",
    "fit_multiple",
    "holder_slope",
    "largetime_experiment",
    "lip_modulus",
    "lip_modulus_bound",
    "lip_modulus_props",
    "lip_threshold",
    "loglip_modulus",
    "loglip_modulus_props",
    "modulus_report",
    "quotient_increase",
    "time_holder_via_barrier",
]
