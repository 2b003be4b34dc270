"""The invariant suite behind ``dnl-plap verify``."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import analysis as an
from .config import ExperimentConfig
from .core import Field, Grid
from .eigen import closed_form_lambda_1d, ground_state, rayleigh_quotient, shooting_lambda_1d
from .evolution import (
    EvolutionConfig,
    barrier_speed,
    evolve,
    evolve_ensemble,
    exact_barrier,
    exact_separable,
    explicit_horizon,
)
from .operators import p_laplacian, pde_residual

log = logging.getLogger(__name__)

GAMMAS = (1.1, 1.25, 1.4)


@dataclass
class CheckResult:
    name: str
    status: str  # pass, FAIL or skip
    value: float
    limit: float
    detail: str = ""
    seconds: float = 0.0

    @property
    def failed(self) -> bool:
        return self.status == "FAIL"


def _result(name, value, limit, detail=""):
    ok = bool(value <= limit)
    return CheckResult(name, "pass" if ok else "FAIL", float(value), float(limit), detail)


# lemma sweeps ----------------------------------------------------------------


def loglip_sweep(n: int = 1000) -> np.ndarray:
    """n log-spaced radii covering {r : -r ln r < 1/8}."""
    r_star = brentq(lambda r: -r * math.log(r) - 0.125, 1e-12, math.exp(-2.0), xtol=1e-300, rtol=1e-15)
    return np.logspace(-12, math.log10(r_star), n, endpoint=False)


def lip_sweep(gamma: float, n: int = 1000) -> np.ndarray:
    """n log-spaced radii below r1 = (1/(2 gamma))^(1/(gamma-1))."""
    r1, _ = an.lip_modulus_bound(gamma)
    return np.logspace(-12, math.log10(r1), n, endpoint=False)


def check_loglip_lemma(cfg) -> CheckResult:
    bad = sum(not an.loglip_modulus_props(float(r)).all for r in loglip_sweep())
    return _result("loglip_lemma_sweep", bad, 0, "1000 radii with phi(r) < 1/8")


def check_lip_lemma(cfg) -> CheckResult:
    gammas = [g for g in GAMMAS if g < min(1.5, cfg.exponent.kappa)]
    bad = sum(not an.lip_modulus_props(float(r), g, cfg.p).all for g in gammas for r in lip_sweep(g))
    return _result("lip_lemma_sweep", bad, 0, f"gamma in {gammas}, 1000 radii each")


def junction_gaps(gammas=GAMMAS) -> float:
    e1 = math.exp(-1.0)
    gap = abs(an.loglip_modulus(math.nextafter(e1, 0)) - an.loglip_modulus(math.nextafter(e1, 1)))
    for g in gammas:
        r0 = an.lip_threshold(g)
        gap = max(gap, abs(an.lip_modulus(math.nextafter(r0, 0), g) - an.lip_modulus(math.nextafter(r0, 1), g)))
    return gap


def check_junctions(cfg) -> CheckResult:
    return _result("modulus_junctions", junction_gaps(), 1e-14, "jump across each branch point")


# barrier ---------------------------------------------------------------------


def check_barrier_identity(cfg) -> CheckResult:
    rng = np.random.default_rng(cfg.seed)
    p = cfg.exponent
    worst = 0.0
    for eta, grad in zip(10 ** rng.uniform(-4, 1, 200), 10 ** rng.uniform(-3, 2, 200)):
        bc = an.barrier_constants(eta, grad, p, cfg.dim)
        lhs = bc.A ** (p.p - 1)
        worst = max(worst, abs(lhs - p.kappa ** (p.p - 1) * bc.B ** (p.p - 1) * cfg.dim) / lhs)
    return _result("barrier_identity", worst, 1e-12, "relative gap, 200 random (eta, L)")


def barrier_residuals(grid: Grid, p, B=1.0, inflate=1.0, dt=1e-3, exclude=0.05):
    """pde_residual of the barrier family between t=0 and t=dt, on nodes at least ``exclude`` from the vertex."""
    center = tuple(0.5 * (a + b) for a, b in zip(grid.lower, grid.upper))
    u0 = exact_barrier(B, center, 0.0, 0.1, p, grid, 0.0)
    A = barrier_speed(B, p, grid.dim)
    u1 = Field(grid, u0.values + inflate * A * dt, dt)
    r = np.sqrt(sum((c - a) ** 2 for c, a in zip(grid.coords, center)))
    keep = (r >= exclude) & ~grid.boundary_mask
    return pde_residual(u0, u1, p).values[keep]


def check_barrier_supersolution(cfg) -> CheckResult:
    res = barrier_residuals(cfg.grid(), cfg.p, inflate=1.1)
    return CheckResult("barrier_supersolution", "pass" if res.min() >= 0 else "FAIL", float(res.min()), 0.0,
                       "min residual with A inflated 10% (must be >= 0)")


# stencil ---------------------------------------------------------------------


def random_field(grid: Grid, rng, modes: int = 4) -> Field:
    """Random combination of low sine modes, zero on the boundary."""
    v = np.zeros(grid.shape)
    for _ in range(modes):
        term = rng.normal()
        for c, a, b in zip(grid.coords, grid.lower, grid.upper):
            term = term * np.sin(rng.integers(1, 5) * np.pi * (c - a) / (b - a))
        v = v + term
    v[grid.boundary_mask] = 0.0
    return Field(grid, v)


def check_stencil_symmetry(cfg) -> CheckResult:
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    u = Field(grid, rng.normal(size=grid.shape))
    lap = p_laplacian(u, cfg.p).values
    odd = float(np.max(np.abs(p_laplacian(-u, cfg.p).values + lap)))
    c = 2.5
    hom = float(np.max(np.abs(p_laplacian(u.scaled(c), cfg.p).values - c ** (cfg.p - 1) * lap)))
    rel = hom / max(float(np.max(np.abs(lap))) * c ** (cfg.p - 1), 1e-300)
    return _result("stencil_odd_homogeneous", max(odd, rel), 1e-10, f"oddness gap {odd:.1e}, homogeneity gap {rel:.1e}")


def monotonicity_violation(u: Field, p, bump: float = 1e-3) -> float:
    """Largest drop of Δ_p u at a node when one of its neighbours is raised by ``bump``."""
    grid = u.grid
    base = p_laplacian(u, p).values
    worst = 0.0
    interior = np.argwhere(~grid.boundary_mask)
    for node in interior[:: max(1, len(interior) // 50)]:
        for ax in range(grid.dim):
            for step in (-1, 1):
                nb = node.copy()
                nb[ax] += step
                v = u.values.copy()
                v[tuple(nb)] += bump
                after = p_laplacian(Field(grid, v), p).values[tuple(node)]
                worst = max(worst, base[tuple(node)] - after)
    return worst


def check_monotonicity(cfg) -> CheckResult:
    if cfg.dim == 2 and cfg.p != 2:
        return CheckResult("stencil_monotone", "skip", 0.0, 0.0, "transverse terms break monotonicity in 2D for p > 2")
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    worst = max(monotonicity_violation(Field(grid, rng.normal(size=grid.shape)), cfg.p) for _ in range(3))
    return _result("stencil_monotone", worst, 1e-12, "neighbour bumps on 3 random fields")


# eigen and evolution ---------------------------------------------------------


class _Ground:
    """Lazily computed ground state shared by the checks."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._gs = None

    def __call__(self):
        if self._gs is None:
            self._gs = ground_state(self.cfg.grid(), self.cfg.p, self.cfg.eigen_tol)
        return self._gs


def eigen_reference(cfg) -> float | None:
    lengths = [b - a for a, b in cfg.domain]
    if cfg.dim == 1:
        return closed_form_lambda_1d(cfg.p, lengths[0])
    if cfg.p == 2:
        return math.pi**2 * sum(1.0 / L**2 for L in lengths)
    return None


def check_eigen(cfg, ground) -> CheckResult:
    gs = ground()
    ref = eigen_reference(cfg)
    consistency = abs(rayleigh_quotient(gs.phi, cfg.p) - gs.lam) / gs.lam + abs(gs.p_norm - 1.0)
    if ref is None:
        return _result("eigen_consistency", consistency, 1e-10, f"lambda={gs.lam:.10g}, no closed form")
    err = abs(gs.lam - ref) / ref
    return _result("eigen_oracle", err, 1e-2, f"lambda={gs.lam:.10g}, reference {ref:.10g}")


def check_shooting(cfg) -> CheckResult:
    lam = shooting_lambda_1d(cfg.p, tol=1e-10)
    ref = closed_form_lambda_1d(cfg.p)
    return _result("shooting_oracle", abs(lam - ref) / ref, 1e-6, f"lambda={lam:.12g} on (0, 1)")


def _decay_time(cfg, gs, fraction):
    return fraction * gs.lam ** (-1.0 / (cfg.p - 1.0))


def check_separable(cfg, ground) -> CheckResult:
    gs = ground()
    ecfg = EvolutionConfig("implicit", cfg.cfl_sigma, _decay_time(cfg, gs, 0.5), cfg.newton_tol, cfg.newton_max_iter)
    traj = evolve(gs.phi, 0.0, ecfg, cfg.p)
    worst = 0.0
    for snap in traj:
        ex = exact_separable(gs.phi, gs.lam, snap.time, cfg.p)
        worst = max(worst, float(np.max(np.abs(snap.values - ex.values))) / ex.sup_norm)
    return _result("separable_tracking", worst, 2e-2, f"implicit, {traj.steps[-1]} steps")


def ordered_pair(phi: Field, rng) -> tuple[Field, Field]:
    """g1 <= g2 <= phi with random nodewise factors, zero where phi is."""
    a = rng.uniform(0.3, 1.0, phi.grid.shape)
    b = a * rng.uniform(0.0, 1.0, phi.grid.shape)
    return phi.with_values(b * phi.values), phi.with_values(a * phi.values)


def check_comparison(cfg, ground) -> list[CheckResult]:
    gs = ground()
    rng = np.random.default_rng(cfg.seed)
    g1, g2 = ordered_pair(gs.phi, rng)
    out = []
    schemes = ["implicit"] + (["explicit"] if cfg.p == 2 else [])
    for scheme in schemes:
        ecfg = EvolutionConfig(scheme, cfg.cfl_sigma, _decay_time(cfg, gs, 0.25), cfg.newton_tol, cfg.newton_max_iter)
        lo, hi = evolve_ensemble([g1, g2], 0.0, ecfg, cfg.p)
        limit = (10 * cfg.newton_tol if scheme == "implicit" else 1e-10) * max(1.0, float(np.max(np.abs(hi.values))))
        out.append(_result(f"comparison_{scheme}", an.comparison_check(lo, hi), limit, "random ordered pair below phi"))
        sup = np.max(np.abs(hi.values.reshape(len(hi), -1)), axis=1)
        out.append(_result(f"sup_nonexpansion_{scheme}", float(max(0.0, np.max(np.diff(sup)))), 1e-10,
                           "largest rise of max|u| between snapshots"))
    return out


def scheme_symmetry_gaps(g: Field, p, n_steps: int = 20, c: float = 3.0, r: float = 2.0) -> dict:
    """Relative gaps for oddness, homogeneity and intrinsic rescaling of the explicit scheme."""
    p_exp = float(p)
    kappa = p_exp / (p_exp - 1.0)
    t_end = explicit_horizon(g, p, n_steps)
    cfg = EvolutionConfig("explicit", 0.4, t_end)
    base = evolve(g, 0.0, cfg, p)
    scale = max(1.0, float(np.max(np.abs(base.values))))
    gaps = {}
    neg = evolve(-g, 0.0, cfg, p)
    gaps["odd"] = float(np.max(np.abs(neg.values + base.values))) / scale
    hom = evolve(g.scaled(c), 0.0, cfg, p)
    gaps["homogeneous"] = float(np.max(np.abs(hom.values - c * base.values))) / (c * scale) if len(hom) == len(base) else math.inf
    grid = g.grid
    fine = Grid(tuple(a / r for a in grid.lower), tuple(b / r for b in grid.upper), grid.n_nodes)
    resc = evolve(Field(fine, g.values), 0.0, EvolutionConfig("explicit", 0.4, t_end / r**kappa), p)
    if len(resc) != len(base) or not np.allclose(resc.times * r**kappa, base.times, rtol=1e-8, atol=0):
        gaps["rescaling"] = math.inf
    else:
        gaps["rescaling"] = float(np.max(np.abs(resc.values - base.values))) / scale
    return gaps


def check_scheme_symmetry(cfg) -> CheckResult:
    rng = np.random.default_rng(cfg.seed)
    grid = Grid(tuple(a for a, _ in cfg.domain), tuple(b for _, b in cfg.domain), (33,) * cfg.dim)
    gaps = scheme_symmetry_gaps(random_field(grid, rng), cfg.p)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in gaps.items())
    return _result("scheme_symmetry", max(gaps.values()), 1e-10, detail)


def run_checks(cfg: ExperimentConfig) -> list[CheckResult]:
    ground = _Ground(cfg)
    plan = [
        lambda: check_loglip_lemma(cfg),
        lambda: check_lip_lemma(cfg),
        lambda: check_junctions(cfg),
        lambda: check_barrier_identity(cfg),
        lambda: check_barrier_supersolution(cfg),
        lambda: check_stencil_symmetry(cfg),
        lambda: check_monotonicity(cfg),
        lambda: check_eigen(cfg, ground),
        lambda: check_separable(cfg, ground),
        lambda: check_comparison(cfg, ground),
        lambda: check_scheme_symmetry(cfg),
    ]
    if cfg.dim == 1:
        plan.append(lambda: check_shooting(cfg))
    results = []
    for step in plan:
        t = time.perf_counter()
        out = step()
        out = out if isinstance(out, list) else [out]
        for r in out:
            r.seconds = (time.perf_counter() - t) / len(out)
            log.info("%s: %s (%.3g)", r.name, r.status, r.value)
        results.extend(out)
    return results
