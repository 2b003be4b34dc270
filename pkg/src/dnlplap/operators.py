"""Discrete spatial operators on uniform grids.

The p-Laplacian is written in conservative form on half-nodes: along each
axis the flux |G|^(p-2) G is evaluated between neighbouring nodes, with the
normal component of G a forward difference and the transverse components
averaged central differences.  Boundary nodes carry 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .core import Field, Grid, as_exponent


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    components: np.ndarray  # shape (dim, *grid.shape)
    time: float = 0.0

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        if comps.shape != (self.grid.dim, *self.grid.shape) or not np.all(np.isfinite(comps)):
            raise ValueError("vector field needs dim finite components per node")

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components**2, axis=0))


def phi_of(s, p):
    """|s|^(p-2) s, the time nonlinearity."""
    p = as_exponent(p).p
    s = np.asarray(s, dtype=float)
    return np.abs(s) ** (p - 2.0) * s


def phi_inverse(r, p):
    """sign(r) |r|^(1/(p-1)); inverse of :func:`phi_of`."""
    p = as_exponent(p).p
    r = np.asarray(r, dtype=float)
    return np.sign(r) * np.abs(r) ** (1.0 / (p - 1.0))


def _require_stencil(grid: Grid):
    if min(grid.n_nodes) < 3:
        raise ValueError("the stencil needs at least 3 nodes per axis")


def gradient(u: Field) -> VectorField:
    """Central differences inside, second-order one-sided differences on the boundary."""
    grid = u.grid
    _require_stencil(grid)
    comps = np.gradient(u.values, *grid.h, edge_order=2)
    if grid.dim == 1:
        comps = [comps]
    return VectorField(grid, np.stack(comps), u.time)


def _take(a: np.ndarray, axis: int, sl: slice) -> np.ndarray:
    idx = [slice(None)] * a.ndim
    idx[axis] = sl
    return a[tuple(idx)]


def _interior_except(a: np.ndarray, *keep: int) -> np.ndarray:
    idx = [slice(None) if k in keep else slice(1, -1) for k in range(a.ndim)]
    return a[tuple(idx)]


def face_gradients(values: np.ndarray, h: tuple[float, ...], axis: int) -> list[np.ndarray]:
    """Components of G on the half-nodes normal to ``axis``.

    Faces are restricted to interior transverse indices; the returned arrays
    have n-1 entries along ``axis`` and n-2 along every other axis.
    """
    comps = []
    for b in range(values.ndim):
        if b == axis:
            d = (_take(values, axis, slice(1, None)) - _take(values, axis, slice(None, -1))) / h[axis]
            comps.append(_interior_except(d, axis))
        else:
            c = (_take(values, b, slice(2, None)) - _take(values, b, slice(None, -2))) / (2.0 * h[b])
            c = _interior_except(c, axis, b)
            comps.append(0.5 * (_take(c, axis, slice(1, None)) + _take(c, axis, slice(None, -1))))
    return comps


def _flux(comps: list[np.ndarray], axis: int, p: float, eps: float) -> np.ndarray:
    g2 = sum(c * c for c in comps)
    if eps:
        g2 = g2 + eps * eps
    return g2 ** (0.5 * (p - 2.0)) * comps[axis]


def p_laplacian_values(values: np.ndarray, h: tuple[float, ...], p: float, eps: float = 0.0) -> np.ndarray:
    """Array version of :func:`p_laplacian` (no validation)."""
    out = np.zeros_like(values, dtype=float)
    acc = np.zeros(tuple(n - 2 for n in values.shape))
    for axis in range(values.ndim):
        flux = _flux(face_gradients(values, h, axis), axis, p, eps)
        acc += (_take(flux, axis, slice(1, None)) - _take(flux, axis, slice(None, -1))) / h[axis]
    out[(slice(1, -1),) * values.ndim] = acc
    return out


def p_laplacian(u: Field, p, eps: float = 0.0) -> Field:
    """Conservative discrete p-Laplacian; ``eps > 0`` replaces |G| by sqrt(|G|^2 + eps^2)."""
    _require_stencil(u.grid)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return u.with_values(p_laplacian_values(u.values, u.grid.h, as_exponent(p).p, eps))


def pde_residual(u_prev: Field, u_next: Field, p) -> Field:
    """phi_of((u_next - u_prev)/dt) - p_laplacian(u_next) at interior nodes, 0 on the boundary."""
    if not u_prev.grid.matches(u_next.grid):
        raise ValueError("residual needs both fields on the same grid")
    dt = u_next.time - u_prev.time
    if not dt > 0:
        raise ValueError("u_next must be later than u_prev")
    p = as_exponent(p)
    res = phi_of((u_next.values - u_prev.values) / dt, p) - p_laplacian(u_next, p).values
    res[u_next.grid.boundary_mask] = 0.0
    return u_next.with_values(res)


# Jacobian of the stencil -----------------------------------------------------


@lru_cache(maxsize=32)
def _face_indices(grid: Grid, axis: int):
    """Flat node indices feeding the half-node gradients normal to ``axis``."""
    idx = np.arange(grid.size).reshape(grid.shape)
    lo = _interior_except(_take(idx, axis, slice(None, -1)), axis)
    hi = _interior_except(_take(idx, axis, slice(1, None)), axis)
    trans = {}
    for b in range(grid.dim):
        if b == axis:
            continue
        plus = _interior_except(_take(idx, b, slice(2, None)), axis, b)
        minus = _interior_except(_take(idx, b, slice(None, -2)), axis, b)
        trans[b] = (
            _take(plus, axis, slice(None, -1)),
            _take(minus, axis, slice(None, -1)),
            _take(plus, axis, slice(1, None)),
            _take(minus, axis, slice(1, None)),
        )
    return lo, hi, trans


@lru_cache(maxsize=32)
def interior_numbering(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """(flat indices of interior nodes, map flat index -> interior number or -1)."""
    flat = np.flatnonzero(~grid.boundary_mask.ravel())
    num = np.full(grid.size, -1)
    num[flat] = np.arange(flat.size)
    return flat, num


def p_laplacian_jacobian(u: Field, p, eps: float = 0.0) -> sp.csr_matrix:
    """Sparse derivative of the interior p-Laplacian w.r.t. interior node values."""
    grid = u.grid
    p = as_exponent(p).p
    h = grid.h
    vals = u.values
    flat_int, num = interior_numbering(grid)
    rows, cols, data = [], [], []
    for axis in range(grid.dim):
        comps = face_gradients(vals, h, axis)
        g2 = sum(c * c for c in comps) + eps * eps
        m = g2 ** (0.5 * (p - 2.0))
        ga = comps[axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = np.where(g2 > 0, (p - 2.0) * m / g2, 0.0)
        deps = [(None, m + cross * ga * ga)]  # derivative w.r.t. the normal component
        for b in range(grid.dim):
            if b != axis:
                deps.append((b, cross * ga * comps[b]))
        lo, hi, trans = _face_indices(grid, axis)
        node_coef = []
        for b, dfdg in deps:
            if b is None:
                node_coef += [(hi, dfdg / h[axis]), (lo, -dfdg / h[axis])]
            else:
                lp, lm, hp, hm = trans[b]
                c = dfdg / (4.0 * h[b])
                node_coef += [(lp, c), (hp, c), (lm, -c), (hm, -c)]
        # flux enters L at lo with +1/h and at hi with -1/h
        for row_nodes, sign in ((lo, 1.0 / h[axis]), (hi, -1.0 / h[axis])):
            r = num[row_nodes.ravel()]
            for col_nodes, coef in node_coef:
                c = num[col_nodes.ravel()]
                keep = (r >= 0) & (c >= 0)
                rows.append(r[keep])
                cols.append(c[keep])
                data.append(sign * coef.ravel()[keep])
    n = flat_int.size
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
