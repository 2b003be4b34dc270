"""Shared data model: exponents, grids, fields, intrinsic cylinders, trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PExponent:
    """The exponent p >= 2 together with its two scaling exponents.

    ``kappa = p/(p-1)`` is the time-scaling exponent of the intrinsic
    cylinders and ``theta = (p-1)/p`` the expected time Hölder exponent.
    """

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not math.isfinite(p) or p < 2.0:
            raise ValueError(f"p must be a finite number >= 2, got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def kappa(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def theta(self) -> float:
        return (self.p - 1.0) / self.p


def as_exponent(p) -> PExponent:
    return p if isinstance(p, PExponent) else PExponent(p)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid on an interval (dim 1) or a box (dim 2).

    Every node on the geometric boundary is a Dirichlet node.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    n_nodes: tuple[int, ...]

    def __post_init__(self):
        lower = tuple(float(a) for a in np.atleast_1d(self.lower))
        upper = tuple(float(b) for b in np.atleast_1d(self.upper))
        n_nodes = tuple(int(n) for n in np.atleast_1d(self.n_nodes))
        if not (len(lower) == len(upper) == len(n_nodes)) or len(n_nodes) not in (1, 2):
            raise ValueError("grid must be 1D or 2D with matching bounds and node counts")
        for a, b, n in zip(lower, upper, n_nodes):
            if not (math.isfinite(a) and math.isfinite(b) and b > a):
                raise ValueError(f"invalid axis extent ({a}, {b})")
            if n < 2:
                raise ValueError("each axis needs at least 2 nodes")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "n_nodes", n_nodes)

    @classmethod
    def uniform(cls, n, lower=0.0, upper=1.0, dim=1) -> "Grid":
        """Same node count and extent along every axis."""
        return cls((lower,) * dim, (upper,) * dim, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n_nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.n_nodes))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.n_nodes))

    @property
    def hmin(self) -> float:
        return min(self.h)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.n_nodes))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of ``shape`` per axis."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates as a (size, dim) array in row-major node order."""
        return np.stack([c.ravel() for c in self.coords], axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        mask.setflags(write=False)
        return mask

    @property
    def interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.dim

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.ones(self.shape)
        for ax, h in enumerate(self.h):
            wa = np.full(self.n_nodes[ax], h)
            wa[0] = wa[-1] = 0.5 * h
            w = w * wa.reshape([-1 if k == ax else 1 for k in range(self.dim)])
        return w

    def matches(self, other: "Grid") -> bool:
        """Same node layout, allowing last-bit differences from text round trips."""
        return (
            self.n_nodes == other.n_nodes
            and np.allclose(self.lower, other.lower, rtol=1e-13, atol=1e-14)
            and np.allclose(self.upper, other.upper, rtol=1e-13, atol=1e-14)
        )

    def sample(self, func, time: float = 0.0) -> "Field":
        """Evaluate ``func(*coords)`` on the nodes."""
        return Field(self, np.broadcast_to(func(*self.coords), self.shape).astype(float), time)


class NonFiniteField(ValueError):
    """Field values contain nan or inf (typically a blown-up computation)."""


@dataclass(frozen=True)
class Field:
    """Scalar node values of a grid at one instant."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteField("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    def with_values(self, values, time: float | None = None) -> "Field":
        return Field(self.grid, values, self.time if time is None else time)

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def scaled(self, c: float) -> "Field":
        return self.with_values(c * self.values)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def lp_norm(self, p: float) -> float:
        return float(np.sum(self.grid.trapezoid_weights * np.abs(self.values) ** p) ** (1.0 / p))


@dataclass(frozen=True)
class SpaceTimeCylinder:
    """Q_r(x0, t0) = B_r(x0) x (t0 - r**kappa, t0]."""

    center_x: tuple[float, ...]
    center_t: float
    radius: float
    p: PExponent

    def __post_init__(self):
        object.__setattr__(self, "center_x", tuple(float(c) for c in np.atleast_1d(self.center_x)))
        object.__setattr__(self, "p", as_exponent(self.p))
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")

    @property
    def depth(self) -> float:
        return self.radius ** self.p.kappa

    @property
    def t_start(self) -> float:
        return self.center_t - self.depth

    def shrink_half(self) -> "SpaceTimeCylinder":
        return SpaceTimeCylinder(self.center_x, self.center_t, 0.5 * self.radius, self.p)

    def double(self) -> "SpaceTimeCylinder":
        return SpaceTimeCylinder(self.center_x, self.center_t, 2.0 * self.radius, self.p)

    def contains(self, x, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.linalg.norm(x - np.asarray(self.center_x), axis=-1)
        t = np.asarray(t, dtype=float)
        return (d < self.radius) & (t > self.t_start) & (t <= self.center_t)

    def fits_in(self, traj: "Trajectory") -> bool:
        """True if the closed cylinder lies inside the trajectory's space-time box."""
        g = traj.grid
        for c, a, b in zip(self.center_x, g.lower, g.upper):
            if c - self.radius < a or c + self.radius > b:
                return False
        return traj.times[0] <= self.t_start and self.center_t <= traj.times[-1]


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one evolution on a shared grid, strictly increasing in time.

    ``bc_value`` is the Dirichlet value every snapshot holds on the boundary;
    ``None`` skips that check (closed-form families such as the barrier).
    ``steps`` and ``dts`` record the step index of each snapshot and the size
    of the step that produced it (0 for the initial state).
    """

    snapshots: tuple[Field, ...]
    p: PExponent
    bc_value: float | None = 0.0
    steps: tuple[int, ...] = field(default=())
    dts: tuple[float, ...] = field(default=())

    def __post_init__(self):
        snaps = tuple(self.snapshots)
        if not snaps:
            raise ValueError("a trajectory needs at least one snapshot")
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "p", as_exponent(self.p))
        grid = snaps[0].grid
        times = np.array([s.time for s in snaps])
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        for s in snaps:
            if not s.grid.matches(grid):
                raise ValueError("all snapshots must share one grid")
            if self.bc_value is not None and np.any(s.values[grid.boundary_mask] != self.bc_value):
                raise ValueError(f"snapshot at t={s.time} violates the Dirichlet value")
        if not self.steps:
            object.__setattr__(self, "steps", tuple(range(len(snaps))))
        if not self.dts:
            object.__setattr__(self, "dts", (0.0,) + tuple(np.diff(times)))
        if len(self.steps) != len(snaps) or len(self.dts) != len(snaps):
            raise ValueError("steps and dts need one entry per snapshot")

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @cached_property
    def times(self) -> np.ndarray:
        t = np.array([s.time for s in self.snapshots])
        t.setflags(write=False)
        return t

    @cached_property
    def values(self) -> np.ndarray:
        """Stacked values, shape (n_snapshots, *grid.shape)."""
        v = np.stack([s.values for s in self.snapshots])
        v.setflags(write=False)
        return v

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, k) -> Field:
        return self.snapshots[k]

    def map_values(self, func, bc_value: float | None = None) -> "Trajectory":
        """Apply ``func`` to every snapshot's values (e.g. negation, shifts)."""
        snaps = tuple(s.with_values(func(s.values)) for s in self.snapshots)
        if bc_value is None and self.bc_value is not None:
            bc_value = float(func(np.array([self.bc_value]))[0])
        return Trajectory(snaps, self.p, bc_value, self.steps, self.dts)

    def __neg__(self) -> "Trajectory":
        return self.map_values(np.negative)


@dataclass(frozen=True)
class CylinderSelection:
    """Index view of the node/snapshot pairs inside a cylinder.

    The selection is the product ``nodes x snapshots``; nothing is copied.
    An empty selection is a normal result, check ``empty``.
    """

    nodes: np.ndarray
    snapshots: np.ndarray

    @property
    def empty(self) -> bool:
        return self.nodes.size == 0 or self.snapshots.size == 0

    def __len__(self) -> int:
        return int(self.nodes.size * self.snapshots.size)

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(n), int(k)) for n in self.nodes for k in self.snapshots}


def cylinder_nodes(cyl: SpaceTimeCylinder, traj: Trajectory) -> CylinderSelection:
    """Flat node indices with |x - x0| < r and snapshots with t in (t0 - r**kappa, t0]."""
    pts = traj.grid.points
    if pts.shape[1] != len(cyl.center_x):
        raise ValueError("cylinder and grid dimensions differ")
    dist = np.linalg.norm(pts - np.asarray(cyl.center_x), axis=1)
    nodes = np.flatnonzero(dist < cyl.radius)
    t = traj.times
    snaps = np.flatnonzero((t > cyl.t_start) & (t <= cyl.center_t))
    return CylinderSelection(nodes, snaps)


# snapshot text format --------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_snapshot(u: Field, p, path) -> Path:
    """Write ``u`` as a text snapshot; values in row-major order, one per line."""
    p = as_exponent(p)
    g = u.grid
    header = [str(g.dim), _fmt(p.p), _fmt(u.time)]
    header += [str(n) for n in g.n_nodes] + [_fmt(h) for h in g.h] + [_fmt(a) for a in g.lower]
    path = Path(path)
    lines = [" ".join(header)] + [_fmt(v) for v in u.values.ravel()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_snapshot(path) -> tuple[Field, PExponent]:
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    dim = int(head[0])
    if dim not in (1, 2) or len(head) != 3 + 3 * dim:
        raise ValueError(f"{path}: malformed snapshot header")
    p = PExponent(float(head[1]))
    time = float(head[2])
    n = [int(x) for x in head[3 : 3 + dim]]
    h = [float(x) for x in head[3 + dim : 3 + 2 * dim]]
    lower = [float(x) for x in head[3 + 2 * dim : 3 + 3 * dim]]
    upper = [a + hh * (k - 1) for a, hh, k in zip(lower, h, n)]
    vals = np.array([float(x) for x in lines[1:] if x.strip()])
    grid = Grid(tuple(lower), tuple(upper), tuple(n))
    if vals.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {vals.size}")
    return Field(grid, vals.reshape(grid.shape), time), p
