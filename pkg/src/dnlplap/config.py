"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .core import Field, Grid, PExponent
from .evolution import EvolutionConfig, exact_barrier


class ConfigError(ValueError):
    pass


INITIAL_KINDS = ("ground_state", "scaled_ground_state", "sine_bump", "cone", "barrier", "file")


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "sine_bump"
    args: tuple = ()

    def __str__(self):
        if self.kind in ("ground_state", "sine_bump"):
            return self.kind
        return f"{self.kind}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    p: float = 2.0
    dim: int = 1
    n_nodes: tuple[int, ...] = (201,)
    domain: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    scheme: str = "explicit"
    cfl_sigma: float = 0.4
    t_end: float = 0.1
    initial: InitialSpec = field(default_factory=InitialSpec)
    outputs: str = "outputs"
    seed: int = 0
    # knobs beyond the core list
    snapshot_stride: int = 1
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    eigen_tol: float = 1e-10
    probe_center: tuple[float, ...] | None = None  # default: domain midpoint
    probe_t0: float | None = None  # default: t_end
    probe_radii: tuple[float, ...] = (0.05, 0.1)

    def __post_init__(self):
        if not self.name or not re.fullmatch(r"[A-Za-z0-9._-]+", self.name) or self.name in (".", ".."):
            raise ConfigError(f"name {self.name!r} must be nonempty and use only letters, digits, '.', '_' or '-'")
        try:
            PExponent(self.p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.dim not in (1, 2):
            raise ConfigError("dim must be 1 or 2")
        if len(self.n_nodes) != self.dim or any(n < 3 for n in self.n_nodes):
            raise ConfigError("n_nodes needs one count >= 3 per axis")
        if len(self.domain) != self.dim or any(not (math.isfinite(a) and math.isfinite(b) and b > a) for a, b in self.domain):
            raise ConfigError("domain needs one finite interval lower < upper per axis")
        try:
            self.evolution()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.eigen_tol > 0:
            raise ConfigError("eigen_tol must be positive")
        if self.probe_center is not None and len(self.probe_center) != self.dim:
            raise ConfigError("probe_center needs one coordinate per axis")
        if not self.probe_radii or any(not r > 0 for r in self.probe_radii):
            raise ConfigError("probe_radii must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        _check_initial(self.initial, self.dim)

    @property
    def exponent(self) -> PExponent:
        return PExponent(self.p)

    def grid(self) -> Grid:
        return Grid(tuple(a for a, _ in self.domain), tuple(b for _, b in self.domain), self.n_nodes)

    def evolution(self) -> EvolutionConfig:
        return EvolutionConfig(
            scheme=self.scheme,
            cfl_sigma=self.cfl_sigma,
            t_end=self.t_end,
            newton_tol=self.newton_tol,
            newton_max_iter=self.newton_max_iter,
            snapshot_stride=self.snapshot_stride,
        )

    @property
    def center(self) -> tuple[float, ...]:
        if self.probe_center is not None:
            return self.probe_center
        return tuple(0.5 * (a + b) for a, b in self.domain)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def _check_initial(spec: InitialSpec, dim: int):
    want = {
        "ground_state": (0,),
        "sine_bump": (0,),
        "scaled_ground_state": (1,),
        "cone": (dim + 1,),
        "barrier": (dim + 1,),
        "file": (1,),
    }
    if spec.kind not in want:
        raise ConfigError(f"unknown initial kind {spec.kind!r}; expected one of {', '.join(INITIAL_KINDS)}")
    if len(spec.args) not in want[spec.kind]:
        raise ConfigError(f"initial {spec.kind} takes {want[spec.kind][0]} argument(s), got {len(spec.args)}")
    if spec.kind == "scaled_ground_state" and not abs(spec.args[0]) <= 1:
        raise ConfigError("scaled_ground_state(c) needs |c| <= 1")
    if spec.kind == "cone" and not spec.args[-1] > 0:
        raise ConfigError("cone slope must be positive")
    if spec.kind == "barrier" and not spec.args[0] > 0:
        raise ConfigError("barrier B must be positive")


# parsing ---------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    parts = [x for x in re.split(r"[,\s]+", text.strip().strip("()[]")) if x]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(x) for x in parts)


def _ints(text: str) -> tuple[int, ...]:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ValueError("expected integers")
    return tuple(int(v) for v in vals)


def _int(text: str) -> int:
    (v,) = _ints(text)
    return v


def _float(text: str) -> float:
    return float(text)


def _domain(text: str) -> tuple[tuple[float, float], ...]:
    vals = _floats(text.replace("x", " "))
    if len(vals) % 2:
        raise ValueError("domain needs lower/upper pairs")
    return tuple((vals[k], vals[k + 1]) for k in range(0, len(vals), 2))


def _initial(text: str) -> InitialSpec:
    m = re.fullmatch(r"\s*([a-z_]+)\s*(?:\((.*)\))?\s*", text)
    if not m:
        raise ValueError(f"cannot read initial {text!r}")
    kind, inner = m.group(1), m.group(2)
    if kind == "file":
        if not inner or not inner.strip():
            raise ValueError("file(path) needs a path")
        return InitialSpec(kind, (inner.strip(),))
    args = _floats(inner) if inner and inner.strip() else ()
    return InitialSpec(kind, args)


_PARSERS = {
    "name": str,
    "p": _float,
    "dim": _int,
    "n_nodes": _ints,
    "domain": _domain,
    "scheme": str,
    "cfl_sigma": _float,
    "t_end": _float,
    "initial": _initial,
    "outputs": str,
    "seed": _int,
    "snapshot_stride": _int,
    "newton_tol": _float,
    "newton_max_iter": _int,
    "eigen_tol": _float,
    "probe_center": _floats,
    "probe_t0": _float,
    "probe_radii": _floats,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str) -> ExperimentConfig:
    """Read ``key = value`` lines; ``#`` starts a comment, blank lines are skipped.

    A single ``n_nodes`` or ``domain`` entry is repeated along every axis
    when ``dim = 2``.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (part.strip() for part in line.partition("="))
        if not sep or not key or not val:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    dim = values.get("dim", 1)
    if "n_nodes" in values and len(values["n_nodes"]) == 1:
        values["n_nodes"] = values["n_nodes"] * dim
    elif "n_nodes" not in values:
        values["n_nodes"] = (201,) * dim
    if "domain" in values and len(values["domain"]) == 1:
        values["domain"] = values["domain"] * dim
    elif "domain" not in values:
        values["domain"] = ((0.0, 1.0),) * dim
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


# initial data ----------------------------------------------------------------


def cone(grid: Grid, x0, slope: float) -> Field:
    """max(0, 1 - slope |x - x0|) with the boundary set to 0."""
    r = np.sqrt(sum((c - a) ** 2 for c, a in zip(grid.coords, np.atleast_1d(x0))))
    v = np.maximum(0.0, 1.0 - slope * r)
    v[grid.boundary_mask] = 0.0
    return Field(grid, v)


def build_initial(cfg: ExperimentConfig, ground=None) -> Field:
    """Initial field for ``cfg``; ``ground`` is a callable returning the ground state when needed."""
    from .eigen import sine_bump

    grid = cfg.grid()
    spec = cfg.initial
    if spec.kind == "sine_bump":
        return sine_bump(grid)
    if spec.kind in ("ground_state", "scaled_ground_state"):
        phi = ground().phi
        return phi if spec.kind == "ground_state" else phi.scaled(spec.args[0])
    if spec.kind == "cone":
        return cone(grid, spec.args[:-1], spec.args[-1])
    if spec.kind == "barrier":
        return exact_barrier(spec.args[0], spec.args[1:], 0.0, 0.0, cfg.p, grid, 0.0)
    from .core import read_snapshot

    path = Path(spec.args[0])
    try:
        u, _ = read_snapshot(path)
    except OSError as exc:
        raise ConfigError(f"cannot read initial snapshot {path}: {exc.strerror}") from None
    if not u.grid.matches(grid):
        raise ConfigError(f"snapshot {path} does not match the configured grid")
    return Field(grid, u.values)
