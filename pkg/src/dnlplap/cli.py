"""``dnl-plap`` command line entry point."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import analysis as an
from .checks import run_checks
from .config import ConfigError, ExperimentConfig, build_initial, load_config
from .core import NonFiniteField, SpaceTimeCylinder, write_snapshot
from .eigen import EigenError, ground_state
from .evolution import ConvergenceError, StepRejected, evolve, export_trajectory

log = logging.getLogger("dnlplap")

COMMANDS = ("evolve", "eigen", "probe", "largetime", "verify")
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class RunError(RuntimeError):
    """A module error wrapped with the experiment name, stage and exit code."""

    def __init__(self, cfg_name, stage, exc, code):
        super().__init__(f"[{cfg_name}] {stage}: {exc}")
        self.code = code


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header, rows, echo: bool = True) -> Path:
    rows = [[_cell(x) for x in row] for row in rows]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    if echo:
        print(",".join(header))
        for row in rows:
            print(",".join(row))
    return path


class _Stage:
    def __init__(self, cfg):
        self.cfg = cfg
        self.name = "setup"

    def __call__(self, name):
        self.name = name
        return self


def _ground(cfg, stage):
    cache = {}

    def get():
        if "gs" not in cache:
            stage("ground_state")
            cache["gs"] = ground_state(cfg.grid(), cfg.p, cfg.eigen_tol)
        return cache["gs"]

    return get


def _bc(g):
    return 0.0 if not np.any(g.values[g.grid.boundary_mask]) else None


def cmd_evolve(cfg, out, stage) -> int:
    ground = _ground(cfg, stage)
    g = build_initial(cfg, ground)
    stage("evolve")
    traj = evolve(g, _bc(g), cfg.evolution(), cfg.p)
    stage("export")
    export_trajectory(traj, out / "trajectory")
    rows = [[s.time, step, s.sup_norm] for s, step in zip(traj, traj.steps)]
    write_csv(out / "evolve.csv", ["time", "step", "sup_norm"], rows[-1:], echo=True)
    return EXIT_OK


def cmd_eigen(cfg, out, stage) -> int:
    gs = _ground(cfg, stage)()
    stage("export")
    write_snapshot(gs.phi, cfg.p, out / "phi.txt")
    write_csv(out / "eigen.csv", ["lambda", "iterations", "residual_sup"], [[gs.lam, gs.iterations, gs.residual_sup]])
    return EXIT_OK


def cmd_probe(cfg, out, stage) -> int:
    g = build_initial(cfg, _ground(cfg, stage))
    stage("evolve")
    traj = evolve(g, _bc(g), cfg.evolution(), cfg.p)
    t0 = cfg.t_end if cfg.probe_t0 is None else cfg.probe_t0
    rows = []
    for radius in cfg.probe_radii:
        stage(f"probe R={radius:g}")
        rep = an.modulus_report(traj, SpaceTimeCylinder(cfg.center, t0, radius, cfg.p), seed=cfg.seed)
        rows.append(rep.as_row())
    header = ["radius", "lip_ratio", "time_holder_ratio", "loglip_ratio", "combined_ratio", "pair_count"]
    write_csv(out / "probe.csv", header, rows)
    return EXIT_OK


def cmd_largetime(cfg, out, stage) -> int:
    ground = _ground(cfg, stage)
    gs = ground()
    g = build_initial(cfg, ground)
    stage("largetime")
    records = an.largetime_experiment(g, cfg.p, gs, cfg.evolution())
    write_csv(out / "largetime.csv", ["t", "rq", "fit_c", "sup_dist"], [r.as_row() for r in records])
    return EXIT_OK


def cmd_verify(cfg, out, stage) -> int:
    stage("verify")
    results = run_checks(cfg)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  status  {'value':>12}  {'limit':>10}  detail")
    for r in results:
        print(f"{r.name:<{width}}  {r.status:<6}  {r.value:12.4e}  {r.limit:10.2e}  {r.detail}")
    failed = [r.name for r in results if r.failed]
    print(f"{len(results) - len(failed)} passed, {len(failed)} failed" + (f": {', '.join(failed)}" if failed else ""))
    write_csv(out / "verify.csv", ["check", "status", "value", "limit", "detail"],
              [[r.name, r.status, r.value, r.limit, r.detail] for r in results], echo=False)
    return EXIT_CHECK if failed else EXIT_OK


HANDLERS = {
    "evolve": cmd_evolve,
    "eigen": cmd_eigen,
    "probe": cmd_probe,
    "largetime": cmd_largetime,
    "verify": cmd_verify,
}


def run(cmd: str, cfg: ExperimentConfig, out_root=None) -> int:
    """Dispatch ``cmd``; artifacts go under ``<out_root or cfg.outputs>/<cfg.name>/``."""
    if cmd not in HANDLERS:
        raise ConfigError(f"unknown command {cmd!r}")
    out = Path(out_root if out_root is not None else cfg.outputs) / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    stage = _Stage(cfg)
    try:
        return HANDLERS[cmd](cfg, out, stage)
    except (ConvergenceError, EigenError, NonFiniteField, FloatingPointError, np.linalg.LinAlgError, StepRejected) as exc:
        raise RunError(cfg.name, stage.name, exc, EXIT_NUMERIC) from exc
    except (ValueError, OSError) as exc:
        raise RunError(cfg.name, stage.name, exc, EXIT_USAGE) from exc


def thread_limit():
    """Context manager honouring DNL_THREADS (unset or 0 means no limit)."""
    raw = os.environ.get("DNL_THREADS", "").strip()
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DNL_THREADS must be a nonnegative integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"DNL_THREADS must be a nonnegative integer, got {raw!r}")
    if n == 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dnl-plap", description="Experiments for |u_t|^(p-2) u_t = Δ_p u on 1D/2D boxes.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key = value config file")
    ap.add_argument("--out", default=None, help="output root (default: the config's outputs key)")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        with thread_limit():
            return run(args.command, cfg, args.out)
    except ConfigError as exc:
        print(f"dnl-plap: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunError as exc:
        print(f"dnl-plap: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
