#!/usr/bin/env python3
"""Normalised difference quotients of a cone evolution across radii and grids.

Evolves max(0, 1 - |x|) on (-1, 1) with the implicit scheme and prints one
modulus_report row per (N, R).  The normalised combined ratio should not
depend on R or N by more than a bounded factor.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from dnlplap.analysis import modulus_report
from dnlplap.cli import write_csv
from dnlplap.config import cone
from dnlplap.core import Grid, SpaceTimeCylinder
from dnlplap.evolution import EvolutionConfig, evolve


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--nodes", type=int, nargs="+", default=[201, 401])
    ap.add_argument("--radii", type=float, nargs="+", default=[0.1, 0.2, 0.4])
    ap.add_argument("--t0", type=float, default=0.75)
    ap.add_argument("--out", type=Path, default=Path("outputs/regularity_scaling.csv"))
    args = ap.parse_args(argv)

    rows = []
    for n in args.nodes:
        g = Grid.uniform(n, -1, 1)
        traj = evolve(cone(g, (0.0,), 1.0), 0.0, EvolutionConfig("implicit", 0.4, args.t0), args.p)
        for r in args.radii:
            rows.append([n] + modulus_report(traj, SpaceTimeCylinder((0.0,), args.t0, r, args.p)).as_row())
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(args.out, ["n_nodes", "radius", "lip_ratio", "time_holder_ratio", "loglip_ratio",
                         "combined_ratio", "pair_count"], rows)


if __name__ == "__main__":
    main()
