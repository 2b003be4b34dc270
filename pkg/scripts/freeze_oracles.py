#!/usr/bin/env python3
"""Recompute the frozen oracle values in tests/oracle_values.py.

Every value is produced by code that does not go through the array stencil:
plain per-node loops or the scalar shooting integrator.  Run this script and
paste the printed block into tests/oracle_values.py when an oracle changes.
"""

from __future__ import annotations

import argparse
import math

from dnlplap.eigen import closed_form_lambda_1d, shooting_lambda_1d


def stable_dt_loop(values, h, p, sigma):
    """The explicit step bound for a 1D field, one node at a time."""
    n = len(values)
    kappa = p / (p - 1)

    def flux(i):  # half-node i + 1/2
        g = (values[i + 1] - values[i]) / h
        return abs(g) ** (p - 2) * g, abs(g)

    laps, grads = [], []
    for i in range(1, n - 1):
        f_hi, g_hi = flux(i)
        f_lo, g_lo = flux(i - 1)
        laps.append((f_hi - f_lo) / h)
        grads.append(max(g_hi, g_lo))
    cap = sigma * h**kappa
    if p == 2:
        return min(sigma * h * h / (2 + 1e-12), cap)
    floor = 1e-12 * max(abs(v) for v in laps) + 1e-300
    d_max = 0.0
    for lap, g in zip(laps, grads):
        d = (p - 1) * g ** (p - 2) * (abs(lap) + floor) ** ((2 - p) / (p - 1)) if g > 0 else 0.0
        d_max = max(d_max, d)
    return min(sigma * h * h / (2 * d_max + 1e-12), cap)


def barrier_profile(n, p, B=1.0):
    xs = [-1 + 2 * k / (n - 1) for k in range(n)]
    return [B * abs(x) ** (p / (p - 1)) for x in xs], 2 / (n - 1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shooting-steps", type=int, default=80_000)
    args = ap.parse_args(argv)

    lam = shooting_lambda_1d(3, tol=1e-12, n_steps=args.shooting_steps)
    exact = closed_form_lambda_1d(3)
    print(f"SHOOTING_LAMBDA_P3 = {lam!r}  # closed form {exact!r}, rel gap {abs(lam - exact) / exact:.1e}")

    values, h = barrier_profile(201, 3.0)
    print(f"STABLE_DT_BARRIER_P3 = {stable_dt_loop(values, h, 3.0, 0.4)!r}")
    print(f"LAMBDA_P2_EXACT = {math.pi ** 2!r}")


if __name__ == "__main__":
    main()
