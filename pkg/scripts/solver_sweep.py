#!/usr/bin/env python3
"""Scan the gauge x_1 for a two-factor system and print where positive solutions exist.

Defaults to the coupled example a = [[1,1],[0,1]], b = Id over CP^1 x CP^1.

    python3 scripts/solver_sweep.py [--a '[[1,1],[0,1]]'] [--b '[[1,0],[0,1]]'] [--ns 1 1]
"""
import argparse
import json

import numpy as np

from amanifold.solver import MuSystem, solve_mu_system


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", default="[[1,1],[0,1]]")
    ap.add_argument("--b", default="[[1,0],[0,1]]")
    ap.add_argument("--ns", type=int, nargs="+", default=[1, 1])
    ap.add_argument("--points", type=int, default=25)
    args = ap.parse_args()
    sys_ = MuSystem.from_arrays(args.ns, json.loads(args.a), json.loads(args.b))
    print(f"weights k = {sys_.weights.tolist()}, q = {sys_.q.tolist()}")

    sweep = solve_mu_system(sys_, "sweep")
    print(f"feasible x1 windows (mu > 0): {sweep.diagnostics['feasible_intervals']}")

    print(f"{'x1':>9} {'status':<12} {'x':<28} {'mu':>10} {'lambda':<24} einstein")
    for x1 in np.geomspace(0.1, 10, args.points):
        res = solve_mu_system(sys_, "newton", x1=float(x1))
        if res.x is None:
            disc = ", ".join(f"{d:.3g}" for d in res.diagnostics.get("discriminants", []))
            print(f"{x1:9.4f} {res.status:<12} discriminants [{disc}]")
            continue
        x = ", ".join(f"{v:.5g}" for v in res.x)
        lam = ", ".join(f"{v:.5g}" for v in res.lam)
        print(f"{x1:9.4f} {res.status:<12} {x:<28} {res.mu:10.5g} {lam:<24} {res.einstein}")


if __name__ == "__main__":
    main()
