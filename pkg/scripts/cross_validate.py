#!/usr/bin/env python3
"""Compare Newton and alpha-reduction on random two-factor systems.

    python3 scripts/cross_validate.py [--count 200] [--seed 0]
"""
import argparse

import numpy as np

from amanifold.solver import MuSystem, alpha_feasibility, mu_residuals, solve_mu_system


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--perturb", type=float, default=0.05, help="relative offset of the Newton start")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    tried = feasible = both = agree = other_branch = 0
    worst_gap = worst_res = 0.0
    statuses = {}
    while feasible < args.count:
        tried += 1
        r = int(rng.integers(1, 3))
        M = rng.normal(size=(r, r))
        sys_ = MuSystem.from_arrays(rng.integers(1, 3, size=2), rng.integers(-2, 3, size=(r, 2)), M @ M.T + 0.5 * np.eye(r))
        alpha = float(rng.uniform(0.2, 5.0))
        if not alpha_feasibility(sys_, [alpha])["feasible"]:
            continue
        feasible += 1
        ref = solve_mu_system(sys_, "alpha_reduction", alpha=[alpha])
        statuses[ref.status] = statuses.get(ref.status, 0) + 1
        if not ref.success:
            continue
        x0 = ref.x * [1.0, 1.0 + args.perturb]
        res = solve_mu_system(sys_, "newton", x1=ref.x[0], x0=x0)
        # near the fold the perturbed start can sit past the critical point k/q,
        # i.e. on the branch of the other positive root
        crit = sys_.weights[1] / sys_.q[1]
        switched = np.sign(x0[1] - crit) != np.sign(ref.x[1] - crit)
        worst_res = max(worst_res, float(np.abs(mu_residuals(sys_, ref.x, ref.mu)).max()))
        if res.success:
            both += 1
            gap = max(float(np.abs(res.x - ref.x).max()), abs(res.mu - ref.mu))
            worst_gap = max(worst_gap, gap)
            agree += gap < 1e-8
            other_branch += gap >= 1e-8 and switched
            worst_res = max(worst_res, float(np.abs(mu_residuals(sys_, res.x, res.mu)).max()))

    print(f"drawn {tried}, alpha-feasible {feasible}, alpha statuses {statuses}")
    print(f"newton succeeded on {both}; agreement within 1e-8 on {agree} (max gap {worst_gap:.2e})")
    print(f"disagreements whose start lay on the other root's branch: {other_branch} of {both - agree}")
    print(f"max residual at any reported solution: {worst_res:.2e}")


if __name__ == "__main__":
    main()
