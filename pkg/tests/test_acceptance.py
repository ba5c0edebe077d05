"""Acceptance criteria, one test each.

Every criterion is a plain function returning ``(ok, detail)``; the pytest
wrappers print a single PASS/FAIL line outside output capture. Running this
file directly prints the same lines without pytest.
"""
import json
import subprocess
import sys
import tempfile
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from amanifold.bundle import BundleSpec
from amanifold.cli import build_plan, cmd_verify, load_config
from amanifold.solver import MuSystem, alpha_feasibility, mu_residuals, solve_mu_system
from amanifold.verifier import (
    VerificationPlan,
    check_besse_formula,
    check_harmonicity,
    check_killing,
    check_lemma_identities,
    check_oneill,
    pin_curvature_sign,
    reevaluate,
)

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
TOL = 1e-8


@lru_cache(maxsize=None)
def cli_verify(config: str, tag: str):
    """Cold `amanifold verify` in a fresh interpreter; returns (report bytes, exit code, seconds)."""
    out = Path(tempfile.mkdtemp()) / f"{tag}.json"
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "amanifold.cli", "verify", str(CONFIGS / config), "--output", str(out)],
        capture_output=True,
        text=True,
    )
    elapsed = time.perf_counter() - start
    return out.read_bytes() if out.exists() else b"", proc.returncode, elapsed


def _checks(report):
    return {c["name"]: c for c in report["checks"]}


def criterion_1():
    raw, code, secs = cli_verify("e1.json", "e1_a")
    rep = json.loads(raw)
    solve, checks = rep["solve"], _checks(rep)
    ric = checks["ricci_structure"]
    ok = (
        code == 0
        and abs(solve["mu"] - 1.5) < 1e-12
        and abs(solve["lam"][0] - 0.5) < 1e-12
        and np.allclose(ric["info"]["ricci_eigenvalues"], [0.5, 1.5, 1.5], rtol=0, atol=1e-12)
        and ric["info"]["eigenvalue_deviation"] < TOL
        and checks["a_condition"]["max_residual"] < TOL
        and checks["a_condition"]["samples_used"] == 100
        and secs < 10
    )
    detail = (
        f"mu={solve['mu']:.12g} lambda={solve['lam'][0]:.12g} "
        f"eig dev={ric['info']['eigenvalue_deviation']:.2e} "
        f"cyclic={checks['a_condition']['max_residual']:.2e} (100 samples) runtime={secs:.1f}s"
    )
    return ok, detail


def criterion_2():
    rep, code = cmd_verify(load_config(CONFIGS / "e1_einstein.json"))
    solve, ric = rep["solve"], _checks(rep)["ricci_structure"]
    ok = (
        code == 0
        and solve["einstein"]
        and ric["info"]["einstein"]
        and abs(solve["mu"] - 2) < TOL
        and abs(solve["lam"][0] - 2) < TOL
        and solve["x"] == [0.5]
        and ric["info"]["eigenvalue_deviation"] < TOL
    )
    return ok, (
        f"x={solve['x']} mu={solve['mu']:.12g} lambda={solve['lam'][0]:.12g} "
        f"einstein={ric['info']['einstein']} eig dev={ric['info']['eigenvalue_deviation']:.2e}"
    )


def criterion_3():
    raw, code, secs = cli_verify("e2.json", "e2")
    rep = json.loads(raw)
    checks = rep["checks"]
    dim = BundleSpec.build([1, 1], rep["config"]["a"], rep["config"]["b"]).dim
    ok = (
        code == 0
        and rep["solve"]["residual"] < 1e-12
        and len(checks) == 7
        and all(c["verdict"] == "pass" for c in checks)
        and rep["config"]["tol_primary"] == TOL
        and dim == 6
        and secs < 60
    )
    worst = max(c["max_residual"] for c in checks)
    return ok, (
        f"x={rep['solve']['x']} residual={rep['solve']['residual']:.1e} "
        f"7/7 pass={all(c['verdict'] == 'pass' for c in checks)} worst={worst:.2e} dim={dim} runtime={secs:.1f}s"
    )


def criterion_4():
    rows, ok = [], True
    for x in ([1.0, 1.0], [1.0, 2.0]):
        spec = BundleSpec.build([1, 1], [[1, 1], [0, 1]], np.eye(2), x)
        plan = VerificationPlan(spec, seed=0, samples=100, tol_primary=TOL)
        oneill = check_oneill(plan)
        definitional = next(s for s in oneill.subchecks if s.name == "formula_vs_definition")
        results = {
            "besse": check_besse_formula(plan),
            "oneill": definitional,
            "killing": check_killing(plan),
            "lemma": check_lemma_identities(plan),
            "harmonicity": check_harmonicity(plan),
        }
        ok &= all(r.verdict == "pass" for r in results.values())
        worst = max(r.max_residual for r in results.values())
        rows.append(f"x={x}: worst={worst:.1e}")
    return ok, "; ".join(rows)


def criterion_5():
    cfg = load_config(CONFIGS / "negative_control.json")
    rep, code = cmd_verify(cfg)
    a_cond = _checks(rep)["a_condition"]
    plan = build_plan(cfg, rep["solve"]["x"])
    wit = a_cond["witness"]
    again = reevaluate(plan, "a_condition", wit["subcheck"], wit)
    gap = abs(again - a_cond["max_residual"])
    ok = code == 1 and a_cond["verdict"] == "fail" and a_cond["max_residual"] > 1e-3 and gap < 1e-12
    return ok, f"max residual={a_cond['max_residual']:.4g} witness replay gap={gap:.1e} exit={code}"


def criterion_6():
    pinned = pin_curvature_sign(BundleSpec.build([1], [[1]], [[1.0]], [1.0]), samples=100, tol=TOL)
    passing = [s for s, r in pinned.items() if r.verdict == "pass"]
    reports = [json.loads(cli_verify(c, t)[0]) for c, t in (("e1.json", "e1_a"), ("e2.json", "e2"))]
    reports.append(cmd_verify(load_config(CONFIGS / "negative_control.json"))[0])
    recorded = {json.dumps(r["conventions"], sort_keys=True) for r in reports}
    ok = passing == [1.0] and len(recorded) == 1 and reports[0]["conventions"]["curvature_sign"] == 1
    return ok, (
        f"+1 residual={pinned[1.0].max_residual:.1e}, -1 residual={pinned[-1.0].max_residual:.2f}; "
        f"{len(reports)} reports share one convention record={len(recorded) == 1}"
    )


def random_instances(count=20, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        r = int(rng.integers(1, 3))
        ns = rng.integers(1, 3, size=2)
        a = rng.integers(-2, 3, size=(r, 2))
        M = rng.normal(size=(r, r))
        b = M @ M.T + 0.5 * np.eye(r)
        sys_ = MuSystem.from_arrays(ns, a, b)
        alpha = float(rng.uniform(0.2, 5.0))
        if alpha_feasibility(sys_, [alpha])["feasible"]:
            out.append((sys_, alpha))
    return out


def criterion_7():
    agree = compared = 0
    worst_res = worst_gap = 0.0
    ok = True
    for sys_, alpha in random_instances():
        ref = solve_mu_system(sys_, "alpha_reduction", alpha=[alpha])
        res = solve_mu_system(sys_, "newton", x1=ref.x[0], x0=ref.x * [1.0, 1.05]) if ref.success else None
        for sol in (ref, res):
            if sol is not None and sol.success:
                r = float(np.abs(mu_residuals(sys_, sol.x, sol.mu)).max())
                worst_res = max(worst_res, r)
                ok &= r < 1e-10
        if ref.success and res is not None and res.success:
            compared += 1
            gap = max(float(np.abs(res.x - ref.x).max()), abs(res.mu - ref.mu))
            worst_gap = max(worst_gap, gap)
            agree += gap < 1e-8
    ok &= compared > 0 and agree == compared
    return ok, f"{compared}/20 both succeeded, {agree} agree (max gap {worst_gap:.1e}), max residual {worst_res:.1e}"


def criterion_8():
    first, _, _ = cli_verify("e1.json", "e1_a")
    second, _, _ = cli_verify("e1.json", "e1_b")
    return first == second and len(first) > 0, f"{len(first)} bytes, identical={first == second}"


CRITERIA = {
    1: ("Hopf bundle eigenvalues, cyclic sum, runtime", criterion_1),
    2: ("Einstein limit at x = 0.5", criterion_2),
    3: ("CP1 x CP1 product, all checks", criterion_3),
    4: ("metric identities off-solution", criterion_4),
    5: ("negative control detection and witness replay", criterion_5),
    6: ("curvature sign pinning", criterion_6),
    7: ("solver cross-validation", criterion_7),
    8: ("byte-identical reports", criterion_8),
}


def _line(n, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {CRITERIA[n][0]} :: {detail}"


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n][1]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failures = 0
    for n, (_, fn) in CRITERIA.items():
        ok, detail = fn()
        failures += not ok
        print(_line(n, ok, detail), flush=True)
    sys.exit(1 if failures else 0)
