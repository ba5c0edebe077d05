#!/usr/bin/env python3
"""Verify every bundled config and store the reports under reports/examples/.

    python3 scripts/run_examples.py [--samples N]
"""
import argparse
import time
from dataclasses import replace
from pathlib import Path

from amanifold.cli import cmd_verify, dump_json, load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, help="override the sample count of every config")
    ap.add_argument("--out", default=str(ROOT / "reports" / "examples"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"{'config':<18} {'exit':>4} {'summary':<8} {'x':<24} {'mu':>10} {'seconds':>8}")
    for path in sorted((ROOT / "configs").glob("*.json")):
        cfg = load_config(path)
        if args.samples:
            cfg = replace(cfg, samples=args.samples)
        start = time.perf_counter()
        report, code = cmd_verify(cfg)
        secs = time.perf_counter() - start
        (out / f"{cfg.name}_report.json").write_text(dump_json(report))
        solve = report["solve"]
        x = "-" if solve["x"] is None else ", ".join(f"{v:.6g}" for v in solve["x"])
        mu = "-" if solve["mu"] is None else f"{solve['mu']:.6g}"
        print(f"{cfg.name:<18} {code:>4} {report['summary']:<8} {x:<24} {mu:>10} {secs:>8.1f}")
        for c in report["checks"]:
            if c["verdict"] == "fail":
                print(f"{'':<18} failed: {c['name']} (max residual {c['max_residual']:.3g})")


if __name__ == "__main__":
    main()
