"""Command line entry point: ``amanifold solve|verify|report``.

Exit codes: 0 success/pass, 1 a verification check failed, 2 the scale
equations have no solution with the requested strategy, 3 invalid input or
internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .bundle import BundleSpec
from .solver import STRATEGIES, MuSystem, SolveResult, evaluate_at, solve_mu_system
from .verifier import VerificationPlan, conventions, perturbed_base_overrides, run_full_suite

log = logging.getLogger("amanifold")

SCHEMA_VERSION = 1
REPORT_KIND = "amanifold.verify_report"
CONTROLS = ("perturbed-base",)
OUTPUT_DIR_ENV = "AMANIFOLD_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    factors: list[int]
    a: list[list[int]]
    b: list[list[float]]
    x: list[float] | None = None
    strategy: str = "newton"
    gauge_x1: float = 1.0
    alpha: list[float] | None = None
    seed: int = 0
    samples: int = 100
    tol_primary: float = 1e-8
    tol_derivative: float = 1e-10
    control: str | None = None
    name: str = "run"
    output: str | None = None

    def __post_init__(self):
        m = len(self.factors)
        if m == 0:
            raise ConfigError("factors: at least one factor required")
        if any(int(n) != n or n < 1 for n in self.factors):
            raise ConfigError("factors: complex dimensions must be positive integers")
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.ndim != 2 or a.shape[1] != m:
            raise ConfigError(f"a must be an r x {m} matrix, got shape {a.shape}")
        if not np.array_equal(a, np.round(a)):
            raise ConfigError("a must be integer")
        if b.shape != (a.shape[0], a.shape[0]):
            raise ConfigError(f"b must be {a.shape[0]}x{a.shape[0]}, got shape {b.shape}")
        if not np.allclose(b, b.T, atol=1e-14, rtol=0):
            raise ConfigError("b must be symmetric")
        if np.linalg.eigvalsh(b)[0] <= 0:
            raise ConfigError("b not positive definite")
        if self.x is not None and (len(self.x) != m or any(not v > 0 for v in self.x)):
            raise ConfigError(f"x must hold {m} positive scales")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.alpha is not None and len(self.alpha) != m - 1:
            raise ConfigError(f"alpha must hold {m - 1} values")
        if self.samples < 1:
            raise ConfigError("samples ≥ 1 required")
        if self.control is not None and self.control not in CONTROLS:
            raise ConfigError(f"control must be one of {CONTROLS}")
        self.a = a.astype(int).tolist()
        self.b = b.tolist()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d.pop("schema_version", None)
        solve = d.pop("solve", None) or {}
        if "factors" not in d:
            raise ConfigError("missing required key 'factors'")
        factors = [f["n"] if isinstance(f, dict) else f for f in d.pop("factors")]
        for key in ("strategy", "gauge_x1", "alpha"):
            if key in solve:
                d.setdefault(key, solve[key])
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(factors=factors, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["factors"] = [{"n": int(n)} for n in self.factors]
        d["schema_version"] = SCHEMA_VERSION
        d.pop("output")
        return d

    def mu_system(self) -> MuSystem:
        return MuSystem.from_arrays(self.factors, self.a, self.b)


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


def solve_config(cfg: RunConfig) -> SolveResult:
    sys_ = cfg.mu_system()
    if cfg.x is not None:
        return evaluate_at(sys_, cfg.x)
    return solve_mu_system(sys_, cfg.strategy, x1=cfg.gauge_x1, alpha=cfg.alpha)


def versions() -> dict:
    import jax
    import scipy

    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"amanifold": own, "jax": jax.__version__, "numpy": np.__version__, "scipy": scipy.__version__}


def build_plan(cfg: RunConfig, x) -> VerificationPlan:
    a = np.asarray(cfg.a, dtype=float)
    if cfg.control == "perturbed-base":
        a = np.zeros_like(a)
    spec = BundleSpec.build(cfg.factors, a, cfg.b, x)
    overrides = perturbed_base_overrides(spec) if cfg.control == "perturbed-base" else {}
    return VerificationPlan(
        spec,
        seed=cfg.seed,
        samples=cfg.samples,
        tol_primary=cfg.tol_primary,
        tol_derivative=cfg.tol_derivative,
        bundle_overrides=overrides,
    )


def _clean(obj):
    """Replace non-finite floats by None so reports are strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def cmd_solve(cfg: RunConfig) -> tuple[SolveResult, int]:
    result = solve_config(cfg)
    return result, 0 if result.success else 2


def cmd_verify(cfg: RunConfig) -> tuple[dict, int]:
    solve = solve_config(cfg)
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": REPORT_KIND,
        "config": cfg.to_dict(),
        "solve": solve.to_dict(),
        "conventions": conventions(),
        "versions": versions(),
    }
    if solve.x is None or solve.status not in ("success", "off_solution"):
        report.update(checks=[], summary="not_run")
        return report, 2
    plan = build_plan(cfg, solve.x)
    results, summary = run_full_suite(plan, solve if plan.bundle.is_standard else None)
    report.update(checks=[r.to_dict() for r in results], summary=summary)
    return report, 0 if summary == "pass" else 1


def read_report(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable report {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("kind") != REPORT_KIND:
        raise ConfigError(f"{path}: not a verification report")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema version {data.get('schema_version')} != {SCHEMA_VERSION}")
    for key in ("config", "solve", "checks", "summary", "conventions"):
        if key not in data:
            raise ConfigError(f"{path}: missing key {key!r}")
    return data


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def render_report(data: dict) -> str:
    cfg, solve = data["config"], data["solve"]
    lines = [
        f"run: {cfg.get('name')}   summary: {data['summary']}",
        f"factors (complex dim): {[f['n'] for f in cfg['factors']]}   a = {cfg['a']}   b = {cfg['b']}",
        f"x = {_fmt(solve.get('x'))}   mu = {_fmt(solve.get('mu'))}   lambda = {_fmt(solve.get('lam'))}"
        f"   status = {solve.get('status')}   einstein = {solve.get('einstein')}",
        "",
        f"{'check':<26} {'max residual':>14} {'tolerance':>10}  verdict",
    ]
    for c in data["checks"]:
        lines.append(f"{c['name']:<26} {_fmt(c['max_residual']):>14} {_fmt(c['tolerance']):>10}  {c['verdict']}")
        for s in c.get("subchecks", []):
            lines.append(f"  {s['name']:<24} {_fmt(s['max_residual']):>14} {_fmt(s['tolerance']):>10}  {s['verdict']}")
    lines.append("")
    lines.append("conventions:")
    for k, v in data["conventions"].items():
        lines.append(f"  {k}: {v}")
    return "\n".join(lines) + "\n"


def _default_output(cfg: RunConfig) -> Path:
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "reports"))
    return base / f"{cfg.name}_report.json"


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    for flag, key in (
        ("seed", "seed"),
        ("samples", "samples"),
        ("tol", "tol_primary"),
        ("gauge_x1", "gauge_x1"),
        ("strategy", "strategy"),
        ("control", "control"),
        ("output", "output"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            changes[key] = val
    if getattr(args, "alpha", None) is not None:
        changes["alpha"] = args.alpha
    if getattr(args, "gauge_x1", None) is not None or getattr(args, "strategy", None) is not None:
        changes["x"] = None
    return replace(cfg, **changes) if changes else cfg


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="amanifold", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON run configuration")
        sp.add_argument("--gauge-x1", type=float, help="fix x_1 and solve for the other scales")
        sp.add_argument("--strategy", choices=STRATEGIES)
        sp.add_argument("--alpha", type=float, nargs="+", help="ratios x_s / x_1 for alpha_reduction")
        sp.add_argument("--output", help="where to write the JSON result")

    sp = sub.add_parser("solve", help="solve the scale equations")
    common(sp)

    sp = sub.add_parser("verify", help="solve, build the metric and run every check")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--tol", type=float, help="primary tolerance")
    sp.add_argument("--control", choices=CONTROLS, help="run a negative control instead")

    sp = sub.add_parser("report", help="render a stored verification report")
    sp.add_argument("path")
    sp.add_argument("--format", choices=("text", "json"), default="text")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "report":
            data = read_report(args.path)
            if args.format == "json":
                sys.stdout.write(Path(args.path).read_text())
            else:
                sys.stdout.write(render_report(data))
            return 0

        cfg = _apply_flags(load_config(args.config), args)
        if args.command == "solve":
            result, code = cmd_solve(cfg)
            text = dump_json(result.to_dict())
            if cfg.output:
                Path(cfg.output).parent.mkdir(parents=True, exist_ok=True)
                Path(cfg.output).write_text(text)
            sys.stdout.write(text)
            return code

        start = time.perf_counter()
        report, code = cmd_verify(cfg)
        out = Path(cfg.output) if cfg.output else _default_output(cfg)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(dump_json(report))
        sys.stdout.write(render_report(report))
        print(f"report written to {out} ({time.perf_counter() - start:.1f} s)", file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
