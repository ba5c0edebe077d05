"""Sampled numerical certification of the bundle construction.

Each check is a list of sub-checks. A sub-check is a residual function of a
sampled chart point (plus sampled tangent vectors); the check reports the
worst residual over all samples together with the point and vectors that
produced it, so any verdict can be reproduced with :func:`reevaluate`.

Per-sample randomness comes from ``np.random.default_rng([seed, check, sample])``
which keeps reports independent of evaluation order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import geometry as geo
from .bundle import BundleSpec, TorusBundle
from .solver import MuSystem, SolveResult, evaluate_at, lambda_matrix

CHECK_ORDER = (
    "killing",
    "lemma_identities",
    "harmonicity",
    "ricci_structure",
    "besse_formula",
    "oneill",
    "a_condition",
)

SAMPLE_RADIUS = 2.0


@dataclass(frozen=True, eq=False)
class VerificationPlan:
    spec: BundleSpec
    seed: int = 0
    samples: int = 100
    tol_primary: float = 1e-8
    tol_derivative: float = 1e-10
    curvature_sign: float = 1.0
    bundle_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples ≥ 1 required")
        if not (self.tol_primary > 0 and self.tol_derivative > 0):
            raise ValueError("tolerances must be positive")

    @cached_property
    def bundle(self) -> TorusBundle:
        return TorusBundle(self.spec, **self.bundle_overrides)


@dataclass
class CheckResult:
    name: str
    max_residual: float
    tolerance: float
    samples_used: int
    verdict: str
    witness: dict | None = None
    subchecks: list["CheckResult"] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["subchecks"] = [s.to_dict() for s in self.subchecks]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CheckResult":
        d = dict(d)
        d["subchecks"] = [cls.from_dict(s) for s in d.get("subchecks", [])]
        return cls(**d)


def _verdict(residual: float, tol: float) -> str:
    return "pass" if residual < tol else "fail"


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_point(bundle: TorusBundle, rng: np.random.Generator) -> np.ndarray:
    """Each complex coordinate uniform in the disk |z| ≤ 2; fiber angles in [0, 2π)."""
    ncomplex = bundle.base_dim // 2
    radius = SAMPLE_RADIUS * np.sqrt(rng.uniform(size=ncomplex))
    phase = rng.uniform(0.0, 2 * np.pi, size=ncomplex)
    base = np.empty(bundle.base_dim)
    base[0::2] = radius * np.cos(phase)
    base[1::2] = radius * np.sin(phase)
    return np.concatenate([base, rng.uniform(0.0, 2 * np.pi, size=bundle.r)])


def unit_vector(G: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=G.shape[0])
    return v / np.sqrt(v @ G @ v)


@dataclass
class Context:
    plan: VerificationPlan
    point: np.ndarray
    solve: SolveResult | None = None

    @property
    def bundle(self) -> TorusBundle:
        return self.plan.bundle

    @cached_property
    def geom(self) -> geo.PointGeometry:
        return self.bundle.metric.at(self.point, self.plan.curvature_sign)

    @cached_property
    def base_point(self) -> np.ndarray:
        return self.point[: self.bundle.base_dim]

    @cached_property
    def base_ricci(self) -> np.ndarray:
        return geo.ricci_only(self.bundle.base_metric, self.base_point, self.plan.curvature_sign)

    @cached_property
    def h(self) -> np.ndarray:
        return self.bundle.base_metric(self.base_point)

    @cached_property
    def T(self) -> np.ndarray:
        return self.bundle.t_tensors(self.geom)

    @cached_property
    def nabla_T(self) -> np.ndarray:
        return self.bundle.nabla_t_tensors(self.geom)

    @cached_property
    def Xi(self) -> np.ndarray:
        return self.bundle.vertical_basis

    @cached_property
    def lifted_frame(self) -> np.ndarray:
        return self.bundle.horizontal_frame(self.point)

    def lift(self, X) -> np.ndarray:
        return self.bundle.horizontal_lift(self.point, X)


# vector kinds: "g" = g-unit total vector, "h" = h-unit base vector
@dataclass(frozen=True)
class SubCheck:
    name: str
    fn: Callable[[Context, dict], float]
    vectors: tuple[tuple[str, str], ...] = ()
    tol: str = "primary"
    applicable: Callable[[VerificationPlan, SolveResult | None], bool] = lambda plan, solve: True


def _draw_vectors(ctx: Context, sub: SubCheck, rng) -> dict:
    out = {}
    for name, kind in sub.vectors:
        G = ctx.geom.g if kind == "g" else ctx.h
        out[name] = unit_vector(G, rng)
    return out


# ---------------------------------------------------------------------------
# residual functions
# ---------------------------------------------------------------------------

def _killing(ctx, v):
    metric = ctx.bundle.metric
    return max(
        float(np.max(np.abs(geo.lie_derivative_metric(metric, xi, ctx.point))))
        for xi in ctx.bundle.fundamental_fields()
    )


def _t_kills_vertical(ctx, v):
    return float(np.max(np.abs(np.einsum("ikj,jl->ikl", ctx.T, ctx.Xi))))


def _curvature_lemma(ctx, v):
    X, Y = v["X"], v["Y"]
    res = 0.0
    for i, xi in enumerate(ctx.Xi.T):
        lhs = np.einsum("lkij,k,i,j->l", ctx.geom.riemann, Y, X, xi)
        rhs = np.einsum("a,akj,j->k", X, ctx.nabla_T[i], Y)
        res = max(res, float(np.max(np.abs(lhs - rhs))))
    return res


def _nabla_t_vertical(ctx, v):
    X = v["X"]
    res = 0.0
    for i in range(ctx.bundle.r):
        for j, xj in enumerate(ctx.Xi.T):
            lhs = np.einsum("a,akj,j->k", X, ctx.nabla_T[i], xj)
            res = max(res, float(np.max(np.abs(lhs + ctx.T[i] @ (ctx.T[j] @ X)))))
    return res


def trace_nabla_t(ctx: Context) -> np.ndarray:
    """tr_g ∇T_i as (r, dim)."""
    return np.einsum("ab,iakb->ik", ctx.geom.ginv, ctx.nabla_T)


def _ricci_corollary(ctx, v):
    X = v["X"]
    tr = trace_nabla_t(ctx)
    res = 0.0
    for i, xi in enumerate(ctx.Xi.T):
        res = max(res, abs(xi @ ctx.geom.ricci @ X + X @ ctx.geom.g @ tr[i]))
    return float(res)


def _codifferential(ctx, v):
    b = ctx.bundle
    return max(
        float(np.max(np.abs(geo.codifferential_two_form(b.base_metric, b.base_two_form_field(i), ctx.base_point))))
        for i in range(b.r)
    )


def _mixed_ricci_lift(ctx, v):
    Xh = ctx.lift(v["X"])
    return float(np.max(np.abs(ctx.Xi.T @ ctx.geom.ricci @ Xh)))


def _ricci_applicable(plan, solve):
    return (
        solve is not None
        and solve.x is not None
        and plan.bundle.is_standard
        and np.allclose(solve.x, plan.spec.x, rtol=1e-12, atol=0)
    )


def _horizontal_block(ctx, v):
    F = ctx.lifted_frame
    return float(np.max(np.abs(F.T @ ctx.geom.ricci @ F - ctx.solve.mu * np.eye(F.shape[1]))))


def _vertical_block(ctx, v):
    Lam = lambda_matrix(MuSystem.from_spec(ctx.plan.spec), ctx.plan.spec.x)
    return float(np.max(np.abs(ctx.Xi.T @ ctx.geom.ricci @ ctx.Xi - Lam)))


def _mixed_block(ctx, v):
    return float(np.max(np.abs(ctx.lifted_frame.T @ ctx.geom.ricci @ ctx.Xi)))


def _eigenbasis(ctx, v):
    Z = ctx.Xi @ np.asarray(ctx.solve.zeta)
    lam = np.asarray(ctx.solve.lam)
    return float(np.max(np.abs(ctx.geom.ricci @ Z - ctx.geom.g @ Z * lam)))


def base_t_tensors(ctx: Context) -> np.ndarray:
    """T̃_i on the base: closed form for the standard bundle, projected ∇ξ^i otherwise."""
    b = ctx.bundle
    if b.is_standard:
        return b.closed_form_ts()
    n = b.base_dim
    lifts = np.stack([ctx.lift(e) for e in np.eye(n)], axis=1)
    return np.einsum("ikj,jl->ikl", ctx.T, lifts)[:, :n, :]


def besse_rhs(ctx: Context, X, Y, weights: np.ndarray) -> float:
    Tt = base_t_tensors(ctx)
    rho_b = X @ ctx.base_ricci @ Y
    TX = np.stack([t @ X for t in Tt])
    TY = np.stack([t @ Y for t in Tt])
    corr = np.einsum("ij,ia,ab,jb->", weights, TX, ctx.h, TY)
    return float(rho_b - 2 * corr)


def _besse(ctx, v):
    X, Y = v["X"], v["Y"]
    lhs = ctx.lift(X) @ ctx.geom.ricci @ ctx.lift(Y)
    return abs(lhs - besse_rhs(ctx, X, Y, ctx.plan.spec.b_inv))


def _oneill_formula(ctx, v):
    E, F = v["E"], v["F"]
    b = ctx.bundle
    return float(np.max(np.abs(b.oneill_A(ctx.point, E, F, ctx.geom) - b.oneill_A_definitional(ctx.point, E, F))))


def _oneill_literal(ctx, v):
    E, F = v["E"], v["F"]
    b = ctx.bundle
    return float(np.max(np.abs(b.oneill_A_literal(ctx.point, E, F, ctx.geom) - b.oneill_A_definitional(ctx.point, E, F))))


def _identity_b(plan, solve):
    return plan.bundle.is_standard and np.array_equal(plan.spec.b, np.eye(plan.spec.r))


def _totally_geodesic(ctx, v):
    H, _ = ctx.bundle.projections(ctx.point)
    n = ctx.bundle.base_dim
    G = ctx.geom.gamma[:, n:, n:]  # ∇_{ξ^i} ξ^j = Γ^k_{t_i t_j}
    return float(np.max(np.abs(np.einsum("ak,kij->aij", H, G))))


def _oneill_antisymmetry(ctx, v):
    X, Y = ctx.lift(v["X"]), ctx.lift(v["Y"])
    b = ctx.bundle
    return float(np.max(np.abs(b.oneill_A(ctx.point, X, Y, ctx.geom) + b.oneill_A(ctx.point, Y, X, ctx.geom))))


def _cyclic(ctx, v):
    return abs(geo.cyclic_sum(ctx.geom.nabla_ricci, v["X"], v["Y"], v["Z"]))


def _diagonal(ctx, v):
    X = v["X"]
    return abs(geo.nabla_ricci_contract(ctx.geom.nabla_ricci, X, X, X))


CHECKS: dict[str, list[SubCheck]] = {
    "killing": [SubCheck("lie_derivative_xi", _killing, tol="derivative")],
    "lemma_identities": [
        SubCheck("t_kills_vertical", _t_kills_vertical),
        SubCheck("curvature_lemma", _curvature_lemma, (("X", "g"), ("Y", "g"))),
        SubCheck("nabla_t_vertical", _nabla_t_vertical, (("X", "g"),)),
        SubCheck("ricci_corollary", _ricci_corollary, (("X", "g"),)),
    ],
    "harmonicity": [
        SubCheck("codifferential", _codifferential),
        SubCheck("mixed_ricci", _mixed_ricci_lift, (("X", "h"),)),
    ],
    "ricci_structure": [
        SubCheck("horizontal_block", _horizontal_block, applicable=_ricci_applicable),
        SubCheck("vertical_block", _vertical_block, applicable=_ricci_applicable),
        SubCheck("mixed_block", _mixed_block, applicable=_ricci_applicable),
        SubCheck("vertical_eigenbasis", _eigenbasis, applicable=_ricci_applicable),
    ],
    "besse_formula": [SubCheck("horizontal_ricci", _besse, (("X", "h"), ("Y", "h")))],
    "oneill": [
        SubCheck("formula_vs_definition", _oneill_formula, (("E", "g"), ("F", "g"))),
        SubCheck("literal_formula", _oneill_literal, (("E", "g"), ("F", "g")), applicable=_identity_b),
        SubCheck("totally_geodesic_fibers", _totally_geodesic),
        SubCheck("horizontal_antisymmetry", _oneill_antisymmetry, (("X", "h"), ("Y", "h"))),
    ],
    "a_condition": [
        SubCheck("cyclic_sum", _cyclic, (("X", "g"), ("Y", "g"), ("Z", "g"))),
        SubCheck("diagonal", _diagonal, (("X", "g"),)),
    ],
}


# ---------------------------------------------------------------------------
# running checks
# ---------------------------------------------------------------------------

def _tolerance(plan: VerificationPlan, sub: SubCheck) -> float:
    return plan.tol_derivative if sub.tol == "derivative" else plan.tol_primary


def run_check(plan: VerificationPlan, name: str, solve: SolveResult | None = None) -> CheckResult:
    check_index = CHECK_ORDER.index(name)
    subs = CHECKS[name]
    best = {s.name: (-1.0, None) for s in subs}
    active = [s for s in subs if s.applicable(plan, solve)]
    for k in range(plan.samples):
        rng = np.random.default_rng([plan.seed, check_index, k])
        point = sample_point(plan.bundle, rng)
        if not active:
            break
        ctx = Context(plan, point, solve)
        for sub in active:
            vecs = _draw_vectors(ctx, sub, rng)
            res = float(sub.fn(ctx, vecs))
            if not np.isfinite(res):
                res = float("inf")
            if res > best[sub.name][0]:
                best[sub.name] = (
                    res,
                    {"point": point.tolist(), "vectors": {key: val.tolist() for key, val in vecs.items()}, "sample": k},
                )
    results = []
    for sub in subs:
        tol = _tolerance(plan, sub)
        if sub not in active:
            results.append(CheckResult(sub.name, float("nan"), tol, 0, "not_applicable"))
            continue
        res, wit = best[sub.name]
        results.append(CheckResult(sub.name, res, tol, plan.samples, _verdict(res, tol), wit))
    applicable = [r for r in results if r.verdict != "not_applicable"]
    if not applicable:
        return CheckResult(name, float("nan"), plan.tol_primary, 0, "not_applicable", None, results)
    worst = max(applicable, key=lambda r: r.max_residual / r.tolerance)
    verdict = "pass" if all(r.verdict == "pass" for r in applicable) else "fail"
    witness = None if worst.witness is None else {**worst.witness, "subcheck": worst.name}
    return CheckResult(
        name, max(r.max_residual for r in applicable), worst.tolerance, plan.samples, verdict, witness, results
    )


def reevaluate(plan: VerificationPlan, check: str, subcheck: str, witness: dict, solve: SolveResult | None = None) -> float:
    """Recompute a sub-check residual at a stored witness."""
    sub = next(s for s in CHECKS[check] if s.name == subcheck)
    ctx = Context(plan, np.asarray(witness["point"], dtype=float), solve)
    vecs = {k: np.asarray(v, dtype=float) for k, v in witness["vectors"].items()}
    return float(sub.fn(ctx, vecs))


def check_killing(plan):
    return run_check(plan, "killing")


def check_lemma_identities(plan):
    return run_check(plan, "lemma_identities")


def check_harmonicity(plan):
    return run_check(plan, "harmonicity")


def check_ricci_structure(plan, solve):
    result = run_check(plan, "ricci_structure", solve)
    if result.verdict != "not_applicable":
        # spectrum of the Ricci endomorphism straight from the total-space metric
        spectra = []
        for k in range(plan.samples):
            rng = np.random.default_rng([plan.seed, CHECK_ORDER.index("ricci_structure"), k])
            geom = plan.bundle.metric.at(sample_point(plan.bundle, rng), plan.curvature_sign)
            spectra.append(np.sort(np.linalg.eigvals(geom.ricci_endomorphism()).real))
        spectra = np.array(spectra)
        expected = np.sort(np.concatenate([np.full(plan.spec.base_dim, solve.mu), solve.lam]))
        result.info["ricci_eigenvalues"] = expected.tolist()
        result.info["eigenvalue_deviation"] = float(np.max(np.abs(spectra - expected)))
        result.info["einstein"] = bool(np.max(np.abs(spectra - solve.mu)) < plan.tol_primary)
    return result


def check_besse_formula(plan):
    result = run_check(plan, "besse_formula")
    if plan.bundle.is_standard and result.witness is not None:
        # how far the b-weighted variant Σ b_ij g(T_i X, T_j Y) is from the direct Ricci
        ctx = Context(plan, np.asarray(result.witness["point"]))
        X, Y = (np.asarray(result.witness["vectors"][k]) for k in ("X", "Y"))
        lhs = ctx.lift(X) @ ctx.geom.ricci @ ctx.lift(Y)
        result.info["b_weighted_variant_residual_at_witness"] = float(abs(lhs - besse_rhs(ctx, X, Y, plan.spec.b)))
    return result


def check_a_condition(plan):
    return run_check(plan, "a_condition")


def check_oneill(plan):
    return run_check(plan, "oneill")


def default_solve(plan: VerificationPlan) -> SolveResult | None:
    if not plan.bundle.is_standard:
        return None
    return evaluate_at(MuSystem.from_spec(plan.spec), plan.spec.x)


def run_full_suite(plan: VerificationPlan, solve: SolveResult | None = None) -> tuple[list[CheckResult], str]:
    solve = default_solve(plan) if solve is None else solve
    results = [
        check_killing(plan),
        check_lemma_identities(plan),
        check_harmonicity(plan),
        check_ricci_structure(plan, solve),
        check_besse_formula(plan),
        check_oneill(plan),
        check_a_condition(plan),
    ]
    applicable = [r for r in results if r.verdict != "not_applicable"]
    summary = "pass" if all(r.passed for r in applicable) else "fail"
    return results, summary


def perturbed_base_overrides(spec: BundleSpec, eps: float = 0.1) -> dict:
    """Replace h by the conformal perturbation (1 + eps·u_1²)·h."""
    base = spec.base

    def perturbed(ub):
        return (1.0 + eps * ub[0] ** 2) * base.metric_jax(ub)

    return {"base_metric_fn": perturbed}


def perturbed_base_control(ns=(1,), x=None, eps: float = 0.1, **plan_kw) -> VerificationPlan:
    """Negative control: trivial bundle (a = 0) over a conformally perturbed base."""
    spec = BundleSpec.build(list(ns), np.zeros((1, len(ns))), [[1.0]], x)
    return VerificationPlan(spec, bundle_overrides=perturbed_base_overrides(spec, eps), **plan_kw)


def pin_curvature_sign(spec: BundleSpec, samples: int = 20, seed: int = 0, tol: float = 1e-8) -> dict:
    """Residual of R(X,ξ)Y = ∇T(X,Y) under both curvature signs."""
    out = {}
    for sign in (1.0, -1.0):
        plan = VerificationPlan(spec, seed=seed, samples=samples, tol_primary=tol, curvature_sign=sign)
        sub = next(r for r in check_lemma_identities(plan).subchecks if r.name == "curvature_lemma")
        out[sign] = sub
    return out


def conventions() -> dict:
    return {
        "curvature_sign": 1,
        "curvature": geo.CURVATURE_CONVENTION,
        "ricci": "ρ_ij = R^k_ikj",
        "exterior_derivative": geo.EXTERIOR_CONVENTION,
        "kahler_form": "η(X,Y) = g(JX,Y), J∂_x = ∂_y",
        "killing_identity": "R(X,ξ)Y = (∇_X ∇ξ)Y",
    }
