"""Scale equations for the horizontal Ricci eigenvalue and the vertical spectrum.

For an h-unit vector in factor j the horizontal Ricci curvature of the bundle
metric is

    μ_j(x) = q_j / x_j - k_j / (2 x_j²),   k_j = (cᵀ b⁻¹ c)_jj = (aᵀ b a)_jj,

and the construction needs μ_1 = ... = μ_m = μ. With b = Id the weight reduces
to Σ_i c_ij², which is also Σ_ik b_ik c_ij c_kj. For general b only the first
form matches the curvature computed directly from the metric.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

STRATEGIES = ("newton", "alpha_reduction", "sweep")


def c_matrix(b, a) -> np.ndarray:
    b = np.atleast_2d(np.asarray(b, dtype=float))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if b.shape[1] != a.shape[0]:
        raise ValueError(f"dimension mismatch: b is {b.shape}, a is {a.shape}")
    return b @ a


@dataclass(frozen=True)
class MuSystem:
    q: np.ndarray
    n_real: np.ndarray
    c: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("q", "n_real", "c", "b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "c", np.atleast_2d(self.c))
        object.__setattr__(self, "b", np.atleast_2d(self.b))
        m = len(self.q)
        r = self.b.shape[0]
        if self.n_real.shape != (m,) or self.c.shape != (r, m) or self.b.shape != (r, r):
            raise ValueError("inconsistent MuSystem dimensions")

    @classmethod
    def from_arrays(cls, ns, a, b) -> "MuSystem":
        ns = np.asarray(ns, dtype=int)
        return cls(q=ns + 1, n_real=2 * ns, c=c_matrix(b, a), b=b)

    @classmethod
    def from_spec(cls, spec) -> "MuSystem":
        return cls(q=spec.base.q, n_real=spec.base.n_real, c=spec.c, b=spec.b)

    @property
    def m(self) -> int:
        return len(self.q)

    @property
    def r(self) -> int:
        return self.b.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """k_j = (cᵀ b⁻¹ c)_jj."""
        return np.einsum("ij,ik,kj->j", self.c, np.linalg.inv(self.b), self.c)

    @property
    def literal_weights(self) -> np.ndarray:
        """Σ_ik b_ik c_ij c_kj; equals ``weights`` only when b = Id."""
        return np.einsum("ij,ik,kj->j", self.c, self.b, self.c)

    def factor_mu(self, x) -> np.ndarray:
        x = _check_scales(x, self.m)
        return self.q / x - 0.5 * self.weights / x**2


@dataclass
class SolveResult:
    x: np.ndarray
    mu: float
    lam: np.ndarray
    zeta: np.ndarray
    residual: float
    status: str
    strategy: str
    einstein: bool = False
    feasible: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("x", "lam", "zeta"):
            d[k] = None if d[k] is None else np.asarray(d[k]).tolist()
        d["mu"] = None if self.mu is None or not np.isfinite(self.mu) else float(self.mu)
        d["residual"] = None if not np.isfinite(self.residual) else float(self.residual)
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _check_scales(x, m: int) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (m,):
        raise ValueError(f"expected {m} scales, got shape {x.shape}")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise ValueError(f"invalid scale: all x_j must be positive, got {x.tolist()}")
    return x


def mu_residuals(sys: MuSystem, x, mu: float) -> np.ndarray:
    """F_j = q_j/x_j - k_j/(2 x_j²) - μ."""
    return sys.factor_mu(x) - mu


def lambda_matrix(sys: MuSystem, x) -> np.ndarray:
    """Vertical Ricci block in the ξ-frame: Λ_il = Σ_j n_j c_ij c_lj / (4 x_j²), n_j real dims."""
    x = _check_scales(x, sys.m)
    return np.einsum("j,ij,lj->il", sys.n_real / (4 * x**2), sys.c, sys.c)


def vertical_eigenbasis(sys: MuSystem, x) -> tuple[np.ndarray, np.ndarray]:
    """Solve Λ v = λ b v; columns of zeta are b-orthonormal, λ ascending."""
    lam, zeta = scipy.linalg.eigh(lambda_matrix(sys, x), sys.b)
    return lam, zeta


def alpha_feasibility(sys: MuSystem, alpha) -> dict:
    """Sign analysis of the reduced equations with x_s = α_s x_1.

    Each s yields x_1 = (α_s² k_1 - k_s) / (2 α_s (α_s q_1 - q_s)), which is
    positive iff numerator and denominator share a sign (``both_greater``:
    α_s² > k_s/k_1 and α_s > q_s/q_1, ``both_smaller``: the reverse). The
    per-pair ratios c_ks c_is / (c_k1 c_i1) are reported alongside.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if alpha.shape != (sys.m - 1,):
        raise ValueError(f"need {sys.m - 1} alpha values, got {alpha.shape}")
    k = sys.weights
    entries = []
    for s, a_s in enumerate(alpha, start=1):
        pairs = {}
        for i in range(sys.r):
            for kk in range(sys.r):
                den = sys.c[kk, 0] * sys.c[i, 0]
                key = f"{i},{kk}"
                pairs[key] = "not_applicable" if den == 0 else float(sys.c[kk, s] * sys.c[i, s] / den)
        numerator = a_s**2 * k[0] - k[s]
        denominator = a_s * (a_s * sys.q[0] - sys.q[s])
        if a_s <= 0:
            branch = "invalid_alpha"
        elif denominator == 0:
            branch = "denominator_vanishes"
        elif numerator > 0 and denominator > 0:
            branch = "both_greater"
        elif numerator < 0 and denominator < 0:
            branch = "both_smaller"
        else:
            branch = "none"
        entries.append(
            {
                "s": s + 1,
                "alpha": float(a_s),
                "q_ratio": float(sys.q[s] / sys.q[0]),
                "weight_ratio": float(k[s] / k[0]) if k[0] != 0 else "not_applicable",
                "pair_ratios": pairs,
                "branch": branch,
            }
        )
    feasible = all(e["branch"] in ("both_greater", "both_smaller") for e in entries)
    return {"feasible": feasible, "entries": entries}


def _gauge_diagnostics(sys: MuSystem, x1: float) -> dict:
    k = sys.weights
    mu = sys.q[0] / x1 - 0.5 * k[0] / x1**2
    disc = sys.q**2 - 2 * mu * k
    blocked = []
    for s in range(1, sys.m):
        if k[s] == 0:
            if mu <= 0:
                blocked.append(s + 1)
        elif disc[s] < 0:
            blocked.append(s + 1)
    return {"gauge_x1": float(x1), "mu_at_gauge": float(mu), "discriminants": disc[1:].tolist(), "blocked_factors": blocked}


def _gauge_roots(sys: MuSystem, x1: float, root: str) -> np.ndarray | None:
    """Closed-form x_s given x_1, or None when some factor has no positive root."""
    k = sys.weights
    mu = sys.q[0] / x1 - 0.5 * k[0] / x1**2
    x = [x1]
    for s in range(1, sys.m):
        if k[s] == 0:
            if mu <= 0:
                return None
            x.append(sys.q[s] / mu)
            continue
        if mu == 0:
            x.append(0.5 * k[s] / sys.q[s])
            continue
        disc = sys.q[s] ** 2 - 2 * mu * k[s]
        if disc < 0:
            return None
        sq = np.sqrt(disc)
        cands = [v for v in ((sys.q[s] + sq) / (2 * mu), (sys.q[s] - sq) / (2 * mu)) if v > 0]
        if not cands:
            return None
        x.append(max(cands) if root == "larger" else min(cands))
    return np.array(x)


def _runs(grid, ok) -> list[list[float]]:
    runs, start = [], None
    for g, flag in zip(grid, ok):
        if flag and start is None:
            start = prev = float(g)
        elif flag:
            prev = float(g)
        elif start is not None:
            runs.append([start, prev])
            start = None
    if start is not None:
        runs.append([start, prev])
    return runs


def _finish(sys, x, mu, status, strategy, diagnostics, feasible=None, einstein_tol=1e-8) -> SolveResult:
    if x is None:
        return SolveResult(
            x=None, mu=float("nan"), lam=None, zeta=None, residual=float("inf"),
            status=status, strategy=strategy, feasible=feasible or {}, diagnostics=diagnostics,
        )
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        return SolveResult(
            x=x, mu=float(mu), lam=None, zeta=None, residual=float("inf"),
            status="infeasible" if status == "success" else status, strategy=strategy,
            feasible=feasible or {}, diagnostics={**diagnostics, "reason": "nonpositive scale"},
        )
    with np.errstate(over="ignore", invalid="ignore"):
        res = mu_residuals(sys, x, mu)
        residual = float(np.max(np.abs(res)))
        lam, zeta = vertical_eigenbasis(sys, x) if np.all(np.isfinite(x**2)) else (None, None)
    if status == "success" and (lam is None or not residual < 1e-8):
        status = "inaccurate"
        diagnostics = {**diagnostics, "reason": "residual not small at reported scales"}
    einstein = lam is not None and bool(np.all(np.abs(lam - mu) < einstein_tol)) and status == "success"
    return SolveResult(
        x=x, mu=float(mu), lam=lam, zeta=zeta, residual=residual, status=status,
        strategy=strategy, einstein=einstein, feasible=feasible or {}, diagnostics=diagnostics,
    )


def evaluate_at(sys: MuSystem, x, tol: float = 1e-10) -> SolveResult:
    """Treat given scales as a candidate solution; μ is read off factor 1."""
    x = _check_scales(x, sys.m)
    per_factor = sys.factor_mu(x)
    mu = float(per_factor[0])
    status = "success" if np.max(np.abs(per_factor - mu)) < tol else "off_solution"
    return _finish(sys, x, mu, status, "given", {"per_factor_mu": per_factor.tolist()})


def _newton(sys, x1, x0, mu0, tol, max_iter, damping):
    k = sys.weights
    x = np.array(x0, dtype=float)
    x[0] = x1
    mu = float(mu0)
    # μ_j(x) = q_j/x - k_j/(2x²) is monotone on either side of x = k_j/q_j, one
    # root per side; staying on the starting side keeps Newton on that branch
    crit = k / sys.q
    side = np.sign(x - crit)
    guarded = (k > 0) & (side != 0)
    guarded[0] = False
    history = []
    for it in range(max_iter + 1):
        F = sys.q / x - 0.5 * k / x**2 - mu
        err = float(np.max(np.abs(F)))
        history.append(err)
        if err < tol:
            return x, mu, "success", it, history
        if it == max_iter:
            break
        # unknowns: x_2..x_m, μ
        J = np.zeros((sys.m, sys.m))
        for j in range(1, sys.m):
            J[j, j - 1] = -sys.q[j] / x[j] ** 2 + k[j] / x[j] ** 3
        J[:, -1] = -1.0
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return x, mu, "diverged", it, history
        t = 1.0

        def rejected(t):
            trial = x[1:] + t * step[:-1]
            crossed = guarded[1:] & (np.sign(trial - crit[1:]) != side[1:])
            return np.any(trial <= 0) or np.any(crossed)

        while rejected(t):
            t *= damping
            if t < 1e-12:
                return x, mu, "diverged", it, history
        x[1:] += t * step[:-1]
        mu += t * step[-1]
        if not np.all(np.isfinite(x)) or not np.isfinite(mu) or np.max(x) > 1e100:
            return x, mu, "diverged", it, history
    return x, mu, "diverged", max_iter, history


def solve_mu_system(
    sys: MuSystem,
    strategy: str = "newton",
    *,
    x1: float = 1.0,
    alpha=None,
    x0=None,
    mu0=None,
    tol: float = 1e-12,
    max_iter: int = 100,
    damping: float = 0.5,
    x1_grid=None,
    root: str = "larger",
    positive_mu: bool = True,
    agree_tol: float = 1e-10,
) -> SolveResult:
    """Solve μ_1(x) = ... = μ_m(x) = μ for positive scales.

    Strategies:

    ``newton``
        Damped Newton in (x_2..x_m, μ) with x_1 fixed to ``x1``. A gauge at
        which some factor equation has no positive root (negative
        discriminant) is reported as ``infeasible`` before iterating.
    ``alpha_reduction``
        x_s = α_s x_1; every s gives a closed-form candidate for x_1 and the
        candidates must agree (``inconsistent`` otherwise).
    ``sweep``
        Scan x_1 over ``x1_grid`` and take the first gauge where all factor
        equations have a positive root (``root`` picks which one) and, with
        ``positive_mu``, μ > 0.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    k = sys.weights

    if strategy == "alpha_reduction":
        alpha = np.zeros(0) if alpha is None else np.atleast_1d(np.asarray(alpha, dtype=float))
        if sys.m == 1:
            return _finish(sys, [x1], sys.factor_mu([x1])[0], "success", strategy, {"note": "m = 1, gauge x1 used"})
        feas = alpha_feasibility(sys, alpha)
        candidates = []
        for s, a_s in enumerate(alpha, start=1):
            den = a_s * (a_s * sys.q[0] - sys.q[s])
            candidates.append(float("nan") if den == 0 else 0.5 * (a_s**2 * k[0] - k[s]) / den)
        cand = np.array(candidates)
        diag = {"x1_candidates": cand.tolist()}
        if not feas["feasible"] or np.any(~np.isfinite(cand)) or np.any(cand <= 0):
            return _finish(sys, None, None, "infeasible", strategy, diag, feas)
        spread = float(np.max(cand) - np.min(cand))
        diag["candidate_spread"] = spread
        if spread > agree_tol * max(1.0, float(np.max(np.abs(cand)))):
            return _finish(sys, None, None, "inconsistent", strategy, diag, feas)
        x_1 = float(cand[0])
        x = np.concatenate([[x_1], alpha * x_1])
        mu = sys.q[0] / x_1 - 0.5 * k[0] / x_1**2
        return _finish(sys, x, mu, "success", strategy, diag, feas)

    if strategy == "sweep":
        grid = np.geomspace(1e-2, 1e2, 801) if x1_grid is None else np.asarray(x1_grid, dtype=float)
        ok = [
            _gauge_roots(sys, g, root) is not None and (not positive_mu or sys.q[0] / g - 0.5 * k[0] / g**2 > 0)
            for g in grid
        ]
        diag = {"grid_size": len(grid), "feasible_intervals": _runs(grid, ok)}
        if not any(ok):
            return _finish(sys, None, None, "infeasible", strategy, diag)
        x = _gauge_roots(sys, grid[ok.index(True)], root)
        mu = sys.q[0] / x[0] - 0.5 * k[0] / x[0] ** 2
        # polish the closed form to full precision
        x, mu, status, iters, _ = _newton(sys, x[0], x, mu, tol, max_iter, damping)
        diag["newton_iterations"] = iters
        return _finish(sys, x, mu, status, strategy, diag)

    if not x1 > 0:
        raise ValueError("invalid scale: gauge x1 must be positive")
    diag = _gauge_diagnostics(sys, x1)
    if diag["blocked_factors"]:
        return _finish(sys, None, None, "infeasible", strategy, diag)
    if x0 is None:
        x0 = x1 * sys.q / sys.q[0]
    x0 = _check_scales(x0, sys.m)
    if mu0 is None:
        mu0 = diag["mu_at_gauge"]
    x, mu, status, iters, history = _newton(sys, x1, x0, mu0, tol, max_iter, damping)
    diag.update(iterations=iters, final_residual=history[-1])
    return _finish(sys, x, mu, status, strategy, diag)
