"""Chart-based tensor calculus on top of JAX forward-mode differentiation.

A metric is a JAX-traceable callable ``u -> (d, d)`` on chart coordinates.
Every derivative used below (up to third order in the metric, needed by the
covariant derivative of the Ricci tensor) is obtained by nested ``jacfwd``, so
the results are exact up to floating point round-off. Finite differences only
appear in the test suite, as independent oracles.

Index conventions
-----------------
* ``gamma[k, i, j] = Γ^k_ij``
* ``riemann[l, k, i, j] = R^l_kij``, the components of
  ``R(∂_i, ∂_j)∂_k = ∇_i∇_j∂_k - ∇_j∇_i∂_k``
* ``ricci[i, j] = R^k_ikj``
* ``nabla_ricci[k, i, j] = ∇_k ρ_ij``
* ``(dω)_ij = ∂_i ω_j - ∂_j ω_i`` (no factor 1/2)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

jax.config.update("jax_enable_x64", True)

ArrayFn = Callable[[jax.Array], jax.Array]

MAX_CONDITION = 1e8

CURVATURE_CONVENTION = "R(X,Y)Z = [∇_X,∇_Y]Z - ∇_[X,Y]Z; R^l_kij = ∂_iΓ^l_jk - ∂_jΓ^l_ik + Γ^l_im Γ^m_jk - Γ^l_jm Γ^m_ik"
EXTERIOR_CONVENTION = "(dω)_ij = ∂_i ω_j - ∂_j ω_i (no 1/2 factor)"


class DegenerateMetricError(ValueError):
    """Raised when the metric is singular or too ill-conditioned at a point."""


@dataclass(frozen=True)
class TensorValue:
    """Components of a tensor at a point plus the role of each index."""

    components: np.ndarray
    roles: tuple[str, ...]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)

    def __getitem__(self, item):
        return self.components[item]

    @property
    def shape(self):
        return self.components.shape


def as_point(p, dim: int) -> jax.Array:
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (dim,):
        raise ValueError(f"chart point must have length {dim}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("chart point has non-finite entries")
    return jnp.asarray(arr)


# ---------------------------------------------------------------------------
# pure JAX kernels (traceable, no validation)
# ---------------------------------------------------------------------------

def christoffel_fn(metric: ArrayFn) -> ArrayFn:
    def gamma(u):
        g = metric(u)
        ginv = jnp.linalg.inv(g)
        dg = jax.jacfwd(metric)(u)  # dg[i, j, l] = ∂_l g_ij
        # lowered[l, i, j] = ∂_i g_jl + ∂_j g_il - ∂_l g_ij
        lowered = (
            jnp.einsum("jli->lij", dg)
            + jnp.einsum("ilj->lij", dg)
            - jnp.einsum("ijl->lij", dg)
        )
        return 0.5 * jnp.einsum("kl,lij->kij", ginv, lowered)

    return gamma


def riemann_fn(metric: ArrayFn, sign: float = 1.0) -> ArrayFn:
    gamma = christoffel_fn(metric)

    def riem(u):
        G = gamma(u)
        dG = jax.jacfwd(gamma)(u)  # dG[l, j, k, i] = ∂_i Γ^l_jk
        R = (
            jnp.einsum("ljki->lkij", dG)
            - jnp.einsum("likj->lkij", dG)
            + jnp.einsum("lim,mjk->lkij", G, G)
            - jnp.einsum("ljm,mik->lkij", G, G)
        )
        return sign * R

    return riem


def ricci_fn(metric: ArrayFn, sign: float = 1.0) -> ArrayFn:
    riem = riemann_fn(metric, sign)

    def ric(u):
        return jnp.einsum("kikj->ij", riem(u))

    return ric


def nabla_ricci_fn(metric: ArrayFn, sign: float = 1.0) -> ArrayFn:
    gamma = christoffel_fn(metric)
    ric = ricci_fn(metric, sign)

    def nric(u):
        G = gamma(u)
        rho = ric(u)
        drho = jnp.moveaxis(jax.jacfwd(ric)(u), -1, 0)  # drho[k, i, j] = ∂_k ρ_ij
        return (
            drho
            - jnp.einsum("mki,mj->kij", G, rho)
            - jnp.einsum("mkj,im->kij", G, rho)
        )

    return nric


def scalar_curvature_fn(metric: ArrayFn, sign: float = 1.0) -> ArrayFn:
    ric = ricci_fn(metric, sign)

    def scal(u):
        return jnp.einsum("ij,ij->", jnp.linalg.inv(metric(u)), ric(u))

    return scal


# ---------------------------------------------------------------------------
# metric field + pointwise snapshot
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointGeometry:
    """Everything the verifier needs at one chart point, computed in one pass."""

    point: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    dg: np.ndarray  # dg[i, j, k] = ∂_k g_ij
    gamma: np.ndarray
    dgamma: np.ndarray  # dgamma[l, j, k, i] = ∂_i Γ^l_jk
    riemann: np.ndarray
    ricci: np.ndarray
    nabla_ricci: np.ndarray
    curvature_sign: float = 1.0

    @property
    def dim(self) -> int:
        return self.g.shape[0]

    def inner(self, X, Y) -> float:
        return float(X @ self.g @ Y)

    def ricci_endomorphism(self) -> np.ndarray:
        return self.ginv @ self.ricci

    def nabla_vector(self, V: np.ndarray, dV: np.ndarray) -> np.ndarray:
        """(∇V)^k_j for a field with value V and Jacobian dV[k, j] = ∂_j V^k."""
        return dV + np.einsum("kjm,m->kj", self.gamma, V)

    def nabla_constant_field(self, V: np.ndarray) -> np.ndarray:
        return np.einsum("kjm,m->kj", self.gamma, V)

    def nabla2_constant_field(self, V: np.ndarray) -> np.ndarray:
        """(∇_a ∇V)^k_j for a field with constant chart components V.

        Returned with layout ``[a, k, j]`` so that ``(∇_X T)(Y) = X^a out[a] @ Y``.
        """
        M = self.nabla_constant_field(V)
        dM = np.einsum("kjma,m->akj", self.dgamma, V)
        return (
            dM
            + np.einsum("kam,mj->akj", self.gamma, M)
            - np.einsum("maj,km->akj", self.gamma, M)
        )


@dataclass(frozen=True, eq=False)
class MetricField:
    """A Riemannian metric given on a chart by a JAX-traceable function.

    ``fn`` maps a coordinate vector of length ``dim`` to a symmetric positive
    definite ``(dim, dim)`` matrix. Compiled curvature kernels are cached on the
    instance, so reuse the same object across many points.
    """

    dim: int
    fn: ArrayFn = field(repr=False)
    name: str = "metric"

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self._metric_kernel(as_point(p, self.dim)))

    @cached_property
    def _metric_kernel(self):
        return compile_kernel(self.fn)

    def _snapshot_kernel(self, sign: float):
        return _snapshot_kernel(self, float(sign))

    def validate(self, p) -> np.ndarray:
        """Return g(p) after checking symmetry, definiteness and conditioning."""
        G = self(p)
        if not np.allclose(G, G.T, atol=1e-14, rtol=0):
            raise DegenerateMetricError("metric matrix is not symmetric")
        evals = np.linalg.eigvalsh(G)
        if evals[0] <= 0 or not np.all(np.isfinite(evals)):
            raise DegenerateMetricError("degenerate metric at point")
        if evals[-1] / evals[0] > MAX_CONDITION:
            raise DegenerateMetricError(
                f"degenerate metric at point (condition number {evals[-1] / evals[0]:.3g})"
            )
        return G

    def at(self, p, curvature_sign: float = 1.0) -> PointGeometry:
        self.validate(p)
        u = as_point(p, self.dim)
        out = self._snapshot_kernel(curvature_sign)(u)
        out = {k: np.asarray(v) for k, v in out.items()}
        return PointGeometry(point=np.asarray(u), curvature_sign=float(curvature_sign), **out)


def _lower(t: jax.Array, pre: str) -> jax.Array:
    """L[..., l, i, j] = 1/2 (∂_i g_jl + ∂_j g_il - ∂_l g_ij) from t[..., a, i, j] = ∂_a g_ij."""
    return 0.5 * (
        jnp.einsum(f"{pre}ijl->{pre}lij", t)
        + jnp.einsum(f"{pre}jil->{pre}lij", t)
        - jnp.einsum(f"{pre}lij->{pre}lij", t)
    )


def jet_curvature_fn(metric: ArrayFn, sign: float = 1.0) -> ArrayFn:
    """Curvature up to ∇ρ assembled from one third-order jet of the metric.

    Cheaper to compile than nesting ``jacfwd`` through the Christoffel and
    Ricci functions, and algebraically identical.
    """
    d1 = jax.jacfwd(metric)
    d2 = jax.jacfwd(d1)
    d3 = jax.jacfwd(d2)

    def snap(u):
        g = metric(u)
        g1 = jnp.moveaxis(d1(u), -1, 0)  # g1[a, i, j] = ∂_a g_ij
        g2 = jnp.moveaxis(d2(u), (-2, -1), (0, 1))
        g3 = jnp.moveaxis(d3(u), (-3, -2, -1), (0, 1, 2))
        gi = jnp.linalg.inv(g)
        L, L1, L2 = _lower(g1, ""), _lower(g2, "a"), _lower(g3, "ab")
        gi1 = -jnp.einsum("km,amn,nl->akl", gi, g1, gi)
        gi2 = (
            jnp.einsum("km,bmn,np,apq,ql->abkl", gi, g1, gi, g1, gi)
            + jnp.einsum("km,amn,np,bpq,ql->abkl", gi, g1, gi, g1, gi)
            - jnp.einsum("km,abmn,nl->abkl", gi, g2, gi)
        )
        G = jnp.einsum("kl,lij->kij", gi, L)
        G1 = jnp.einsum("akl,lij->akij", gi1, L) + jnp.einsum("kl,alij->akij", gi, L1)
        G2 = (
            jnp.einsum("abkl,lij->abkij", gi2, L)
            + jnp.einsum("akl,blij->abkij", gi1, L1)
            + jnp.einsum("bkl,alij->abkij", gi1, L1)
            + jnp.einsum("kl,ablij->abkij", gi, L2)
        )
        R = sign * (
            jnp.einsum("iljk->lkij", G1)
            - jnp.einsum("jlik->lkij", G1)
            + jnp.einsum("lim,mjk->lkij", G, G)
            - jnp.einsum("ljm,mik->lkij", G, G)
        )
        R1 = sign * (
            jnp.einsum("ailjk->alkij", G2)
            - jnp.einsum("ajlik->alkij", G2)
            + jnp.einsum("alim,mjk->alkij", G1, G)
            + jnp.einsum("lim,amjk->alkij", G, G1)
            - jnp.einsum("aljm,mik->alkij", G1, G)
            - jnp.einsum("ljm,amik->alkij", G, G1)
        )
        rho = jnp.einsum("kikj->ij", R)
        drho = jnp.einsum("akikj->aij", R1)
        nrho = (
            drho
            - jnp.einsum("mki,mj->kij", G, rho)
            - jnp.einsum("mkj,im->kij", G, rho)
        )
        return {
            "g": g,
            "ginv": gi,
            "dg": jnp.moveaxis(g1, 0, -1),
            "gamma": G,
            "dgamma": jnp.moveaxis(G1, 0, -1),
            "riemann": R,
            "ricci": rho,
            "nabla_ricci": nrho,
        }

    return snap


# Kernels run on tiny arrays, so compile time dominates; skip backend optimisation.
_COMPILER_OPTIONS = {"xla_backend_optimization_level": 0}


def compile_kernel(fn: ArrayFn) -> ArrayFn:
    return jax.jit(fn, compiler_options=_COMPILER_OPTIONS)


@lru_cache(maxsize=None)
def _snapshot_kernel(metric: MetricField, sign: float):
    return compile_kernel(jet_curvature_fn(metric.fn, sign))


@lru_cache(maxsize=None)
def _jit(builder: Callable, *fns_and_statics):
    return compile_kernel(builder(*fns_and_statics))


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def christoffel(g: MetricField, p) -> TensorValue:
    g.validate(p)
    G = _jit(christoffel_fn, g.fn)(as_point(p, g.dim))
    return TensorValue(np.asarray(G), ("upper", "lower", "lower"))


def riemann(g: MetricField, p, curvature_sign: float = 1.0) -> TensorValue:
    return TensorValue(g.at(p, curvature_sign).riemann, ("upper", "lower", "lower", "lower"))


def ricci(g: MetricField, p, curvature_sign: float = 1.0) -> TensorValue:
    return TensorValue(g.at(p, curvature_sign).ricci, ("lower", "lower"))


def ricci_only(g: MetricField, p, curvature_sign: float = 1.0) -> np.ndarray:
    """Ricci from second derivatives alone; cheaper to compile than a full snapshot."""
    g.validate(p)
    return np.asarray(_jit(ricci_fn, g.fn, float(curvature_sign))(as_point(p, g.dim)))


def ricci_endomorphism(g: MetricField, p) -> np.ndarray:
    return g.at(p).ricci_endomorphism()


def scalar_curvature(g: MetricField, p) -> float:
    g.validate(p)
    return float(_jit(scalar_curvature_fn, g.fn)(as_point(p, g.dim)))


def cov_deriv_ricci(g: MetricField, p) -> TensorValue:
    return TensorValue(g.at(p).nabla_ricci, ("lower", "lower", "lower"))


def nabla_ricci_contract(nabla_ricci: np.ndarray, X, Y, Z) -> float:
    """∇ρ(X, Y, Z) = (∇_X ρ)(Y, Z)."""
    return float(np.einsum("kij,k,i,j->", nabla_ricci, X, Y, Z))


def cyclic_sum(nabla_ricci: np.ndarray, X, Y, Z) -> float:
    return (
        nabla_ricci_contract(nabla_ricci, X, Y, Z)
        + nabla_ricci_contract(nabla_ricci, Y, Z, X)
        + nabla_ricci_contract(nabla_ricci, Z, X, Y)
    )


def cyclic_sum_nabla_ricci(g: MetricField, p, X, Y, Z) -> float:
    """g(∇ric(X,Y),Z) + g(∇ric(Y,Z),X) + g(∇ric(Z,X),Y)."""
    return cyclic_sum(g.at(p).nabla_ricci, np.asarray(X), np.asarray(Y), np.asarray(Z))


def _lie_metric_fn(metric: ArrayFn, V: ArrayFn) -> ArrayFn:
    def lie(u):
        g = metric(u)
        dg = jax.jacfwd(metric)(u)
        v = V(u)
        dV = jax.jacfwd(V)(u)  # dV[k, i] = ∂_i V^k
        return (
            jnp.einsum("k,ijk->ij", v, dg)
            + jnp.einsum("kj,ki->ij", g, dV)
            + jnp.einsum("ik,kj->ij", g, dV)
        )

    return lie


def lie_derivative_metric(g: MetricField, V: ArrayFn, p) -> np.ndarray:
    """(L_V g)_ij = V^k ∂_k g_ij + g_kj ∂_i V^k + g_ik ∂_j V^k."""
    return np.asarray(_jit(_lie_metric_fn, g.fn, V)(as_point(p, g.dim)))


def _d_one_form_fn(w: ArrayFn) -> ArrayFn:
    def d(u):
        J = jax.jacfwd(w)(u)  # J[i, j] = ∂_j w_i
        return J.T - J

    return d


def exterior_derivative_one_form(w: ArrayFn, p, dim: int | None = None) -> np.ndarray:
    u = jnp.asarray(np.asarray(p, dtype=np.float64))
    if dim is not None:
        u = as_point(p, dim)
    return np.asarray(_jit(_d_one_form_fn, w)(u))


def _d_two_form_fn(w: ArrayFn) -> ArrayFn:
    def d(u):
        J = jax.jacfwd(w)(u)  # J[i, j, k] = ∂_k w_ij
        return (
            jnp.einsum("jki->ijk", J)
            + jnp.einsum("kij->ijk", J)
            + jnp.einsum("ijk->ijk", J)
        )

    return d


def exterior_derivative_two_form(w: ArrayFn, p) -> np.ndarray:
    """(dω)_ijk = ∂_i ω_jk + ∂_j ω_ki + ∂_k ω_ij."""
    return np.asarray(_jit(_d_two_form_fn, w)(jnp.asarray(np.asarray(p, dtype=np.float64))))


def orthonormal_frame(G: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the coordinate frame; columns are the frame vectors."""
    L = np.linalg.cholesky(G)
    return np.linalg.inv(L.T)


def _nabla_two_form_fn(metric: ArrayFn, w: ArrayFn) -> ArrayFn:
    gamma = christoffel_fn(metric)

    def nab(u):
        G = gamma(u)
        om = w(u)
        dom = jnp.moveaxis(jax.jacfwd(w)(u), -1, 0)  # dom[a, b, c] = ∂_a ω_bc
        return (
            dom
            - jnp.einsum("mab,mc->abc", G, om)
            - jnp.einsum("mac,bm->abc", G, om)
        )

    return nab


def nabla_two_form(g: MetricField, w: ArrayFn, p) -> np.ndarray:
    """(∇_a ω)_bc with layout [a, b, c]."""
    return np.asarray(_jit(_nabla_two_form_fn, g.fn, w)(as_point(p, g.dim)))


def codifferential_two_form(g: MetricField, w: ArrayFn, p, frame: np.ndarray | None = None) -> np.ndarray:
    """δω(X) = -Σ_k (∇_{E_k} ω)(E_k, X) over a g-orthonormal frame E.

    Returns the covector components δω(∂_c). The frame defaults to Gram-Schmidt
    on the coordinate frame.
    """
    G = g.validate(p)
    E = orthonormal_frame(G) if frame is None else np.asarray(frame)
    nab = nabla_two_form(g, w, p)
    return -np.einsum("ak,bk,abc->c", E, E, nab)
