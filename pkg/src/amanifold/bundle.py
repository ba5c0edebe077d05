"""Principal T^r bundle over a product of CP^n factors, in one dense chart.

Total chart coordinates are ``(base coords..., t_1, ..., t_r)``. The connection
forms are θ^i = dt_i + Σ_j a_ij A_j with A_j the Kähler primitive of factor j,
and the metric is g = Σ b_ik θ^i θ^k + p*h.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .geometry import MetricField, PointGeometry, as_point, compile_kernel
from .ke_base import ProductBase


@dataclass(frozen=True, eq=False)
class BundleSpec:
    base: ProductBase
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape[1] != self.base.m:
            raise ValueError(f"a must have {self.base.m} columns (one per factor), got shape {a.shape}")
        if b.shape != (a.shape[0], a.shape[0]):
            raise ValueError(f"b must be {a.shape[0]}x{a.shape[0]}, got shape {b.shape}")
        if not np.array_equal(a, np.round(a)):
            raise ValueError("a must be integer")
        if not np.allclose(b, b.T, atol=1e-14, rtol=0):
            raise ValueError("b must be symmetric")
        if np.linalg.eigvalsh(b)[0] <= 0:
            raise ValueError("b not positive definite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def build(cls, ns, a, b, x=None) -> "BundleSpec":
        return cls(ProductBase.of(ns, x), a, b)

    @property
    def r(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def x(self) -> np.ndarray:
        return self.base.x

    @cached_property
    def c(self) -> np.ndarray:
        return self.b @ self.a

    @cached_property
    def b_inv(self) -> np.ndarray:
        return np.linalg.inv(self.b)

    @property
    def base_dim(self) -> int:
        return self.base.dim

    @property
    def dim(self) -> int:
        return self.base.dim + self.r

    def with_scales(self, x) -> "BundleSpec":
        return BundleSpec(self.base.with_scales(x), self.a, self.b)


@dataclass(eq=False)
class TorusBundle:
    """Geometry of the bundle metric.

    The optional overrides exist for negative controls: ``fiber_metric`` maps
    total coordinates to an r×r matrix replacing b, ``potentials`` maps base
    coordinates to the (r, base_dim) connection potentials, ``base_metric``
    maps base coordinates to a replacement for h.
    """

    spec: BundleSpec
    fiber_metric: Callable | None = None
    potentials: Callable | None = None
    base_metric_fn: Callable | None = None
    _xi: list = field(init=False, repr=False)
    _theta: list = field(init=False, repr=False)
    _omega: list = field(init=False, repr=False)

    def __post_init__(self):
        self._xi = [self._constant_field(self.base_dim + i) for i in range(self.r)]
        self._theta = [self._theta_component(i) for i in range(self.r)]
        self._omega = [self._omega_component(i) for i in range(self.r)]

    # -- shapes ----------------------------------------------------------------
    @property
    def r(self) -> int:
        return self.spec.r

    @property
    def base_dim(self) -> int:
        return self.spec.base_dim

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def is_standard(self) -> bool:
        return self.fiber_metric is None and self.potentials is None and self.base_metric_fn is None

    # -- JAX-traceable building blocks ---------------------------------------
    def potential_jax(self, ub: jax.Array) -> jax.Array:
        if self.potentials is not None:
            return self.potentials(ub)
        return jnp.asarray(self.spec.a) @ self.spec.base.primitives_jax(ub)

    def h_jax(self, ub: jax.Array) -> jax.Array:
        if self.base_metric_fn is not None:
            return self.base_metric_fn(ub)
        return self.spec.base.metric_jax(ub)

    def theta_jax(self, u: jax.Array) -> jax.Array:
        """Connection forms as rows, shape (r, dim)."""
        P = self.potential_jax(u[: self.base_dim])
        return jnp.concatenate([P, jnp.eye(self.r, dtype=u.dtype)], axis=1)

    def b_jax(self, u: jax.Array) -> jax.Array:
        if self.fiber_metric is not None:
            return self.fiber_metric(u)
        return jnp.asarray(self.spec.b)

    def metric_jax(self, u: jax.Array) -> jax.Array:
        n = self.base_dim
        Theta = self.theta_jax(u)
        g = Theta.T @ self.b_jax(u) @ Theta
        return g.at[:n, :n].add(self.h_jax(u[:n]))

    def _constant_field(self, k: int):
        e = np.zeros(self.dim)
        e[k] = 1.0
        e = jnp.asarray(e)
        return lambda u: e + 0.0 * u

    def _theta_component(self, i: int):
        return lambda u: self.theta_jax(u)[i]

    def _omega_component(self, i: int):
        def omega(ub):
            J = jax.jacfwd(lambda v: self.potential_jax(v)[i])(ub)
            return J.T - J

        return omega

    # -- metric fields --------------------------------------------------------
    @cached_property
    def metric(self) -> MetricField:
        return MetricField(self.dim, self.metric_jax, name="bundle")

    @cached_property
    def base_metric(self) -> MetricField:
        if self.base_metric_fn is None:
            return self.spec.base.metric
        return MetricField(self.base_dim, self.base_metric_fn, name="base_override")

    # -- pointwise quantities -------------------------------------------------
    def connection_forms(self, p) -> np.ndarray:
        """θ^i as rows of an (r, dim) array."""
        return np.asarray(self._theta_kernel(as_point(p, self.dim)))

    @cached_property
    def _theta_kernel(self):
        return compile_kernel(self.theta_jax)

    def connection_form_field(self, i: int):
        return self._theta[i]

    def fundamental_fields(self) -> list:
        """ξ^i = ∂/∂t_i as JAX-traceable vector fields."""
        return list(self._xi)

    @property
    def vertical_basis(self) -> np.ndarray:
        """Columns are ξ^1..ξ^r in chart components."""
        return np.eye(self.dim)[:, self.base_dim:]

    def base_two_form_field(self, i: int):
        """ω^i on the base, with Ω^i = p*ω^i."""
        return self._omega[i]

    def t_tensors(self, geom: PointGeometry) -> np.ndarray:
        """T_i = ∇ξ^i as (r, dim, dim) with (T_i X)^k = T[i, k, j] X^j."""
        return np.stack([geom.nabla_constant_field(xi) for xi in self.vertical_basis.T])

    def nabla_t_tensors(self, geom: PointGeometry) -> np.ndarray:
        """∇T_i as (r, dim, dim, dim) with ∇T_i(X, Y) = X^a out[i, a] @ Y."""
        return np.stack([geom.nabla2_constant_field(xi) for xi in self.vertical_basis.T])

    def t_tensor(self, p, i: int) -> np.ndarray:
        return self.metric.at(p).nabla_constant_field(self.vertical_basis[:, i])

    def closed_form_t(self, i: int) -> np.ndarray:
        """T̃_i = 1/2 Σ_l (c_il / x_l) J*_l on the base tangent space."""
        J = self.spec.base.complex_structures()
        coeffs = self.spec.c[i] / self.spec.x
        return 0.5 * np.einsum("l,lab->ab", coeffs, J)

    def closed_form_ts(self) -> np.ndarray:
        return np.stack([self.closed_form_t(i) for i in range(self.r)])

    def projections(self, p) -> tuple[np.ndarray, np.ndarray]:
        """(ℋ, 𝒱) with 𝒱F = Σ θ^i(F) ξ^i."""
        V = self.vertical_basis @ self.connection_forms(p)
        return np.eye(self.dim) - V, V

    def horizontal_lift(self, p, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        Theta = self.connection_forms(p)
        return np.concatenate([X, -Theta[:, : self.base_dim] @ X])

    def horizontal_frame(self, p) -> np.ndarray:
        """Horizontal lifts of an h-orthonormal base frame, as columns."""
        E = orthonormal_base_frame(self.base_metric(p[: self.base_dim]))
        return np.stack([self.horizontal_lift(p, e) for e in E.T], axis=1)

    def curvature_two_forms(self, p) -> np.ndarray:
        """Ω^i = dθ^i as (r, dim, dim)."""
        from .geometry import exterior_derivative_one_form

        u = as_point(p, self.dim)
        return np.stack([exterior_derivative_one_form(t, u) for t in self._theta])

    def oneill_A(self, p, E, F, geom: PointGeometry | None = None) -> np.ndarray:
        """A_E F = Σ_i [Σ_k b^{ik} g(E, T_i F) ξ^k + θ^i(F) T_i E]."""
        geom = self.metric.at(p) if geom is None else geom
        T = self.t_tensors(geom)
        Theta = self.connection_forms(p)
        E, F = np.asarray(E, dtype=float), np.asarray(F, dtype=float)
        coeff = np.array([E @ geom.g @ (T[i] @ F) for i in range(self.r)])
        vertical = self.vertical_basis @ (self.spec.b_inv @ coeff)
        horizontal = sum(Theta[i] @ F * (T[i] @ E) for i in range(self.r))
        return vertical + horizontal

    def oneill_A_literal(self, p, E, F, geom: PointGeometry | None = None) -> np.ndarray:
        """Σ_i (g(E, T_i F) ξ^i + g(ξ^i, F) T_i E); agrees with oneill_A only for b = Id."""
        geom = self.metric.at(p) if geom is None else geom
        T = self.t_tensors(geom)
        E, F = np.asarray(E, dtype=float), np.asarray(F, dtype=float)
        out = np.zeros(self.dim)
        for i, xi in enumerate(self.vertical_basis.T):
            out += (E @ geom.g @ (T[i] @ F)) * xi + (xi @ geom.g @ F) * (T[i] @ E)
        return out

    def oneill_A_definitional(self, p, E, F) -> np.ndarray:
        """𝒱∇_{ℋE}ℋF + ℋ∇_{ℋE}𝒱F from Christoffel symbols and projection fields."""
        u = as_point(p, self.dim)
        return np.asarray(self._oneill_kernel(u, jnp.asarray(E, dtype=float), jnp.asarray(F, dtype=float)))

    @cached_property
    def _oneill_kernel(self):
        from .geometry import christoffel_fn

        gamma = christoffel_fn(self.metric_jax)
        Xi = jnp.asarray(self.vertical_basis)

        def vproj(u):
            return Xi @ self.theta_jax(u)

        def hproj(u):
            return jnp.eye(self.dim) - vproj(u)

        def cov(u, X, field_fn):
            Y, dY = jax.jvp(field_fn, (u,), (X,))
            return dY + jnp.einsum("kam,a,m->k", gamma(u), X, Y)

        def kernel(u, E, F):
            H, V = hproj(u), vproj(u)
            HE = H @ E
            part1 = V @ cov(u, HE, lambda v: hproj(v) @ F)
            part2 = H @ cov(u, HE, lambda v: vproj(v) @ F)
            return part1 + part2

        return compile_kernel(kernel)


def orthonormal_base_frame(H: np.ndarray) -> np.ndarray:
    from .geometry import orthonormal_frame

    return orthonormal_frame(H)


def total_metric(spec: BundleSpec) -> MetricField:
    return TorusBundle(spec).metric
