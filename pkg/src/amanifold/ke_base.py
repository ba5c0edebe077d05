"""Fubini-Study factors CP^n and the scaled product base h = Σ x_j g_j.

Real layout of the affine chart: z_k = u[2k] + i u[2k+1]. The metric is the
Riemannian metric of the Kähler form i∂∂̄ log(1 + |z|²), which integrates to
2π over a line and has Ricci = (n + 1) g.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import jax
import jax.numpy as jnp
import numpy as np

from .geometry import MetricField


def fs_metric_jax(n: int, u: jax.Array) -> jax.Array:
    x = u[0::2]
    y = u[1::2]
    s = 1.0 + jnp.sum(x * x + y * y)
    eye = jnp.eye(n)
    # Hermitian matrix g_{jk̄} = A + iB
    A = eye / s - (jnp.outer(x, x) + jnp.outer(y, y)) / s**2
    B = -(jnp.outer(x, y) - jnp.outer(y, x)) / s**2
    G = jnp.zeros((2 * n, 2 * n), dtype=u.dtype)
    G = G.at[0::2, 0::2].set(2 * A)
    G = G.at[1::2, 1::2].set(2 * A)
    G = G.at[0::2, 1::2].set(2 * B)
    G = G.at[1::2, 0::2].set(-2 * B)
    return G


def complex_structure_matrix(n: int) -> np.ndarray:
    return np.kron(np.eye(n), np.array([[0.0, -1.0], [1.0, 0.0]]))


def kahler_potential_jax(u: jax.Array) -> jax.Array:
    return jnp.log1p(jnp.sum(u * u))


def kahler_primitive_jax(n: int, u: jax.Array) -> jax.Array:
    """A(X) = -1/2 dK(JX) as a covector, so that dA = η."""
    J = jnp.asarray(complex_structure_matrix(n))
    dK = jax.grad(kahler_potential_jax)(u)
    return -0.5 * (J.T @ dK)


def kahler_form_jax(n: int, u: jax.Array) -> jax.Array:
    J = jnp.asarray(complex_structure_matrix(n))
    return J.T @ fs_metric_jax(n, u)


def fs_metric(n: int, p) -> np.ndarray:
    return np.asarray(fs_metric_jax(n, jnp.asarray(p, dtype=jnp.float64)))


def complex_structure(n: int, p=None) -> np.ndarray:
    """Constant in the holomorphic chart: J ∂_x = ∂_y for each complex coordinate."""
    return complex_structure_matrix(n)


def kahler_form(n: int, p) -> np.ndarray:
    """η(X, Y) = g(JX, Y); returned as the matrix η[a, b] = η(∂_a, ∂_b)."""
    return np.asarray(kahler_form_jax(n, jnp.asarray(p, dtype=jnp.float64)))


def kahler_potential_primitive(n: int, p) -> np.ndarray:
    return np.asarray(kahler_primitive_jax(n, jnp.asarray(p, dtype=jnp.float64)))


@dataclass(frozen=True)
class BaseFactor:
    n: int
    x: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"complex dimension must be a positive integer, got {self.n}")
        if not self.x > 0:
            raise ValueError(f"scale x must be positive, got {self.x}")

    @property
    def q(self) -> int:
        return self.n + 1

    @property
    def real_dim(self) -> int:
        return 2 * self.n


@dataclass(frozen=True, eq=False)
class ProductBase:
    factors: tuple[BaseFactor, ...]
    _metric: MetricField = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("product base needs at least one factor")

    @classmethod
    def of(cls, ns, xs=None) -> "ProductBase":
        xs = [1.0] * len(ns) if xs is None else xs
        if len(xs) != len(ns):
            raise ValueError("need one scale per factor")
        return cls(tuple(BaseFactor(int(n), float(x)) for n, x in zip(ns, xs)))

    @property
    def m(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        return sum(f.real_dim for f in self.factors)

    @property
    def q(self) -> np.ndarray:
        return np.array([f.q for f in self.factors], dtype=float)

    @property
    def x(self) -> np.ndarray:
        return np.array([f.x for f in self.factors], dtype=float)

    @property
    def n_real(self) -> np.ndarray:
        return np.array([f.real_dim for f in self.factors], dtype=float)

    def slices(self) -> list[slice]:
        out, start = [], 0
        for f in self.factors:
            out.append(slice(start, start + f.real_dim))
            start += f.real_dim
        return out

    def with_scales(self, xs) -> "ProductBase":
        return ProductBase.of([f.n for f in self.factors], xs)

    # -- JAX-traceable pieces ------------------------------------------------
    def metric_jax(self, u: jax.Array) -> jax.Array:
        H = jnp.zeros((self.dim, self.dim), dtype=u.dtype)
        for f, sl in zip(self.factors, self.slices()):
            H = H.at[sl, sl].set(f.x * fs_metric_jax(f.n, u[sl]))
        return H

    def primitives_jax(self, u: jax.Array) -> jax.Array:
        """Row j: pullback of the Kähler primitive of factor j, shape (m, dim)."""
        rows = []
        for f, sl in zip(self.factors, self.slices()):
            row = jnp.zeros(self.dim, dtype=u.dtype)
            rows.append(row.at[sl].set(kahler_primitive_jax(f.n, u[sl])))
        return jnp.stack(rows)

    def kahler_forms_jax(self, u: jax.Array) -> jax.Array:
        """Pulled-back unscaled Kähler forms η*_j, shape (m, dim, dim)."""
        forms = []
        for f, sl in zip(self.factors, self.slices()):
            w = jnp.zeros((self.dim, self.dim), dtype=u.dtype)
            forms.append(w.at[sl, sl].set(kahler_form_jax(f.n, u[sl])))
        return jnp.stack(forms)

    def complex_structures(self) -> np.ndarray:
        """Pulled-back J*_j as (m, dim, dim); J*_j vanishes off block j."""
        out = np.zeros((self.m, self.dim, self.dim))
        for j, (f, sl) in enumerate(zip(self.factors, self.slices())):
            out[j, sl, sl] = complex_structure_matrix(f.n)
        return out

    @cached_property
    def metric(self) -> MetricField:
        return MetricField(self.dim, self.metric_jax, name="product_base")


def product_base_metric(pb: ProductBase, p) -> np.ndarray:
    return pb.metric(p)
