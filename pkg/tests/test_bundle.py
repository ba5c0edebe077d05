import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from amanifold.bundle import BundleSpec, TorusBundle, total_metric
from amanifold.geometry import lie_derivative_metric
from amanifold.ke_base import complex_structure
from amanifold.verifier import sample_point

HOPF = TorusBundle(BundleSpec.build([1], [[1]], [[1.0]], [1.0]))
COUPLED = TorusBundle(BundleSpec.build([1, 1], [[1, 1], [0, 1]], [[2.0, 0.5], [0.5, 1.0]], [1.0, 2.0]))
MIXED = TorusBundle(BundleSpec.build([1, 2], [[1, -2]], [[1.5]], [0.7, 1.3]))
BUNDLES = {"hopf": HOPF, "coupled": COUPLED, "mixed": MIXED}

seeds = st.integers(0, 2**32 - 1)
which = st.sampled_from(sorted(BUNDLES))


def draw(name, seed):
    bundle = BUNDLES[name]
    rng = np.random.default_rng(seed)
    return bundle, sample_point(bundle, rng), rng


def base_vector(bundle, rng):
    return rng.normal(size=bundle.base_dim)


@given(name=which, seed=seeds)
def test_connection_forms_are_dual_to_fundamental_fields(name, seed):
    bundle, p, _ = draw(name, seed)
    Theta = bundle.connection_forms(p)
    np.testing.assert_array_equal(Theta @ bundle.vertical_basis, np.eye(bundle.r))


@given(name=which, seed=seeds)
def test_curvature_forms_are_combinations_of_kahler_forms(name, seed):
    bundle, p, _ = draw(name, seed)
    n = bundle.base_dim
    Om = bundle.curvature_two_forms(p)
    eta = np.asarray(bundle.spec.base.kahler_forms_jax(jnp.asarray(p[:n])))
    expected = np.einsum("ij,jab->iab", bundle.spec.a, eta)
    np.testing.assert_allclose(Om[:, :n, :n], expected, atol=1e-10)
    assert np.abs(Om[:, n:, :]).max() == 0 and np.abs(Om[:, :, n:]).max() == 0


def test_trivial_bundle_has_flat_connection():
    trivial = TorusBundle(BundleSpec.build([1], [[0]], [[1.0]]))
    p = np.array([0.4, -0.2, 1.0])
    np.testing.assert_array_equal(trivial.connection_forms(p), [[0, 0, 1]])
    assert np.abs(trivial.curvature_two_forms(p)).max() == 0
    assert np.abs(trivial.closed_form_t(0)).max() == 0


@given(name=which, seed=seeds)
def test_metric_block_structure(name, seed):
    bundle, p, _ = draw(name, seed)
    n = bundle.base_dim
    g = bundle.metric(p)
    Xi = bundle.vertical_basis
    np.testing.assert_allclose(Xi.T @ g @ Xi, bundle.spec.b, atol=1e-14)
    h = bundle.base_metric(p[:n])
    assert np.linalg.det(g) == pytest.approx(np.linalg.det(bundle.spec.b) * np.linalg.det(h), rel=1e-10)


def test_horizontal_block_at_origin_is_base_metric():
    p = np.zeros(MIXED.dim)
    g = MIXED.metric(p)
    np.testing.assert_allclose(g[:6, :6], MIXED.base_metric(p[:6]), atol=1e-15)
    assert total_metric(MIXED.spec).dim == 7


@given(name=which, seed=seeds, shift=st.floats(-10, 10))
def test_metric_is_fiber_translation_invariant(name, seed, shift):
    bundle, p, _ = draw(name, seed)
    q = p.copy()
    q[bundle.base_dim:] += shift
    np.testing.assert_allclose(bundle.metric(q), bundle.metric(p), atol=1e-14)


@pytest.mark.parametrize("name", sorted(BUNDLES))
def test_fundamental_fields_are_killing(name, rng):
    bundle = BUNDLES[name]
    for _ in range(5):
        p = sample_point(bundle, rng)
        for xi in bundle.fundamental_fields():
            assert np.abs(lie_derivative_metric(bundle.metric, xi, p)).max() < 1e-12


@given(name=which, seed=seeds)
def test_t_tensors_kill_vertical_and_are_skew(name, seed):
    bundle, p, rng = draw(name, seed)
    geom = bundle.metric.at(p)
    T = bundle.t_tensors(geom)
    X, Y = rng.normal(size=(2, bundle.dim))
    for Ti in T:
        assert np.abs(Ti @ bundle.vertical_basis).max() < 1e-12
        assert abs(X @ geom.g @ Ti @ Y + (Ti @ X) @ geom.g @ Y) < 1e-12


@given(name=which, seed=seeds)
def test_t_tensors_project_to_closed_form(name, seed):
    bundle, p, rng = draw(name, seed)
    n = bundle.base_dim
    T = bundle.t_tensors(bundle.metric.at(p))
    Tt = bundle.closed_form_ts()
    X = rng.normal(size=bundle.dim)
    for Ti, Tti in zip(T, Tt):
        np.testing.assert_allclose((Ti @ X)[:n], Tti @ X[:n], atol=1e-9)


def test_hopf_closed_form_is_half_complex_structure():
    np.testing.assert_allclose(HOPF.closed_form_t(0), 0.5 * complex_structure(1))


@given(seed=seeds)
def test_closed_form_frame_sums(seed):
    rng = np.random.default_rng(seed)
    spec = COUPLED.spec
    Tt = COUPLED.closed_form_ts()
    p = rng.uniform(-1, 1, spec.base_dim)
    h = COUPLED.base_metric(p)
    for j, sl in enumerate(spec.base.slices()):
        X = np.zeros(spec.base_dim)
        X[sl] = rng.normal(size=sl.stop - sl.start)
        X /= np.sqrt(X @ h @ X)
        for i in range(spec.r):
            for l in range(spec.r):
                val = (Tt[i] @ X) @ h @ (Tt[l] @ X)
                assert val == pytest.approx(spec.c[i, j] * spec.c[l, j] / (4 * spec.x[j] ** 2), abs=1e-12)


@given(name=which, seed=seeds)
def test_projections(name, seed):
    bundle, p, rng = draw(name, seed)
    H, V = bundle.projections(p)
    g = bundle.metric(p)
    np.testing.assert_allclose(H @ H, H, atol=1e-12)
    np.testing.assert_allclose(V @ V, V, atol=1e-12)
    assert np.abs(H @ bundle.vertical_basis).max() < 1e-12
    # ℋ and 𝒱 are g-orthogonal complements
    np.testing.assert_allclose(H.T @ g @ V, 0, atol=1e-12)
    X = base_vector(bundle, rng)
    lift = bundle.horizontal_lift(p, X)
    np.testing.assert_allclose(H @ lift, lift, atol=1e-12)
    np.testing.assert_allclose(lift[: bundle.base_dim], X)


def test_vertical_projection_with_identity_fiber_metric(rng):
    p = sample_point(HOPF, rng)
    F = rng.normal(size=3)
    g = HOPF.metric(p)
    xi = HOPF.vertical_basis[:, 0]
    np.testing.assert_allclose(HOPF.projections(p)[1] @ F, (xi @ g @ F) * xi, atol=1e-14)


@given(name=which, seed=seeds)
def test_curvature_forms_against_t_tensors(name, seed):
    bundle, p, _ = draw(name, seed)
    geom = bundle.metric.at(p)
    T = bundle.t_tensors(geom)
    Om = bundle.curvature_two_forms(p)
    gT = np.einsum("jka,kb->jab", T, geom.g)  # g(T_j e_a, e_b)
    expected = 2 * np.einsum("ij,jab->iab", bundle.spec.b_inv, gT)
    np.testing.assert_allclose(Om, expected, atol=1e-10)
    np.testing.assert_allclose(np.einsum("iab,a->ib", Om, bundle.vertical_basis[:, 0]), 0, atol=1e-12)


@given(name=which, seed=seeds)
def test_oneill_formula_matches_definition(name, seed):
    bundle, p, rng = draw(name, seed)
    E, F = rng.normal(size=(2, bundle.dim))
    np.testing.assert_allclose(bundle.oneill_A(p, E, F), bundle.oneill_A_definitional(p, E, F), atol=1e-10)


@given(seed=seeds)
def test_literal_oneill_formula_needs_identity_fiber_metric(seed):
    rng = np.random.default_rng(seed)
    p = sample_point(HOPF, rng)
    E, F = rng.normal(size=(2, 3))
    np.testing.assert_allclose(HOPF.oneill_A_literal(p, E, F), HOPF.oneill_A(p, E, F), atol=1e-12)


def test_literal_oneill_formula_differs_for_general_fiber_metric(rng):
    p = sample_point(COUPLED, rng)
    X, Y = (COUPLED.horizontal_lift(p, v) for v in rng.normal(size=(2, 4)))
    gap = COUPLED.oneill_A_literal(p, X, Y) - COUPLED.oneill_A(p, X, Y)
    assert np.abs(gap).max() > 1e-3


@given(name=which, seed=seeds)
def test_oneill_on_horizontal_and_vertical_pairs(name, seed):
    bundle, p, rng = draw(name, seed)
    X, Y = (bundle.horizontal_lift(p, base_vector(bundle, rng)) for _ in range(2))
    U, W = (bundle.vertical_basis @ rng.normal(size=bundle.r) for _ in range(2))
    assert np.abs(bundle.oneill_A(p, U, W)).max() < 1e-12
    AXY = bundle.oneill_A(p, X, Y)
    np.testing.assert_allclose(AXY, -bundle.oneill_A(p, Y, X), atol=1e-12)
    H, _ = bundle.projections(p)
    assert np.abs(H @ AXY).max() < 1e-12
    # θ(A_X Y) = -½ Ω(X, Y): A_X Y is half the vertical part of [X, Y]
    Om = bundle.curvature_two_forms(p)
    np.testing.assert_allclose(
        bundle.connection_forms(p) @ AXY, -0.5 * np.einsum("iab,a,b->i", Om, X, Y), atol=1e-12
    )


def test_spec_validation():
    with pytest.raises(ValueError, match="integer"):
        BundleSpec.build([1], [[1.5]], [[1.0]])
    with pytest.raises(ValueError, match="positive definite"):
        BundleSpec.build([1, 1], np.eye(2), [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        BundleSpec.build([1, 1], np.eye(2), [[1.0, 0.2], [0.0, 1.0]])
    with pytest.raises(ValueError, match="columns"):
        BundleSpec.build([1], [[1, 1]], [[1.0]])
    spec = COUPLED.spec
    np.testing.assert_allclose(spec.c, spec.b @ spec.a)
    assert (spec.r, spec.m, spec.dim) == (2, 2, 6)
