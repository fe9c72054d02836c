import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from sigma_flow_lab import symfun
from sigma_flow_lab.errors import DomainError
from sigma_flow_lab.geometry import (GeometryDescriptor, Kind, derivatives, radial_sigma_k,
                                     schouten_eigenvalues, sphere_volume, structured_sigma,
                                     volume_element, volume_weights)

from oracles import brute_sigma, full_tensor_spectrum

X = sp.symbols("x")


def spectrum_at(geom, u_expr, idx):
    fn = sp.lambdify(X, u_expr, "numpy")
    u = np.broadcast_to(fn(np.asarray(geom.nodes)), geom.nodes.shape).astype(float)
    spec = schouten_eigenvalues(geom, derivatives(geom, u))
    return np.sort(spec.eigenvalues[idx], axis=1)


# --- descriptor -------------------------------------------------------------

def test_descriptor_validation():
    with pytest.raises(DomainError):
        GeometryDescriptor(Kind.ROUND_SPHERE, 2, 64)
    with pytest.raises(DomainError):
        GeometryDescriptor(Kind.ROUND_SPHERE, 4, 8)
    with pytest.raises(DomainError):
        GeometryDescriptor(Kind.PRODUCT_CIRCLE_SPHERE, 4, 64, circle_length=-1.0)
    with pytest.raises(DomainError):
        GeometryDescriptor(Kind.RADIAL_EUCLIDEAN, 4, 64, radial_domain=(1.0, 0.5))


def test_sphere_volume_closed_forms():
    assert sphere_volume(4) == pytest.approx(8 * math.pi ** 2 / 3, rel=1e-12)
    assert sphere_volume(5) == pytest.approx(math.pi ** 3, rel=1e-12)
    assert sphere_volume(2) == pytest.approx(4 * math.pi, rel=1e-12)


@pytest.mark.parametrize("kind,expected", [
    (Kind.ROUND_SPHERE, [0.5] * 5),
    (Kind.PRODUCT_CIRCLE_SPHERE, [-0.5] + [0.5] * 4),
    (Kind.RADIAL_EUCLIDEAN, [0.0] * 5),
])
def test_constant_field_gives_background(kind, expected):
    geom = GeometryDescriptor(kind, 5, 64)
    spec = schouten_eigenvalues(geom, derivatives(geom, np.zeros(64)))
    np.testing.assert_array_equal(spec.eigenvalues, np.tile(expected, (64, 1)))
    # a constant shift only adds stencil rounding, amplified by 1/r^2 on the radial grid
    shifted = schouten_eigenvalues(geom, derivatives(geom, np.full(64, 0.3)))
    scale = 1.0 if geom.compact else geom.nodes[:, None] ** -2 * geom.step ** -2
    assert np.all(np.abs(shifted.eigenvalues - expected) <= 1e-13 * scale)


# --- derivatives ------------------------------------------------------------

def test_constant_field_has_zero_derivatives():
    for kind in Kind:
        geom = GeometryDescriptor(kind, 4, 32)
        fld = derivatives(geom, np.full(32, 1.3))
        scale = 1.0 if geom.compact else geom.nodes ** -2 * geom.step ** -2
        assert np.all(np.abs(fld.du) <= 1e-13 * np.sqrt(scale))
        assert np.all(np.abs(fld.d2u) <= 1e-13 * scale)


def _derivative_error(kind, N):
    geom = GeometryDescriptor(kind, 4, N)
    x = geom.nodes
    if kind is Kind.ROUND_SPHERE:
        u, du, d2u = np.cos(x), -np.sin(x), -np.cos(x)
    elif kind is Kind.PRODUCT_CIRCLE_SPHERE:
        w = 2 * math.pi / geom.circle_length
        u, du, d2u = np.sin(w * x), w * np.cos(w * x), -w * w * np.sin(w * x)
    else:
        u, du, d2u = np.log(1 + x), 1 / (1 + x), -1 / (1 + x) ** 2
    fld = derivatives(geom, u)
    return max(np.max(np.abs(fld.du - du)), np.max(np.abs(fld.d2u - d2u)))


@pytest.mark.parametrize("kind", [Kind.ROUND_SPHERE, Kind.PRODUCT_CIRCLE_SPHERE])
def test_derivative_order_on_compact_grids(kind):
    coarse, fine = _derivative_error(kind, 64), _derivative_error(kind, 128)
    assert coarse / fine >= 2 ** 3.5


def test_radial_derivative_refinement():
    ratio = _derivative_error(Kind.RADIAL_EUCLIDEAN, 256) / _derivative_error(Kind.RADIAL_EUCLIDEAN, 512)
    assert ratio >= 2 ** 3


# --- eigenvalue reductions against the full-tensor oracle -------------------

@pytest.mark.parametrize("kind,u_expr,n", [
    ("round_sphere", sp.Rational(3, 10) * sp.cos(X) ** 2, 4),
    ("product_circle_sphere", sp.Rational(1, 5) * sp.sin(X), 4),
    ("radial_euclidean", sp.log(1 + X ** 2) / 2, 4),
    ("round_sphere", sp.Rational(1, 4) * sp.cos(X), 3),
])
def test_reduction_matches_full_tensor(kind, u_expr, n):
    N = 512
    geom = GeometryDescriptor(Kind(kind), n, N, radial_domain=(0.05, 20.0))
    idx = np.array([N // 7, N // 3, N // 2 + 5, 3 * N // 4])
    ours = spectrum_at(geom, u_expr, idx)
    ref = full_tensor_spectrum(kind, n, u_expr, X, geom.nodes[idx])
    np.testing.assert_allclose(ours, ref, atol=1e-7)


def test_product_background_from_full_tensor():
    ref = full_tensor_spectrum("product_circle_sphere", 4, sp.Integer(0), X, [0.3])
    np.testing.assert_allclose(ref[0], [-0.5, 0.5, 0.5, 0.5], atol=1e-14)


def test_pole_nodes_stay_regular():
    tops = []
    for N in (64, 128, 256):
        geom = GeometryDescriptor(Kind.ROUND_SPHERE, 4, N)
        spec = schouten_eigenvalues(geom, derivatives(geom, 0.3 * np.cos(geom.nodes)))
        tops.append(np.abs(spec.eigenvalues[0]).max())
        # exact value at the pole: 1/2 - 0.3 for both eigenvalues
        np.testing.assert_allclose(spec.eigenvalues[0], 0.2, atol=1e-2)
    assert max(tops) < 1.0


def test_stereographic_bubble_has_round_curvature():
    # g = (1+r^2)^{-2}|dx|^2 has sectional curvature 4, Schouten eigenvalues 2
    geom = GeometryDescriptor(Kind.RADIAL_EUCLIDEAN, 5, 2000, radial_domain=(1e-2, 1e2))
    r = geom.nodes
    u = np.log(1 + r ** 2)
    spec = schouten_eigenvalues(geom, derivatives(geom, u))
    np.testing.assert_allclose((spec.eigenvalues * np.exp(2 * u)[:, None])[10:-10], 2.0, rtol=1e-5)


# --- sigma_k of g -----------------------------------------------------------

def test_cylinder_sigma_two():
    geom = GeometryDescriptor(Kind.RADIAL_EUCLIDEAN, 5, 400)
    spec = schouten_eigenvalues(geom, derivatives(geom, np.log(geom.nodes)))
    np.testing.assert_allclose(spec.conformal_sigma_k(2), 0.5, rtol=1e-9)
    assert brute_sigma([-0.5, 0.5, 0.5, 0.5, 0.5], 2) == pytest.approx(0.5)


@pytest.mark.parametrize("n,k", [(5, 1), (5, 2), (5, 3), (6, 2), (4, 1)])
def test_radial_formula_on_cylinder(n, k):
    expected = math.factorial(n - 1) / (math.factorial(k) * math.factorial(n - k)) * 2.0 ** -k * (n - 2 * k)
    r = np.logspace(-3, 3, 7)
    assert radial_sigma_k(n, k, r, 1.0, 0.0, np.log(r)) == pytest.approx(expected, rel=1e-12)


def test_radial_formula_flat_metric():
    assert radial_sigma_k(5, 2, 0.7, 0.0, 0.0, 0.0) == 0.0
    assert radial_sigma_k(5, 1, 0.7, 0.0, 0.0, 0.0) == 0.0


def test_radial_formula_rejects_bad_radius():
    with pytest.raises(DomainError):
        radial_sigma_k(5, 2, 0.0, 1.0, 0.0, 0.0)


@settings(max_examples=50)
@given(st.floats(0.05, 1.95), st.floats(-2.0, 2.0), st.floats(1e-3, 1e3), st.sampled_from([(5, 1), (5, 2), (6, 2), (7, 3)]))
def test_radial_formula_factored_form(alpha, alpha_prime, r, nk):
    n, k = nk
    u = 0.1
    C = math.factorial(n - 1) / (math.factorial(k) * math.factorial(n - k))
    q = 2 * alpha - alpha * alpha
    lead = math.exp(2 * k * u) * C * (q / (2 * r * r)) ** k
    slope = 2 * k * r * alpha_prime / q
    factored = lead * (n - 2 * k + slope)
    # the bracket may cancel, so scale by its absolute terms
    scale = lead * (abs(n - 2 * k) + abs(slope))
    assert abs(radial_sigma_k(n, k, r, alpha, alpha_prime, u) - factored) <= 1e-12 * scale


def test_radial_formula_matches_pipeline():
    geom = GeometryDescriptor(Kind.RADIAL_EUCLIDEAN, 5, 4000, radial_domain=(1e-2, 1e2))
    r = geom.nodes
    u = np.log(1 + r ** 2) + 0.3 * np.log(r) / (1 + r ** 2)
    fld = derivatives(geom, u)
    spec = schouten_eigenvalues(geom, fld)
    alpha = r * fld.du
    alpha_prime = fld.du + r * fld.d2u
    mid = slice(10, -10)
    for k in (1, 2):
        got = radial_sigma_k(5, k, r, alpha, alpha_prime, u)
        np.testing.assert_allclose(got[mid], spec.conformal_sigma_k(k)[mid], rtol=1e-10)


def test_structured_sigma_matches_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.normal(size=2)
        for k in range(6):
            assert structured_sigma(a, b, 5, k) == pytest.approx(brute_sigma([a] + [b] * 4, k), abs=1e-12)


# --- volume -----------------------------------------------------------------

@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_round_sphere_volume(n):
    geom = GeometryDescriptor(Kind.ROUND_SPHERE, n, 128)
    assert geom.base_weights.sum() == pytest.approx(sphere_volume(n), rel=1e-8)


def test_volume_scaling_and_product_volume():
    geom = GeometryDescriptor(Kind.PRODUCT_CIRCLE_SPHERE, 5, 64, circle_length=3.0)
    assert geom.base_weights.sum() == pytest.approx(3.0 * sphere_volume(4), rel=1e-10)
    c = 0.4
    assert volume_weights(geom, np.full(64, c)).sum() == pytest.approx(
        math.exp(-5 * c) * geom.base_weights.sum(), rel=1e-14)
    fld = derivatives(geom, np.full(64, c))
    assert volume_element(geom, fld, 3) == pytest.approx(math.exp(-5 * c) * geom.base_weights[3])


def test_radial_volume_of_ball_shell():
    geom = GeometryDescriptor(Kind.RADIAL_EUCLIDEAN, 4, 801, radial_domain=(0.5, 2.0))
    shell = sphere_volume(3) / 4 * (2.0 ** 4 - 0.5 ** 4)
    assert geom.base_weights.sum() == pytest.approx(shell, rel=1e-10)


@pytest.mark.parametrize("n", [4, 5])
def test_background_sigma_integrals(n):
    geom = GeometryDescriptor(Kind.ROUND_SPHERE, n, 128)
    spec = schouten_eigenvalues(geom, derivatives(geom, np.zeros(128)))
    for k in range(n + 1):
        integral = float(np.dot(geom.base_weights, spec.sigma(k)))
        assert integral == pytest.approx(math.comb(n, k) * 2.0 ** -k * sphere_volume(n), rel=1e-8)
    assert symfun.cone_membership(spec.eigenvalues[0]).max_k == n
