import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expfit.coeff import CoefficientSet
from expfit.eafe import (
    AssemblyError,
    SchemeOptions,
    assemble,
    bernoulli,
    edge_coefficients,
    edge_exponential_data,
    edge_weight_omega,
    element_edge_data,
    interpolate,
    local_eafe_matrix,
)
from expfit.linalg import solve
from expfit.mesh import BoundaryTag, generate_structured, retag_boundary, simplex_geometry, tag_by_flow

mpmath.mp.dps = 40
UNIT_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _b_mp(t):
    t = mpmath.mpf(float(t))
    return float(t / mpmath.expm1(t)) if t != 0 else 1.0


# --- Bernoulli function ------------------------------------------------------------


@pytest.mark.parametrize("t", [0.0, 1e-12, -1e-9, 3e-5, -9.9e-5, 1e-4, 0.5, -2.0, 29.9, 30.1,
                               -30.1, 100.0, -100.0, 699.0, 701.0, -745.0, 1e4])
def test_bernoulli_against_extended_precision(t):
    assert bernoulli(t) == pytest.approx(_b_mp(t), rel=2e-15, abs=1e-300)


@settings(max_examples=300, deadline=None)
@given(st.floats(-700, 700, allow_nan=False))
def test_bernoulli_reflection(t):
    # B(-t) = B(t) + t
    assert bernoulli(-t) == pytest.approx(bernoulli(t) + t, rel=1e-13, abs=1e-13)


def test_bernoulli_vectorised_and_positive():
    t = np.linspace(-800, 800, 2001)
    out = bernoulli(t)
    assert out.shape == t.shape and np.all(out >= 0) and np.all(np.isfinite(out))
    assert np.all(np.diff(out) <= 0)


# --- element level ------------------------------------------------------------------


def test_unit_triangle_closed_form():
    coeffs = CoefficientSet.build(2, D=1.0, b=(1.0, 0.0))
    A = local_eafe_matrix(simplex_geometry(UNIT_TRIANGLE), coeffs)
    e = math.e
    b_plus, b_minus = 1 / (e - 1), e / (e - 1)   # B(1), B(-1)
    expected = 0.5 * np.array([[b_plus + 1, -b_minus, -1.0],
                               [-b_plus, b_minus, 0.0],
                               [-1.0, 0.0, 1.0]])
    np.testing.assert_allclose(A, expected, rtol=1e-14, atol=1e-15)


def _random_simplex(rng, d):
    while True:
        pts = rng.uniform(-1, 1, size=(d + 1, d))
        if abs(np.linalg.det(pts[1:] - pts[0])) > 0.05:
            return pts


@settings(max_examples=60, deadline=None)
@given(dim=st.sampled_from([2, 3]), seed=st.integers(0, 2 ** 32 - 1),
       peclet=st.floats(0.0, 200.0), constant=st.booleans())
def test_local_matrix_columns_sum_to_zero(dim, seed, peclet, constant):
    rng = np.random.default_rng(seed)
    pts = _random_simplex(rng, dim)
    M = rng.normal(size=(dim, dim))
    D = M @ M.T + 0.5 * np.eye(dim)
    b = rng.normal(size=dim) * peclet
    A = local_eafe_matrix(simplex_geometry(pts), CoefficientSet.build(dim, D=D, b=b),
                          SchemeOptions(constant_beta=constant))
    assert np.all(np.isfinite(A))
    np.testing.assert_allclose(A.sum(axis=0), 0.0, atol=1e-12 * np.abs(A).max())


def test_zero_velocity_gives_stiffness_matrix():
    pts = np.array([[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 1.0, 0.1], [0.2, 0.1, 0.9]])
    D = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 1.5]])
    geom = simplex_geometry(pts)
    A = local_eafe_matrix(geom, CoefficientSet.build(3, D=D))
    K = geom.measure * geom.grad_lambda @ D @ geom.grad_lambda.T
    np.testing.assert_allclose(A, K, rtol=1e-13, atol=1e-14)
    omega = edge_weight_omega(geom, D)
    assert omega.shape == (6,)
    np.testing.assert_allclose(omega, [-K[i, j] for i, j, _ in geom.edges])


def test_variable_beta_harmonic_average_against_quadrature_oracle():
    coeffs = CoefficientSet.build(2, D=1.0, b="(x, 0)")
    # psi(s) = s^2 / 2 along [0, 1] x {0}
    oracle = float(1 / mpmath.quad(lambda s: mpmath.exp(s * s / 2), [0, 1]))
    dpsi, harm = edge_exponential_data([0.0, 0.0], [1.0, 0.0], coeffs, quad_order=8)
    assert dpsi == pytest.approx(0.5, rel=1e-14)
    assert harm == pytest.approx(oracle, rel=1e-14)
    _, harm4 = edge_exponential_data([0.0, 0.0], [1.0, 0.0], coeffs, quad_order=4)
    assert harm4 == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("t", [0.0, 0.3, -4.0, 25.0, -300.0, 5e4, -5e4])
def test_quadrature_path_matches_closed_form(t):
    coeffs = CoefficientSet.build(2, D=1.0, b=(t, 0.0))
    ci_q, cj_q, d_q = edge_coefficients([[0.0, 0.0]], [[1.0, 0.0]], coeffs, 6, constant=False)
    ci_c, cj_c, d_c = edge_coefficients([[0.0, 0.0]], [[1.0, 0.0]], coeffs, constant=True)
    np.testing.assert_allclose([ci_q[0], cj_q[0]], [ci_c[0], cj_c[0]], rtol=1e-10, atol=1e-300)
    assert d_q[0] == pytest.approx(t, rel=1e-13, abs=1e-12)


def test_gauge_shift_leaves_coefficients_unchanged():
    coeffs = CoefficientSet.build(2, D=1.0, b="(1 + y, x^2)")
    starts = np.array([[0.1, 0.2], [0.5, 0.5], [0.9, 0.0]])
    taus = np.array([[0.3, 0.1], [-0.2, 0.4], [0.0, 0.7]])
    base = edge_coefficients(starts, taus, coeffs, constant=False)
    shifted = edge_coefficients(starts, taus, coeffs, constant=False, shift=[500.0, -700.0, 3.0])
    for a, b in zip(base, shifted):
        np.testing.assert_allclose(a, b, rtol=1e-13)


def test_element_edge_data_pairs_consistent_with_closed_form():
    mesh = generate_structured(2, 2)
    coeffs = CoefficientSet.build(2, D=1.0, b=(3.0, -1.0))
    for rec in element_edge_data(mesh, coeffs):
        pts = mesh.vertices[mesh.cells[rec.cell]]
        i, j = rec.local
        t = np.dot([3.0, -1.0], pts[i] - pts[j])
        assert rec.dpsi == pytest.approx(t)
        np.testing.assert_allclose(rec.pair, [bernoulli(-t), bernoulli(t)], rtol=1e-13)


# --- global assembly ---------------------------------------------------------------


@pytest.mark.parametrize("dim,n,D", [
    (2, 6, np.array([[2.0, 0.5], [0.5, 1.0]])),
    (3, 3, np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.25], [0.0, 0.25, 1.5]])),
])
def test_zero_flux_solution_reproduced_exactly(dim, n, D):
    # u = exp(-beta.x) has D grad u + b u = 0, and the scheme reproduces it
    beta_v = np.linspace(3.0, -2.0, dim)
    b = D @ beta_v
    mesh = generate_structured(dim, n)
    u = lambda p: np.exp(-np.asarray(p) @ beta_v)
    coeffs = CoefficientSet.build(dim, D=D, b=b, dirichlet=u)
    system = assemble(mesh, coeffs)
    u_h, rep = solve(system.matrix, system.rhs, tol=1e-13)
    assert rep.converged
    np.testing.assert_allclose(u_h, interpolate(mesh, u), rtol=1e-11)


def test_zero_flux_solution_for_gradient_field():
    # b = grad(phi) with D = I: u = exp(-phi) carries no flux
    mesh = generate_structured(2, 8)
    u = lambda p: np.exp(-(p[:, 0] ** 2 + p[:, 0] * p[:, 1]))
    coeffs = CoefficientSet.build(2, D=1.0, b="(2*x + y, x)", dirichlet=u)
    system = assemble(mesh, coeffs, SchemeOptions(edge_quad=6))
    u_h, _ = solve(system.matrix, system.rhs, tol=1e-13)
    np.testing.assert_allclose(u_h, interpolate(mesh, u), rtol=1e-12)


def test_raw_matrix_columns_sum_to_zero_without_reaction():
    mesh = generate_structured(3, 3)
    coeffs = CoefficientSet.build(3, D="[[1 + x, 0, 0], [0, 1, 0], [0, 0, 2 - y]]", b="(5, -x, z)")
    A = assemble(mesh, coeffs).raw_matrix
    np.testing.assert_allclose(np.asarray(A.sum(axis=0)).ravel(), 0.0, atol=1e-12 * abs(A).max())


def test_dirichlet_rows_are_identity():
    mesh = generate_structured(2, 4)
    coeffs = CoefficientSet.build(2, D=1.0, b=(1.0, 2.0), dirichlet="x + 2*y")
    s = assemble(mesh, coeffs)
    mask = s.dirichlet_mask
    dense = s.matrix.toarray()
    np.testing.assert_array_equal(dense[mask][:, mask], np.eye(mask.sum()))
    assert np.all(dense[mask][:, ~mask] == 0) and np.all(dense[~mask][:, mask] == 0)
    np.testing.assert_allclose(s.rhs[mask], mesh.vertices[mask] @ [1.0, 2.0])


def test_outflow_face_terms_integrate_normal_velocity():
    mesh = generate_structured(2, 5)
    coeffs = CoefficientSet.build(2, D=1.0, b=(1.0, 0.0))
    velocity = lambda p: coeffs.b(p)
    flow = retag_boundary(mesh, tag_by_flow, velocity)
    diff = assemble(flow, coeffs).raw_matrix - assemble(mesh, coeffs).raw_matrix
    # outflow side x = 0 has b.n = -1 and length 1
    assert diff.sum() == pytest.approx(1.0, rel=1e-13)
    rows = np.unique(diff.nonzero()[0])
    assert np.all(mesh.vertices[rows, 0] == 0.0)


def test_inflow_datum_enters_load():
    mesh = generate_structured(2, 4)
    tagged = retag_boundary(mesh, lambda c, nrm, bn: BoundaryTag.NEUMANN_IN if nrm[1] < -0.5
                            else BoundaryTag.DIRICHLET)
    coeffs = CoefficientSet.build(2, g=3.0)
    s = assemble(tagged, coeffs)
    assert s.raw_rhs.sum() == pytest.approx(3.0)


def test_dimension_mismatch_raises():
    with pytest.raises(AssemblyError):
        assemble(generate_structured(2, 2), CoefficientSet.build(3))


def test_extreme_peclet_assembles_finite():
    mesh = generate_structured(2, 4)
    for constant in (True, False):
        s = assemble(mesh, CoefficientSet.build(2, D=1e-8, b=(1.0, 0.5)), SchemeOptions(constant_beta=constant))
        assert np.all(np.isfinite(s.raw_matrix.data))


def test_rescaled_flux_matches_only_for_constant_scalar_diffusion():
    mesh = generate_structured(2, 8)
    opts = SchemeOptions(constant_beta=False, omega_quad=2)

    def gap(D):
        from expfit.coeff import alpha_scaled
        c = CoefficientSet.build(2, D=D, b=(2.0, 1.0))
        A = assemble(mesh, c, opts).raw_matrix
        B = assemble(mesh, alpha_scaled(c), opts).raw_matrix
        return abs(A - B).max() / abs(A).max()

    assert gap(4.0) <= 1e-13
    # with c(x) varying, the cell mean of c and the edge mean of exp(psi)/c differ
    assert gap("1 + 3*x") > 1e-4
