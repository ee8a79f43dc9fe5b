import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from expfit.coeff import (
    CoefficientError,
    CoefficientSet,
    DispersionParams,
    Field,
    alpha_of,
    alpha_scaled,
    beta,
    beta_scaled,
    check_spd,
    dispersion_tensor,
    scaled_diffusion,
)

PARAMS = DispersionParams(0.0001, 21.0, 2.1)


def test_scalar_diffusion_becomes_multiple_of_identity():
    c = CoefficientSet.build(3, D=2.5)
    D = c.diffusion(np.zeros((4, 3)))
    assert D.shape == (4, 3, 3)
    np.testing.assert_array_equal(D[2], 2.5 * np.eye(3))
    assert c.D.constant and c.constant_beta


def test_scalar_velocity_expands_to_vector():
    c = CoefficientSet.build(2, b=3.0)
    np.testing.assert_array_equal(c.b(np.zeros((1, 2)))[0], [3.0, 3.0])
    c2 = c.with_fields(b=0.0)
    np.testing.assert_array_equal(c2.b(np.zeros((1, 2)))[0], [0.0, 0.0])


def test_expression_fields_are_variable():
    c = CoefficientSet.build(2, D="[[1 + x, 0], [0, 1]]", b="(y, 0)")
    assert not c.D.constant and not c.b.constant and not c.constant_beta
    pts = np.array([[0.5, 2.0]])
    np.testing.assert_allclose(c.D(pts)[0], [[1.5, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(c.b(pts)[0], [2.0, 0.0])


def test_shape_mismatch_rejected():
    with pytest.raises(CoefficientError):
        CoefficientSet.build(2, b="(1, 2, 3)")
    with pytest.raises(CoefficientError):
        CoefficientSet.build(2, gamma="(1, 2)")


def test_check_spd_rejects_nonsymmetric_and_indefinite():
    check_spd(np.eye(2), None)
    with pytest.raises(CoefficientError, match="symmetric"):
        check_spd(np.array([[1.0, 0.2], [0.0, 1.0]]), None)
    with pytest.raises(CoefficientError, match=r"at point \(0\.5, 0\.5\)"):
        check_spd(np.array([[[1.0, 0.0], [0.0, -1.0]]]), np.array([[0.5, 0.5]]))


def test_indefinite_field_reported_on_evaluation():
    c = CoefficientSet.build(2, D="[[1, 0], [0, x - 0.5]]")
    with pytest.raises(CoefficientError):
        c.diffusion(np.array([[0.25, 0.0]]))


def test_beta_solves_diffusion_system():
    D = np.array([[2.0, 0.5], [0.5, 1.0]])
    c = CoefficientSet.build(2, D=D, b=(2.0, 1.0))
    np.testing.assert_allclose(beta(c, [0.3, 0.3]), np.linalg.solve(D, [2.0, 1.0]), rtol=1e-14)
    assert beta(c, np.zeros((5, 2))).shape == (5, 2)


def test_dispersion_zero_velocity_is_molecular_diffusion():
    np.testing.assert_array_equal(dispersion_tensor(PARAMS, [0.0, 0.0, 0.0]), PARAMS.k_d * np.eye(3))


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.sampled_from([2, 3]), elements=st.floats(-1e3, 1e3)).filter(
    lambda b: np.linalg.norm(b) > 1e-6))
def test_dispersion_eigenstructure(b):
    D = dispersion_tensor(PARAMS, b)
    nb = np.linalg.norm(b)
    np.testing.assert_allclose(D, D.T, rtol=0, atol=0)
    # b is an eigenvector with eigenvalue k_d + k_t |b|
    np.testing.assert_allclose(D @ b, (PARAMS.k_d + PARAMS.k_t * nb) * b, rtol=1e-12, atol=1e-12 * nb)
    ev = np.linalg.eigvalsh(D)
    assert ev.min() == pytest.approx(PARAMS.k_d + PARAMS.k_l * nb, rel=1e-9, abs=1e-12)


def test_dispersion_text_in_build():
    c = CoefficientSet.build(2, D="dispersion(0.0001, 21, 2.1)", b=(2.0, 1.0))
    np.testing.assert_allclose(c.D(np.zeros((1, 2)))[0], dispersion_tensor(PARAMS, [2.0, 1.0]))
    assert c.D.constant
    with pytest.raises(CoefficientError):
        CoefficientSet.build(2, D="dispersion(1, 2)", b=(1.0, 0.0))


def test_alpha_is_mean_of_extreme_eigenvalues():
    D = np.diag([1.0, 3.0, 9.0])
    assert alpha_of(D) == pytest.approx(5.0)
    c = alpha_scaled(CoefficientSet.build(3, D=D, b=(1.0, 1.0, 1.0)))
    pts = np.zeros((2, 3))
    np.testing.assert_allclose(scaled_diffusion(c, pts)[0], D / 5.0)
    np.testing.assert_allclose(beta_scaled(c, pts)[0], 5.0 * np.linalg.solve(D, np.ones(3)))


def test_field_const_copies():
    f = Field.const([1.0, 2.0])
    a = f(np.zeros((3, 2)))
    a[0, 0] = 99.0
    assert f(np.zeros((3, 2)))[0, 0] == 1.0


@pytest.mark.parametrize("D,b,expected", [
    (np.eye(2), (3.0, 4.0), (3.0, 4.0)),
    (np.diag([2.0, 1.0]), (3.0, 4.0), (1.5, 4.0)),
])
def test_beta_examples(D, b, expected):
    np.testing.assert_allclose(beta(CoefficientSet.build(2, D=D, b=b), [0.1, 0.2]), expected, rtol=1e-15)


def test_beta_dispersion_example():
    c = CoefficientSet.build(2, D="dispersion(0.0001, 21, 2.1)", b=(1.0, 0.0))
    np.testing.assert_allclose(beta(c, [0.0, 0.0]), (1 / 21.0001, 0.0), rtol=1e-14)


def test_dispersion_axis_aligned_velocity():
    p = DispersionParams(0.3, 2.0, 0.7)
    np.testing.assert_allclose(dispersion_tensor(p, [1.0, 0.0]), np.diag([2.3, 1.0]), rtol=1e-15)
    np.testing.assert_allclose(dispersion_tensor(DispersionParams(1.0, 0.0, 0.0), [3.0, -1.0, 2.0]),
                               np.eye(3), atol=1e-15)


def test_alpha_of_diag_1_9():
    assert alpha_of(np.diag([1.0, 9.0])) == pytest.approx(5.0)


def test_beta_residual_at_many_points(rng):
    c = CoefficientSet.build(3, D="[[2 + x, 0.1, 0], [0.1, 1 + y*y, 0.2], [0, 0.2, 3]]",
                             b="(sin(x), 5*y, -z)")
    pts = rng.uniform(0, 1, size=(200, 3))
    res = np.einsum("nij,nj->ni", c.D(pts), beta(c, pts)) - c.b(pts)
    bn = np.linalg.norm(c.b(pts), axis=1)
    assert np.all(np.linalg.norm(res, axis=1) <= 1e-12 * (1 + bn))
