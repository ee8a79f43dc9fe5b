import math
from itertools import product

import numpy as np
import pytest

from expfit.quadrature import gauss_interval, simplex_rule


@pytest.mark.parametrize("npts", [1, 2, 3, 5, 8])
def test_gauss_interval_exact_for_polynomials(npts):
    x, w = gauss_interval(npts)
    for k in range(2 * npts):
        assert np.dot(w, x ** k) == pytest.approx(1.0 / (k + 1), rel=1e-13)


def _barycentric_moment(alpha, dim):
    # mean over the simplex of prod lambda_a^k_a: prod k_a! d! / (|k| + d)!
    num = math.prod(math.factorial(k) for k in alpha) * math.factorial(dim)
    return num / math.factorial(sum(alpha) + dim)


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [0, 1, 2, 3, 4, 5])
def test_simplex_rule_reproduces_barycentric_moments(dim, degree):
    bary, w = simplex_rule(dim, degree)
    assert w.sum() == pytest.approx(1.0, rel=1e-14)
    assert np.all(w > 0)
    assert np.allclose(bary.sum(axis=1), 1.0)
    for alpha in product(range(degree + 1), repeat=dim + 1):
        if sum(alpha) > degree:
            continue
        approx = np.dot(w, np.prod(bary ** np.array(alpha), axis=1))
        assert approx == pytest.approx(_barycentric_moment(alpha, dim), rel=1e-12)
