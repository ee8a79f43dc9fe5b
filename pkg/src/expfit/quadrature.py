"""Quadrature rules on the unit interval and on reference simplices.

Simplex rules are collapsed (conical) Gauss-Jacobi products, so every weight
is positive and the rule exists for any dimension and degree.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_interval(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1] (weights sum to 1)."""
    if npts < 1:
        raise ValueError("need at least one quadrature point")
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on the reference ``dim``-simplex, exact for polynomials of ``degree``.

    Returns
    -------
    bary : (nq, dim+1) array
        Barycentric coordinates of the nodes.
    weights : (nq,) array
        Weights normalised to sum to 1, i.e. multiply by the simplex measure.
    """
    if dim < 1:
        raise ValueError("simplex dimension must be >= 1")
    degree = max(int(degree), 0)
    npts = degree // 2 + 1
    # 1D factors: direction k carries the Jacobi weight (1 - s)^(dim - 1 - k)
    factors = []
    for k in range(dim):
        a = dim - 1 - k
        t, w = roots_jacobi(npts, a, 0.0)
        s = 0.5 * (t + 1.0)
        factors.append((s, w / w.sum()))

    grids = np.meshgrid(*[f[0] for f in factors], indexing="ij")
    wgrids = np.meshgrid(*[f[1] for f in factors], indexing="ij")
    s = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)

    # Duffy map from the unit cube to the simplex {x_i >= 0, sum x_i <= 1}
    x = np.empty_like(s)
    remaining = np.ones(s.shape[0])
    for k in range(dim):
        x[:, k] = s[:, k] * remaining
        remaining = remaining * (1.0 - s[:, k])
    bary = np.column_stack([1.0 - x.sum(axis=1), x])
    return bary, w / w.sum()
