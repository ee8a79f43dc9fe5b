"""Built-in test problems.

Manufactured right-hand sides are written out as expressions. For
``u = prod_k sin(pi x_k)`` with constant ``D``, ``b`` and ``gamma``::

    f = pi^2 tr(D) u - 2 pi^2 sum_{k<l} D_kl c_k c_l prod_{m!=k,l} s_m
        - pi sum_k b_k c_k prod_{m!=k} s_m + gamma u

with ``s_k = sin(pi x_k)`` and ``c_k = cos(pi x_k)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from expfit.coeff import CoefficientSet, DispersionParams, Field, alpha_scaled, dispersion_tensor

COORDS = ("x", "y", "z")
LAYER_EPS = 1e-6
DISPERSION_PARAMS = DispersionParams(k_d=0.0001, k_t=21.0, k_l=2.1)


@dataclass
class Problem:
    name: str
    dim: int
    description: str
    D: object
    b: object
    gamma: object = 0.0
    f: object = 0.0
    exact_text: Optional[str] = None
    grad_text: Optional[str] = None
    alpha_scaling: bool = False
    tags: tuple = field(default_factory=tuple)
    g: object = 0.0
    dirichlet: object = None

    def coefficients(self) -> CoefficientSet:
        """Coefficient set; Dirichlet data default to the exact solution when known."""
        dirichlet = self.dirichlet
        if dirichlet is None:
            dirichlet = self.exact_text if self.exact_text is not None else 0.0
        coeffs = CoefficientSet.build(self.dim, D=self.D, b=self.b, gamma=self.gamma, f=self.f,
                                      g=self.g, dirichlet=dirichlet)
        return alpha_scaled(coeffs) if self.alpha_scaling else coeffs

    @property
    def has_exact(self) -> bool:
        return self.exact_text is not None

    @property
    def exact(self) -> Optional[Callable]:
        return None if self.exact_text is None else Field.from_text(self.exact_text, self.dim)

    @property
    def exact_grad(self) -> Optional[Callable]:
        return None if self.grad_text is None else Field.from_text(self.grad_text, self.dim)


def _num(v: float) -> str:
    return f"({float(v)!r})"


def _prod(factors) -> str:
    return "*".join(factors) if factors else "1"


def sine_solution(dim: int) -> tuple[str, str]:
    """``u = prod sin(pi x_k)`` and its gradient as expression text."""
    s = [f"sin(pi*{c})" for c in COORDS[:dim]]
    c = [f"cos(pi*{c})" for c in COORDS[:dim]]
    u = _prod(s)
    grad = []
    for k in range(dim):
        grad.append("pi*" + _prod([c[k]] + [s[m] for m in range(dim) if m != k]))
    return u, "[" + ", ".join(grad) + "]"


def sine_source(D, b, gamma: float) -> str:
    """Right-hand side ``-div(D grad u + b u) + gamma u`` for the sine solution."""
    D = np.asarray(D, dtype=float)
    b = np.asarray(b, dtype=float)
    dim = len(b)
    s = [f"sin(pi*{c})" for c in COORDS[:dim]]
    c = [f"cos(pi*{c})" for c in COORDS[:dim]]
    u = _prod(s)
    terms = [f"{_num(np.trace(D) + 0.0)}*pi^2*{u}"]
    for k in range(dim):
        for l in range(k + 1, dim):
            if D[k, l] != 0:
                rest = [s[m] for m in range(dim) if m not in (k, l)]
                terms.append(f"{_num(-2.0 * D[k, l])}*pi^2*" + _prod([c[k], c[l]] + rest))
    for k in range(dim):
        if b[k] != 0:
            rest = [s[m] for m in range(dim) if m != k]
            terms.append(f"{_num(-b[k])}*pi*" + _prod([c[k]] + rest))
    if gamma != 0:
        terms.append(f"{_num(gamma)}*{u}")
    return " + ".join(terms)


def _matrix_text(D) -> str:
    return "[" + ", ".join("[" + ", ".join(repr(float(v)) for v in row) + "]" for row in D) + "]"


def _sine_problem(name, dim, description, D, b, gamma, alpha_scaling=False, D_field=None):
    u, grad = sine_solution(dim)
    return Problem(name, dim, description,
                   D=_matrix_text(D) if D_field is None else D_field,
                   b="(" + ", ".join(repr(float(v)) for v in b) + ")",
                   gamma=float(gamma), f=sine_source(D, b, gamma),
                   exact_text=u, grad_text=grad, alpha_scaling=alpha_scaling)


TENSOR_2D = np.array([[2.0, 0.5], [0.5, 1.0]])
VELOCITY_2D = np.array([2.0, 1.0])
TENSOR_3D = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.25], [0.0, 0.25, 1.5]])
VELOCITY_3D = np.array([2.0, 1.0, 0.5])


def _dispersion_problem() -> Problem:
    D = dispersion_tensor(DISPERSION_PARAMS, VELOCITY_2D)
    p = DISPERSION_PARAMS
    prob = _sine_problem("dispersion2d", 2,
                         "dispersion tensor k_d=1e-4, k_t=21, k_l=2.1 with b=(2,1), gamma=1; "
                         "rescaled flux", D, VELOCITY_2D, 1.0, alpha_scaling=True,
                         D_field=f"dispersion({p.k_d!r}, {p.k_t!r}, {p.k_l!r})")
    return prob


def _catalog() -> dict:
    problems = [
        _sine_problem("poisson2d", 2, "D=I, b=0, u=sin(pi x) sin(pi y)", np.eye(2), [0.0, 0.0], 0.0),
        _sine_problem("eafe2d_constant", 2, "D=I, b=(10,5), u=sin(pi x) sin(pi y)",
                      np.eye(2), [10.0, 5.0], 0.0),
        _sine_problem("eafe2d_tensor", 2, "D=[[2,0.5],[0.5,1]], b=(2,1), gamma=1, u=sin sin",
                      TENSOR_2D, VELOCITY_2D, 1.0),
        Problem("layer2d", 2, f"D={LAYER_EPS:g} I, b=(1,0), f=1, u=0 on the boundary; "
                "boundary layer, no exact solution",
                D=LAYER_EPS, b="(1, 0)", gamma=0.0, f=1.0, tags=("no-exact",)),
        _dispersion_problem(),
        _sine_problem("poisson3d", 3, "D=I, b=0, u=sin sin sin", np.eye(3), [0.0, 0.0, 0.0], 0.0),
        _sine_problem("eafe3d_tensor", 3, "full SPD D, b=(2,1,0.5), gamma=1, u=sin sin sin",
                      TENSOR_3D, VELOCITY_3D, 1.0),
    ]
    return {p.name: p for p in problems}


CATALOG = _catalog()


def problem_catalog() -> dict:
    return dict(CATALOG)


def get_problem(name: str) -> Problem:
    try:
        return replace(CATALOG[name])
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(sorted(CATALOG))}") from None
