"""Diagnostics: monotonicity audit, discrete maximum principle, edge-element
identity check, error norms and convergence studies."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from expfit.coeff import CoefficientSet, Field
from expfit.eafe import SchemeOptions, assemble, cell_omegas, interpolate
from expfit.linalg import MMatrixVerdict, mmatrix_check, solve
from expfit.mesh import ElementGeometry, SimplicialMesh, generate_structured, local_edges, simplex_gradients
from expfit.quadrature import simplex_rule

log = logging.getLogger(__name__)

AUDIT_TOL = 1e-12


def _diffusion_coeffs(dim: int, D) -> CoefficientSet:
    if isinstance(D, CoefficientSet):
        return D
    return CoefficientSet.build(dim, D=D)


# --- monotonicity ------------------------------------------------------------


@dataclass
class MonotonicityReport:
    edges: np.ndarray          # (ne, 2) global edges
    edge_sums: np.ndarray      # sum over cells of omega_E^T
    minimum: float
    violators: list            # [((a, b), sum), ...]
    verdict: bool
    tolerance: float
    matrix_check: Optional[MMatrixVerdict] = None


def monotonicity_audit(mesh: SimplicialMesh, D, quad_order: int = 1,
                       beta: Optional[Sequence[float]] = None) -> MonotonicityReport:
    """Check ``sum_{T containing E} omega_E^T(D) >= 0`` for every edge.

    With ``beta`` given, additionally assembles the scheme for ``b = D beta``
    (no reaction, all faces as tagged) and runs :func:`mmatrix_check` on it.
    """
    coeffs = _diffusion_coeffs(mesh.dim, D)
    omega = cell_omegas(mesh.vertices[mesh.cells], coeffs, quad_order)
    sums = np.bincount(mesh.cell_edges.ravel(), weights=omega.ravel(), minlength=len(mesh.edges))
    tol = AUDIT_TOL * float(np.abs(omega).max())
    bad = np.flatnonzero(sums < -tol)
    violators = [((int(mesh.edges[k, 0]), int(mesh.edges[k, 1])), float(sums[k])) for k in bad]
    report = MonotonicityReport(mesh.edges, sums, float(sums.min()), violators, not violators, tol)
    if beta is not None:
        beta = np.asarray(beta, dtype=float)
        Dfield = coeffs.D
        b = Field(lambda p: np.einsum("nij,j->ni", Dfield(p), beta), (mesh.dim,),
                  constant=Dfield.constant)
        system = assemble(mesh, coeffs.with_fields(b=b, gamma=0.0, f=0.0))
        report.matrix_check = mmatrix_check(system.matrix)
    return report


# --- discrete maximum principle -----------------------------------------------


@dataclass
class DMPResult:
    u_min: float
    u_max: float
    lo: float
    hi: float
    passed: bool
    guaranteed: bool
    solution: np.ndarray = field(repr=False, default=None)

    @property
    def status(self) -> str:
        if not self.guaranteed:
            return "not guaranteed"
        return "pass" if self.passed else "fail"


def dmp_experiment(mesh: SimplicialMesh, coeffs: CoefficientSet, boundary_values,
                   options: Optional[SchemeOptions] = None, tol: float = 1e-13) -> DMPResult:
    """Solve with ``f = 0`` and the given Dirichlet data; check bounds of the solution.

    ``boundary_values`` is a per-vertex array (only Dirichlet vertices are used)
    or a vectorised callable.
    """
    coeffs = coeffs.with_fields(f=0.0)
    mask = mesh.dirichlet_vertices()
    if callable(boundary_values):
        values = np.asarray(boundary_values(mesh.vertices), dtype=float)
    else:
        values = np.asarray(boundary_values, dtype=float)
    system = assemble(mesh, coeffs, options, dirichlet_values=values)
    u, report = solve(system.matrix, system.rhs, tol=tol)
    if not report.converged:
        raise RuntimeError(f"solver failed in DMP experiment: {report.message}")
    lo, hi = float(values[mask].min()), float(values[mask].max())
    slack = 1e-10 * (hi - lo + 1.0)
    passed = bool(u.min() >= lo - slack and u.max() <= hi + slack)
    guaranteed = monotonicity_audit(mesh, coeffs).verdict
    return DMPResult(float(u.min()), float(u.max()), lo, hi, passed, guaranteed, u)


# --- edge-element identity ------------------------------------------------------


def nedelec_identity_test(geom: ElementGeometry, D, J, v) -> float:
    """``|sum_E (J.tau_E) int_T D phi_E . grad v  -  sum_E omega_E (J.tau_E) (v_i - v_j)|``.

    ``phi_E`` is the lowest-order edge basis function oriented along
    ``tau_E = q_i - q_j``, i.e. ``lambda_j grad(lambda_i) - lambda_i grad(lambda_j)``;
    its integral over ``T`` is ``|T| (grad lambda_i - grad lambda_j) / (d + 1)``.
    """
    D = np.asarray(D, dtype=float)
    J = np.asarray(J, dtype=float)
    v = np.asarray(v, dtype=float)
    d = geom.dim
    grads = geom.grad_lambda
    grad_v = v @ grads
    lhs = 0.0
    rhs = 0.0
    omega = cell_omegas(geom.points[None], CoefficientSet.build(d, D=D), 0)[0]
    for e, (i, j, tau) in enumerate(geom.edges):
        moment = J @ tau
        phi_int = geom.measure * (grads[i] - grads[j]) / (d + 1)
        lhs += moment * (D @ phi_int) @ grad_v
        rhs += omega[e] * moment * (v[i] - v[j])
    return abs(lhs - rhs)


# --- error norms -----------------------------------------------------------------


@dataclass
class ErrorNorms:
    l2: float
    h1_semi: float
    h1: float
    interp_l2: float
    interp_h1_semi: float
    interp_h1: float


def error_norms(mesh: SimplicialMesh, u_h, u_exact: Callable, grad_exact: Callable,
                quad_order: int = 4) -> ErrorNorms:
    """Errors ``u - u_h`` and ``u_I - u_h`` in L2, H1-seminorm and H1 norm."""
    u_h = np.asarray(u_h, dtype=float)
    pts = mesh.vertices[mesh.cells]
    grads, measure = simplex_gradients(pts)
    bary, w = simplex_rule(mesh.dim, quad_order)
    nc, nq, dim = mesh.num_cells, len(w), mesh.dim
    qp = np.einsum("qa,cad->cqd", bary, pts)
    uh_cells = u_h[mesh.cells]
    uh_q = uh_cells @ bary.T                                   # (nc, nq)
    guh = np.einsum("ca,cad->cd", uh_cells, grads)             # (nc, dim)
    u_q = np.asarray(u_exact(qp.reshape(-1, dim)), dtype=float).reshape(nc, nq)
    gu_q = np.asarray(grad_exact(qp.reshape(-1, dim)), dtype=float).reshape(nc, nq, dim)

    def integrate(values):
        return float(np.einsum("c,q,cq->", measure, w, values))

    l2 = integrate((u_q - uh_q) ** 2)
    semi = integrate(((gu_q - guh[:, None, :]) ** 2).sum(axis=2))
    ui = interpolate(mesh, u_exact)[mesh.cells] - uh_cells
    il2 = integrate((ui @ bary.T) ** 2)
    isemi = float((measure * (np.einsum("ca,cad->cd", ui, grads) ** 2).sum(axis=1)).sum())
    return ErrorNorms(math.sqrt(l2), math.sqrt(semi), math.sqrt(l2 + semi),
                      math.sqrt(il2), math.sqrt(isemi), math.sqrt(il2 + isemi))


# --- convergence study -------------------------------------------------------------

CSV_FIELDS = ["level", "h", "dofs", "err_l2", "err_h1_semi", "err_h1", "err_interp_h1",
              "rate_l2", "rate_h1"]


@dataclass
class ConvergenceRecord:
    level: int
    n: int
    h: float
    dofs: int
    err_l2: float
    err_h1_semi: float
    err_h1: float
    err_interp_h1: float
    rate_l2: Optional[float] = None
    rate_h1: Optional[float] = None
    rate_interp_h1: Optional[float] = None
    iterations: int = 0


def _rate(coarse: float, fine: float) -> float:
    if coarse <= 0 or fine <= 0:
        return float("nan")
    return math.log2(coarse / fine)


def add_rates(records: list) -> list:
    """Fill rate columns as ``log2(e_coarse / e_fine)`` between consecutive levels."""
    for prev, rec in zip(records, records[1:]):
        rec.rate_l2 = _rate(prev.err_l2, rec.err_l2)
        rec.rate_h1 = _rate(prev.err_h1, rec.err_h1)
        rec.rate_interp_h1 = _rate(prev.err_interp_h1, rec.err_interp_h1)
    return records


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, records: list):
        super().__init__(message)
        self.records = records


def convergence_study(problem, levels: int, n0: int = 8, options: Optional[SchemeOptions] = None,
                      tol: float = 1e-12, max_iter: int = 5000, preconditioner: str = "ilu",
                      quad_order: int = 4) -> list:
    """Solve ``problem`` on structured meshes ``n0 * 2**k`` and record errors and rates.

    ``problem`` needs ``dim``, ``coefficients()``, ``exact`` and ``exact_grad``.
    On a failing level a :class:`ConvergenceError` carrying the finished
    records is raised.
    """
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    coeffs = problem.coefficients()
    records: list = []
    for level in range(levels):
        n = n0 * 2 ** level
        mesh = generate_structured(problem.dim, n)
        try:
            system = assemble(mesh, coeffs, options)
            u_h, report = solve(system.matrix, system.rhs, tol=tol, max_iter=max_iter,
                                preconditioner=preconditioner)
        except Exception as exc:
            raise ConvergenceError(f"level {level} (n={n}) failed: {exc}", add_rates(records)) from exc
        if not report.converged:
            raise ConvergenceError(f"level {level} (n={n}): {report.message}", add_rates(records))
        err = error_norms(mesh, u_h, problem.exact, problem.exact_grad, quad_order)
        records.append(ConvergenceRecord(level, n, mesh.max_diameter(), mesh.num_vertices,
                                         err.l2, err.h1_semi, err.h1, err.interp_h1,
                                         iterations=report.iterations))
        log.info("level %d n=%d h=%.4g err_h1=%.4e err_interp_h1=%.4e",
                 level, n, records[-1].h, err.h1, err.interp_h1)
    return add_rates(records)


def records_to_csv(records: list, stream=None) -> str:
    """Write records in the fixed CSV schema; returns the text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow([
            r.level, repr(r.h), r.dofs, repr(r.err_l2), repr(r.err_h1_semi), repr(r.err_h1),
            repr(r.err_interp_h1),
            "" if r.rate_l2 is None else repr(r.rate_l2),
            "" if r.rate_h1 is None else repr(r.rate_h1),
        ])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text
