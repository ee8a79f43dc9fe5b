"""Edge-averaged exponentially fitted finite element assembly.

For an element ``T`` and an edge ``E = (q_i, q_j)`` with ``tau = q_i - q_j`` the
local form is::

    a_T(u, v) = sum_E  omega_E^T  H_E  (e^{psi_E(q_i)} u_i - e^{psi_E(q_j)} u_j) (v_i - v_j)

where ``omega_E^T = -int_T D grad(lambda_i) . grad(lambda_j)``, ``psi_E`` is an
antiderivative of ``beta . tau / |tau|`` along the edge (``beta = D^-1 b``) and
``H_E`` is the inverse mean of ``e^{psi_E}`` over the edge. Only the products
``H_E e^{psi_E(q_i)}`` and ``H_E e^{psi_E(q_j)}`` enter the matrix, and these do
not depend on the additive constant in ``psi_E``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from expfit import coeff as _coeff
from expfit.coeff import CoefficientSet
from expfit.linalg import compress
from expfit.mesh import BoundaryTag, ElementGeometry, SimplicialMesh, local_edges, simplex_gradients
from expfit.quadrature import gauss_interval, simplex_rule

log = logging.getLogger(__name__)

MAX_PANELS = 1024
STEEP_PANEL = 20.0


class AssemblyError(RuntimeError):
    pass


# --- Bernoulli function ---------------------------------------------------


def bernoulli(t):
    """``B(t) = t / (exp(t) - 1)`` evaluated without cancellation or overflow."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = np.abs(t) < 1e-4
    big = t > 700.0  # expm1 overflows near 709.8
    mid = ~small & ~big
    ts = t[small]
    out[small] = 1.0 - ts / 2.0 + ts ** 2 / 12.0 - ts ** 4 / 720.0
    out[big] = t[big] * np.exp(-t[big])
    out[mid] = t[mid] / np.expm1(t[mid])
    return out if out.ndim else float(out)


# --- edge data ------------------------------------------------------------


@dataclass(frozen=True)
class EdgeData:
    """Exponential data of one local edge, in the gauge ``psi(q_j) = 0``."""
    cell: int
    local: tuple
    omega: float
    dpsi: float
    harm_gauged: float

    @property
    def pair(self) -> tuple[float, float]:
        """Gauge-free coefficients multiplying ``u_i`` and ``u_j``."""
        return self.harm_gauged * np.exp(self.dpsi), self.harm_gauged


@dataclass
class SchemeOptions:
    """Quadrature and variant switches for :func:`assemble`.

    ``edge_quad`` is the Gauss point count per panel along edges, the other
    orders are polynomial degrees of simplex rules (degree 0 or 1 means the
    barycenter). ``constant_beta=None`` auto-detects constant coefficients.
    ``gauge_shift`` adds a per-global-edge constant to ``psi`` (testing aid).
    """
    edge_quad: int = 4
    mass_quad: int = 2
    omega_quad: int = 1
    face_quad: int = 2
    constant_beta: Optional[bool] = None
    gauge_shift: Optional[np.ndarray] = None
    check_spd: bool = True


def _edge_pairs_quadrature(starts, taus, coeffs: CoefficientSet, npts: int, shift=None):
    """Coefficient pairs for edges from ``starts`` along ``taus`` by composite Gauss.

    Returns ``(c_i, c_j, dpsi)`` where ``c_i = H e^{psi(q_i)}``, ``c_j = H e^{psi(q_j)}``
    and ``dpsi = psi(q_i) - psi(q_j)``.
    """
    ne, dim = starts.shape
    g, w = gauss_interval(npts)
    shift = np.zeros(ne) if shift is None else np.asarray(shift, dtype=float)

    def bt(theta):
        # beta . tau at parameters theta (ne_sub, k)
        pts = starts_s[:, None, :] + theta[..., None] * taus_s[:, None, :]
        # psi' = beta~ . tau / alpha = D^-1 b . tau in both flux scalings
        vals = _coeff.beta(coeffs, pts.reshape(-1, dim)).reshape(pts.shape)
        return np.einsum("ekd,ed->ek", vals, taus_s)

    # panel count from a coarse estimate of the total potential drop
    starts_s, taus_s = starts, taus
    probe = bt(np.tile(np.array([0.0, 0.5, 1.0]), (ne, 1)))
    panels = np.clip(np.ceil(np.abs(probe).max(axis=1)), 1, MAX_PANELS).astype(int)

    c_i = np.empty(ne)
    c_j = np.empty(ne)
    dpsi = np.empty(ne)
    for m in np.unique(panels):
        sel = np.flatnonzero(panels == m)
        starts_s, taus_s = starts[sel], taus[sel]
        k = len(sel)
        p = np.arange(m)
        # outer nodes theta_{p,q} = (p + g_q) / m
        outer = ((p[:, None] + g[None, :]) / m).ravel()                     # (m*n,)
        panel_int = bt(np.tile(outer, (k, 1))).reshape(k, m, npts) @ w / m  # (k, m)
        cum = np.concatenate([np.zeros((k, 1)), np.cumsum(panel_int, axis=1)], axis=1)
        # psi at outer nodes: panel start + partial integral over [p/m, theta]
        inner = ((p[:, None, None] + g[None, :, None] * g[None, None, :]) / m).reshape(-1)
        partial = bt(np.tile(inner, (k, 1))).reshape(k, m, npts, npts) @ w
        partial = partial * (g[None, None, :] / m)
        psi = cum[:, :-1, None] + partial                                    # (k, m, n)
        top = cum[:, -1]
        s = psi + shift[sel, None, None]
        s_i = top + shift[sel]
        s_j = shift[sel]
        ends = cum + shift[sel, None]
        mx = np.maximum(s.reshape(k, -1).max(axis=1), ends.max(axis=1))
        weight = np.exp(s - mx[:, None, None])
        if coeffs.alpha is not None:
            pts = starts_s[:, None, :] + outer[None, :, None] * taus_s[:, None, :]
            weight = weight / coeffs.alpha(pts.reshape(-1, dim)).reshape(k, m, npts)
        panel = weight @ w
        # panels with a large drop (only when the panel count is clipped): take psi
        # linear on the panel and integrate exp exactly, which cannot underflow
        drop = np.diff(cum, axis=1)
        steep = np.abs(drop) > STEEP_PANEL
        if steep.any():
            log_b = np.where(drop > 700.0, np.log(np.abs(drop)) - drop,
                             np.log(bernoulli(np.minimum(drop, 700.0))))
            fitted = np.exp(ends[:, :-1] - mx[:, None] - log_b)
            if coeffs.alpha is not None:
                mids = starts_s[:, None, :] + ((p + 0.5) / m)[None, :, None] * taus_s[:, None, :]
                fitted = fitted / coeffs.alpha(mids.reshape(-1, dim)).reshape(k, m)
            panel = np.where(steep, fitted, panel)
        integral = panel.sum(axis=1) / m
        c_i[sel] = np.exp(s_i - mx) / integral
        c_j[sel] = np.exp(s_j - mx) / integral
        dpsi[sel] = top
    return c_i, c_j, dpsi


def _edge_pairs_constant(starts, taus, coeffs: CoefficientSet):
    """Closed form for edge-constant ``beta``: ``(alpha B(-t), alpha B(t), t)``."""
    mid = starts + 0.5 * taus
    t = np.einsum("ed,ed->e", _coeff.beta(coeffs, mid), taus)
    scale = 1.0 if coeffs.alpha is None else coeffs.alpha(mid)
    return scale * bernoulli(-t), scale * bernoulli(t), t


def edge_coefficients(starts, taus, coeffs: CoefficientSet, npts: int = 4,
                      constant: Optional[bool] = None, shift=None):
    """Gauge-free coefficient pairs ``(c_i, c_j)`` and potential drops for a batch of edges.

    The edge runs from ``q_j = starts`` to ``q_i = starts + taus``.
    """
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    taus = np.atleast_2d(np.asarray(taus, dtype=float))
    if constant is None:
        constant = coeffs.constant_beta
    if constant:
        return _edge_pairs_constant(starts, taus, coeffs)
    return _edge_pairs_quadrature(starts, taus, coeffs, npts, shift)


def edge_exponential_data(q_j, q_i, coeffs: CoefficientSet, quad_order: int = 4,
                          constant: Optional[bool] = None) -> tuple[float, float]:
    """Potential drop ``psi(q_i)`` and harmonic average for one edge, gauge ``psi(q_j) = 0``.

    With the rescaled-flux variant the harmonic average is that of
    ``exp(psi) / alpha``.
    """
    q_j = np.asarray(q_j, dtype=float)
    q_i = np.asarray(q_i, dtype=float)
    _, c_j, dpsi = edge_coefficients(q_j[None], (q_i - q_j)[None], coeffs, quad_order, constant)
    return float(dpsi[0]), float(c_j[0])


# --- diffusion weights ------------------------------------------------------


def _mean_tensor(points, coeffs: CoefficientSet, degree: int, check: bool):
    """Cell averages of ``D~`` for cells given by (nc, d+1, d) vertex arrays."""
    nc, nloc, dim = points.shape
    if coeffs.D.constant and coeffs.alpha is None:
        D = coeffs.diffusion(points.mean(axis=1)[:1], check)
        return np.broadcast_to(D[0], (nc, dim, dim))
    bary, w = simplex_rule(dim, degree)
    qp = np.einsum("qa,cad->cqd", bary, points).reshape(-1, dim)
    D = coeffs.diffusion(qp, check)
    if coeffs.alpha is not None:
        D = D / coeffs.alpha(qp)[:, None, None]
    return np.einsum("q,cqij->cij", w, D.reshape(nc, len(w), dim, dim))


def cell_omegas(points, coeffs: CoefficientSet, degree: int = 1, check: bool = True):
    """``omega_E^T(D~)`` for all local edges of a batch of cells, shape (nc, n_local_edges)."""
    points = np.asarray(points, dtype=float)
    grads, measure = simplex_gradients(points)
    Dbar = _mean_tensor(points, coeffs, degree, check)
    pairs = local_edges(points.shape[2])
    gi = grads[:, [p[0] for p in pairs], :]
    gj = grads[:, [p[1] for p in pairs], :]
    return -measure[:, None] * np.einsum("cei,cij,cej->ce", gi, Dbar, gj)


def edge_weight_omega(geom: ElementGeometry, D, quad_order: int = 1) -> np.ndarray:
    """``-int_T D grad(lambda_i) . grad(lambda_j)`` for each local edge of ``geom``.

    ``D`` may be a constant matrix, a callable field or a CoefficientSet.
    """
    if isinstance(D, CoefficientSet):
        coeffs = D
    else:
        coeffs = CoefficientSet.build(geom.dim, D=D)
    return cell_omegas(geom.points[None], coeffs, quad_order)[0]


def local_eafe_matrix(geom: ElementGeometry, coeffs: CoefficientSet,
                      options: Optional[SchemeOptions] = None) -> np.ndarray:
    """Element matrix of the exponentially fitted form (rows: test, columns: trial)."""
    options = options or SchemeOptions()
    d = geom.dim
    pairs = local_edges(d)
    omega = cell_omegas(geom.points[None], coeffs, options.omega_quad, options.check_spd)[0]
    starts = np.array([geom.points[j] for _, j in pairs])
    taus = np.array([tau for _, _, tau in geom.edges])
    c_i, c_j, _ = edge_coefficients(starts, taus, coeffs, options.edge_quad, options.constant_beta)
    A = np.zeros((d + 1, d + 1))
    for e, (i, j) in enumerate(pairs):
        A[i, i] += omega[e] * c_i[e]
        A[i, j] -= omega[e] * c_j[e]
        A[j, i] -= omega[e] * c_i[e]
        A[j, j] += omega[e] * c_j[e]
    return A


def element_edge_data(mesh: SimplicialMesh, coeffs: CoefficientSet,
                      options: Optional[SchemeOptions] = None) -> list[EdgeData]:
    """Per (cell, local edge) records of weights and exponential data."""
    options = options or SchemeOptions()
    pts = mesh.vertices[mesh.cells]
    omega = cell_omegas(pts, coeffs, options.omega_quad, options.check_spd)
    pairs = local_edges(mesh.dim)
    starts = np.concatenate([pts[:, j] for _, j in pairs])
    taus = np.concatenate([pts[:, i] - pts[:, j] for i, j in pairs])
    _, c_j, dpsi = edge_coefficients(starts, taus, coeffs, options.edge_quad, options.constant_beta)
    nc = mesh.num_cells
    out = []
    for c in range(nc):
        for e, pair in enumerate(pairs):
            k = e * nc + c
            out.append(EdgeData(c, pair, float(omega[c, e]), float(dpsi[k]), float(c_j[k])))
    return out


# --- global assembly --------------------------------------------------------


@dataclass
class SparseSystem:
    """Assembled linear system.

    ``raw_matrix``/``raw_rhs`` hold the system before Dirichlet elimination;
    ``matrix``/``rhs`` after it (identity rows at Dirichlet vertices, their
    columns moved to the right-hand side).
    """
    n: int
    matrix: sp.csr_matrix
    rhs: np.ndarray
    raw_matrix: sp.csr_matrix
    raw_rhs: np.ndarray
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    info: dict = field(default_factory=dict)


def _convection_diffusion_triplets(mesh, coeffs, options):
    pts = mesh.vertices[mesh.cells]
    omega = cell_omegas(pts, coeffs, options.omega_quad, options.check_spd)
    ne = len(mesh.edges)
    omega_sum = np.bincount(mesh.cell_edges.ravel(), weights=omega.ravel(), minlength=ne)

    # global orientation: q_j = lower index, q_i = higher index
    lo, hi = mesh.edges[:, 0], mesh.edges[:, 1]
    starts = mesh.vertices[lo]
    taus = mesh.vertices[hi] - starts
    c_i, c_j, dpsi = edge_coefficients(starts, taus, coeffs, options.edge_quad,
                                       options.constant_beta, options.gauge_shift)
    if not (np.isfinite(c_i).all() and np.isfinite(c_j).all()):
        bad = int(np.flatnonzero(~(np.isfinite(c_i) & np.isfinite(c_j)))[0])
        raise AssemblyError(f"non-finite edge coefficients on edge {tuple(mesh.edges[bad])}")
    rows = np.concatenate([hi, hi, lo, lo])
    cols = np.concatenate([hi, lo, hi, lo])
    vals = np.concatenate([omega_sum * c_i, -omega_sum * c_j, -omega_sum * c_i, omega_sum * c_j])
    return rows, cols, vals, {"omega_sum": omega_sum, "dpsi": dpsi}


def _mass_and_load(mesh, coeffs, degree):
    dim = mesh.dim
    pts = mesh.vertices[mesh.cells]
    _, measure = simplex_gradients(pts)
    bary, w = simplex_rule(dim, degree)
    qp = np.einsum("qa,cad->cqd", bary, pts).reshape(-1, dim)
    nc, nq = mesh.num_cells, len(w)
    gamma = coeffs.gamma(qp).reshape(nc, nq)
    f = coeffs.f(qp).reshape(nc, nq)
    if not (np.isfinite(gamma).all() and np.isfinite(f).all()):
        raise AssemblyError("reaction or source coefficient is not finite at a quadrature point")
    mass = np.einsum("c,q,cq,qa,qb->cab", measure, w, gamma, bary, bary)
    load = np.einsum("c,q,cq,qa->ca", measure, w, f, bary)
    cells = mesh.cells
    rows = np.repeat(cells, dim + 1, axis=1).ravel()
    cols = np.tile(cells, (1, dim + 1)).ravel()
    return rows, cols, mass.ravel(), load


def _face_terms(mesh, coeffs, degree):
    """Outflow boundary matrix ``-int b.n u v`` and inflow load ``int g v``."""
    dim = mesh.dim
    rows = np.empty(0, dtype=np.int64)
    cols = np.empty(0, dtype=np.int64)
    vals = np.empty(0)
    load = np.zeros(mesh.num_vertices)
    tags = mesh.boundary_tags
    if not ((tags == BoundaryTag.NEUMANN_OUT).any() or (tags == BoundaryTag.NEUMANN_IN).any()):
        return rows, cols, vals, load
    measure, normals, _ = mesh.face_geometry()
    bary, w = simplex_rule(dim - 1, degree)
    faces = mesh.boundary_faces
    qp = np.einsum("qa,fad->fqd", bary, mesh.vertices[faces])
    nf, nq = len(faces), len(w)

    out = np.flatnonzero(tags == BoundaryTag.NEUMANN_OUT)
    if out.size:
        bvals = coeffs.b(qp[out].reshape(-1, dim)).reshape(len(out), nq, dim)
        bn = np.einsum("fqd,fd->fq", bvals, normals[out])
        local = -np.einsum("f,q,fq,qa,qb->fab", measure[out], w, bn, bary, bary)
        fv = faces[out]
        rows = np.repeat(fv, dim, axis=1).ravel()
        cols = np.tile(fv, (1, dim)).ravel()
        vals = local.ravel()

    inflow = np.flatnonzero(tags == BoundaryTag.NEUMANN_IN)
    if inflow.size:
        g = coeffs.g(qp[inflow].reshape(-1, dim)).reshape(len(inflow), nq)
        local = np.einsum("f,q,fq,qa->fa", measure[inflow], w, g, bary)
        np.add.at(load, faces[inflow].ravel(), local.ravel())
    return rows, cols, vals, load


def assemble(mesh: SimplicialMesh, coeffs: CoefficientSet,
             options: Optional[SchemeOptions] = None,
             dirichlet_values: Optional[np.ndarray] = None) -> SparseSystem:
    """Assemble the exponentially fitted system with Dirichlet elimination.

    Dirichlet data come from ``coeffs.dirichlet`` unless a per-vertex array
    ``dirichlet_values`` is given.
    """
    options = options or SchemeOptions()
    if coeffs.dim != mesh.dim:
        raise AssemblyError(f"coefficients are {coeffs.dim}D but the mesh is {mesh.dim}D")
    n = mesh.num_vertices

    r1, c1, v1, info = _convection_diffusion_triplets(mesh, coeffs, options)
    r2, c2, v2, cell_load = _mass_and_load(mesh, coeffs, options.mass_quad)
    r3, c3, v3, face_load = _face_terms(mesh, coeffs, options.face_quad)
    rows = np.concatenate([r1, r2, r3])
    cols = np.concatenate([c1, c2, c3])
    vals = np.concatenate([v1, v2, v3])

    rhs = np.bincount(mesh.cells.ravel(), weights=cell_load.ravel(), minlength=n) + face_load
    raw = compress(rows, cols, vals, n)

    mask = mesh.dirichlet_vertices()
    values = np.zeros(n)
    if dirichlet_values is not None:
        values[mask] = np.asarray(dirichlet_values, dtype=float).reshape(n)[mask]
    elif mask.any():
        values[mask] = coeffs.dirichlet(mesh.vertices[mask])
    matrix, rhs_elim = apply_dirichlet(rows, cols, vals, rhs, mask, values)
    return SparseSystem(n, matrix, rhs_elim, raw, rhs, mask, values, info)


def apply_dirichlet(rows, cols, vals, rhs, mask, values):
    """Identity rows at Dirichlet vertices; their columns are moved to the right-hand side."""
    n = len(rhs)
    rhs = rhs.copy()
    keep = ~mask[rows]
    moved = keep & mask[cols]
    np.subtract.at(rhs, rows[moved], vals[moved] * values[cols[moved]])
    keep &= ~mask[cols]
    fixed = np.flatnonzero(mask)
    rows = np.concatenate([rows[keep], fixed])
    cols = np.concatenate([cols[keep], fixed])
    vals = np.concatenate([vals[keep], np.ones(len(fixed))])
    rhs[mask] = values[mask]
    return compress(rows, cols, vals, n), rhs


def interpolate(mesh: SimplicialMesh, u_exact) -> np.ndarray:
    """Nodal values of ``u_exact`` (vectorised callable or coefficient field)."""
    return np.asarray(u_exact(mesh.vertices), dtype=float).reshape(mesh.num_vertices)
