"""Sparse storage, Krylov solve with preconditioning, and M-matrix diagnostics."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DENSE_LIMIT = 400
RESTART = 50
INVERSE_CHECK_LIMIT = 200


def compress(rows, cols, vals, n: int) -> sp.csr_matrix:
    """CSR matrix from triplets; duplicates summed, column indices sorted per row."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise IndexError(f"triplet index out of range for a {n}x{n} matrix")
    # sorting by (row, col, value) fixes the summation order of duplicates
    order = np.lexsort((vals, cols, rows))
    A = sp.coo_matrix((vals[order], (rows[order], cols[order])), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def write_coordinate(A, path) -> None:
    """Dump ``A`` as ``i j value`` lines with 1-based indices."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    lines = [f"{i + 1} {j + 1} {float(v)!r}" for i, j, v in zip(C.row[order], C.col[order], C.data[order])]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    converged: bool
    message: str = ""

    def summary(self) -> str:
        return (f"method={self.method} iterations={self.iterations} "
                f"residual={self.residual:.3e} converged={'yes' if self.converged else 'no'}")


def ilu0(A: sp.csr_matrix) -> sp.csr_matrix:
    """Zero-fill incomplete LU; returns L (unit lower, implicit) and U packed in one CSR."""
    A = sp.csr_matrix(A, copy=True)
    A.sort_indices()
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data
    diag = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        row = indices[indptr[i]:indptr[i + 1]]
        hit = np.flatnonzero(row == i)
        if hit.size == 0 or data[indptr[i] + hit[0]] == 0:
            raise ZeroDivisionError(f"zero pivot in row {i}")
        diag[i] = indptr[i] + hit[0]
    for i in range(1, n):
        start, end = indptr[i], indptr[i + 1]
        pos = {int(indices[p]): p for p in range(start, end)}
        for p in range(start, diag[i]):
            k = indices[p]
            data[p] /= data[diag[k]]
            for q in range(diag[k] + 1, indptr[k + 1]):
                t = pos.get(int(indices[q]))
                if t is not None:
                    data[t] -= data[p] * data[q]
        if data[diag[i]] == 0:
            raise ZeroDivisionError(f"zero pivot in row {i}")
    return A


def _ilu_operator(A: sp.csr_matrix) -> spla.LinearOperator:
    LU = ilu0(A)
    L = sp.tril(LU, k=-1, format="csr") + sp.identity(A.shape[0], format="csr")
    U = sp.triu(LU, format="csr")

    def apply(x):
        y = spla.spsolve_triangular(L, x, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(U, y, lower=False)

    return spla.LinearOperator(A.shape, matvec=apply, dtype=float)


def _jacobi_operator(A: sp.csr_matrix) -> spla.LinearOperator:
    d = A.diagonal()
    inv = np.where(d != 0, 1.0 / np.where(d != 0, d, 1.0), 1.0)
    return spla.LinearOperator(A.shape, matvec=lambda x: inv * x, dtype=float)


def relative_residual(A, x, b) -> float:
    r = np.linalg.norm(A @ x - b)
    nb = np.linalg.norm(b)
    return float(r / nb) if nb > 0 else float(r)


def solve(A, rhs, tol: float = 1e-10, max_iter: int = 1000, preconditioner: str = "jacobi",
          dense_limit: int = DENSE_LIMIT):
    """Solve ``A x = rhs``.

    Systems with at most ``dense_limit`` unknowns are solved by dense LU; larger
    ones by restarted GMRES(50) with Jacobi or ILU(0) preconditioning. The
    ``converged`` flag is set from an independently recomputed relative residual.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    A = sp.csr_matrix(A)
    rhs = np.asarray(rhs, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or rhs.shape != (n,):
        raise ValueError("solve needs a square matrix and a matching right-hand side")

    if n <= dense_limit:
        method = "dense-lu"
        iterations = 1
        message = ""
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(A.toarray(), check_finite=True)
                x = sla.lu_solve(lu, rhs)
            if np.any(np.diag(lu[0]) == 0):
                message = "singular matrix"
        except (sla.LinAlgError, ValueError) as exc:
            x = np.zeros(n)
            message = str(exc)
    else:
        method = f"gmres({RESTART})+{preconditioner}"
        try:
            if preconditioner == "jacobi":
                M = _jacobi_operator(A)
            elif preconditioner == "ilu":
                M = _ilu_operator(A)
            elif preconditioner == "none":
                M = None
            else:
                raise ValueError(f"unknown preconditioner {preconditioner!r}")
        except ZeroDivisionError as exc:
            M, message = None, f"preconditioner breakdown: {exc}"
        else:
            message = ""
        count = [0]

        def cb(_):
            count[0] += 1

        cycles = max(1, math.ceil(max_iter / RESTART))
        x, info = spla.gmres(A, rhs, rtol=tol, atol=0.0, restart=min(RESTART, max_iter),
                             maxiter=cycles, M=M, callback=cb, callback_type="pr_norm")
        iterations = count[0]
        if info > 0:
            message = message or f"no convergence after {iterations} iterations"
        elif info < 0:
            message = "breakdown"

    finite = np.isfinite(x).all()
    residual = relative_residual(A, x, rhs) if finite else float("inf")
    converged = bool(finite and residual <= tol)
    if not converged and not message:
        message = "residual above tolerance"
    report = SolveReport(method, iterations, residual, converged, message)
    log.debug(report.summary())
    return x, report


# --- M-matrix diagnostics -------------------------------------------------------


@dataclass
class MMatrixVerdict:
    sign_ok: bool
    diag_positive: bool
    dominance_ok: bool
    inverse_checked: bool
    inverse_nonnegative: bool | None
    details: dict = field(default_factory=dict)

    @property
    def sufficient(self) -> bool:
        """Sign pattern plus weak diagonal dominance with a strict row."""
        return self.sign_ok and self.diag_positive and self.dominance_ok

    @property
    def is_m_matrix(self) -> bool:
        if self.inverse_checked:
            return bool(self.sign_ok and self.diag_positive and self.inverse_nonnegative)
        return self.sufficient


def mmatrix_check(A, inverse_limit: int = INVERSE_CHECK_LIMIT, sign_tol: float = 1e-13,
                  inverse_tol: float = 1e-12) -> MMatrixVerdict:
    """Audit sign pattern, row diagonal dominance and (for small n) inverse positivity."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    norm_inf = float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
    diag = A.diagonal()
    off = A - sp.diags(diag)
    off_max = float(off.data.max()) if off.nnz else 0.0
    sign_ok = off_max <= sign_tol * norm_inf
    diag_positive = bool((diag > 0).all())
    off_abs = np.asarray(abs(off).sum(axis=1)).ravel()
    slack = diag - off_abs
    weak = bool((slack >= -sign_tol * max(norm_inf, 1.0)).all())
    strict = bool((slack > sign_tol * max(norm_inf, 1.0)).any())
    dominance_ok = weak and strict

    inverse_checked = n <= inverse_limit
    inverse_nonnegative = None
    min_inverse = None
    if inverse_checked:
        dense = A.toarray()
        try:
            inv = np.linalg.inv(dense)
            scale = np.abs(inv).max() if inv.size else 0.0
            min_inverse = float(inv.min()) if inv.size else 0.0
            inverse_nonnegative = bool(np.isfinite(inv).all() and min_inverse >= -inverse_tol * scale)
        except np.linalg.LinAlgError:
            inverse_nonnegative = False
    return MMatrixVerdict(sign_ok, diag_positive, dominance_ok, inverse_checked, inverse_nonnegative,
                          {"max_offdiag": off_max, "norm_inf": norm_inf, "min_inverse": min_inverse})
