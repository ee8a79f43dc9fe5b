"""Problem coefficients: diffusion tensor, velocity, reaction, sources.

Every field is a callable mapping an ``(N, dim)`` array of points to an array
of shape ``(N,)`` (scalar), ``(N, dim)`` (vector) or ``(N, dim, dim)`` (tensor).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from expfit import expr as _expr

SYMMETRY_TOL = 1e-12


class CoefficientError(ValueError):
    pass


class Field:
    """Vectorised point function with a known value shape.

    ``constant`` marks fields that do not depend on position; the assembly
    uses it to pick closed-form edge weights.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], shape: tuple, constant: bool = False,
                 label: str = ""):
        self.fn = fn
        self.shape = tuple(shape)
        self.constant = constant
        self.label = label

    def __call__(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.asarray(self.fn(points), dtype=float)
        target = (len(points),) + self.shape
        if out.shape != target:
            out = np.broadcast_to(out, target).copy()
        return out

    def __repr__(self):
        return f"Field({self.label or self.fn!r}, shape={self.shape}, constant={self.constant})"

    @classmethod
    def const(cls, value) -> "Field":
        value = np.asarray(value, dtype=float)
        return cls(lambda p, v=value: np.broadcast_to(v, (len(p),) + v.shape).copy(),
                   value.shape, constant=True, label=np.array2string(value, separator=","))

    @classmethod
    def from_text(cls, text: str, dim: int) -> "Field":
        node = _expr.parse_field(text)
        _expr.check_variables(node, dim)
        shape = _expr.shape_of(node)
        constant = not _expr.free_variables(node)
        return cls(lambda p, n=node: _expr.evaluate(n, p), shape, constant=constant, label=text)


FieldLike = Union[Field, Callable, float, int, str, list, tuple, np.ndarray]


def as_field(value: FieldLike, dim: int, shape: tuple) -> Field:
    """Coerce a constant, expression string or callable into a :class:`Field`."""
    if isinstance(value, Field):
        field = value
    elif isinstance(value, str):
        field = Field.from_text(value, dim)
    elif callable(value):
        field = Field(value, shape)
    else:
        field = Field.const(value)
    if field.shape != tuple(shape):
        if field.shape == () and shape == (dim, dim):
            # scalar diffusion coefficient means c * I
            scalar = field
            field = Field(lambda p, s=scalar: s(p)[:, None, None] * np.eye(dim), shape,
                          constant=scalar.constant, label=scalar.label)
        else:
            raise CoefficientError(f"field {field.label!r} has shape {field.shape}, expected {shape}")
    return field


@dataclass(frozen=True)
class DispersionParams:
    k_d: float
    k_t: float
    k_l: float


def dispersion_tensor(params: DispersionParams, b) -> np.ndarray:
    """Diffusion-dispersion tensor ``k_d I + k_t b b^T/|b| + k_l (|b| I - b b^T/|b|)``.

    Accepts a single velocity (dim,) or a batch (N, dim). At ``b = 0`` the
    tensor is ``k_d I``.
    """
    b = np.asarray(b, dtype=float)
    single = b.ndim == 1
    bb = np.atleast_2d(b)
    dim = bb.shape[1]
    norm = np.linalg.norm(bb, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    outer = bb[:, :, None] * bb[:, None, :] / safe[:, None, None]
    eye = np.eye(dim)
    D = (params.k_d * eye
         + params.k_t * outer
         + params.k_l * (norm[:, None, None] * eye - outer))
    D[norm == 0] = params.k_d * eye
    check_spd(D, None)
    return D[0] if single else D


def check_spd(D: np.ndarray, points: Optional[np.ndarray]) -> None:
    """Raise CoefficientError unless every matrix in ``D`` is symmetric positive definite."""
    D = np.asarray(D, dtype=float)
    batch = D.reshape(-1, D.shape[-1], D.shape[-1])
    scale = np.abs(batch).max(axis=(1, 2))
    asym = np.abs(batch - np.swapaxes(batch, 1, 2)).max(axis=(1, 2))
    bad = np.flatnonzero((asym > SYMMETRY_TOL * scale) | ~np.isfinite(batch).all(axis=(1, 2)))
    if bad.size == 0:
        try:
            np.linalg.cholesky(batch)
            return
        except np.linalg.LinAlgError:
            for k, m in enumerate(batch):
                try:
                    np.linalg.cholesky(m)
                except np.linalg.LinAlgError:
                    bad = [k]
                    break
    k = int(bad[0])
    where = ""
    if points is not None:
        where = " at point (" + ", ".join(f"{v:.15g}" for v in points[k]) + ")"
    raise CoefficientError(f"diffusion tensor is not symmetric positive definite{where}")


@dataclass(frozen=True)
class CoefficientSet:
    """Fields of ``-div(D grad u + b u) + gamma u = f`` with boundary data.

    ``g`` is the inflow Neumann datum, ``dirichlet`` the prescribed value on
    Dirichlet faces. When ``alpha`` is set the scheme uses the rescaled flux
    ``alpha grad u + alpha D^-1 b u`` (see :func:`alpha_scaled`).
    """

    dim: int
    D: Field
    b: Field
    gamma: Field
    f: Field
    g: Field
    dirichlet: Field
    alpha: Optional[Field] = None

    @classmethod
    def build(cls, dim: int, D: FieldLike = 1.0, b: FieldLike = 0.0, gamma: FieldLike = 0.0,
              f: FieldLike = 0.0, g: FieldLike = 0.0, dirichlet: FieldLike = 0.0) -> "CoefficientSet":
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if not isinstance(b, (Field, str)) and not callable(b) and np.ndim(b) == 0:
            b = np.full(dim, float(b))
        bfield = as_field(b, dim, (dim,))
        return cls(
            dim,
            parse_diffusion(D, dim, bfield) if isinstance(D, str) else as_field(D, dim, (dim, dim)),
            bfield,
            as_field(gamma, dim, ()),
            as_field(f, dim, ()),
            as_field(g, dim, ()),
            as_field(dirichlet, dim, ()),
        )

    @property
    def constant_beta(self) -> bool:
        return self.D.constant and self.b.constant

    def with_fields(self, **changes) -> "CoefficientSet":
        shapes = {"D": (self.dim, self.dim), "b": (self.dim,)}
        if "b" in changes and not isinstance(changes["b"], (Field, str)) and not callable(changes["b"]) \
                and np.ndim(changes["b"]) == 0:
            changes["b"] = np.full(self.dim, float(changes["b"]))
        fields = {k: as_field(v, self.dim, shapes.get(k, ())) for k, v in changes.items()}
        return replace(self, **fields)

    def diffusion(self, points, check: bool = True) -> np.ndarray:
        D = self.D(points)
        if check:
            check_spd(D, np.atleast_2d(points))
        return D


def beta(coeffs: CoefficientSet, x) -> np.ndarray:
    """``D(x)^{-1} b(x)`` by Cholesky factorisation; batched over points."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    D = coeffs.diffusion(pts)
    bv = coeffs.b(pts)
    L = np.linalg.cholesky(D)
    y = np.linalg.solve(L, bv[..., None])
    out = np.linalg.solve(np.swapaxes(L, 1, 2), y)[..., 0]
    return out[0] if np.ndim(x) == 1 else out


def alpha_of(D: np.ndarray) -> np.ndarray:
    """Mean of the extreme eigenvalues of each SPD matrix."""
    ev = np.linalg.eigvalsh(D)
    return 0.5 * (ev[..., 0] + ev[..., -1])


def alpha_scaled(coeffs: CoefficientSet) -> CoefficientSet:
    """Variant using ``alpha = (lambda_min(D) + lambda_max(D)) / 2`` as flux scale.

    The flux is written as ``D~ (alpha grad u + beta~ u)`` with ``D~ = D / alpha``
    and ``beta~ = alpha D^-1 b``. The assembly then uses edge weights of ``D~``
    and harmonic averages of ``exp(psi) / alpha``.
    """
    D = coeffs.D
    alpha = Field(lambda p: alpha_of(D(p)), (), constant=D.constant, label="alpha")
    return replace(coeffs, alpha=alpha)


def scaled_diffusion(coeffs: CoefficientSet, points) -> np.ndarray:
    """``D~ = D / alpha`` at ``points`` (plain ``D`` when unscaled)."""
    D = coeffs.diffusion(points)
    if coeffs.alpha is None:
        return D
    return D / coeffs.alpha(points)[:, None, None]


def beta_scaled(coeffs: CoefficientSet, x) -> np.ndarray:
    """``beta~ = alpha D^-1 b`` (equal to :func:`beta` when unscaled)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    out = beta(coeffs, pts)
    if coeffs.alpha is not None:
        out = out * coeffs.alpha(pts)[:, None]
    return out[0] if np.ndim(x) == 1 else out


_DISPERSION = re.compile(r"^\s*dispersion\s*\(([^)]*)\)\s*$")


def parse_diffusion(text: str, dim: int, b: Field) -> Field:
    """Diffusion field from config text: an expression/literal or ``dispersion(k_d, k_t, k_l)``."""
    m = _DISPERSION.match(text)
    if m is None:
        return as_field(text, dim, (dim, dim))
    try:
        k_d, k_t, k_l = (float(v) for v in m.group(1).split(","))
    except ValueError:
        raise CoefficientError("dispersion() expects three numbers k_d, k_t, k_l") from None
    return dispersion_field(DispersionParams(k_d, k_t, k_l), b)


def dispersion_field(params: DispersionParams, b: Field) -> Field:
    dim = b.shape[0]
    return Field(lambda p: dispersion_tensor(params, b(p)), (dim, dim), constant=b.constant,
                 label=f"dispersion({params.k_d}, {params.k_t}, {params.k_l})")
