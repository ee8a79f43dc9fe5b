"""Simplicial meshes: structured generators, text I/O, boundary tags, element geometry."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

DEGENERACY_TOL = 1e-14


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class DegenerateElementError(MeshError):
    pass


class MeshFormatError(MeshError):
    """Malformed mesh file; ``line`` is 1-based (0 when not tied to a line)."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class BoundaryTag(enum.IntEnum):
    DIRICHLET = 0
    NEUMANN_IN = 1
    NEUMANN_OUT = 2

    @property
    def word(self) -> str:
        return self.name.lower()

    @classmethod
    def from_word(cls, word: str) -> "BoundaryTag":
        try:
            return cls[word.upper()]
        except KeyError:
            raise ValueError(f"unknown boundary tag {word!r}") from None


def _facets(cells: np.ndarray) -> np.ndarray:
    """All facets of all cells as sorted index tuples, shape (nc*(d+1), d).

    Facet ``k`` of a cell is the one opposite local vertex ``k``.
    """
    nloc = cells.shape[1]
    faces = [np.delete(cells, k, axis=1) for k in range(nloc)]
    return np.sort(np.stack(faces, axis=1).reshape(-1, nloc - 1), axis=1)


def _signed_measure(points: np.ndarray) -> np.ndarray:
    """Signed measures of simplices given as (n, d+1, d) vertex arrays."""
    d = points.shape[2]
    jac = points[:, 1:, :] - points[:, :1, :]
    return np.linalg.det(jac) / math.factorial(d)


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Conforming simplicial mesh (triangles or tetrahedra).

    Cells are stored with positive orientation. Boundary faces are stored
    with their vertex indices sorted ascending.
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_faces: np.ndarray
    boundary_tags: np.ndarray

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (nv, 2) or (nv, 3) array")
        dim = vertices.shape[1]
        cells = np.array(self.cells, dtype=np.int64).reshape(-1, dim + 1)
        faces = np.sort(np.array(self.boundary_faces, dtype=np.int64).reshape(-1, dim), axis=1)
        tags = np.array(self.boundary_tags, dtype=np.int8).reshape(-1)
        nv = len(vertices)
        if cells.size and (cells.min() < 0 or cells.max() >= nv):
            raise MeshError("cell vertex index out of range")
        if faces.size and (faces.min() < 0 or faces.max() >= nv):
            raise MeshError("boundary face vertex index out of range")
        if len(tags) != len(faces):
            raise MeshError("one tag per boundary face required")

        # canonical orientation: swap the last two vertices of negative cells
        vol = _signed_measure(vertices[cells])
        neg = vol < 0
        if neg.any():
            cells[neg, -2], cells[neg, -1] = cells[neg, -1].copy(), cells[neg, -2].copy()
            vol = np.abs(vol)
        scale = float(np.ptp(vertices, axis=0).max()) if nv else 1.0
        bad = np.flatnonzero(vol <= DEGENERACY_TOL * max(scale, 1e-300) ** dim)
        if bad.size:
            raise DegenerateElementError(f"cell {bad[0]} is degenerate (measure {vol[bad[0]]:.3e})")

        for name, arr in (("vertices", vertices), ("cells", cells),
                          ("boundary_faces", faces), ("boundary_tags", tags)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self._check_boundary()

    def _check_boundary(self):
        facets = _facets(self.cells)
        uniq, counts = np.unique(facets, axis=0, return_counts=True)
        if (counts > 2).any():
            raise MeshError("non-manifold mesh: a facet is shared by more than two cells")
        hull = uniq[counts == 1]
        given, gcount = np.unique(self.boundary_faces, axis=0, return_counts=True)
        if (gcount > 1).any():
            raise MeshError("boundary face listed more than once")
        hull_set = set(map(tuple, hull))
        given_set = set(map(tuple, given))
        if given_set - hull_set:
            raise MeshError("boundary face is not a facet of exactly one cell")
        if hull_set - given_set:
            raise MeshError("boundary not covered")

    # --- basic properties -------------------------------------------------

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    def equals(self, other: "SimplicialMesh") -> bool:
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.boundary_faces, other.boundary_faces)
            and np.array_equal(self.boundary_tags, other.boundary_tags)
        )

    # --- derived topology -------------------------------------------------

    @cached_property
    def edges(self) -> np.ndarray:
        """Global edges as (ne, 2) array with ascending vertex indices, sorted."""
        return self._edge_topology[0]

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """(nc, nloc_edges) global edge index of each local edge (see ``local_edges``)."""
        return self._edge_topology[1]

    @cached_property
    def _edge_topology(self):
        pairs = local_edges(self.dim)
        a = self.cells[:, [p[0] for p in pairs]]
        b = self.cells[:, [p[1] for p in pairs]]
        flat = np.stack([np.minimum(a, b).ravel(), np.maximum(a, b).ravel()], axis=1)
        edges, inverse = np.unique(flat, axis=0, return_inverse=True)
        edges.setflags(write=False)
        cell_edges = inverse.reshape(a.shape)
        cell_edges.setflags(write=False)
        return edges, cell_edges

    @cached_property
    def boundary_owner(self) -> tuple[np.ndarray, np.ndarray]:
        """For each boundary face: owning cell and the cell's vertex opposite the face."""
        nloc = self.dim + 1
        facets = _facets(self.cells)
        lookup = {tuple(f): i for i, f in enumerate(map(tuple, facets))}
        owner = np.empty(len(self.boundary_faces), dtype=np.int64)
        opposite = np.empty(len(self.boundary_faces), dtype=np.int64)
        for k, face in enumerate(self.boundary_faces):
            idx = lookup[tuple(face)]
            owner[k], loc = divmod(idx, nloc)
            opposite[k] = self.cells[owner[k], loc]
        return owner, opposite

    def face_geometry(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Boundary face measures, unit outward normals and barycenters."""
        pts = self.vertices[self.boundary_faces]
        bary = pts.mean(axis=1)
        edges = pts[:, 1:, :] - pts[:, :1, :]
        if self.dim == 2:
            t = edges[:, 0, :]
            normal = np.column_stack([t[:, 1], -t[:, 0]])
            measure = np.linalg.norm(t, axis=1)
        else:
            normal = np.cross(edges[:, 0, :], edges[:, 1, :])
            measure = 0.5 * np.linalg.norm(normal, axis=1)
        normal = normal / np.linalg.norm(normal, axis=1)[:, None]
        _, opposite = self.boundary_owner
        inward = self.vertices[opposite] - bary
        flip = np.einsum("ij,ij->i", normal, inward) > 0
        normal[flip] *= -1
        return measure, normal, bary

    def dirichlet_vertices(self) -> np.ndarray:
        """Boolean mask of vertices lying on a Dirichlet face."""
        mask = np.zeros(self.num_vertices, dtype=bool)
        faces = self.boundary_faces[self.boundary_tags == BoundaryTag.DIRICHLET]
        mask[faces.ravel()] = True
        return mask

    def cell_diameters(self) -> np.ndarray:
        pts = self.vertices[self.cells]
        diam = np.zeros(self.num_cells)
        for i, j in local_edges(self.dim):
            diam = np.maximum(diam, np.linalg.norm(pts[:, i] - pts[:, j], axis=1))
        return diam

    def max_diameter(self) -> float:
        return float(self.cell_diameters().max())


def local_edges(dim: int) -> list[tuple[int, int]]:
    """Local vertex pairs (i, j), i < j, in lexicographic order."""
    return list(itertools.combinations(range(dim + 1), 2))


# --- element geometry -----------------------------------------------------


@dataclass(frozen=True)
class ElementGeometry:
    cell: int
    measure: float
    grad_lambda: np.ndarray   # (dim+1, dim)
    points: np.ndarray        # (dim+1, dim)
    edges: tuple              # ((i, j, tau), ...) with tau = q_i - q_j

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def simplex_gradients(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric gradients and measures for a batch of simplices.

    Parameters
    ----------
    points : (n, d+1, d) array

    Returns
    -------
    grads : (n, d+1, d) array
    measure : (n,) array, unsigned
    """
    points = np.asarray(points, dtype=float)
    d = points.shape[2]
    jac = points[:, 1:, :] - points[:, :1, :]   # rows are q_k - q_0
    measure = np.abs(np.linalg.det(jac)) / math.factorial(d)
    # grad(lambda_k) . (q_m - q_0) = delta_km for k, m >= 1
    inv = np.linalg.inv(jac)                     # columns give gradients
    grads = np.empty_like(points)
    grads[:, 1:, :] = np.swapaxes(inv, 1, 2)
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return grads, measure


def simplex_geometry(points, cell: int = -1) -> ElementGeometry:
    """Geometry of a single simplex given by its (d+1, d) vertex coordinates."""
    points = np.asarray(points, dtype=float)
    d = points.shape[1]
    if points.shape != (d + 1, d):
        raise ValueError("expected (d+1, d) vertex coordinates")
    jac = points[1:] - points[0]
    vol = abs(np.linalg.det(jac)) / math.factorial(d)
    scale = float(np.ptp(points, axis=0).max())
    if vol <= DEGENERACY_TOL * max(scale, 1e-300) ** d:
        raise DegenerateElementError(f"cell {cell} is degenerate (measure {vol:.3e})")
    grads, measure = simplex_gradients(points[None])
    edges = tuple((i, j, points[i] - points[j]) for i, j in local_edges(d))
    return ElementGeometry(cell, float(measure[0]), grads[0], points, edges)


def element_geometry(mesh: SimplicialMesh, cell: int) -> ElementGeometry:
    if not 0 <= cell < mesh.num_cells:
        raise IndexError(f"cell index {cell} out of range")
    return simplex_geometry(mesh.vertices[mesh.cells[cell]], cell)


def edge_list(mesh: SimplicialMesh) -> list[tuple[tuple[int, int], list[int]]]:
    """Each global edge (min, max) with the cells that contain it."""
    adjacency: list[list[int]] = [[] for _ in range(len(mesh.edges))]
    for c, row in enumerate(mesh.cell_edges):
        for e in row:
            adjacency[e].append(c)
    return [((int(a), int(b)), cells) for (a, b), cells in zip(mesh.edges, adjacency)]


# --- generators ---------------------------------------------------------


def _kuhn_cube_tets() -> list[tuple[int, ...]]:
    """Six tetrahedra of the unit cube; corner index = x + 2y + 4z."""
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = 0
        tet = [0]
        for axis in perm:
            corner += 1 << axis
            tet.append(corner)
        tets.append(tuple(tet))
    return tets


def generate_structured(dim: int, n: int, domain: Optional[Sequence[Sequence[float]]] = None) -> SimplicialMesh:
    """Uniform simplicial mesh of an axis-aligned box with all faces Dirichlet.

    Squares are cut along the (0,0)-(1,1) diagonal; cubes use the six-tetrahedron
    Kuhn split along the main diagonal.

    Parameters
    ----------
    dim : 2 or 3
    n : subdivisions per axis
    domain : ``[(lo, hi), ...]`` per axis, default unit box
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    if domain is None:
        domain = [(0.0, 1.0)] * dim
    domain = [(float(lo), float(hi)) for lo, hi in domain]
    if len(domain) != dim or any(hi <= lo for lo, hi in domain):
        raise ValueError("domain must give a positive extent for every axis")

    axes = [np.linspace(lo, hi, n + 1) for lo, hi in domain]
    grid = np.meshgrid(*axes, indexing="ij")
    # vertex numbering: x fastest
    vertices = np.column_stack([g.transpose().ravel() for g in grid])
    stride = [(n + 1) ** k for k in range(dim)]

    if dim == 2:
        local = [(0, 1, 3), (0, 3, 2)]
    else:
        local = _kuhn_cube_tets()
    corner_offsets = []
    for c in range(2 ** dim):
        corner_offsets.append(sum(((c >> k) & 1) * stride[k] for k in range(dim)))
    corner_offsets = np.array(corner_offsets)

    base = np.stack(np.meshgrid(*[np.arange(n)] * dim, indexing="ij"), axis=-1).reshape(-1, dim)
    base = base[np.lexsort(base.T)]  # x fastest
    origin = base @ np.array(stride)
    cells = np.concatenate(
        [origin[:, None] + corner_offsets[list(t)][None, :] for t in local], axis=0
    )
    # order cells box by box
    order = np.argsort(np.tile(np.arange(len(origin)), len(local)), kind="stable")
    cells = cells[order]

    facets = _facets(cells)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    bfaces = uniq[counts == 1]
    tags = np.full(len(bfaces), BoundaryTag.DIRICHLET, dtype=np.int8)
    return SimplicialMesh(vertices, cells, bfaces, tags)


def retag_boundary(
    mesh: SimplicialMesh,
    rule: Callable[..., BoundaryTag],
    velocity: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SimplicialMesh:
    """Return a copy of ``mesh`` with every boundary face retagged.

    ``rule(barycenter, normal, bn)`` is called per face; ``bn`` is ``b . n`` at
    the barycenter when ``velocity`` is given, else ``None``.
    """
    _, normals, bary = mesh.face_geometry()
    bn = None
    if velocity is not None:
        bvals = np.asarray(velocity(bary), dtype=float).reshape(len(bary), mesh.dim)
        bn = np.einsum("ij,ij->i", bvals, normals)
    tags = np.array(
        [BoundaryTag(rule(bary[k], normals[k], None if bn is None else float(bn[k])))
         for k in range(len(bary))],
        dtype=np.int8,
    )
    return SimplicialMesh(mesh.vertices, mesh.cells, mesh.boundary_faces, tags)


def tag_by_flow(barycenter, normal, bn) -> BoundaryTag:
    """Neumann in where b.n > 0, out elsewhere."""
    return BoundaryTag.NEUMANN_IN if bn > 0 else BoundaryTag.NEUMANN_OUT


def validate_tags(mesh: SimplicialMesh, velocity: Callable[[np.ndarray], np.ndarray]) -> list[int]:
    """Indices of Neumann faces whose tag disagrees with the sign of b.n at the barycenter."""
    _, normals, bary = mesh.face_geometry()
    bvals = np.asarray(velocity(bary), dtype=float).reshape(len(bary), mesh.dim)
    bn = np.einsum("ij,ij->i", bvals, normals)
    bad = ((mesh.boundary_tags == BoundaryTag.NEUMANN_IN) & (bn <= 0)) | (
        (mesh.boundary_tags == BoundaryTag.NEUMANN_OUT) & (bn > 0)
    )
    return [int(k) for k in np.flatnonzero(bad)]


# --- text format ----------------------------------------------------------


def write_mesh(mesh: SimplicialMesh, path) -> None:
    """Write the whitespace-separated text format (1-based indices)."""
    lines = [f"{mesh.dim} {mesh.num_vertices} {mesh.num_cells} {len(mesh.boundary_faces)}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i) + 1) for i in c) for c in mesh.cells]
    for face, tag in zip(mesh.boundary_faces, mesh.boundary_tags):
        lines.append(" ".join(str(int(i) + 1) for i in face) + " " + BoundaryTag(tag).word)
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> SimplicialMesh:
    """Read a mesh written by :func:`write_mesh` (or by hand)."""
    raw = Path(path).read_text().splitlines()
    rows = [(k + 1, line.split()) for k, line in enumerate(raw)]
    rows = [(k, toks) for k, toks in rows if toks and not toks[0].startswith("#")]
    if not rows:
        raise MeshFormatError("empty mesh file")
    it = iter(rows)

    lineno, header = next(it)
    try:
        dim, nv, nc, nbf = (int(t) for t in header)
    except ValueError:
        raise MeshFormatError("header must be 'dim nv nc nbf'", lineno) from None
    if dim not in (2, 3) or min(nv, nc, nbf) < 0:
        raise MeshFormatError("header must be 'dim nv nc nbf' with dim in {2, 3}", lineno)

    def take(count, width, kind):
        out = []
        for _ in range(count):
            try:
                ln, toks = next(it)
            except StopIteration:
                raise MeshFormatError(f"unexpected end of file while reading {kind}") from None
            if len(toks) != width:
                raise MeshFormatError(f"expected {width} fields in {kind} record, got {len(toks)}", ln)
            out.append((ln, toks))
        return out

    vertices = []
    for ln, toks in take(nv, dim, "vertex"):
        try:
            vertices.append([float(t) for t in toks])
        except ValueError:
            raise MeshFormatError("bad vertex coordinate", ln) from None

    def indices(ln, toks):
        try:
            idx = [int(t) for t in toks]
        except ValueError:
            raise MeshFormatError("bad vertex index", ln) from None
        for i in idx:
            if not 1 <= i <= nv:
                raise MeshFormatError(f"vertex index {i} out of range 1..{nv}", ln)
        return [i - 1 for i in idx]

    cells = [indices(ln, toks) for ln, toks in take(nc, dim + 1, "cell")]
    faces, tags = [], []
    for ln, toks in take(nbf, dim + 1, "boundary face"):
        faces.append(indices(ln, toks[:-1]))
        try:
            tags.append(BoundaryTag.from_word(toks[-1]))
        except ValueError as exc:
            raise MeshFormatError(str(exc), ln) from None
    extra = next(it, None)
    if extra is not None:
        raise MeshFormatError("trailing data after boundary faces", extra[0])

    try:
        return SimplicialMesh(
            np.array(vertices, dtype=float).reshape(nv, dim),
            np.array(cells, dtype=np.int64).reshape(nc, dim + 1),
            np.array(faces, dtype=np.int64).reshape(nbf, dim),
            np.array(tags, dtype=np.int8),
        )
    except MeshError as exc:
        raise MeshFormatError(f"validation error: {exc}") from exc
