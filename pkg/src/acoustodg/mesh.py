"""Conforming triangular meshes with edge (facet) topology.

A :class:`TriMesh` stores counterclockwise triangles together with a flat
facet table: every edge of the triangulation appears once, with one or two
owner triangles, its length and a unit normal pointing out of the first
owner.  The facet table is what the DG assembly walks over.

Mesh files use a small line-oriented text format::

    trimesh 1
    <nv> <nt>
    x y            (nv lines)
    i j k          (nt lines, 0-based)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Facet",
    "TriMesh",
    "MeshError",
    "MeshParseError",
    "DanglingIndexError",
    "InvertedElementError",
    "NonManifoldEdgeError",
    "generate_rect_mesh",
    "import_mesh",
    "export_mesh",
    "read_mesh",
    "write_mesh",
]

# local edge i is opposite local vertex i, walked counterclockwise
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class MeshError(ValueError):
    """Base class for mesh construction and import failures."""


class MeshParseError(MeshError):
    pass


class DanglingIndexError(MeshError):
    pass


class InvertedElementError(MeshError):
    pass


class NonManifoldEdgeError(MeshError):
    pass


@dataclass(frozen=True)
class Facet:
    """One edge of the triangulation.

    ``owners[1]`` and ``local_edges[1]`` are -1 for boundary facets.  The
    normal points out of ``owners[0]``.
    """

    vertices: tuple[int, int]
    owners: tuple[int, int]
    local_edges: tuple[int, int]
    length: float
    normal: tuple[float, float]

    @property
    def kind(self) -> str:
        return "interior" if self.owners[1] >= 0 else "boundary"


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangular mesh with facet topology.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    facet_vertices : (nf, 2) int array, ordered counterclockwise w.r.t. the
        first owner
    facet_owners : (nf, 2) int array, second column -1 on the boundary
    facet_local : (nf, 2) int array of local edge indices
    facet_length, facet_normal : facet diameters and unit normals
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facet_vertices: np.ndarray
    facet_owners: np.ndarray
    facet_local: np.ndarray
    facet_length: np.ndarray
    facet_normal: np.ndarray
    element_facets: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles) -> "TriMesh":
        """Build the facet topology of a counterclockwise triangulation."""
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (nv, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (nt, 3)")
        nt = len(triangles)
        if nt == 0:
            raise MeshError("mesh has no triangles")
        bad = np.flatnonzero((triangles < 0) | (triangles >= len(vertices)))
        if bad.size:
            t = bad[0] // 3
            raise DanglingIndexError(
                f"triangle {t} references vertex {triangles.flat[bad[0]]}, "
                f"but the mesh has {len(vertices)} vertices")
        area = signed_areas(vertices, triangles)
        nonpos = np.flatnonzero(area <= 0.0)
        if nonpos.size:
            raise InvertedElementError(
                f"triangle {nonpos[0]} has non-positive signed area "
                f"{area[nonpos[0]]:.3e}")

        # directed edges, 3 per triangle, in local-edge order
        directed = triangles[:, LOCAL_EDGES].reshape(-1, 2)
        keys = np.sort(directed, axis=1)
        uniq, first, inverse, counts = np.unique(
            keys, axis=0, return_index=True, return_inverse=True,
            return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            f = np.flatnonzero(counts > 2)[0]
            raise NonManifoldEdgeError(
                f"edge ({uniq[f, 0]}, {uniq[f, 1]}) is shared by "
                f"{counts[f]} triangles")

        nf = len(uniq)
        owners = -np.ones((nf, 2), dtype=np.int64)
        local = -np.ones((nf, 2), dtype=np.int64)
        # facets numbered by first use so that ordering follows the elements
        order = np.argsort(first, kind="stable")
        renum = np.empty(nf, dtype=np.int64)
        renum[order] = np.arange(nf)
        fid = renum[inverse]
        slot_taken = np.zeros(nf, dtype=bool)
        for h, f in enumerate(fid):
            t, le = divmod(h, 3)
            if not slot_taken[f]:
                owners[f, 0], local[f, 0] = t, le
                slot_taken[f] = True
            else:
                owners[f, 1], local[f, 1] = t, le
        # a consistently oriented interior edge is walked in opposite directions
        interior = owners[:, 1] >= 0
        d0 = triangles[owners[interior, 0][:, None], LOCAL_EDGES[local[interior, 0]]]
        d1 = triangles[owners[interior, 1][:, None], LOCAL_EDGES[local[interior, 1]]]
        clash = np.flatnonzero(np.any(d0 != d1[:, ::-1], axis=1))
        if clash.size:
            f = np.flatnonzero(interior)[clash[0]]
            raise InvertedElementError(
                f"triangles {owners[f, 0]} and {owners[f, 1]} have "
                "inconsistent orientation")

        fverts = triangles[owners[:, 0][:, None], LOCAL_EDGES[local[:, 0]]]
        tangent = vertices[fverts[:, 1]] - vertices[fverts[:, 0]]
        length = np.hypot(tangent[:, 0], tangent[:, 1])
        normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / length[:, None]
        element_facets = fid.reshape(nt, 3)
        for a in (vertices, triangles, fverts, owners, local, length, normal,
                  element_facets):
            a.setflags(write=False)
        return cls(vertices, triangles, fverts, owners, local, length, normal,
                   element_facets)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_facets(self) -> int:
        return len(self.facet_vertices)

    @cached_property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_owners[:, 1] >= 0)

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_owners[:, 1] < 0)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * signed_areas(self.vertices, self.triangles)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """Element diameters h_K (longest edge)."""
        p = self.vertices[self.triangles]
        e = p[:, [1, 2, 0]] - p
        return np.hypot(e[..., 0], e[..., 1]).max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @cached_property
    def facets(self) -> list[Facet]:
        return [
            Facet(tuple(int(v) for v in self.facet_vertices[f]),
                  tuple(int(t) for t in self.facet_owners[f]),
                  tuple(int(e) for e in self.facet_local[f]),
                  float(self.facet_length[f]),
                  tuple(float(c) for c in self.facet_normal[f]))
            for f in range(self.n_facets)
        ]

    def boundary_length(self) -> float:
        return float(self.facet_length[self.boundary_facets].sum())

    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def same_as(self, other: "TriMesh") -> bool:
        """Bit-exact equality of coordinates and connectivity."""
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles))


def signed_areas(vertices, triangles) -> np.ndarray:
    """Twice the signed area of each triangle."""
    p = vertices[triangles]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]


def generate_rect_mesh(a: float, b: float, n: int, diag: str = "right") -> TriMesh:
    """Structured mesh of (0, a) x (0, b) with ``n`` cells per side.

    Each grid cell is cut into two triangles along one diagonal:
    ``"right"`` joins the lower-left and upper-right corners, ``"left"``
    the lower-right and upper-left corners.
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"rectangle sides must be positive, got a={a}, b={b}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    xs = np.linspace(0.0, a, n + 1)
    ys = np.linspace(0.0, b, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    if diag == "right":
        t1 = np.column_stack([v00, v10, v11])
        t2 = np.column_stack([v00, v11, v01])
    elif diag == "left":
        t1 = np.column_stack([v00, v10, v01])
        t2 = np.column_stack([v10, v11, v01])
    else:
        raise ValueError(f"unknown diagonal pattern {diag!r} (use 'right' or 'left')")
    triangles = np.stack([t1, t2], axis=1).reshape(-1, 3)
    return TriMesh.from_arrays(vertices, triangles)


def import_mesh(text: str) -> TriMesh:
    """Parse mesh file content.

    Triangles are reoriented counterclockwise when the whole file uses the
    clockwise convention.  Mixed orientations mean a folded mesh and raise
    :class:`InvertedElementError`.
    """
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].split() != ["trimesh", "1"]:
        raise MeshParseError("missing 'trimesh 1' header")
    try:
        nv, nt = (int(t) for t in lines[1].split())
    except (IndexError, ValueError):
        raise MeshParseError("line 2 must hold '<nv> <nt>'") from None
    if nv < 3 or nt < 1:
        raise MeshParseError(f"invalid counts nv={nv}, nt={nt}")
    if len(lines) < 2 + nv + nt:
        raise MeshParseError(
            f"expected {nv} vertex and {nt} triangle lines, file is truncated")
    try:
        vertices = np.array([[float(t) for t in ln.split()]
                             for ln in lines[2:2 + nv]])
    except ValueError as exc:
        raise MeshParseError(f"bad vertex line: {exc}") from None
    try:
        triangles = np.array([[int(t) for t in ln.split()]
                              for ln in lines[2 + nv:2 + nv + nt]])
    except ValueError as exc:
        raise MeshParseError(f"bad triangle line: {exc}") from None
    if vertices.shape != (nv, 2):
        raise MeshParseError("every vertex line must hold exactly 2 numbers")
    if triangles.shape != (nt, 3):
        raise MeshParseError("every triangle line must hold exactly 3 indices")
    if len(lines) > 2 + nv + nt:
        raise MeshParseError("trailing content after the triangle block")

    bad = np.flatnonzero((triangles < 0) | (triangles >= nv))
    if bad.size:
        raise DanglingIndexError(
            f"triangle {bad[0] // 3} references vertex "
            f"{triangles.flat[bad[0]]}, but only {nv} vertices are defined")
    area = signed_areas(vertices, triangles)
    if np.any(area == 0.0):
        t = np.flatnonzero(area == 0.0)[0]
        raise InvertedElementError(f"triangle {t} is degenerate (zero area)")
    positive = area > 0
    if positive.all():
        pass
    elif not positive.any():
        triangles = triangles[:, [0, 2, 1]]
    else:
        minority = positive if positive.sum() < (~positive).sum() else ~positive
        t = np.flatnonzero(minority)[0]
        raise InvertedElementError(
            f"triangle {t} is inverted relative to the rest of the mesh")
    return TriMesh.from_arrays(vertices, triangles)


def export_mesh(mesh: TriMesh) -> str:
    """Serialize with 17 significant digits (round-trips bit-exactly)."""
    out = ["trimesh 1", f"{mesh.n_vertices} {mesh.n_triangles}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    return "\n".join(out) + "\n"


def read_mesh(path) -> TriMesh:
    with open(path) as fh:
        return import_mesh(fh.read())


def write_mesh(mesh: TriMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(export_mesh(mesh))
