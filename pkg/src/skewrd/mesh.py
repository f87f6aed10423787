"""Interval and triangle meshes with interior-face connectivity.

Faces carry a fixed orientation: ``left`` is the element whose outward
normal is stored, ``right`` is the neighbour (``-1`` on the boundary).
Only interior faces enter the interior-penalty sums; boundary faces are
kept for bookkeeping (homogeneous Neumann data contributes nothing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = ["Mesh", "build_interval_mesh", "build_triangular_mesh", "dump_mesh"]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable simplicial mesh.

    Attributes
    ----------
    dim : int
        1 for intervals, 2 for triangles.
    vertices : ndarray, shape (n_vertices, dim)
    elements : ndarray of int, shape (n_elements, dim + 1)
    measures : ndarray, shape (n_elements,)
        Element lengths (1D) or areas (2D).
    faces : ndarray of int, shape (n_faces, 2 + dim)
        Columns ``left, right, v0[, v1]``; ``right == -1`` on the boundary.
    face_sizes : ndarray, shape (n_faces,)
        ``h_e`` used by the penalty term.
    face_normals : ndarray, shape (n_faces, dim)
        Unit normal pointing out of the left element.
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    measures: np.ndarray
    faces: np.ndarray
    face_sizes: np.ndarray
    face_normals: np.ndarray

    def __post_init__(self):
        for arr in (self.vertices, self.elements, self.measures, self.faces,
                    self.face_sizes, self.face_normals):
            arr.setflags(write=False)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def interior(self) -> np.ndarray:
        return self.faces[:, 1] >= 0

    @property
    def interior_faces(self) -> np.ndarray:
        return self.faces[self.interior]

    @property
    def n_interior_faces(self) -> int:
        return int(self.interior.sum())

    @property
    def boundary_faces(self) -> np.ndarray:
        return self.faces[~self.interior]

    @property
    def domain_measure(self) -> float:
        return float(self.measures.sum())

    def element_vertices(self) -> np.ndarray:
        """Vertex coordinates per element, shape (n_elements, dim + 1, dim)."""
        return self.vertices[self.elements]

    def affine_maps(self):
        """Return ``(x0, jac)`` with ``x = x0 + jac @ xi`` on each element.

        The reference element is ``[0, 1]`` in 1D and the unit triangle
        ``{xi, eta >= 0, xi + eta <= 1}`` in 2D.
        """
        pts = self.element_vertices()
        x0 = pts[:, 0, :]
        jac = np.stack([pts[:, i + 1, :] - x0 for i in range(self.dim)], axis=-1)
        return x0, jac

    def centroids(self) -> np.ndarray:
        return self.element_vertices().mean(axis=1)


def build_interval_mesh(a: float, b: float, dx: float) -> Mesh:
    """Uniform partition of ``[a, b]`` into ``round((b - a) / dx)`` cells."""
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise InvalidArgumentError(f"need finite a < b, got a={a}, b={b}")
    if not math.isfinite(dx) or dx <= 0:
        raise InvalidArgumentError(f"dx must be finite and positive, got {dx}")
    ratio = (b - a) / dx
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 0.5:
        raise InvalidArgumentError(f"dx={dx} does not partition [{a}, {b}]")

    x = np.linspace(a, b, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    measures = np.diff(x)

    # Point faces: interior ones first, then the two boundary points.
    interior = np.column_stack([np.arange(n - 1), np.arange(1, n), np.arange(1, n)])
    boundary = np.array([[0, -1, 0], [n - 1, -1, n]])
    faces = np.vstack([interior, boundary]).astype(np.int64)

    sizes = np.empty(len(faces))
    sizes[: n - 1] = 0.5 * (measures[:-1] + measures[1:])
    sizes[n - 1] = measures[0]
    sizes[n] = measures[-1]
    normals = np.ones((len(faces), 1))
    normals[n - 1] = -1.0
    return Mesh(1, x[:, None], elements.astype(np.int64), measures, faces, sizes, normals)


def build_triangular_mesh(x_range, y_range, n: int) -> Mesh:
    """Split a rectangle into ``n x n`` squares, each cut along the
    bottom-left to top-right diagonal."""
    n = int(n)
    if n < 1:
        raise InvalidArgumentError(f"need at least one square per side, got n={n}")
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x0 < x1 and y0 < y1):
        raise InvalidArgumentError("degenerate rectangle")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)  # row j = y index
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            sw, se, nw, ne = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((sw, se, ne))
            tris.append((sw, ne, nw))
    elements = np.asarray(tris, dtype=np.int64)

    pts = vertices[elements]
    e1 = pts[:, 1] - pts[:, 0]
    e2 = pts[:, 2] - pts[:, 0]
    measures = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    # Edge -> owning elements, discovered in element order for determinism.
    owners: dict[tuple[int, int], list] = {}
    for k, tri in enumerate(elements):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(a), int(b)) if a < b else (int(b), int(a))
            owners.setdefault(key, []).append(k)

    interior, boundary = [], []
    for key, els in owners.items():
        if len(els) == 2:
            interior.append((els[0], els[1], key[0], key[1]))
        else:
            boundary.append((els[0], -1, key[0], key[1]))
    faces = np.asarray(interior + boundary, dtype=np.int64)

    a = vertices[faces[:, 2]]
    b = vertices[faces[:, 3]]
    t = b - a
    sizes = np.hypot(t[:, 0], t[:, 1])
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / sizes[:, None]
    outward = np.einsum("fd,fd->f", normals, 0.5 * (a + b) - pts[faces[:, 0]].mean(axis=1))
    normals[outward < 0] *= -1.0
    return Mesh(2, vertices, elements, measures, faces, sizes, normals)


def dump_mesh(mesh: Mesh, path) -> None:
    """Plain-text listing of vertices, elements and faces (debugging aid)."""
    with open(path, "w") as fh:
        fh.write(f"# dim {mesh.dim}\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for i, v in enumerate(mesh.vertices):
            fh.write(f"{i} " + " ".join(repr(float(c)) for c in v) + "\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for i, el in enumerate(mesh.elements):
            fh.write(f"{i} " + " ".join(str(int(v)) for v in el) + f" {mesh.measures[i]!r}\n")
        fh.write(f"faces {len(mesh.faces)}\n")
        for f, h, nrm in zip(mesh.faces, mesh.face_sizes, mesh.face_normals):
            fh.write(" ".join(str(int(c)) for c in f) + f" {h!r} "
                     + " ".join(repr(float(c)) for c in nrm) + "\n")
