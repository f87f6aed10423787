import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewrd.errors import InvalidArgumentError
from skewrd.mesh import build_interval_mesh, build_triangular_mesh, dump_mesh


@pytest.mark.parametrize("a,b,dx,n", [(-60, 60, 0.1, 1200), (0, 1, 0.5, 2), (-1000, 1000, 0.5, 4000)])
def test_interval_element_counts(a, b, dx, n):
    mesh = build_interval_mesh(a, b, dx)
    assert mesh.n_elements == n
    assert mesh.n_interior_faces == n - 1
    assert len(mesh.boundary_faces) == 2


@pytest.mark.parametrize("dx", [0.0, -0.1, float("nan"), float("inf")])
def test_interval_rejects_bad_width(dx):
    with pytest.raises(InvalidArgumentError):
        build_interval_mesh(0.0, 1.0, dx)


def test_interval_rejects_reversed_range():
    with pytest.raises(InvalidArgumentError):
        build_interval_mesh(1.0, 0.0, 0.1)


def test_interval_face_geometry():
    mesh = build_interval_mesh(0.0, 1.0, 0.5)
    (left, right, v), = mesh.interior_faces
    assert (left, right) == (0, 1)
    assert mesh.vertices[v, 0] == 0.5
    assert mesh.face_sizes[0] == pytest.approx(0.5)
    assert mesh.face_normals[0, 0] == 1.0


def test_table_mesh_counts():
    mesh = build_triangular_mesh((-1, 1), (-1, 1), 8)
    assert mesh.n_elements == 128
    assert mesh.n_vertices == 81
    # Euler-formula oracle: E = V + F - 2 = 81 + 129 - 2 = 208 edges, 32 on the boundary
    assert mesh.n_interior_faces == 176
    assert len(mesh.boundary_faces) == 32


def test_single_square():
    mesh = build_triangular_mesh((0, 1), (0, 1), 1)
    assert (mesh.n_elements, mesh.n_vertices, mesh.n_interior_faces) == (2, 4, 1)
    # shared diagonal runs bottom-left to top-right
    (_, _, a, b), = mesh.interior_faces
    ends = {tuple(mesh.vertices[a]), tuple(mesh.vertices[b])}
    assert ends == {(0.0, 0.0), (1.0, 1.0)}


def test_triangular_rejects_zero_squares():
    with pytest.raises(InvalidArgumentError):
        build_triangular_mesh((0, 1), (0, 1), 0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 9), x0=st.floats(-5, 5), w=st.floats(0.1, 10), h=st.floats(0.1, 10))
def test_triangle_mesh_invariants(n, x0, w, h):
    mesh = build_triangular_mesh((x0, x0 + w), (0.0, h), n)
    assert mesh.n_elements == 2 * n * n
    assert mesh.n_vertices == (n + 1) ** 2
    assert np.all(mesh.measures > 0) and np.all(mesh.face_sizes > 0)
    assert mesh.domain_measure == pytest.approx(w * h, rel=1e-12)
    for left, right, a, b in mesh.interior_faces:
        assert left != right
        shared = set(mesh.elements[left]) & set(mesh.elements[right])
        assert shared == {a, b}
    assert np.all(mesh.boundary_faces[:, 1] == -1)


def test_normals_point_out_of_left_element():
    mesh = build_triangular_mesh((0, 1), (0, 1), 4)
    cent = mesh.centroids()
    for (left, right, a, _), nrm in zip(mesh.faces, mesh.face_normals):
        mid = mesh.vertices[a]
        assert np.dot(mid - cent[left], nrm) > 0
        assert np.linalg.norm(nrm) == pytest.approx(1.0)


def test_construction_is_deterministic():
    m1 = build_triangular_mesh((-1, 1), (-1, 1), 5)
    m2 = build_triangular_mesh((-1, 1), (-1, 1), 5)
    assert np.array_equal(m1.elements, m2.elements)
    assert np.array_equal(m1.faces, m2.faces)
    assert np.array_equal(m1.vertices, m2.vertices)


def test_mesh_is_read_only():
    mesh = build_interval_mesh(0, 1, 0.25)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 3.0


def test_dump(tmp_path):
    mesh = build_triangular_mesh((0, 1), (0, 1), 2)
    path = tmp_path / "mesh.txt"
    dump_mesh(mesh, path)
    text = path.read_text()
    assert "vertices 9" in text.lower() or "9" in text.splitlines()[0]
