import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustodg.mesh import (
    DanglingIndexError,
    InvertedElementError,
    MeshParseError,
    NonManifoldEdgeError,
    TriMesh,
    export_mesh,
    generate_rect_mesh,
    import_mesh,
    read_mesh,
    write_mesh,
)
from oracles import boundary_edge_histogram

UNIT_SQUARE_FILE = """trimesh 1
4 2
0 0
1 0
0 1
1 1
0 1 3
0 3 2
"""


def test_smallest_mesh_counts():
    m = generate_rect_mesh(1, 1, 1)
    assert m.n_triangles == 2 and m.n_vertices == 4 and m.n_facets == 5
    assert len(m.boundary_facets) == 4 and len(m.interior_facets) == 1


def test_triangle_count_and_diagonal_length():
    assert generate_rect_mesh(1, 1.1, 8).n_triangles == 128
    m = generate_rect_mesh(1, 1.1, 1)
    (f,) = m.interior_facets
    assert m.facet_length[f] == pytest.approx(math.sqrt(1 + 1.1 ** 2), rel=1e-15)
    assert m.facet_length[f] == pytest.approx(1.4866068, abs=1e-7)


@pytest.mark.parametrize("diag", ["right", "left"])
@given(n=st.integers(1, 12), a=st.floats(0.1, 5), b=st.floats(0.1, 5))
@settings(max_examples=25, deadline=None)
def test_rect_mesh_invariants(diag, n, a, b):
    m = generate_rect_mesh(a, b, n, diag)
    assert m.n_triangles == 2 * n * n
    assert m.n_vertices == (n + 1) ** 2
    assert len(m.interior_facets) == 3 * n * n - 2 * n
    assert len(m.boundary_facets) == 4 * n
    # Euler relation for a simply connected mesh
    assert m.n_vertices - m.n_facets + m.n_triangles == 1
    assert np.all(m.areas > 0)
    assert m.boundary_length() == pytest.approx(2 * (a + b), rel=1e-12)
    assert m.areas.sum() == pytest.approx(a * b, rel=1e-12)
    assert m.h_max == pytest.approx(math.hypot(a / n, b / n), rel=1e-12)


def test_facet_invariants():
    rng = np.random.default_rng(3)
    m = generate_rect_mesh(1, 1.1, 5)
    V = m.vertices.copy()
    inner = (V[:, 0] > 0) & (V[:, 0] < 1) & (V[:, 1] > 0) & (V[:, 1] < 1.1)
    V[inner] += rng.uniform(-0.04, 0.04, size=(inner.sum(), 2))
    m = TriMesh.from_arrays(V, m.triangles)
    nrm = np.linalg.norm(m.facet_normal, axis=1)
    assert np.all(np.abs(nrm - 1) <= 1e-14)
    d = np.linalg.norm(m.vertices[m.facet_vertices[:, 0]] - m.vertices[m.facet_vertices[:, 1]],
                       axis=1)
    assert np.array_equal(d, m.facet_length) or np.allclose(d, m.facet_length, rtol=1e-15)
    for f in m.facets:
        if f.kind == "interior":
            diff = m.centroids[f.owners[1]] - m.centroids[f.owners[0]]
            assert np.dot(diff, f.normal) > 0
        else:
            # boundary normals point away from the domain interior
            mid = (m.vertices[f.vertices[0]] + m.vertices[f.vertices[1]]) / 2
            assert np.dot(mid - m.centroids[f.owners[0]], f.normal) > 0
    owners = m.facet_owners
    counts = np.bincount(owners[owners >= 0], minlength=m.n_triangles)
    assert np.all(counts == 3)


def test_invalid_arguments():
    for args in [(0, 1, 2), (1, -1, 2), (1, 1, 0), (1, 1, 1.5)]:
        with pytest.raises(ValueError):
            generate_rect_mesh(*args)
    with pytest.raises(ValueError):
        generate_rect_mesh(1, 1, 2, diag="crossed")


def test_import_unit_square_equals_generator():
    assert import_mesh(UNIT_SQUARE_FILE).same_as(generate_rect_mesh(1, 1, 1))


def test_import_clockwise_is_reoriented():
    text = UNIT_SQUARE_FILE.replace("0 1 3\n0 3 2", "0 3 1\n0 2 3")
    m = import_mesh(text)
    assert np.all(m.areas > 0) and m.n_facets == 5


def test_import_errors():
    with pytest.raises(DanglingIndexError):
        import_mesh(UNIT_SQUARE_FILE.replace("0 3 2", "0 99 2"))
    with pytest.raises(MeshParseError):
        import_mesh("trimesh 2\n")
    with pytest.raises(MeshParseError):
        import_mesh(UNIT_SQUARE_FILE.replace("1 0\n", "1 zero\n", 1))
    with pytest.raises(MeshParseError):
        import_mesh(UNIT_SQUARE_FILE.rsplit("\n", 2)[0])
    with pytest.raises(InvertedElementError):
        import_mesh(UNIT_SQUARE_FILE.replace("0 3 2", "0 2 3"))
    nonmanifold = "trimesh 1\n5 3\n0 0\n1 0\n0 1\n0 -1\n0.5 2\n0 1 2\n1 0 3\n0 1 4\n"
    with pytest.raises(NonManifoldEdgeError):
        import_mesh(nonmanifold)
    # the variants are distinct types
    assert len({DanglingIndexError, MeshParseError, InvertedElementError,
                NonManifoldEdgeError}) == 4


@given(n=st.integers(1, 6), seed=st.integers(0, 2 ** 31))
@settings(max_examples=20, deadline=None)
def test_export_import_roundtrip_bit_exact(n, seed):
    rng = np.random.default_rng(seed)
    m = generate_rect_mesh(1 + rng.random(), 0.5 + rng.random(), n)
    V = m.vertices + rng.uniform(-0.1, 0.1, m.vertices.shape) / (4 * n)
    m = TriMesh.from_arrays(V, m.triangles)
    r = import_mesh(export_mesh(m))
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.triangles, m.triangles)
    assert np.array_equal(r.facet_owners, m.facet_owners)


def test_file_roundtrip(tmp_path):
    m = generate_rect_mesh(1, 1.1, 3)
    p = tmp_path / "m.trimesh"
    write_mesh(m, p)
    assert read_mesh(p).same_as(m)


def test_reactor_mesh_boundary_count(data_dir):
    m = read_mesh(os.path.join(data_dir, "reactor.trimesh"))
    assert m.n_triangles == 512
    assert len(m.boundary_facets) == boundary_edge_histogram(m.triangles)
    assert np.all(m.areas > 0)
    # every facet is used by one or two triangles
    assert len(m.boundary_facets) + 2 * len(m.interior_facets) == 3 * m.n_triangles
