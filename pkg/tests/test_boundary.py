import numpy as np
import pytest

import oracles
from conestab.boundary import boundary_mesh
from conestab.cones import build_y
from conestab.domain import ConvexDomain, DomainError


@pytest.fixture(scope="module")
def meshes(domains):
    return {(k, r): boundary_mesh(d, r) for k, d in domains.items() for r in (2, 3)}


@pytest.mark.parametrize("kind", ["plane", "y", "t"])
def test_watertight_and_oriented(meshes, domains, kind):
    bm = meshes[kind, 3]
    assert len(bm.mesh.boundary_edges) == 0
    assert bm.mesh.is_consistently_oriented()
    assert np.allclose(domains[kind].gauge(bm.mesh.vertices), 1, atol=1e-12)
    # outward orientation: vector areas point away from the origin
    c = bm.mesh.vertices[bm.mesh.triangles].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", c, bm.mesh.vector_areas()) > 0)


@pytest.mark.parametrize("kind", ["plane", "y", "t"])
def test_total_area_converges(meshes, kind):
    a2, a3 = meshes[kind, 2].mesh.area, meshes[kind, 3].mesh.area
    assert a3 > a2
    assert abs(a3 - a2) / a3 < 1e-3
    assert a3 < 4 * np.pi


@pytest.mark.parametrize("kind", ["plane", "y", "t"])
def test_labels_partition_area(meshes, domains, kind):
    bm = meshes[kind, 3]
    total = sum(bm.region_area(c) for c in range(len(domains[kind].regions)))
    assert abs(total - bm.mesh.area) / bm.mesh.area < 1e-6
    assert len(bm.region_codes) == len(bm.mesh.triangles)


@pytest.mark.parametrize("kind", ["y", "t"])
def test_plate_areas(meshes, domains, expected, kind):
    dom = domains[kind]
    bm = meshes[kind, 3]
    disk = np.pi * dom.R ** 2
    cut = oracles.disk_segment(dom.R, dom.rim_offset)
    for j in range(dom.spec.m):
        a = bm.region_area(j)
        # the three cuts are disjoint, so the exact plate is the disk minus all three
        assert a < disk
        assert abs(a - (disk - 3 * cut)) < 2e-4
        assert abs(a - expected["plate_area/0.1"]) < 2e-4


@pytest.mark.parametrize("kind,count", [("plane", 2), ("y", 3), ("t", 4)])
def test_face_components(meshes, domains, kind, count):
    bm = meshes[kind, 2]
    spec = domains[kind].spec
    assert len(np.unique(bm.face_labels)) == count
    # every face label holds the triangle nearest to its center direction
    c = bm.mesh.vertices[bm.mesh.triangles].mean(axis=1)
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    for i, face in enumerate(spec.faces):
        assert bm.face_labels[np.argmax(c @ face.center)] == i


def test_t_faces_contain_opposite_vertices(meshes, dom_t):
    bm = meshes["t", 2]
    c = bm.mesh.vertices[bm.mesh.triangles].mean(axis=1)
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    for i, a in enumerate(dom_t.spec.singular_dirs):
        assert bm.face_labels[np.argmax(c @ -a)] == i


def test_label_rows(meshes):
    rows = meshes["y", 2].label_rows()
    assert rows[0][0] == 0 and isinstance(rows[0][1], str)
    names = {r[1] for r in rows}
    assert {"plate0", "plate1", "sphere"} <= names and any(n.startswith("band") for n in names)


def test_bad_inputs():
    with pytest.raises(DomainError):
        boundary_mesh(ConvexDomain(build_y(3), 0.1), -1)
    with pytest.raises(DomainError):
        boundary_mesh(ConvexDomain(build_y(4), 0.1), 1)
