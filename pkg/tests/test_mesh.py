"""
Structured box meshes, mesh measures and the mesh handler.
"""

# external
import numpy as np
import pytest

# internal
from flexfem._core import MeshError
from flexfem._mesh import (
    BoxMeshHandler,
    face_tag,
    find_closest_vertex,
    generate_box,
    mesh_info)


@pytest.mark.parametrize("dim, n, cells, vertices", [
    (1, 4, 4, 5),
    (2, 3, 9, 16),
    (3, 2, 8, 27)])
def test_counts(dim, n, cells, vertices):
    mesh = generate_box(dim, 0.0, 1.0, n)
    assert mesh.n_cells == cells
    assert mesh.n_vertices == vertices
    assert mesh.tags == tuple(range(2 * dim))


def test_vertices_run_x_fastest():
    mesh = generate_box(2, 0.0, 1.0, 2)
    assert mesh.vertices[:4].tolist() == [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.0, 0.5]]
    origins = [mesh.cell_origin(c).tolist() for c in range(mesh.n_cells)]
    assert origins == [[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]]


def test_boundary_faces_and_neighbors():
    mesh = generate_box(2, 0.0, 1.0, 3)
    for tag in mesh.tags:
        assert len(mesh.tagged_faces(tag)) == 3
    assert mesh.neighbor(0, face_tag(0, 1)) == 1
    assert mesh.neighbor(0, face_tag(0, 0)) is None
    assert mesh.neighbor(0, face_tag(1, 1)) == 3
    with pytest.raises(MeshError):
        mesh.tagged_faces(4)


def test_mesh_info_of_a_cube():
    info = mesh_info(generate_box(3, -1.0, 1.0, 4))
    assert info.volume == pytest.approx(8.0)
    assert info.surface_area == pytest.approx(24.0)
    assert all(area == pytest.approx(4.0) for area in info.surface_area_by_tag.values())
    low, high, mean = info.cell_diameter_stats
    assert low == high == pytest.approx(np.sqrt(3.0) * 0.5)


def test_locate_clamps_outside_points():
    mesh = generate_box(2, 0.0, 1.0, 4)
    cells, reference = mesh.locate(np.array([[0.3, 0.6], [2.0, -1.0]]))
    assert cells.tolist() == [1 + 4 * 2, 3]
    assert reference[0] == pytest.approx([0.2, 0.4])
    assert reference[1] == pytest.approx([1.0, 0.0])


def test_find_closest_vertex():
    mesh = generate_box(2, 0.0, 1.0, 2)
    index, distance = find_closest_vertex(mesh, [0.45, 0.05])
    assert index == 1
    assert distance == pytest.approx(np.hypot(0.05, 0.05))


@pytest.mark.parametrize("lower, upper, n", [(1.0, 1.0, 2), (0.0, 1.0, 0)])
def test_degenerate_boxes(lower, upper, n):
    with pytest.raises(MeshError):
        generate_box(2, lower, upper, n)


def test_mesh_arrays_are_read_only():
    mesh = generate_box(1, 0.0, 1.0, 2)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 5.0


def test_handler_builds_refined_boxes():
    handler = BoxMeshHandler("Problem")
    handler.setup({"Problem": {"Mesh": {"Dimension": 1, "Lower corner": -1.0, "Number of subdivisions": 3}}})
    assert handler.build().n_cells == 3
    assert handler.build(2).n_cells == 12
    assert handler.build().lower.tolist() == [-1.0]
    with pytest.raises(MeshError):
        handler.setup({"Problem": {"Mesh": {"Lower corner": 2.0}}})
