"""
Structured quadrilateral/hexahedral box meshes with boundary tags, mesh
measures and finders.

Boundary faces on the low side of axis i carry tag 2i, those on the high
side carry tag 2i+1. Vertices and cells are numbered lexicographically
with the x index running fastest, and the vertices of a cell are listed
in the same tensor-product order.
"""

# annotations
from typing import Dict, Optional, Sequence, Tuple, Union

# external
import logging as _logging
import itertools as _itertools
import dataclasses as _dataclasses

import numpy as _numpy

# internal
from flexfem._core import CoreModel, MeshError, join_path
from flexfem._params import Integer, ParamTree, Real


__all__ = [
    "Mesh",
    "MeshInfo",
    "BoxMeshHandler",
    "face_tag",
    "generate_box",
    "mesh_info",
    "find_closest_vertex"]


_logger = _logging.getLogger(__name__)


Coordinates = Union[float, Sequence[float]]


def face_tag(axis: int, side: int) -> int:
    """
    Boundary tag of the low (side=0) or high (side=1) face of an axis.

    Examples:
        >>> face_tag(1, 1)
        3
    """
    return 2 * int(axis) + int(side)


class Mesh:
    """
    Axis-aligned structured box mesh.
    """

    def __init__(
            self,
            dim: int,
            lower: Sequence[float],
            upper: Sequence[float],
            subdivisions: Sequence[int]):
        """
        A tensor-product mesh of the box [lower, upper] with the given
        number of cells per axis; immutable once built.

        Args:
            dim: Space dimension, 1 to 3.
            lower: Lower box corner.
            upper: Upper box corner.
            subdivisions: Number of cells along each axis.

        Raises:
            MeshError: On a degenerate box or zero subdivisions.
        """
        if dim not in (1, 2, 3):
            raise MeshError(f"mesh dimension must be 1, 2 or 3; got {dim}")
        self.dim = int(dim)
        self.lower = _numpy.array(lower, dtype=float).reshape(self.dim)
        self.upper = _numpy.array(upper, dtype=float).reshape(self.dim)
        self.subdivisions = _numpy.array(subdivisions, dtype=int).reshape(self.dim)
        if _numpy.any(self.upper <= self.lower):
            raise MeshError(
                f"box upper corner must exceed lower corner; got {self.lower} and {self.upper}")
        if _numpy.any(self.subdivisions < 1):
            raise MeshError(f"subdivisions must be >= 1; got {self.subdivisions}")

        self.cell_size = (self.upper - self.lower) / self.subdivisions
        self.vertex_shape = tuple(int(n) + 1 for n in self.subdivisions)

        axes = [
            _numpy.linspace(lo, hi, n + 1)
            for lo, hi, n in zip(self.lower, self.upper, self.subdivisions)]
        grids = _numpy.meshgrid(*axes, indexing="ij")
        # x fastest: flatten in Fortran order
        self.vertices = _numpy.stack([g.ravel(order="F") for g in grids], axis=-1)

        cell_index = _numpy.array(list(_itertools.product(
            *[range(n) for n in self.subdivisions[::-1]])))[:, ::-1]
        self._cell_index = cell_index.reshape(-1, self.dim)
        corners = _numpy.array(list(_itertools.product((0, 1), repeat=self.dim)))[:, ::-1]
        self.cells = _numpy.stack([
            self.vertex_id(self._cell_index + corner) for corner in corners], axis=-1)

        faces = []
        for axis in range(self.dim):
            for side in (0, 1):
                on_side = self._cell_index[:, axis] == (0 if side == 0 else self.subdivisions[axis] - 1)
                for cell in _numpy.flatnonzero(on_side):
                    faces.append((cell, face_tag(axis, side), face_tag(axis, side)))
        self.boundary_faces = _numpy.array(sorted(faces), dtype=int).reshape(-1, 3)

        for array in (self.lower, self.upper, self.subdivisions, self.cell_size,
                      self.vertices, self.cells, self.boundary_faces, self._cell_index):
            array.setflags(write=False)

    def __repr__(self) -> str:
        return (f"Mesh(dim={self.dim}, lower={self.lower.tolist()}, "
                f"upper={self.upper.tolist()}, subdivisions={self.subdivisions.tolist()})")

    @property
    def n_cells(self) -> int:
        """
        Number of cells.
        """
        return int(_numpy.prod(self.subdivisions))

    @property
    def n_vertices(self) -> int:
        """
        Number of vertices.
        """
        return int(_numpy.prod(self.vertex_shape))

    @property
    def tags(self) -> Tuple[int, ...]:
        """
        Boundary tags present on the mesh.
        """
        return tuple(range(2 * self.dim))

    @property
    def descriptor(self) -> Tuple[int, Tuple[float, ...], Tuple[float, ...], Tuple[int, ...]]:
        """
        (dim, lower, upper, subdivisions); equal descriptors mean equal meshes.
        """
        return (self.dim, tuple(self.lower.tolist()), tuple(self.upper.tolist()),
                tuple(int(n) for n in self.subdivisions))

    def vertex_id(self, index: _numpy.ndarray) -> _numpy.ndarray:
        """
        Global vertex number of lattice multi-indices (last axis = dim).
        """
        index = _numpy.asarray(index)
        return _numpy.ravel_multi_index(
            tuple(index[..., d] for d in range(self.dim)), self.vertex_shape, order="F")

    def cell_multi_index(self, cell: int) -> _numpy.ndarray:
        """
        Per-axis index of a cell.
        """
        return self._cell_index[cell]

    def cell_origin(self, cell: int) -> _numpy.ndarray:
        """
        Lower corner of a cell.
        """
        return self.lower + self._cell_index[cell] * self.cell_size

    def cell_volume(self, cell: int = 0) -> float:
        """
        Volume of a cell; all cells of a box mesh are equal.
        """
        return float(_numpy.prod(self.cell_size))

    def cell_diameter(self, cell: int = 0) -> float:
        """
        Length of a cell diagonal.
        """
        return float(_numpy.linalg.norm(self.cell_size))

    def face_measure(self, local_face: int) -> float:
        """
        Measure of a cell face normal to axis local_face // 2 (1 in 1D).
        """
        axis = int(local_face) // 2
        return float(_numpy.prod(_numpy.delete(self.cell_size, axis)))

    def neighbor(self, cell: int, local_face: int) -> Optional[int]:
        """
        The cell across a face, or None for a boundary face.
        """
        axis, side = divmod(int(local_face), 2)
        index = self._cell_index[cell].copy()
        index[axis] += 1 if side else -1
        if index[axis] < 0 or index[axis] >= self.subdivisions[axis]:
            return None
        return int(_numpy.ravel_multi_index(tuple(index), tuple(self.subdivisions), order="F"))

    def tagged_faces(self, tag: int) -> _numpy.ndarray:
        """
        (cell, local face) pairs of the boundary faces carrying a tag.

        Raises:
            MeshError: When the mesh has no such tag.
        """
        if tag not in self.tags:
            raise MeshError(f"boundary tag must be one of {self.tags}; got {tag}")
        return self.boundary_faces[self.boundary_faces[:, 2] == tag, :2]

    def locate(self, points: _numpy.ndarray) -> Tuple[_numpy.ndarray, _numpy.ndarray]:
        """
        Cells containing points and the points' reference coordinates in
        [0, 1]^dim; points outside the box are clamped onto it.

        Args:
            points: Array of shape (n, dim).

        Returns:
            Tuple[numpy.ndarray, numpy.ndarray]: Cell numbers (n,) and
            reference coordinates (n, dim).
        """
        points = _numpy.atleast_2d(_numpy.asarray(points, dtype=float))
        scaled = (_numpy.clip(points, self.lower, self.upper) - self.lower) / self.cell_size
        index = _numpy.clip(_numpy.floor(scaled).astype(int), 0, self.subdivisions - 1)
        cells = _numpy.ravel_multi_index(
            tuple(index[:, d] for d in range(self.dim)), tuple(self.subdivisions), order="F")
        return cells, scaled - index


def generate_box(
        dim: int,
        lower: Coordinates = 0.0,
        upper: Coordinates = 1.0,
        subdivisions: Union[int, Sequence[int]] = 1) -> Mesh:
    """
    Build a structured box mesh; scalar arguments apply to every axis.

    Args:
        dim: Space dimension, 1 to 3.
        lower: Lower corner.
        upper: Upper corner.
        subdivisions: Cells per axis.

    Returns:
        Mesh: The tensor-product mesh with tagged boundary faces.

    Raises:
        MeshError: On a degenerate box or zero subdivisions.

    Examples:
        >>> mesh = generate_box(1, 0.0, 1.0, 4)
        >>> mesh.n_cells, mesh.n_vertices
        (4, 5)
    """
    mesh = Mesh(
        dim,
        _numpy.broadcast_to(_numpy.asarray(lower, dtype=float), (dim,)),
        _numpy.broadcast_to(_numpy.asarray(upper, dtype=float), (dim,)),
        _numpy.broadcast_to(_numpy.asarray(subdivisions, dtype=int), (dim,)))
    _logger.debug("generated %r with %d cells", mesh, mesh.n_cells)
    return mesh


@_dataclasses.dataclass(frozen=True)
class MeshInfo:
    """
    Measures of a mesh.
    """

    volume: float
    surface_area_by_tag: Dict[int, float]
    cell_diameter_stats: Tuple[float, float, float]

    @property
    def surface_area(self) -> float:
        """
        Total boundary measure.
        """
        return float(sum(self.surface_area_by_tag.values()))


def mesh_info(mesh: Mesh) -> MeshInfo:
    """
    Compute volume, per-tag boundary measure and cell diameter statistics.

    Examples:
        >>> info = mesh_info(generate_box(3, -1.0, 1.0, 2))
        >>> info.volume, info.surface_area
        (8.0, 24.0)
    """
    volume = mesh.cell_volume() * mesh.n_cells
    areas = {tag: 0.0 for tag in mesh.tags}
    for _, local_face, tag in mesh.boundary_faces:
        areas[int(tag)] += mesh.face_measure(local_face)
    diameters = _numpy.full(mesh.n_cells, mesh.cell_diameter())
    return MeshInfo(
        volume=float(volume),
        surface_area_by_tag=areas,
        cell_diameter_stats=(
            float(diameters.min()), float(diameters.max()), float(diameters.mean())))


def find_closest_vertex(mesh: Mesh, point: Coordinates) -> Tuple[int, float]:
    """
    Find the vertex nearest to a point; ties go to the lowest index.

    Examples:
        >>> find_closest_vertex(generate_box(1, 0.0, 1.0, 4), 0.26)
        (1, 0.010000000000000009)
    """
    point = _numpy.broadcast_to(_numpy.asarray(point, dtype=float), (mesh.dim,))
    distances = _numpy.linalg.norm(mesh.vertices - point, axis=1)
    index = int(_numpy.argmin(distances))
    return index, float(distances[index])


class BoxMeshHandler(CoreModel):
    """
    Box [lower, upper]^dim with n cells per axis, read from a parameter
    file.
    """

    def __init__(
            self,
            subsection_path: str,
            dim: int = 2,
            lower: float = 0.0,
            upper: float = 1.0,
            subdivisions: int = 8):
        """
        Owns "<path> / Mesh".

        Examples:
            >>> handler = BoxMeshHandler("Problem")
            >>> _ = handler.setup({"Problem": {"Mesh": {"Dimension": 3}}})
            >>> handler.build().n_cells
            512
        """
        super().__init__(join_path(subsection_path, "Mesh"))
        self.dim = dim
        self.lower = lower
        self.upper = upper
        self.subdivisions = subdivisions

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("Dimension", self.dim, Integer(1, 3))
        params.declare_entry("Lower corner", self.lower, Real(), "Coordinate of the low end of every axis.")
        params.declare_entry("Upper corner", self.upper, Real(), "Coordinate of the high end of every axis.")
        params.declare_entry("Number of subdivisions", self.subdivisions, Integer(1), "Cells per axis.")
        params.leave_subsection_path()

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.dim = params.get_integer("Dimension")
            self.lower = params.get_double("Lower corner")
            self.upper = params.get_double("Upper corner")
            self.subdivisions = params.get_integer("Number of subdivisions")
        finally:
            params.leave_subsection_path()
        if self.upper <= self.lower:
            raise MeshError(f"upper corner must be > lower corner; got {self.upper} <= {self.lower}")

    def build(self, refinement: int = 0) -> Mesh:
        """
        The configured box, with the subdivisions doubled refinement times.
        """
        return generate_box(self.dim, self.lower, self.upper, self.subdivisions * 2 ** refinement)
