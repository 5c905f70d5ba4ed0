"""
Lagrange finite-element spaces on structured box meshes: quadrature,
per-cell values, global assembly, boundary conditions and error norms.

The reference cell is [0, 1]^dim with equispaced tensor-product nodes;
cells are axis-aligned so every Jacobian is a constant diagonal. Vector
spaces interleave components per node: dof = node * n_components + c.
"""

# annotations
from typing import (
    Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union)

# external
import logging as _logging
import itertools as _itertools
from concurrent.futures import ThreadPoolExecutor as _ThreadPoolExecutor

import numpy as _numpy
from numpy.polynomial.legendre import leggauss as _leggauss
from scipy import sparse as _sparse

# internal
from flexfem._core import AssemblyError, MeshError
from flexfem._mesh import Mesh


__all__ = [
    "Function",
    "Quadrature",
    "FeSpace",
    "FeCellValues",
    "FeFaceValues",
    "Constraints",
    "build_space",
    "gauss_quadrature",
    "reinit_cell",
    "reinit_face",
    "assemble_system",
    "assemble_face_terms",
    "apply_constraints",
    "dirichlet_constraints",
    "apply_dirichlet_to_vector",
    "interpolate",
    "evaluate_at_points",
    "error_norm",
    "find_closest_dof",
    "mass_matrix",
    "stiffness_matrix"]


_logger = _logging.getLogger(__name__)


Function = Callable[[_numpy.ndarray], _numpy.ndarray]
"""
A vectorized field: maps points of shape (n, dim) to values of shape (n,)
for scalars or (n, n_components) for vectors.
"""


Kernel = Callable[..., Tuple[Optional[_numpy.ndarray], Optional[_numpy.ndarray]]]


def _lagrange_1d(degree: int, x: _numpy.ndarray) -> Tuple[_numpy.ndarray, _numpy.ndarray]:
    """
    Values and derivatives of the 1D equispaced Lagrange basis on [0, 1].

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray]: Arrays of shape
        (len(x), degree + 1).
    """
    x = _numpy.asarray(x, dtype=float)
    if degree == 1:
        values = _numpy.stack([1.0 - x, x], axis=-1)
        derivatives = _numpy.stack([-_numpy.ones_like(x), _numpy.ones_like(x)], axis=-1)
    elif degree == 2:
        values = _numpy.stack([
            2.0 * (x - 0.5) * (x - 1.0),
            -4.0 * x * (x - 1.0),
            2.0 * x * (x - 0.5)], axis=-1)
        derivatives = _numpy.stack([
            4.0 * x - 3.0,
            4.0 - 8.0 * x,
            4.0 * x - 1.0], axis=-1)
    else:
        raise ValueError(f"element degree must be 1 or 2; got {degree}")
    return values, derivatives


def _tensor_indices(degree: int, dim: int) -> _numpy.ndarray:
    # local node multi-indices, x fastest
    return _numpy.array(list(_itertools.product(range(degree + 1), repeat=dim)))[:, ::-1].reshape(-1, dim)


def _reference_basis(
        degree: int,
        points: _numpy.ndarray) -> Tuple[_numpy.ndarray, _numpy.ndarray]:
    """
    Tensor-product basis values (m, n) and reference gradients (m, n, dim)
    at reference points of shape (m, dim).
    """
    points = _numpy.atleast_2d(points)
    dim = points.shape[1]
    index = _tensor_indices(degree, dim)
    tables = [_lagrange_1d(degree, points[:, d]) for d in range(dim)]
    values = _numpy.ones((points.shape[0], len(index)))
    gradients = _numpy.ones((points.shape[0], len(index), dim))
    for d, (vals, ders) in enumerate(tables):
        values *= vals[:, index[:, d]]
        for e in range(dim):
            gradients[:, :, e] *= (ders if e == d else vals)[:, index[:, d]]
    return values, gradients


class Quadrature:
    """
    Quadrature rule on the reference cell [0, 1]^dim.
    """

    def __init__(self, points: _numpy.ndarray, weights: _numpy.ndarray):
        """
        Args:
            points: Reference coordinates of shape (n, dim).
            weights: Weights of shape (n,), summing to 1.
        """
        self.points = _numpy.asarray(points, dtype=float)
        self.weights = _numpy.asarray(weights, dtype=float)
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        """
        Dimension of the reference cell.
        """
        return self.points.shape[1]


def gauss_quadrature(dim: int, n_per_axis: int) -> Quadrature:
    """
    Tensor Gauss-Legendre rule on [0, 1]^dim, exact for per-axis
    polynomial degree <= 2 n_per_axis - 1.

    Args:
        dim: Reference dimension, 0 to 3; dim 0 is the single point rule
            used on the faces of 1D cells.
        n_per_axis: Points per axis, 1 to 5.

    Examples:
        >>> rule = gauss_quadrature(1, 1)
        >>> rule.points.tolist(), rule.weights.tolist()
        ([[0.5]], [1.0])
    """
    if not 1 <= n_per_axis <= 5:
        raise ValueError(f"points per axis must be in [1, 5]; got {n_per_axis}")
    if dim == 0:
        return Quadrature(_numpy.zeros((1, 0)), _numpy.ones(1))
    x, w = _leggauss(n_per_axis)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    index = _tensor_indices(n_per_axis - 1, dim)
    points = x[index]
    weights = _numpy.prod(w[index], axis=1)
    return Quadrature(points, weights)


class FeSpace:
    """
    Continuous Lagrange space of degree 1 or 2 on a box mesh.
    """

    def __init__(self, mesh: Mesh, degree: int = 1, n_components: int = 1):
        """
        Nodes form the degree-refined lattice of the mesh, numbered with x
        running fastest; shared nodes get a single global index.

        Args:
            mesh: The mesh.
            degree: Polynomial degree per axis, 1 or 2.
            n_components: Number of field components.

        Raises:
            ValueError: On an unsupported degree or component count.
        """
        if degree not in (1, 2):
            raise ValueError(f"element degree must be 1 or 2; got {degree}")
        if n_components < 1:
            raise ValueError(f"number of components must be positive; got {n_components}")
        self.mesh = mesh
        self.degree = int(degree)
        self.n_components = int(n_components)
        self.node_shape = tuple(int(self.degree * n + 1) for n in mesh.subdivisions)

        axes = [
            lo + _numpy.arange(n) * h / self.degree
            for lo, h, n in zip(mesh.lower, mesh.cell_size, self.node_shape)]
        for axis, hi in zip(axes, mesh.upper):
            axis[-1] = hi
        grids = _numpy.meshgrid(*axes, indexing="ij")
        self.node_coords = _numpy.stack([g.ravel(order="F") for g in grids], axis=-1)

        local = _tensor_indices(self.degree, mesh.dim)
        lattice = self.degree * mesh._cell_index[:, None, :] + local[None, :, :]
        self.cell_nodes = _numpy.ravel_multi_index(
            tuple(lattice[..., d] for d in range(mesh.dim)), self.node_shape, order="F")
        nc = self.n_components
        self.cell_dofs = (self.cell_nodes[:, :, None] * nc + _numpy.arange(nc)).reshape(mesh.n_cells, -1)
        self.dof_coords = _numpy.repeat(self.node_coords, nc, axis=0)
        self.reference_nodes = local / self.degree

        self._cache: Dict[Tuple[bytes, bytes], tuple] = {}
        for array in (self.node_coords, self.cell_nodes, self.cell_dofs, self.dof_coords):
            array.setflags(write=False)

    def __repr__(self) -> str:
        return f"FeSpace({self.mesh!r}, degree={self.degree}, n_components={self.n_components})"

    @property
    def dim(self) -> int:
        """
        Space dimension.
        """
        return self.mesh.dim

    @property
    def n_nodes(self) -> int:
        """
        Number of support points.
        """
        return len(self.node_coords)

    @property
    def n_dofs(self) -> int:
        """
        Number of degrees of freedom.
        """
        return self.n_nodes * self.n_components

    @property
    def dofs_per_cell(self) -> int:
        """
        Local degrees of freedom of one cell.
        """
        return self.cell_dofs.shape[1]

    def component_dofs(self, component: int) -> _numpy.ndarray:
        """
        Global dofs of one component, in node order.
        """
        return _numpy.arange(self.n_nodes) * self.n_components + component

    def boundary_nodes(self, tag: int) -> _numpy.ndarray:
        """
        Nodes lying on the boundary faces carrying a tag.

        Raises:
            MeshError: When the mesh has no such tag.
        """
        if tag not in self.mesh.tags:
            raise MeshError(f"boundary tag must be one of {self.mesh.tags}; got {tag}")
        axis, side = divmod(int(tag), 2)
        index = _numpy.unravel_index(_numpy.arange(self.n_nodes), self.node_shape, order="F")[axis]
        return _numpy.flatnonzero(index == (self.node_shape[axis] - 1 if side else 0))

    def _reference(self, quadrature: Quadrature) -> tuple:
        key = (quadrature.points.tobytes(), quadrature.weights.tobytes())
        if key not in self._cache:
            values, gradients = _reference_basis(self.degree, quadrature.points)
            h = self.mesh.cell_size
            self._cache[key] = (
                values,
                gradients / h,
                quadrature.weights * self.mesh.cell_volume(),
                quadrature.points * h)
        return self._cache[key]


def build_space(mesh: Mesh, degree: int = 1, n_components: int = 1) -> FeSpace:
    """
    Build a Lagrange space; n_dofs = n_components * prod(degree * n_i + 1).

    Examples:
        >>> from flexfem._mesh import generate_box
        >>> build_space(generate_box(2, 0.0, 1.0, 2), 2, 2).n_dofs
        50
    """
    space = FeSpace(mesh, degree, n_components)
    _logger.debug("built %r with %d dofs", space, space.n_dofs)
    return space


class FeCellValues:
    """
    Shape function data of one cell at the points of a quadrature rule.
    """

    def __init__(
            self,
            cell: int,
            dofs: _numpy.ndarray,
            shape_values: _numpy.ndarray,
            shape_gradients: _numpy.ndarray,
            JxW: _numpy.ndarray,  # noqa: N803
            points: _numpy.ndarray,
            n_components: int = 1):
        """
        Args:
            cell: Cell number.
            dofs: Local-to-global dof map of the cell.
            shape_values: Scalar basis values, shape (nq, n_nodes).
            shape_gradients: Physical basis gradients, shape
                (nq, n_nodes, dim).
            JxW: Quadrature weights times Jacobian determinant, (nq,).
            points: Physical quadrature points, shape (nq, dim).
            n_components: Components interleaved per node.
        """
        self.cell = cell
        self.dofs = dofs
        self.shape_values = shape_values
        self.shape_gradients = shape_gradients
        self.JxW = JxW
        self.points = points
        self.n_components = n_components

    @property
    def n_quadrature_points(self) -> int:
        return len(self.JxW)

    @property
    def n_nodes(self) -> int:
        return self.shape_values.shape[1]

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    def values(self, local, component: Optional[int] = None):
        """
        Values of a local coefficient vector at the quadrature points:
        (nq,) for one component, (nq, n_components) otherwise. Works on
        dual numbers as well as arrays.
        """
        nc = self.n_components
        if nc == 1:
            return self.shape_values @ local
        if component is not None:
            return self.shape_values @ local[component::nc]
        return _numpy.stack([self.shape_values @ local[c::nc] for c in range(nc)], axis=-1)

    def gradients(self, local, component: Optional[int] = None):
        """
        Gradients of a local coefficient vector at the quadrature points,
        shape (nq, dim) for one component. Works on dual numbers as well.
        """
        nc = self.n_components
        operator = _numpy.transpose(self.shape_gradients, (0, 2, 1))
        if nc == 1:
            return operator @ local
        if component is not None:
            return operator @ local[component::nc]
        return _numpy.stack([operator @ local[c::nc] for c in range(nc)], axis=1)

    def expand(self, matrix: _numpy.ndarray) -> _numpy.ndarray:
        """
        Lift a scalar node-by-node matrix to all components.
        """
        if self.n_components == 1:
            return matrix
        return _numpy.kron(matrix, _numpy.eye(self.n_components))

    def mass(self, coefficient: Union[float, _numpy.ndarray] = 1.0) -> _numpy.ndarray:
        """
        Local scalar mass matrix weighted by a coefficient per point.
        """
        weights = _numpy.broadcast_to(coefficient, self.JxW.shape) * self.JxW
        return _numpy.einsum("q,qi,qj->ij", weights, self.shape_values, self.shape_values)

    def stiffness(self, coefficient: Union[float, _numpy.ndarray] = 1.0) -> _numpy.ndarray:
        """
        Local scalar stiffness matrix weighted by a coefficient per point.
        """
        weights = _numpy.broadcast_to(coefficient, self.JxW.shape) * self.JxW
        return _numpy.einsum("q,qid,qjd->ij", weights, self.shape_gradients, self.shape_gradients)

    def load(self, values: _numpy.ndarray) -> _numpy.ndarray:
        """
        Local load vector (f, phi_i) from values at the quadrature points,
        (nq,) or (nq, n_components).
        """
        values = _numpy.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        local = _numpy.einsum("q,qi,qc->ic", self.JxW, self.shape_values, values)
        return local.reshape(-1)

    def test(self, values):
        """
        Integrate values against every basis function, like load, for
        scalar values that may be dual numbers.
        """
        return self.shape_values.T @ (values * self.JxW)

    def test_gradients(self, values):
        """
        Integrate vector values (nq, dim) against every basis gradient,
        for values that may be dual numbers.
        """
        dim = self.shape_gradients.shape[2]
        total = None
        for d in range(dim):
            term = self.shape_gradients[:, :, d].T @ (values[:, d] * self.JxW)
            total = term if total is None else total + term
        return total


class FeFaceValues(FeCellValues):
    """
    Shape function data of one boundary face of a cell.
    """

    def __init__(self, *args, local_face: int, normal: _numpy.ndarray, **kwargs):
        super().__init__(*args, **kwargs)
        self.local_face = local_face
        self.normal = normal


def reinit_cell(space: FeSpace, cell: int, quadrature: Quadrature) -> FeCellValues:
    """
    Evaluate shape data of a cell at the points of a rule; JxW equals the
    cell volume times the reference weight.
    """
    if not 0 <= cell < space.mesh.n_cells:
        raise IndexError(f"cell must be in [0, {space.mesh.n_cells}); got {cell}")
    values, gradients, JxW, offsets = space._reference(quadrature)  # noqa: N806
    return FeCellValues(
        cell, space.cell_dofs[cell], values, gradients, JxW,
        space.mesh.cell_origin(cell) + offsets, space.n_components)


def reinit_face(
        space: FeSpace,
        cell: int,
        local_face: int,
        quadrature: Quadrature) -> FeFaceValues:
    """
    Evaluate shape data of the cell basis on one of its faces, with a
    (dim-1)-dimensional rule.
    """
    mesh = space.mesh
    axis, side = divmod(int(local_face), 2)
    reference = _numpy.insert(quadrature.points, axis, float(side), axis=1)
    values, gradients = _reference_basis(space.degree, reference)
    h = mesh.cell_size
    normal = _numpy.zeros(mesh.dim)
    normal[axis] = 1.0 if side else -1.0
    return FeFaceValues(
        cell, space.cell_dofs[cell], values, gradients / h,
        quadrature.weights * mesh.face_measure(local_face),
        mesh.cell_origin(cell) + reference * h, space.n_components,
        local_face=int(local_face), normal=normal)


class Constraints:
    """
    Dirichlet constraints: a map from dof to fixed value.
    """

    def __init__(self, values: Optional[Dict[int, float]] = None):
        self._values: Dict[int, float] = dict(values or {})

    def __len__(self) -> int:
        return len(self._values)

    def __contains__(self, dof: int) -> bool:
        return int(dof) in self._values

    def __getitem__(self, dof: int) -> float:
        return self._values[int(dof)]

    def __repr__(self) -> str:
        return f"Constraints({len(self)} dofs)"

    @property
    def dofs(self) -> _numpy.ndarray:
        """
        Constrained dofs, sorted.
        """
        return _numpy.array(sorted(self._values), dtype=int)

    @property
    def values(self) -> _numpy.ndarray:
        """
        Fixed values, in the order of dofs.
        """
        return _numpy.array([self._values[d] for d in sorted(self._values)], dtype=float)

    def merge(self, other: 'Constraints') -> 'Constraints':
        """
        Union of two constraint sets; other wins on shared dofs.
        """
        return Constraints({**self._values, **other._values})

    def shifted(self, offset: int) -> 'Constraints':
        """
        Same constraints with every dof moved by offset (block systems).
        """
        return Constraints({dof + offset: value for dof, value in self._values.items()})

    def homogeneous(self) -> 'Constraints':
        """
        Same dofs fixed to zero (Newton increments).
        """
        return Constraints({dof: 0.0 for dof in self._values})


def _as_spaces(space: Union[FeSpace, Sequence[FeSpace]]) -> Tuple[List[FeSpace], bool]:
    if isinstance(space, FeSpace):
        return [space], True
    spaces = list(space)
    if any(s.mesh is not spaces[0].mesh and s.mesh.descriptor != spaces[0].mesh.descriptor
           for s in spaces):
        raise MeshError("all spaces of a block system must share one mesh")
    return spaces, False


def _assemble_cells(
        spaces: List[FeSpace],
        single: bool,
        quadrature: Quadrature,
        kernel: Kernel,
        cells: Iterable[int],
        n_total: int) -> Tuple[list, list, list, _numpy.ndarray]:
    offsets = _numpy.cumsum([0] + [s.n_dofs for s in spaces])[:-1]
    rows, cols, vals = [], [], []
    rhs = _numpy.zeros(n_total)
    for cell in cells:
        values = [reinit_cell(s, cell, quadrature) for s in spaces]
        dofs = _numpy.concatenate([v.dofs + o for v, o in zip(values, offsets)])
        matrix, vector = kernel(values[0] if single else values)
        n = len(dofs)
        if matrix is None:
            matrix = _numpy.zeros((n, n))
        matrix = _numpy.asarray(matrix, dtype=float)
        if matrix.shape != (n, n):
            raise AssemblyError(f"local matrix must have shape {(n, n)}; got {matrix.shape}")
        rows.append(_numpy.repeat(dofs, n))
        cols.append(_numpy.tile(dofs, n))
        vals.append(matrix.ravel())
        if vector is not None:
            vector = _numpy.asarray(vector, dtype=float)
            if vector.shape != (n,):
                raise AssemblyError(f"local vector must have shape {(n,)}; got {vector.shape}")
            _numpy.add.at(rhs, dofs, vector)
    return rows, cols, vals, rhs


def assemble_system(
        space: Union[FeSpace, Sequence[FeSpace]],
        quadrature: Quadrature,
        cell_kernel: Kernel,
        constraints: Optional[Constraints] = None,
        face_terms: Sequence[Tuple[int, Quadrature, Kernel]] = (),
        n_threads: int = 1) -> Tuple[_sparse.csr_matrix, _numpy.ndarray]:
    """
    Assemble a global matrix and right-hand side from a cell kernel.

    Args:
        space: A space, or a sequence of spaces on one mesh forming a
            block system with dofs numbered space after space.
        quadrature: Rule used on every cell.
        cell_kernel: Maps the FeCellValues of a cell (a list of them for
            block systems) to (local matrix, local rhs); either may be
            None. Local dofs follow the concatenated cell dof maps.
        constraints: Dirichlet constraints applied by symmetric
            elimination after assembly.
        face_terms: (boundary tag, face rule, face kernel) triples added
            before constraints; see assemble_face_terms.
        n_threads: Cells are split in contiguous chunks over this many
            threads.

    Returns:
        Tuple[scipy.sparse.csr_matrix, numpy.ndarray]: The system; the
        sparsity covers every pair of dofs sharing a cell.

    Raises:
        AssemblyError: When a kernel returns data of the wrong shape.
    """
    spaces, single = _as_spaces(space)
    n_total = sum(s.n_dofs for s in spaces)
    n_cells = spaces[0].mesh.n_cells

    chunks = _numpy.array_split(_numpy.arange(n_cells), max(1, min(int(n_threads), n_cells)))
    if len(chunks) == 1:
        parts = [_assemble_cells(spaces, single, quadrature, cell_kernel, chunks[0], n_total)]
    else:
        with _ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(
                lambda chunk: _assemble_cells(
                    spaces, single, quadrature, cell_kernel, chunk, n_total),
                chunks))

    rows = _numpy.concatenate([r for part in parts for r in part[0]] or [_numpy.zeros(0, int)])
    cols = _numpy.concatenate([c for part in parts for c in part[1]] or [_numpy.zeros(0, int)])
    vals = _numpy.concatenate([v for part in parts for v in part[2]] or [_numpy.zeros(0)])
    matrix = _sparse.coo_matrix((vals, (rows, cols)), shape=(n_total, n_total)).tocsr()
    matrix.sort_indices()
    rhs = parts[0][3]
    for part in parts[1:]:
        rhs = rhs + part[3]

    for tag, face_quadrature, face_kernel in face_terms:
        if not single:
            raise AssemblyError("face terms are supported on single-space systems only")
        face_matrix, face_rhs = assemble_face_terms(spaces[0], face_quadrature, tag, face_kernel)
        matrix = matrix + face_matrix
        rhs = rhs + face_rhs

    if constraints is not None and len(constraints):
        matrix, rhs = apply_constraints(matrix, rhs, constraints)
    _logger.debug("assembled %d x %d system with %d stored entries", n_total, n_total, matrix.nnz)
    return matrix.tocsr(), rhs


def assemble_face_terms(
        space: FeSpace,
        quadrature_face: Quadrature,
        boundary_tag: int,
        face_kernel: Kernel) -> Tuple[_sparse.csr_matrix, _numpy.ndarray]:
    """
    Assemble boundary contributions on the faces carrying a tag: the
    matrix part holds Robin terms, the rhs part Neumann data.

    Args:
        space: The space.
        quadrature_face: (dim-1)-dimensional rule.
        boundary_tag: Faces to integrate over.
        face_kernel: Maps FeFaceValues to (local matrix, local rhs).

    Raises:
        MeshError: On an unknown tag.
    """
    n = space.n_dofs
    rows, cols, vals = [], [], []
    rhs = _numpy.zeros(n)
    for cell, local_face in space.mesh.tagged_faces(boundary_tag):
        values = reinit_face(space, int(cell), int(local_face), quadrature_face)
        matrix, vector = face_kernel(values)
        k = values.n_dofs
        if matrix is not None:
            matrix = _numpy.asarray(matrix, dtype=float)
            if matrix.shape != (k, k):
                raise AssemblyError(f"local face matrix must have shape {(k, k)}; got {matrix.shape}")
            rows.append(_numpy.repeat(values.dofs, k))
            cols.append(_numpy.tile(values.dofs, k))
            vals.append(matrix.ravel())
        if vector is not None:
            vector = _numpy.asarray(vector, dtype=float)
            if vector.shape != (k,):
                raise AssemblyError(f"local face vector must have shape {(k,)}; got {vector.shape}")
            _numpy.add.at(rhs, values.dofs, vector)
    if rows:
        matrix = _sparse.coo_matrix(
            (_numpy.concatenate(vals), (_numpy.concatenate(rows), _numpy.concatenate(cols))),
            shape=(n, n)).tocsr()
    else:
        matrix = _sparse.csr_matrix((n, n))
    return matrix, rhs


def apply_constraints(
        matrix: _sparse.spmatrix,
        rhs: _numpy.ndarray,
        constraints: Constraints) -> Tuple[_sparse.csr_matrix, _numpy.ndarray]:
    """
    Apply Dirichlet constraints by symmetric elimination: constrained
    columns move to the rhs, constrained rows become identity rows with
    the fixed value on the rhs.

    Examples:
        >>> A = _sparse.csr_matrix([[2.0, -1.0], [-1.0, 2.0]])
        >>> A2, b2 = apply_constraints(A, _numpy.zeros(2), Constraints({0: 1.0}))
        >>> A2.toarray().tolist(), b2.tolist()
        ([[1.0, 0.0], [0.0, 2.0]], [1.0, 1.0])
    """
    n = matrix.shape[0]
    fixed = _numpy.zeros(n)
    mask = _numpy.zeros(n, dtype=bool)
    dofs = constraints.dofs
    fixed[dofs] = constraints.values
    mask[dofs] = True
    free = _sparse.diags((~mask).astype(float))
    rhs = _numpy.where(mask, fixed, rhs - matrix @ fixed)
    matrix = (free @ matrix @ free + _sparse.diags(mask.astype(float))).tocsr()
    matrix.sort_indices()
    return matrix, rhs


def dirichlet_constraints(
        space: FeSpace,
        boundary_tag: Union[int, Iterable[int]],
        g: Function,
        component: Optional[int] = None) -> Constraints:
    """
    Constrain every dof whose support point lies on the tagged faces to
    the boundary data evaluated there.

    Args:
        space: The space.
        boundary_tag: A tag or several tags.
        g: Boundary data; scalar for one component (or when component is
            given), (n, n_components) otherwise.
        component: Constrain only this component.

    Raises:
        MeshError: On an unknown tag.
    """
    tags = [boundary_tag] if isinstance(boundary_tag, (int, _numpy.integer)) else list(boundary_tag)
    nodes = _numpy.unique(_numpy.concatenate(
        [space.boundary_nodes(int(tag)) for tag in tags] or [_numpy.zeros(0, int)]))
    values = _numpy.asarray(g(space.node_coords[nodes]), dtype=float)
    nc = space.n_components
    components = range(nc) if component is None else [component]
    if values.ndim == 1:
        values = _numpy.repeat(values[:, None], nc, axis=1)
    result = {}
    for c in components:
        column = values[:, c] if values.shape[1] > 1 else values[:, 0]
        result.update(zip((nodes * nc + c).tolist(), column.tolist()))
    return Constraints(result)


def apply_dirichlet_to_vector(
        space: FeSpace,
        constraints: Constraints,
        vec: _numpy.ndarray) -> None:
    """
    Overwrite the constrained entries of a vector with their fixed values.
    """
    if len(constraints):
        vec[constraints.dofs] = constraints.values


def interpolate(space: FeSpace, f: Function) -> _numpy.ndarray:
    """
    Nodal interpolant: f evaluated at the support points.

    Examples:
        >>> from flexfem._mesh import generate_box
        >>> space = build_space(generate_box(1, 0.0, 1.0, 2))
        >>> interpolate(space, lambda x: x[:, 0]).tolist()
        [0.0, 0.5, 1.0]
    """
    values = _numpy.asarray(f(space.node_coords), dtype=float)
    values = _numpy.broadcast_to(
        values.reshape(space.n_nodes, -1), (space.n_nodes, space.n_components))
    return _numpy.array(values).reshape(-1)


def evaluate_at_points(
        space: FeSpace,
        vec: _numpy.ndarray,
        points: _numpy.ndarray) -> _numpy.ndarray:
    """
    Evaluate an FE function at arbitrary points; points outside the mesh
    are clamped onto it.

    Returns:
        numpy.ndarray: Values of shape (n,), or (n, n_components).
    """
    points = _numpy.atleast_2d(_numpy.asarray(points, dtype=float))
    cells, reference = space.mesh.locate(points)
    values, _ = _reference_basis(space.degree, reference)
    nodes = space.cell_nodes[cells]
    coefficients = _numpy.asarray(vec).reshape(space.n_nodes, space.n_components)[nodes]
    result = _numpy.einsum("pn,pnc->pc", values, coefficients)
    return result[:, 0] if space.n_components == 1 else result


def _all_cells(space: FeSpace, quadrature: Quadrature):
    values, gradients, JxW, offsets = space._reference(quadrature)  # noqa: N806
    origins = space.mesh.lower + space.mesh._cell_index * space.mesh.cell_size
    return values, gradients, JxW, origins[:, None, :] + offsets[None, :, :]


def error_norm(
        space: FeSpace,
        vec: _numpy.ndarray,
        exact: Function,
        norm: str,
        quadrature: Optional[Quadrature] = None,
        gradient: Optional[Function] = None) -> float:
    """
    Distance between an FE function and an exact field.

    Args:
        space: The space of vec.
        vec: Coefficient vector.
        exact: Exact field.
        norm: "L2", "H1-semi" or "Linf-nodal".
        quadrature: Rule for the integral norms; degree + 2 points per
            axis by default.
        gradient: Exact gradient (n, dim), or (n, n_components, dim);
            required for "H1-semi".

    Returns:
        float: The nonnegative error.
    """
    vec = _numpy.asarray(vec, dtype=float)
    nc = space.n_components
    if norm == "Linf-nodal":
        return float(_numpy.max(_numpy.abs(vec - interpolate(space, exact)), initial=0.0))
    if quadrature is None:
        quadrature = gauss_quadrature(space.dim, min(space.degree + 2, 5))
    values, gradients, JxW, points = _all_cells(space, quadrature)  # noqa: N806
    coefficients = vec.reshape(space.n_nodes, nc)[space.cell_nodes]
    flat = points.reshape(-1, space.dim)
    if norm == "L2":
        uh = _numpy.einsum("qn,knc->kqc", values, coefficients)
        u = _numpy.asarray(exact(flat), dtype=float).reshape(uh.shape)
        return float(_numpy.sqrt(_numpy.einsum("kqc,q->", (uh - u) ** 2, JxW)))
    if norm == "H1-semi":
        if gradient is None:
            raise ValueError("H1-semi error needs the exact gradient")
        duh = _numpy.einsum("qnd,knc->kqcd", gradients, coefficients)
        du = _numpy.asarray(gradient(flat), dtype=float).reshape(duh.shape)
        return float(_numpy.sqrt(_numpy.einsum("kqcd,q->", (duh - du) ** 2, JxW)))
    raise ValueError(f"norm must be L2, H1-semi or Linf-nodal; got {norm!r}")


def find_closest_dof(space: FeSpace, point) -> Tuple[int, float]:
    """
    Find the dof whose support point is nearest to a point; ties go to
    the lowest index, so vector spaces return the first component.
    """
    point = _numpy.broadcast_to(_numpy.asarray(point, dtype=float), (space.dim,))
    distances = _numpy.linalg.norm(space.dof_coords - point, axis=1)
    index = int(_numpy.argmin(distances))
    return index, float(distances[index])


def mass_matrix(
        space: FeSpace,
        quadrature: Optional[Quadrature] = None,
        lumped: bool = False) -> _sparse.csr_matrix:
    """
    Global mass matrix, optionally row-sum lumped.
    """
    quadrature = quadrature or gauss_quadrature(space.dim, space.degree + 1)
    matrix, _ = assemble_system(
        space, quadrature, lambda values: (values.expand(values.mass()), None))
    if lumped:
        matrix = _sparse.diags(_numpy.asarray(matrix.sum(axis=1)).ravel()).tocsr()
    return matrix


def stiffness_matrix(
        space: FeSpace,
        quadrature: Optional[Quadrature] = None) -> _sparse.csr_matrix:
    """
    Global stiffness (Laplace) matrix without boundary conditions.
    """
    quadrature = quadrature or gauss_quadrature(space.dim, space.degree + 1)
    matrix, _ = assemble_system(
        space, quadrature, lambda values: (values.expand(values.stiffness()), None))
    return matrix
