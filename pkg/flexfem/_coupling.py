"""
Multiphysics data transfer: fields evaluated at the quadrature points of
another space, smoothed L2 projection, conforming interface maps and the
Dirichlet-Neumann coupling loop.
"""

# annotations
from typing import Callable, List, Optional, Tuple

# external
import abc as _abc
import logging as _logging
import dataclasses as _dataclasses

import numpy as _numpy
from scipy import sparse as _sparse

# internal
from flexfem._core import InterfaceError, SolverError
from flexfem._fem import (
    Constraints,
    FeSpace,
    Quadrature,
    apply_constraints,
    assemble_system,
    gauss_quadrature)
from flexfem._linalg import PreconditionerConfig, SolverConfig, solve
from flexfem._nonlinear import AccelerationConfig, build_accelerator


__all__ = [
    "QuadratureField",
    "Analytic",
    "FemValue",
    "FemGradient",
    "FemDivergence",
    "InterfaceMap",
    "SubdomainProblem",
    "CouplingReport",
    "quad_reinit",
    "quad_value",
    "project_l2",
    "build_interface_map",
    "extract_interface_data",
    "apply_interface_dirichlet",
    "dirichlet_neumann_iterate"]


_logger = _logging.getLogger(__name__)


# -- quadrature evaluation ---------------------------------------------------

class QuadratureField(_abc.ABC):
    """
    A field evaluated at the quadrature points of a target cell.
    """

    def __init__(self):
        self.values: Optional[_numpy.ndarray] = None

    def reinit(self, target: FeSpace, cell: int, quadrature: Quadrature) -> None:
        """
        Evaluate the field at the physical quadrature points of a cell of
        the target space.
        """
        self.values = self._evaluate(target, cell, quadrature)

    @_abc.abstractmethod
    def _evaluate(self, target: FeSpace, cell: int, quadrature: Quadrature) -> _numpy.ndarray:
        ...

    def value(self, q: int):
        """
        Value at the q-th point of the last reinit.
        """
        if self.values is None:
            raise InterfaceError("quadrature field must be reinitialized on a cell before evaluation")
        return self.values[q]


class Analytic(QuadratureField):
    """
    A vectorized function of the physical coordinates.
    """

    def __init__(self, function: Callable[[_numpy.ndarray], _numpy.ndarray]):
        super().__init__()
        self.function = function

    def _evaluate(self, target, cell, quadrature):
        points = target.mesh.cell_origin(cell) + quadrature.points * target.mesh.cell_size
        return _numpy.asarray(self.function(points), dtype=float)


class _FemField(QuadratureField):

    def __init__(self, space: FeSpace, vector: _numpy.ndarray):
        super().__init__()
        self.space = space
        self.vector = _numpy.asarray(vector, dtype=float)
        if self.vector.shape != (space.n_dofs,):
            raise InterfaceError(f"source vector must have length {space.n_dofs}; got {self.vector.shape}")

    def _local(self, target: FeSpace, cell: int, quadrature: Quadrature):
        if target.mesh is not self.space.mesh and target.mesh.descriptor != self.space.mesh.descriptor:
            raise InterfaceError(
                f"source and target spaces must share one mesh; got {self.space.mesh!r} "
                f"and {target.mesh!r}")
        values, gradients, _, _ = self.space._reference(quadrature)
        local = self.vector.reshape(self.space.n_nodes, self.space.n_components)[self.space.cell_nodes[cell]]
        return values, gradients, local


class FemValue(_FemField):
    """
    Values of a finite-element function, shape (nq,) or (nq, nc).
    """

    def _evaluate(self, target, cell, quadrature):
        values, _, local = self._local(target, cell, quadrature)
        result = values @ local
        return result[:, 0] if self.space.n_components == 1 else result


class FemGradient(_FemField):
    """
    Gradients of a finite-element function, shape (nq, dim) or
    (nq, nc, dim).
    """

    def _evaluate(self, target, cell, quadrature):
        _, gradients, local = self._local(target, cell, quadrature)
        result = _numpy.einsum("qnd,nc->qcd", gradients, local)
        return result[:, 0] if self.space.n_components == 1 else result


class FemDivergence(_FemField):
    """
    Divergence of a vector finite-element function with dim components.
    """

    def __init__(self, space: FeSpace, vector: _numpy.ndarray):
        if space.n_components != space.dim:
            raise InterfaceError(
                f"divergence needs {space.dim} components; got {space.n_components}")
        super().__init__(space, vector)

    def _evaluate(self, target, cell, quadrature):
        _, gradients, local = self._local(target, cell, quadrature)
        return _numpy.einsum("qnd,nd->q", gradients, local)


def quad_reinit(field: QuadratureField, target_space: FeSpace, cell: int, quadrature: Quadrature) -> None:
    """
    Evaluate a field on a cell of the target space.

    Raises:
        InterfaceError: When a finite-element source lives on another mesh.
    """
    field.reinit(target_space, cell, quadrature)


def quad_value(field: QuadratureField, q_index: int):
    """
    Value of a reinitialized field at one quadrature point.
    """
    return field.value(q_index)


def project_l2(
        field: QuadratureField,
        target_space: FeSpace,
        epsilon: float = 0.0,
        lump_mass: bool = False,
        solver_config: Optional[SolverConfig] = None,
        quadrature: Optional[Quadrature] = None) -> _numpy.ndarray:
    """
    Smoothed L2 projection: find f_h with
    (epsilon grad f_h, grad phi) + (f_h, phi) = (f, phi) for every basis
    function phi, natural boundary conditions.

    Args:
        field: The source field.
        target_space: Space of f_h.
        epsilon: Smoothing weight >= 0.
        lump_mass: Replace the mass matrix by its row sums.
        solver_config: Linear solver; CG with Jacobi to 1e-12 when omitted.
        quadrature: Rule; degree + 2 points per axis when omitted.

    Raises:
        SolverError: When the linear solve does not converge.
    """
    if epsilon < 0.0:
        raise ValueError(f"smoothing weight must be >= 0; got {epsilon}")
    quadrature = quadrature or gauss_quadrature(target_space.dim, min(target_space.degree + 2, 5))

    def mass_kernel(values):
        field.reinit(target_space, values.cell, quadrature)
        return values.expand(values.mass()), values.load(field.values)

    def stiffness_kernel(values):
        return values.expand(values.stiffness(epsilon)), None

    mass, rhs = assemble_system(target_space, quadrature, mass_kernel)
    if lump_mass:
        mass = _sparse.diags(_numpy.asarray(mass.sum(axis=1)).ravel()).tocsr()
    matrix = mass
    if epsilon > 0.0:
        stiffness, _ = assemble_system(target_space, quadrature, stiffness_kernel)
        matrix = (mass + stiffness).tocsr()

    config = solver_config or SolverConfig("CG", tolerance=1e-12)
    result, report = solve(matrix, rhs, config, PreconditionerConfig("Jacobi"))
    if not report.converged:
        raise SolverError(f"L2 projection did not converge: {report.reason}")
    return result


# -- interfaces --------------------------------------------------------------

@_dataclasses.dataclass
class InterfaceMap:
    """
    Pairs of coinciding interface dofs: column 0 on side 1, column 1 on
    side 2, ordered by the lexicographic sort of their coordinates.
    """

    pairs: _numpy.ndarray
    coordinates: _numpy.ndarray
    tolerance: float

    def __len__(self) -> int:
        return len(self.pairs)

    def dofs(self, side: int) -> _numpy.ndarray:
        """
        Interface dofs of side 1 or 2.
        """
        if side not in (1, 2):
            raise ValueError(f"interface side must be 1 or 2; got {side}")
        return self.pairs[:, side - 1]


def _sorted_interface(space: FeSpace, tag: int, scale: float) -> Tuple[_numpy.ndarray, _numpy.ndarray]:
    nodes = space.boundary_nodes(tag)
    coords = space.node_coords[nodes]
    keys = _numpy.round(coords / scale)
    order = _numpy.lexsort(keys.T[::-1])
    return nodes[order], coords[order]


def build_interface_map(
        space1: FeSpace,
        tag1: int,
        space2: FeSpace,
        tag2: int,
        tol: Optional[float] = None) -> InterfaceMap:
    """
    Pair the dofs of two conforming tagged faces by coordinates.

    Args:
        space1: Space of side 1.
        tag1: Interface tag on side 1.
        space2: Space of side 2.
        tag2: Interface tag on side 2.
        tol: Matching tolerance; 1e-10 times the larger domain diameter
            by default.

    Raises:
        InterfaceError: On different degrees or component counts, or when
            a support point finds no partner within tol.
    """
    if space1.degree != space2.degree or space1.n_components != space2.n_components:
        raise InterfaceError(
            "interface spaces must have equal degree and components; got "
            f"({space1.degree}, {space1.n_components}) and ({space2.degree}, {space2.n_components})")
    if tol is None:
        diameter = max(
            float(_numpy.linalg.norm(space.mesh.upper - space.mesh.lower)) for space in (space1, space2))
        tol = 1e-10 * diameter
    nodes1, coords1 = _sorted_interface(space1, tag1, tol)
    nodes2, coords2 = _sorted_interface(space2, tag2, tol)
    if len(nodes1) != len(nodes2):
        raise InterfaceError(
            f"interface node counts must match; got {len(nodes1)} and {len(nodes2)}")
    mismatch = _numpy.max(_numpy.abs(coords1 - coords2), axis=1) > tol
    if _numpy.any(mismatch):
        offending = coords1[mismatch][:5].tolist()
        raise InterfaceError(
            f"interface points must coincide within {tol:.3g}; unmatched near {offending}")
    nc = space1.n_components
    pairs = _numpy.stack([
        (nodes1[:, None] * nc + _numpy.arange(nc)).ravel(),
        (nodes2[:, None] * nc + _numpy.arange(nc)).ravel()], axis=1)
    _logger.debug("interface map with %d pairs", len(pairs))
    return InterfaceMap(pairs, _numpy.repeat(coords1, nc, axis=0), float(tol))


def extract_interface_data(interface: InterfaceMap, which_side: int, vector: _numpy.ndarray) -> _numpy.ndarray:
    """
    Values of a vector at the interface dofs of one side, in map order.
    """
    return _numpy.asarray(vector, dtype=float)[interface.dofs(which_side)]


def apply_interface_dirichlet(
        interface: InterfaceMap,
        which_side: int,
        values: _numpy.ndarray) -> Constraints:
    """
    Constraints fixing the interface dofs of one side to values given in
    map order.
    """
    values = _numpy.asarray(values, dtype=float)
    if values.shape != (len(interface),):
        raise InterfaceError(f"interface data must have length {len(interface)}; got {values.shape}")
    return Constraints(dict(zip(interface.dofs(which_side).tolist(), values.tolist())))


# -- Dirichlet-Neumann -------------------------------------------------------

@_dataclasses.dataclass
class SubdomainProblem:
    """
    A linear subdomain problem: matrix and load without boundary
    conditions, plus its exterior Dirichlet constraints.
    """

    space: FeSpace
    matrix: _sparse.csr_matrix
    rhs: _numpy.ndarray
    constraints: Constraints
    solver: SolverConfig = _dataclasses.field(
        default_factory=lambda: SolverConfig("CG", max_iterations=5000, tolerance=1e-12))
    preconditioner: PreconditionerConfig = _dataclasses.field(
        default_factory=lambda: PreconditionerConfig("SSOR", 1.2))

    def solve(
            self,
            interface_constraints: Optional[Constraints] = None,
            interface_load: Optional[Tuple[_numpy.ndarray, _numpy.ndarray]] = None) -> _numpy.ndarray:
        """
        Solve with optional interface Dirichlet data (exterior constraints
        win on shared dofs) or interface load (dofs, values).

        Raises:
            SolverError: When the linear solve does not converge.
        """
        rhs = self.rhs.copy()
        if interface_load is not None:
            dofs, values = interface_load
            _numpy.add.at(rhs, dofs, values)
        constraints = self.constraints
        if interface_constraints is not None:
            constraints = interface_constraints.merge(self.constraints)
        matrix, rhs = apply_constraints(self.matrix, rhs, constraints)
        result, report = solve(matrix, rhs, self.solver, self.preconditioner)
        if not report.converged:
            raise SolverError(f"subdomain solve did not converge: {report.reason}")
        return result

    def residual(self, u: _numpy.ndarray) -> _numpy.ndarray:
        """
        A u - b of the unconstrained system.
        """
        return self.matrix @ u - self.rhs


@_dataclasses.dataclass
class CouplingReport:
    """
    Outcome of a coupling loop.
    """

    converged: bool
    iterations: int
    update_norms: List[float] = _dataclasses.field(default_factory=list)
    diverged: bool = False
    reason: str = ""


def dirichlet_neumann_iterate(
        problem1: SubdomainProblem,
        problem2: SubdomainProblem,
        interface: InterfaceMap,
        relaxation: Optional[AccelerationConfig] = None,
        tol: float = 1e-10,
        max_iters: int = 100,
        divergence_factor: float = 1e3,
        initial_trace: Optional[_numpy.ndarray] = None) -> Tuple[_numpy.ndarray, _numpy.ndarray, CouplingReport]:
    """
    Partitioned solve of two subdomain problems coupled by continuity of
    the solution and of the flux across a conforming interface.

    Each sweep solves problem1 with the current interface trace as
    Dirichlet data, hands minus its residual at the interface dofs to
    problem2 as Neumann load, solves problem2 and feeds its interface
    values through the accelerator to get the next trace.

    Args:
        problem1: Dirichlet side (side 1 of the map).
        problem2: Neumann side (side 2 of the map).
        interface: The interface map.
        relaxation: Acceleration of the trace update; plain iteration by
            default.
        tol: Stop when the norm of the trace update is at most tol.
        max_iters: Maximum number of sweeps.
        divergence_factor: Stop as diverged when an update grows beyond
            this multiple of the first one.
        initial_trace: First interface trace; zero by default.

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray, CouplingReport]: u1, u2 and
        the report; non-convergence is reported, not raised.
    """
    accelerator = build_accelerator(relaxation or AccelerationConfig())
    trace = (_numpy.zeros(len(interface)) if initial_trace is None
             else _numpy.array(initial_trace, dtype=float))
    report = CouplingReport(converged=False, iterations=0)
    u1 = u2 = None
    dofs1, dofs2 = interface.dofs(1), interface.dofs(2)

    for sweep in range(1, max_iters + 1):
        u1 = problem1.solve(interface_constraints=apply_interface_dirichlet(interface, 1, trace))
        flux = -problem1.residual(u1)[dofs1]
        u2 = problem2.solve(interface_load=(dofs2, flux))
        new_trace = accelerator.accelerate(trace, extract_interface_data(interface, 2, u2))
        update = float(_numpy.linalg.norm(new_trace - trace))
        trace = new_trace
        report.iterations = sweep
        report.update_norms.append(update)
        _logger.debug("Dirichlet-Neumann sweep %d: update %.3e", sweep, update)
        if not _numpy.isfinite(update) or update > divergence_factor * max(report.update_norms[0], tol):
            report.diverged, report.reason = True, "interface update grew beyond the divergence bound"
            break
        if update <= tol:
            report.converged, report.reason = True, "interface update below tolerance"
            break
    else:
        report.reason = "maximum number of sweeps reached"

    if report.converged:
        # u1 from the converged trace
        u1 = problem1.solve(interface_constraints=apply_interface_dirichlet(interface, 1, trace))
        _logger.info("Dirichlet-Neumann converged in %d sweeps", report.iterations)
    else:
        _logger.warning("Dirichlet-Neumann stopped after %d sweeps: %s", report.iterations, report.reason)
    return u1, u2, report
