"""
Coupled non-linear parabolic system on (-1, 1)^d:

    ∂u/∂t - Δu + u² = f
    ∂v/∂t - Δv + u v = g

with u of degree 1 advanced by BDF1 and v of degree 2 advanced by BDF3 by
default. Two coupling schemes:

- ``Monolithic``: one Newton iteration on the block system [u; v] with a
  handwritten block Jacobian.
- ``Partitioned``: explicit decoupling; u is advanced by Newton on its own
  equation, then the linear v equation is solved with u replaced by its
  BDF extrapolation, evaluated at the quadrature points of the v space.
  The splitting error is first order in the time step.

Manufactured solution u = t x, v = t y, hence f = x + t² x² and
g = y + t² x y, with Dirichlet data and the BDF history taken from it.
Writes ``norms.csv`` (errors per step) and ``solution_<step>.vtk``.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial06:parser
   :prog: flexfem tutorial06
"""

# annotations
from typing import Dict, Optional, Tuple

# external
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy
from scipy import sparse as _sparse

# internal
from flexfem._core import CoreModel, SolverError, join_path, status
from flexfem._coupling import FemValue
from flexfem._fem import (
    Constraints,
    FeSpace,
    apply_constraints,
    apply_dirichlet_to_vector,
    assemble_system,
    build_space,
    dirichlet_constraints,
    error_norm,
    gauss_quadrature,
    interpolate)
from flexfem._io import CsvTable, csv_write, vtk_write
from flexfem._linalg import LinearSolverHandler
from flexfem._mesh import BoxMeshHandler
from flexfem._nonlinear import NewtonCallbacks, NonLinearSolverHandler
from flexfem._params import CLI_PARSER, Bool, Integer, ParamTree, Selection
from flexfem._timeint import (
    BdfState,
    TimeSolverHandler,
    bdf_advance,
    bdf_extrapolate,
    bdf_init,
    bdf_time_derivative_term)


__all__ = [
    "COUPLING_SCHEMES",
    "ParabolicSystem",
    "SystemResult",
    "exact_u",
    "exact_v",
    "parser"]


_logger = _logging.getLogger(__name__)


COUPLING_SCHEMES = ("Monolithic", "Partitioned")


def exact_u(x: _numpy.ndarray, t: float) -> _numpy.ndarray:
    return t * x[:, 0]


def exact_v(x: _numpy.ndarray, t: float) -> _numpy.ndarray:
    return t * x[:, 1 if x.shape[1] > 1 else 0]


def _forcing_u(x, t):
    return x[:, 0] + exact_u(x, t) ** 2


def _forcing_v(x, t):
    return x[:, 1 if x.shape[1] > 1 else 0] + exact_u(x, t) * exact_v(x, t)


@_dataclasses.dataclass
class SystemResult:
    """
    Final fields of a system run with the error history.
    """

    scheme: str
    space_u: FeSpace
    space_v: FeSpace
    u: _numpy.ndarray
    v: _numpy.ndarray
    table: CsvTable
    errors: Dict[str, float]


class ParabolicSystem(CoreModel):
    """
    Two parabolic equations coupled through the reaction terms.
    """

    default_scheme = "Partitioned"

    def __init__(self, subsection_path: str = "Tutorial06", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.mesh = BoxMeshHandler(subsection_path, dim=3, lower=-1.0, upper=1.0, subdivisions=8)
        self.time_solver = TimeSolverHandler(
            join_path(subsection_path, "Time solver"), order=1, final_time=1.0, time_step=0.1)
        self.nonlinear_solver = NonLinearSolverHandler(subsection_path)
        self.linear_solver = LinearSolverHandler(subsection_path, "GMRES", "ILU0")
        self.linear_solver.config = _dataclasses.replace(self.linear_solver.config, tolerance=1e-12)
        self.scheme = self.default_scheme
        self.degree_u = 1
        self.degree_v = 2
        self.order_v = 3
        self.write_vtk = True

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry(
            "Coupling scheme", self.scheme, Selection(COUPLING_SCHEMES),
            "Monolithic Newton on both fields, or explicit partitioned steps.")
        params.declare_entry("FE degree u", self.degree_u, Integer(1, 2))
        params.declare_entry("FE degree v", self.degree_v, Integer(1, 2))
        params.declare_entry(
            "BDF order v", self.order_v, Integer(1, 3),
            "BDF order of v; the order of u is set in the time solver.")
        params.declare_entry("Write VTK", self.write_vtk, Bool())
        params.leave_subsection_path()
        self.mesh.declare_parameters(params)
        self.time_solver.declare_parameters(params)
        self.nonlinear_solver.declare_parameters(params)
        self.linear_solver.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.scheme = params.get("Coupling scheme")
            self.degree_u = params.get_integer("FE degree u")
            self.degree_v = params.get_integer("FE degree v")
            self.order_v = params.get_integer("BDF order v")
            self.write_vtk = params.get_bool("Write VTK")
        finally:
            params.leave_subsection_path()
        self.mesh.parse_parameters(params)
        self.time_solver.parse_parameters(params)
        self.nonlinear_solver.parse_parameters(params)
        self.linear_solver.parse_parameters(params)

    def setup_system(self) -> Tuple[BdfState, BdfState]:
        """
        Build both spaces on one mesh and the exact BDF bootstrap.
        """
        mesh = self.mesh.build()
        self.space_u = build_space(mesh, self.degree_u)
        self.space_v = build_space(mesh, self.degree_v)
        self.quadrature = gauss_quadrature(mesh.dim, max(self.degree_u, self.degree_v) + 2)
        time = self.time_solver
        states = []
        for space, exact, order in ((self.space_u, exact_u, time.order),
                                    (self.space_v, exact_v, self.order_v)):
            history = [interpolate(space, lambda x, t=time.time(-j): exact(x, t)) for j in range(order)]
            states.append(bdf_init(order, history, time.time_step))
        return states[0], states[1]

    def _constraints(self, space: FeSpace, exact, t: float) -> Constraints:
        return dirichlet_constraints(space, space.mesh.tags, lambda x: exact(x, t))

    # -- monolithic ----------------------------------------------------------

    def assemble_monolithic(
            self,
            x: _numpy.ndarray,
            want_jacobian: bool) -> Tuple[_numpy.ndarray, Optional[_sparse.csr_matrix]]:
        """
        Residual and block Jacobian of the coupled step at x = [u; v].
        """
        a_u, a_v, history_u, history_v, t, constraints = self._step
        n_u = self.space_u.n_dofs

        def kernel(values):
            values_u, values_v = values
            local_u, local_v = x[values_u.dofs], x[n_u + values_v.dofs]
            uq, vq = values_u.values(local_u), values_v.values(local_v)
            hu = values_u.values(history_u[values_u.dofs])
            hv = values_v.values(history_v[values_v.dofs])
            points = values_u.points
            residual = _numpy.concatenate([
                values_u.test(a_u * uq - hu + uq * uq - _forcing_u(points, t))
                + values_u.test_gradients(values_u.gradients(local_u)),
                values_v.test(a_v * vq - hv + uq * vq - _forcing_v(points, t))
                + values_v.test_gradients(values_v.gradients(local_v))])
            if not want_jacobian:
                return None, residual
            jacobian_uu = values_u.mass(a_u + 2.0 * uq) + values_u.stiffness()
            jacobian_vv = values_v.mass(a_v + uq) + values_v.stiffness()
            jacobian_vu = _numpy.einsum(
                "q,qi,qj->ij", values_v.JxW * vq, values_v.shape_values, values_u.shape_values)
            jacobian_uv = _numpy.zeros((values_u.n_dofs, values_v.n_dofs))
            return _numpy.block([[jacobian_uu, jacobian_uv], [jacobian_vu, jacobian_vv]]), residual

        jacobian, residual = assemble_system([self.space_u, self.space_v], self.quadrature, kernel)
        jacobian, residual = apply_constraints(jacobian, residual, constraints.homogeneous())
        return residual, jacobian if want_jacobian else None

    def _step_monolithic(self, newton, state_u: BdfState, state_v: BdfState, t: float) -> int:
        a_u, history_u = bdf_time_derivative_term(state_u)
        a_v, history_v = bdf_time_derivative_term(state_v)
        n_u = self.space_u.n_dofs
        constraints = self._constraints(self.space_u, exact_u, t).merge(
            self._constraints(self.space_v, exact_v, t).shifted(n_u))
        self._step = (a_u, a_v, history_u, history_v, t, constraints)
        guess = _numpy.concatenate([bdf_extrapolate(state_u), bdf_extrapolate(state_v)])
        guess[constraints.dofs] = constraints.values
        callbacks = NewtonCallbacks(self.assemble_monolithic, self.linear_solver.solve_function())
        x, report = newton.solve(guess, callbacks)
        if not report.converged:
            raise SolverError(f"monolithic Newton solver did not converge at t = {t:g}: {report.reason}")
        bdf_advance(state_u, x[:n_u])
        bdf_advance(state_v, x[n_u:])
        return report.iterations

    # -- partitioned ---------------------------------------------------------

    def _step_partitioned(self, newton, state_u: BdfState, state_v: BdfState, t: float) -> int:
        u_star = bdf_extrapolate(state_u)
        a_u, history_u = bdf_time_derivative_term(state_u)
        constraints_u = self._constraints(self.space_u, exact_u, t)

        def assemble_u(u, want_jacobian):
            def kernel(values):
                local = u[values.dofs]
                uq = values.values(local)
                hu = values.values(history_u[values.dofs])
                residual = (values.test(a_u * uq - hu + uq * uq - _forcing_u(values.points, t))
                            + values.test_gradients(values.gradients(local)))
                if not want_jacobian:
                    return None, residual
                return values.mass(a_u + 2.0 * uq) + values.stiffness(), residual

            jacobian, residual = assemble_system(self.space_u, self.quadrature, kernel)
            jacobian, residual = apply_constraints(jacobian, residual, constraints_u.homogeneous())
            return residual, jacobian if want_jacobian else None

        guess = u_star.copy()
        apply_dirichlet_to_vector(self.space_u, constraints_u, guess)
        u, report = newton.solve(guess, NewtonCallbacks(assemble_u, self.linear_solver.solve_function()))
        if not report.converged:
            raise SolverError(f"Newton solver for u did not converge at t = {t:g}: {report.reason}")

        a_v, history_v = bdf_time_derivative_term(state_v)
        coupling = FemValue(self.space_u, u_star)

        def kernel_v(values):
            coupling.reinit(self.space_v, values.cell, self.quadrature)
            hv = values.values(history_v[values.dofs])
            matrix = values.mass(a_v + coupling.values) + values.stiffness()
            return matrix, values.load(hv + _forcing_v(values.points, t))

        matrix, rhs = assemble_system(
            self.space_v, self.quadrature, kernel_v, self._constraints(self.space_v, exact_v, t))
        v, _ = self.linear_solver.solve(matrix, rhs, x0=bdf_extrapolate(state_v), raise_on_failure=True)
        bdf_advance(state_u, u)
        bdf_advance(state_v, v)
        return report.iterations

    def run(self) -> SystemResult:
        state_u, state_v = self.setup_system()
        newton = self.nonlinear_solver.build()
        step_function = self._step_monolithic if self.scheme == "Monolithic" else self._step_partitioned
        rows = []
        errors = {}
        t = self.time_solver.initial_time

        for step in range(1, self.time_solver.n_steps + 1):
            t = self.time_solver.time(step)
            newton.advance()
            iterations = step_function(newton, state_u, state_v, t)
            u, v = state_u.solution, state_v.solution
            errors = {
                "L2 u": error_norm(self.space_u, u, lambda x: exact_u(x, t), "L2"),
                "L2 v": error_norm(self.space_v, v, lambda x: exact_v(x, t), "L2"),
                "Linf-nodal u": error_norm(self.space_u, u, lambda x: exact_u(x, t), "Linf-nodal"),
                "Linf-nodal v": error_norm(self.space_v, v, lambda x: exact_v(x, t), "Linf-nodal")}
            rows.append([step, t, *errors.values(), iterations])
            _logger.info("%s step %d, t = %g: %d Newton iterations", self.scheme, step, t, iterations)

        table = CsvTable(["step", "time", *errors, "newton iterations"], rows)
        csv_write(self.output_dir / "norms.csv", table)
        if self.write_vtk:
            vtk_write(self.output_dir / f"solution_{self.time_solver.n_steps}.vtk", self.space_v,
                      {"v": state_v.solution, "u": (self.space_u, state_u.solution)}, time=t)
        status(f"{self.scheme} scheme reached t = {t:g}: L2 errors "
               f"{errors.get('L2 u', 0.0):.3e} (u), {errors.get('L2 v', 0.0):.3e} (v)")
        return SystemResult(self.scheme, self.space_u, self.space_v, state_u.solution,
                            state_v.solution, table, errors)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="coupled parabolic system, partitioned scheme")
parser.set_defaults(model=ParabolicSystem)
