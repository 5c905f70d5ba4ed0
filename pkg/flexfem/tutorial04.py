"""
Non-linear parabolic problem ∂u/∂t - Δu + u² = f: BDF in time, Newton at
every step, with the cell Jacobian either written by hand or obtained by
forward-mode automatic differentiation of the cell residual.

Manufactured solutions:

- ``Zero``: u = 0, f = 0.
- ``Linear``: u = t (1 + Σ x_d), f = (1 + Σ x_d) + u².

Writes ``norms.csv`` (error and Newton iterations per step) and
``solution_<step>.vtk``.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial04:parser
   :prog: flexfem tutorial04
"""

# annotations
from typing import Callable, Dict, List, Optional, Tuple

# external
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy
from scipy import sparse as _sparse

# internal
from flexfem._core import CoreModel, SolverError, join_path, status
from flexfem._fem import (
    Constraints,
    FeCellValues,
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
from flexfem._nonlinear import NewtonCallbacks, NonLinearSolverHandler, jacobian_via_dual
from flexfem._params import CLI_PARSER, Bool, Integer, ParamTree, Selection
from flexfem._timeint import (
    BdfState,
    TimeSolverHandler,
    bdf_advance,
    bdf_extrapolate,
    bdf_init,
    bdf_time_derivative_term)


__all__ = [
    "JACOBIANS",
    "NonlinearHeat",
    "NonlinearHeatResult",
    "parser"]


_logger = _logging.getLogger(__name__)


JACOBIANS = ("Handwritten", "AutoDiff")

TimeFunction = Callable[[_numpy.ndarray, float], _numpy.ndarray]

_EXACT: Dict[str, Tuple[TimeFunction, TimeFunction]] = {
    "Zero": (
        lambda x, t: _numpy.zeros(len(x)),
        lambda x, t: _numpy.zeros(len(x))),
    "Linear": (
        lambda x, t: t * (1.0 + x.sum(axis=1)),
        lambda x, t: (1.0 + x.sum(axis=1)) + (t * (1.0 + x.sum(axis=1))) ** 2)}


def cell_residual(values: FeCellValues, local, a: float, history_q, forcing_q):
    """
    Local residual (a u - h + u² - f, φ) + (∇u, ∇φ) for coefficients that
    may be dual numbers.
    """
    uq = values.values(local)
    return (values.test(uq * a - history_q + uq * uq - forcing_q)
            + values.test_gradients(values.gradients(local)))


@_dataclasses.dataclass
class NonlinearHeatResult:
    """
    Final state of a run and the Newton history of every step.
    """

    space: FeSpace
    solution: _numpy.ndarray
    table: CsvTable
    error: float
    newton_iterations: List[int]
    residual_norms: List[List[float]]


class NonlinearHeat(CoreModel):
    """
    Parabolic problem with a quadratic reaction term.
    """

    default_jacobian = "Handwritten"

    def __init__(self, subsection_path: str = "Tutorial04", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.mesh = BoxMeshHandler(subsection_path)
        self.time_solver = TimeSolverHandler(join_path(subsection_path, "Time solver"))
        self.nonlinear_solver = NonLinearSolverHandler(subsection_path)
        self.linear_solver = LinearSolverHandler(subsection_path, "CG", "SSOR")
        self.linear_solver.config = _dataclasses.replace(self.linear_solver.config, tolerance=1e-12)
        self.degree = 1
        self.exact = "Linear"
        self.jacobian = self.default_jacobian
        self.write_vtk = True
        self.space = None

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("FE degree", self.degree, Integer(1, 2))
        params.declare_entry("Exact solution", self.exact, Selection(list(_EXACT)))
        params.declare_entry(
            "Jacobian", self.jacobian, Selection(JACOBIANS),
            "Cell Jacobian written by hand or by automatic differentiation.")
        params.declare_entry("Write VTK", self.write_vtk, Bool())
        params.leave_subsection_path()
        self.mesh.declare_parameters(params)
        self.time_solver.declare_parameters(params)
        self.nonlinear_solver.declare_parameters(params)
        self.linear_solver.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.degree = params.get_integer("FE degree")
            self.exact = params.get("Exact solution")
            self.jacobian = params.get("Jacobian")
            self.write_vtk = params.get_bool("Write VTK")
        finally:
            params.leave_subsection_path()
        self.mesh.parse_parameters(params)
        self.time_solver.parse_parameters(params)
        self.nonlinear_solver.parse_parameters(params)
        self.linear_solver.parse_parameters(params)

    def setup_system(self) -> BdfState:
        """
        Build the space and the exact BDF bootstrap at the initial time.
        """
        self.space = build_space(self.mesh.build(), self.degree)
        self.quadrature = gauss_quadrature(self.space.dim, self.degree + 2)
        exact = _EXACT[self.exact][0]
        time = self.time_solver
        history = [interpolate(self.space, lambda x, t=time.time(-j): exact(x, t))
                   for j in range(time.order)]
        return bdf_init(time.order, history, time.time_step)

    def prepare_step(self, state: BdfState, t: float) -> Tuple[_numpy.ndarray, Constraints]:
        """
        Fix the time-step data used by assemble; returns the initial guess
        (extrapolation with the new boundary data) and the constraints.
        """
        exact = _EXACT[self.exact][0]
        self._a, self._history = bdf_time_derivative_term(state)
        self._t = t
        self.constraints = dirichlet_constraints(self.space, self.space.mesh.tags, lambda x: exact(x, t))
        guess = bdf_extrapolate(state)
        apply_dirichlet_to_vector(self.space, self.constraints, guess)
        return guess, self.constraints

    def assemble(
            self,
            u: _numpy.ndarray,
            want_jacobian: bool) -> Tuple[_numpy.ndarray, Optional[_sparse.csr_matrix]]:
        """
        Residual and Jacobian of the current step at u.
        """
        forcing = _EXACT[self.exact][1]
        a, history, t = self._a, self._history, self._t

        def kernel(values):
            local = u[values.dofs]
            history_q = values.values(history[values.dofs])
            forcing_q = forcing(values.points, t)
            if not want_jacobian:
                return None, cell_residual(values, local, a, history_q, forcing_q)
            if self.jacobian == "AutoDiff":
                residual, jacobian = jacobian_via_dual(
                    lambda z: cell_residual(values, z, a, history_q, forcing_q), local)
                return jacobian, residual
            uq = values.values(local)
            jacobian = values.mass(a + 2.0 * uq) + values.stiffness()
            return jacobian, cell_residual(values, local, a, history_q, forcing_q)

        jacobian, residual = assemble_system(self.space, self.quadrature, kernel)
        jacobian, residual = apply_constraints(jacobian, residual, self.constraints.homogeneous())
        return residual, jacobian if want_jacobian else None

    def run(self) -> NonlinearHeatResult:
        exact = _EXACT[self.exact][0]
        state = self.setup_system()
        newton = self.nonlinear_solver.build()
        callbacks = NewtonCallbacks(self.assemble, self.linear_solver.solve_function())
        rows, iterations, residuals = [], [], []
        error, t = 0.0, self.time_solver.initial_time

        for step in range(1, self.time_solver.n_steps + 1):
            t = self.time_solver.time(step)
            guess, _ = self.prepare_step(state, t)
            newton.advance()
            u, report = newton.solve(guess, callbacks)
            if not report.converged:
                raise SolverError(f"Newton solver did not converge at step {step}: {report.reason}")
            bdf_advance(state, u)
            error = error_norm(self.space, u, lambda x: exact(x, t), "Linf-nodal")
            iterations.append(report.iterations)
            residuals.append(report.residual_norms)
            rows.append([step, t, error, report.iterations, report.jacobian_assemblies])
            _logger.info("step %d, t = %g: %d Newton iterations", step, t, report.iterations)

        table = CsvTable(["step", "time", "Linf-nodal", "newton iterations", "jacobian assemblies"], rows)
        csv_write(self.output_dir / "norms.csv", table)
        if self.write_vtk:
            vtk_write(self.output_dir / f"solution_{self.time_solver.n_steps}.vtk", self.space,
                      {"u": state.solution}, time=t)
        status(f"{self.jacobian} Jacobian: {sum(iterations)} Newton iterations, "
               f"final nodal error {error:.3e}")
        return NonlinearHeatResult(self.space, state.solution, table, error, iterations, residuals)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="non-linear parabolic problem, handwritten Jacobian")
parser.set_defaults(model=NonlinearHeat)
