"""
Non-linear elliptic problem -Δu + u³ = f with Dirichlet data, solved by
the Newton variant chosen in the parameter file.

Manufactured solutions:

- ``Constant``: u = 1, f = 1.
- ``Sine``: u = Π sin(π x_d), f = dim π² u + u³.

The Newton iteration starts from zero in the interior and the boundary
data on the boundary. Writes ``newton.csv`` (residual and increment norm
per iteration) and ``solution.vtk``.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial02:parser
   :prog: flexfem tutorial02
"""

# annotations
from typing import Optional, Tuple

# external
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy
from scipy import sparse as _sparse

# internal
from flexfem._core import CoreModel, SolverError, status
from flexfem._fem import (
    FeSpace,
    apply_constraints,
    apply_dirichlet_to_vector,
    assemble_system,
    build_space,
    dirichlet_constraints,
    error_norm,
    gauss_quadrature)
from flexfem._io import csv_write, vtk_write
from flexfem._linalg import LinearSolverHandler
from flexfem._mesh import BoxMeshHandler
from flexfem._nonlinear import NewtonCallbacks, NewtonReport, NonLinearSolverHandler
from flexfem._params import CLI_PARSER, Bool, Integer, ParamTree, Selection


__all__ = [
    "NonlinearPoisson",
    "NonlinearResult",
    "parser"]


_logger = _logging.getLogger(__name__)


def _sine(x):
    return _numpy.prod(_numpy.sin(_numpy.pi * x), axis=1)


_EXACT = {
    "Constant": (lambda x: _numpy.ones(len(x)), lambda x: _numpy.ones(len(x))),
    "Sine": (_sine, lambda x: x.shape[1] * _numpy.pi ** 2 * _sine(x) + _sine(x) ** 3)}


@_dataclasses.dataclass
class NonlinearResult:
    """
    Newton report, solution and its nodal error.
    """

    report: NewtonReport
    space: FeSpace
    solution: _numpy.ndarray
    error: float


class NonlinearPoisson(CoreModel):
    """
    Semilinear elliptic problem with a cubic reaction term.
    """

    def __init__(self, subsection_path: str = "Tutorial02", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.mesh = BoxMeshHandler(subsection_path, subdivisions=16)
        self.nonlinear_solver = NonLinearSolverHandler(subsection_path)
        self.linear_solver = LinearSolverHandler(subsection_path, "CG", "SSOR")
        self.linear_solver.config = _dataclasses.replace(self.linear_solver.config, tolerance=1e-12)
        self.degree = 1
        self.exact = "Constant"
        self.write_vtk = True
        self.space = None

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("FE degree", self.degree, Integer(1, 2))
        params.declare_entry("Exact solution", self.exact, Selection(list(_EXACT)))
        params.declare_entry("Write VTK", self.write_vtk, Bool())
        params.leave_subsection_path()
        self.mesh.declare_parameters(params)
        self.nonlinear_solver.declare_parameters(params)
        self.linear_solver.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.degree = params.get_integer("FE degree")
            self.exact = params.get("Exact solution")
            self.write_vtk = params.get_bool("Write VTK")
        finally:
            params.leave_subsection_path()
        self.mesh.parse_parameters(params)
        self.nonlinear_solver.parse_parameters(params)
        self.linear_solver.parse_parameters(params)

    def setup_system(self) -> None:
        """
        Build the mesh, the space and the boundary data.
        """
        self.space = build_space(self.mesh.build(), self.degree)
        self.quadrature = gauss_quadrature(self.space.dim, self.degree + 2)
        self.constraints = dirichlet_constraints(
            self.space, self.space.mesh.tags, _EXACT[self.exact][0])

    def initial_guess(self) -> _numpy.ndarray:
        u0 = _numpy.zeros(self.space.n_dofs)
        apply_dirichlet_to_vector(self.space, self.constraints, u0)
        return u0

    def assemble(
            self,
            u: _numpy.ndarray,
            want_jacobian: bool) -> Tuple[_numpy.ndarray, Optional[_sparse.csr_matrix]]:
        """
        Residual and Jacobian at u; constrained rows are identity rows
        with zero residual.
        """
        forcing = _EXACT[self.exact][1]

        def kernel(values):
            local = u[values.dofs]
            uq = values.values(local)
            residual = (values.test_gradients(values.gradients(local))
                        + values.test(uq ** 3 - forcing(values.points)))
            jacobian = values.stiffness() + values.mass(3.0 * uq ** 2) if want_jacobian else None
            return jacobian, residual

        jacobian, residual = assemble_system(self.space, self.quadrature, kernel)
        jacobian, residual = apply_constraints(jacobian, residual, self.constraints.homogeneous())
        return residual, jacobian if want_jacobian else None

    def run(self) -> NonlinearResult:
        self.setup_system()
        solver = self.nonlinear_solver.build()
        callbacks = NewtonCallbacks(self.assemble, self.linear_solver.solve_function())
        u, report = solver.solve(self.initial_guess(), callbacks)
        if not report.converged:
            raise SolverError(f"Newton solver did not converge: {report.reason}")
        error = error_norm(self.space, u, _EXACT[self.exact][0], "Linf-nodal")
        status(f"{report.iterations} Newton iterations, nodal error {error:.3e}")

        increments = report.increment_norms + [float("nan")] * (
            len(report.residual_norms) - len(report.increment_norms))
        csv_write(self.output_dir / "newton.csv", (
            ["iteration", "residual", "increment"],
            [[k, r, d] for k, (r, d) in enumerate(zip(report.residual_norms, increments))]))
        if self.write_vtk:
            vtk_write(self.output_dir / "solution.vtk", self.space, {"u": u})
        return NonlinearResult(report, self.space, u, error)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="non-linear elliptic problem solved by Newton")
parser.set_defaults(model=NonlinearPoisson)
