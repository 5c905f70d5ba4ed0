"""
Linear elliptic problem -Δu = f with Dirichlet data taken from a
manufactured solution, solved on a sequence of refined meshes.

Manufactured solutions:

- ``Sine``: u = Π sin(π x_d), f = dim π² u.
- ``Linear``: u = 1 + Σ x_d, f = 0; exact for every degree.

Writes ``errors.csv`` (one row per refinement cycle), ``rates.csv``
(fitted convergence rates) and ``convergence.png`` with two cycles or
more, and ``solution.vtk`` on the finest mesh.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial01:parser
   :prog: flexfem tutorial01
"""

# annotations
from typing import Dict, List, Optional

# external
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy

# internal
from flexfem._core import CoreModel, convergence_rate, status
from flexfem._fem import (
    FeSpace,
    Function,
    assemble_system,
    build_space,
    dirichlet_constraints,
    error_norm,
    gauss_quadrature,
    interpolate)
from flexfem._io import CsvTable, csv_write, plot_convergence, vtk_write
from flexfem._linalg import LinearSolverHandler
from flexfem._mesh import BoxMeshHandler
from flexfem._params import CLI_PARSER, Bool, Integer, ParamTree, Selection, Verbosity


__all__ = [
    "Poisson",
    "PoissonResult",
    "ManufacturedSolution",
    "MANUFACTURED",
    "parser"]


_logger = _logging.getLogger(__name__)


@_dataclasses.dataclass(frozen=True)
class ManufacturedSolution:
    """
    Exact solution of -Δu = f with its gradient and forcing term.
    """

    value: Function
    gradient: Function
    forcing: Function


def _sine_value(x):
    return _numpy.prod(_numpy.sin(_numpy.pi * x), axis=1)


def _sine_gradient(x):
    s, c = _numpy.sin(_numpy.pi * x), _numpy.cos(_numpy.pi * x)
    columns = []
    for d in range(x.shape[1]):
        columns.append(_numpy.pi * c[:, d] * _numpy.prod(_numpy.delete(s, d, axis=1), axis=1))
    return _numpy.stack(columns, axis=-1)


MANUFACTURED: Dict[str, ManufacturedSolution] = {
    "Sine": ManufacturedSolution(
        value=_sine_value,
        gradient=_sine_gradient,
        forcing=lambda x: x.shape[1] * _numpy.pi ** 2 * _sine_value(x)),
    "Linear": ManufacturedSolution(
        value=lambda x: 1.0 + x.sum(axis=1),
        gradient=lambda x: _numpy.ones_like(x),
        forcing=lambda x: _numpy.zeros(len(x)))}


@_dataclasses.dataclass
class PoissonResult:
    """
    Errors per refinement cycle and the finest solution.
    """

    table: CsvTable
    rates: Dict[str, float]
    space: FeSpace
    solution: _numpy.ndarray
    iterations: List[int]


class Poisson(CoreModel):
    """
    Poisson problem with a manufactured solution.
    """

    def __init__(self, subsection_path: str = "Tutorial01", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.mesh = BoxMeshHandler(subsection_path)
        self.linear_solver = LinearSolverHandler(subsection_path, "CG", "SSOR")
        self.linear_solver.config = _dataclasses.replace(self.linear_solver.config, tolerance=1e-12)
        self.degree = 1
        self.exact = "Sine"
        self.cycles = 1
        self.quadrature_points = 0
        self.n_threads = 1
        self.write_vtk = True

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("FE degree", self.degree, Integer(1, 2))
        params.declare_entry(
            "Exact solution", self.exact, Selection(list(MANUFACTURED)),
            "Manufactured solution providing forcing and boundary data.")
        params.declare_entry(
            "Number of refinement cycles", self.cycles, Integer(1, 6),
            "Each cycle doubles the subdivisions.")
        params.declare_entry("Write VTK", self.write_vtk, Bool())
        params.set_verbosity(Verbosity.FULL)
        params.declare_entry(
            "Quadrature points per axis", self.quadrature_points, Integer(0, 5),
            "0 selects degree + 1.")
        params.declare_entry("Assembly threads", self.n_threads, Integer(1))
        params.reset_verbosity()
        params.leave_subsection_path()
        self.mesh.declare_parameters(params)
        self.linear_solver.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.degree = params.get_integer("FE degree")
            self.exact = params.get("Exact solution")
            self.cycles = params.get_integer("Number of refinement cycles")
            self.write_vtk = params.get_bool("Write VTK")
            self.quadrature_points = params.get_integer("Quadrature points per axis")
            self.n_threads = params.get_integer("Assembly threads")
        finally:
            params.leave_subsection_path()
        self.mesh.parse_parameters(params)
        self.linear_solver.parse_parameters(params)

    def assemble(self, space: FeSpace):
        """
        Stiffness matrix and load vector with the Dirichlet data applied.
        """
        solution = MANUFACTURED[self.exact]
        quadrature = gauss_quadrature(space.dim, self.quadrature_points or space.degree + 1)

        def kernel(values):
            return values.stiffness(), values.load(solution.forcing(values.points))

        constraints = dirichlet_constraints(space, space.mesh.tags, solution.value)
        return assemble_system(space, quadrature, kernel, constraints, n_threads=self.n_threads)

    def run(self) -> PoissonResult:
        solution = MANUFACTURED[self.exact]
        rows, iterations = [], []
        space = u = None
        for cycle in range(self.cycles):
            mesh = self.mesh.build(cycle)
            space = build_space(mesh, self.degree)
            matrix, rhs = self.assemble(space)
            u, report = self.linear_solver.solve(matrix, rhs, raise_on_failure=True)
            iterations.append(report.iterations)
            errors = [
                error_norm(space, u, solution.value, "L2"),
                error_norm(space, u, solution.value, "H1-semi", gradient=solution.gradient),
                error_norm(space, u, solution.value, "Linf-nodal")]
            rows.append([cycle, int(mesh.subdivisions[0]), mesh.cell_diameter(), space.n_dofs, *errors])
            status(f"cycle {cycle}: {space.n_dofs} dofs, L2 error {errors[0]:.3e}, "
                   f"{report.iterations} iterations")

        headers = ["cycle", "subdivisions", "h", "dofs", "L2", "H1-semi", "Linf-nodal"]
        table = CsvTable(headers, rows)
        rates = {}
        if len(rows) > 1:
            h = table.column("h")
            for name in ("L2", "H1-semi"):
                errors = table.column(name)
                if _numpy.all(errors > 0.0):
                    rates[name] = convergence_rate(h, errors)
            _logger.info("convergence rates %s", rates)
            csv_write(self.output_dir / "rates.csv", (["norm", "rate"], list(rates.items())))
            plot_convergence(table, "h", ["L2", "H1-semi"], self.output_dir / "convergence.png")

        csv_write(self.output_dir / "errors.csv", table)
        if self.write_vtk:
            vtk_write(self.output_dir / "solution.vtk", space, {
                "u": u, "u exact": interpolate(space, solution.value)})
        return PoissonResult(table, rates, space, u, iterations)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="linear elliptic problem with refinement study")
parser.set_defaults(model=Poisson)
