"""
Two-domain Poisson transmission problem -div(μ ∇u) = f, solved by the
partitioned Dirichlet-Neumann iteration and checked against the
monolithic solve of the same problem on the union of the subdomains.

Ω1 = (0, 1)^d carries μ1 and Ω2 = (1, 2) x (0, 1)^(d-1) carries μ2; both
meshes have the same subdivisions, so the interface x = 1 is conforming.
u = 0 on the exterior boundary. Ω1 takes the interface trace as
Dirichlet data, Ω2 receives the interface flux as Neumann data, and the
trace update goes through the configured acceleration.

Writes ``coupling.csv`` (trace update per sweep) and
``subdomain_1.vtk``, ``subdomain_2.vtk``.

CLI Subcommand
==============

.. autoprogram:: flexfem.transmission:parser
   :prog: flexfem transmission
"""

# annotations
from typing import Optional, Tuple

# external
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy

# internal
from flexfem._core import CoreModel, SolverError, join_path, status
from flexfem._coupling import (
    CouplingReport,
    SubdomainProblem,
    build_interface_map,
    dirichlet_neumann_iterate,
    extract_interface_data)
from flexfem._fem import (
    FeSpace,
    assemble_system,
    build_space,
    dirichlet_constraints,
    evaluate_at_points,
    gauss_quadrature)
from flexfem._io import csv_write, vtk_write
from flexfem._linalg import LinearSolverHandler
from flexfem._mesh import face_tag, generate_box
from flexfem._nonlinear import AccelerationConfig, AccelerationHandler
from flexfem._params import CLI_PARSER, Bool, Integer, ParamTree, Real


__all__ = [
    "Transmission",
    "TransmissionResult",
    "parser"]


_logger = _logging.getLogger(__name__)


@_dataclasses.dataclass
class TransmissionResult:
    """
    Subdomain solutions, the coupling report and the distance to the
    monolithic solution (NaN when not computed).
    """

    space1: FeSpace
    space2: FeSpace
    u1: _numpy.ndarray
    u2: _numpy.ndarray
    trace: _numpy.ndarray
    report: CouplingReport
    monolithic_error: float


class Transmission(CoreModel):
    """
    Dirichlet-Neumann coupling of two Poisson subdomains.
    """

    def __init__(self, subsection_path: str = "Transmission", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.acceleration = AccelerationHandler(
            join_path(subsection_path, "Coupling", "Acceleration"), AccelerationConfig("Aitken", 0.5))
        self.linear_solver = LinearSolverHandler(subsection_path, "CG", "SSOR")
        self.linear_solver.config = _dataclasses.replace(self.linear_solver.config, tolerance=1e-12)
        self.coupling_path = join_path(subsection_path, "Coupling")
        self.dim = 2
        self.subdivisions = 8
        self.degree = 1
        self.mu1 = 1.0
        self.mu2 = 3.0
        self.forcing = 1.0
        self.tolerance = 1e-10
        self.max_sweeps = 100
        self.compare = True
        self.write_vtk = True

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("Dimension", self.dim, Integer(1, 3))
        params.declare_entry(
            "Number of subdivisions", self.subdivisions, Integer(1),
            "Cells per axis of each unit subdomain.")
        params.declare_entry("FE degree", self.degree, Integer(1, 2))
        params.declare_entry("Diffusion coefficient 1", self.mu1, Real(0.0))
        params.declare_entry("Diffusion coefficient 2", self.mu2, Real(0.0))
        params.declare_entry("Forcing", self.forcing, Real())
        params.declare_entry(
            "Compare with monolithic", self.compare, Bool(),
            "Also solve on the union of the subdomains and report the difference.")
        params.declare_entry("Write VTK", self.write_vtk, Bool())
        params.leave_subsection_path()
        params.enter_subsection_path(self.coupling_path)
        params.declare_entry("Tolerance", self.tolerance, Real(0.0))
        params.declare_entry("Maximum number of sweeps", self.max_sweeps, Integer(1))
        params.leave_subsection_path()
        self.acceleration.declare_parameters(params)
        self.linear_solver.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.dim = params.get_integer("Dimension")
            self.subdivisions = params.get_integer("Number of subdivisions")
            self.degree = params.get_integer("FE degree")
            self.mu1 = params.get_double("Diffusion coefficient 1")
            self.mu2 = params.get_double("Diffusion coefficient 2")
            self.forcing = params.get_double("Forcing")
            self.compare = params.get_bool("Compare with monolithic")
            self.write_vtk = params.get_bool("Write VTK")
        finally:
            params.leave_subsection_path()
        params.enter_subsection_path(self.coupling_path)
        try:
            self.tolerance = params.get_double("Tolerance")
            self.max_sweeps = params.get_integer("Maximum number of sweeps")
        finally:
            params.leave_subsection_path()
        self.acceleration.parse_parameters(params)
        self.linear_solver.parse_parameters(params)

    def _upper(self, length: float) -> _numpy.ndarray:
        upper = _numpy.ones(self.dim)
        upper[0] = length
        return upper

    def _subdomain(self, lower_x: float, mu: float, interface_tag: int) -> SubdomainProblem:
        lower = _numpy.zeros(self.dim)
        lower[0] = lower_x
        mesh = generate_box(self.dim, lower, lower + 1.0, self.subdivisions)
        space = build_space(mesh, self.degree)
        quadrature = gauss_quadrature(self.dim, self.degree + 1)
        matrix, rhs = assemble_system(
            space, quadrature,
            lambda values: (values.stiffness(mu), values.load(_numpy.full(len(values.JxW), self.forcing))))
        exterior = [tag for tag in mesh.tags if tag != interface_tag]
        constraints = dirichlet_constraints(space, exterior, lambda x: _numpy.zeros(len(x)))
        return SubdomainProblem(
            space, matrix, rhs, constraints, self.linear_solver.config, self.linear_solver.preconditioner.config)

    def solve_monolithic(self) -> Tuple[FeSpace, _numpy.ndarray]:
        """
        Solve on (0, 2) x (0, 1)^(d-1) with μ chosen by cell centre.
        """
        subdivisions = _numpy.full(self.dim, self.subdivisions)
        subdivisions[0] *= 2
        mesh = generate_box(self.dim, 0.0, self._upper(2.0), subdivisions)
        space = build_space(mesh, self.degree)
        quadrature = gauss_quadrature(self.dim, self.degree + 1)

        def kernel(values):
            mu = self.mu1 if values.points[:, 0].mean() < 1.0 else self.mu2
            return values.stiffness(mu), values.load(_numpy.full(len(values.JxW), self.forcing))

        constraints = dirichlet_constraints(space, mesh.tags, lambda x: _numpy.zeros(len(x)))
        matrix, rhs = assemble_system(space, quadrature, kernel, constraints)
        u, _ = self.linear_solver.solve(matrix, rhs, raise_on_failure=True)
        return space, u

    def run(self) -> TransmissionResult:
        problem1 = self._subdomain(0.0, self.mu1, face_tag(0, 1))
        problem2 = self._subdomain(1.0, self.mu2, face_tag(0, 0))
        interface = build_interface_map(problem1.space, face_tag(0, 1), problem2.space, face_tag(0, 0))
        u1, u2, report = dirichlet_neumann_iterate(
            problem1, problem2, interface, self.acceleration.config,
            tol=self.tolerance, max_iters=self.max_sweeps)
        trace = extract_interface_data(interface, 1, u1)
        csv_write(self.output_dir / "coupling.csv", (
            ["sweep", "update"], [[k + 1, norm] for k, norm in enumerate(report.update_norms)]))
        if not report.converged:
            raise SolverError(f"Dirichlet-Neumann iteration failed after {report.iterations} sweeps: "
                              f"{report.reason}")

        error = float("nan")
        if self.compare:
            space, u = self.solve_monolithic()
            error = max(
                float(_numpy.max(_numpy.abs(evaluate_at_points(space, u, problem.space.node_coords) - v)))
                for problem, v in ((problem1, u1), (problem2, u2)))
            _logger.info("distance to the monolithic solution %.3e", error)
        if self.write_vtk:
            vtk_write(self.output_dir / "subdomain_1.vtk", problem1.space, {"u": u1})
            vtk_write(self.output_dir / "subdomain_2.vtk", problem2.space, {"u": u2})
        status(f"{self.acceleration.config.scheme}: converged in {report.iterations} sweeps, "
               f"distance to monolithic {error:.3e}")
        return TransmissionResult(problem1.space, problem2.space, u1, u2, trace, report, error)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="two-domain Poisson problem, Dirichlet-Neumann coupling")
parser.set_defaults(model=Transmission)
