"""
Cahn-Hilliard equation in mixed form, with homogeneous natural boundary
conditions:

    ∂c/∂t - Δμ = 0
    μ - f'(c) + λ Δc = 0,    f(c) = θ c² (1 - c)²

c and μ are interleaved components of one Lagrange space. Implicit Euler
in time, Newton at every step with the Jacobian obtained by automatic
differentiation of the cell residual. The initial concentration is
0.5 plus a seeded uniform perturbation, μ starts at zero.

The time step halves when Newton fails and grows after easy solves; the
run stops at the final time or at steady state, when the largest nodal
change of c over one step falls below a tolerance. Writes ``history.csv``
(time step, Newton iterations, mass and free energy per step),
``contours.csv`` and ``contours.png`` (level sets of c) and
``solution_<step>.vtk``.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial07:parser
   :prog: flexfem tutorial07
"""

# annotations
from typing import Dict, List, Optional, Tuple

# external
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy
from scipy import sparse as _sparse

# internal
from flexfem._core import CoreModel, ParameterError, SolverError, join_path, status
from flexfem._fem import FeSpace, assemble_system, build_space, gauss_quadrature, reinit_cell
from flexfem._io import CsvTable, csv_write, export_contours, vtk_write
from flexfem._linalg import LinearSolverHandler
from flexfem._mesh import BoxMeshHandler
from flexfem._nonlinear import (
    NewtonCallbacks,
    NewtonConfig,
    NonLinearSolverHandler,
    interleave,
    jacobian_via_dual)
from flexfem._params import CLI_PARSER, AnyString, Bool, Integer, ParamTree, Real


__all__ = [
    "CahnHilliard",
    "CahnHilliardResult",
    "parse_levels",
    "parser"]


_logger = _logging.getLogger(__name__)


def parse_levels(text: str) -> List[float]:
    """
    Contour levels from a comma separated list.

    Examples:
        >>> parse_levels("0.35, 0.5, 0.65")
        [0.35, 0.5, 0.65]
    """
    try:
        levels = [float(token) for token in text.split(",") if token.strip()]
    except ValueError:
        raise ParameterError(f"contour levels must be a comma separated list of numbers; got {text!r}")
    if not levels:
        raise ParameterError("at least one contour level is required")
    return levels


@_dataclasses.dataclass
class CahnHilliardResult:
    """
    Final state and step history of a Cahn-Hilliard run.
    """

    space: FeSpace
    solution: _numpy.ndarray
    table: CsvTable
    time: float
    steps: int
    steady: bool
    contours: Dict[float, int]

    @property
    def concentration(self) -> _numpy.ndarray:
        return self.solution[0::2]

    @property
    def chemical_potential(self) -> _numpy.ndarray:
        return self.solution[1::2]


class CahnHilliard(CoreModel):
    """
    Phase separation of a binary mixture.
    """

    def __init__(self, subsection_path: str = "Tutorial07", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.mesh = BoxMeshHandler(subsection_path, dim=2, subdivisions=64)
        self.nonlinear_solver = NonLinearSolverHandler(subsection_path, NewtonConfig(max_iterations=10))
        self.linear_solver = LinearSolverHandler(subsection_path, "GMRES", "ILU0")
        self.linear_solver.config = _dataclasses.replace(self.linear_solver.config, tolerance=1e-12)
        self.time_path = join_path(subsection_path, "Time stepping")
        self.degree = 1
        self.theta = 100.0
        self.kappa = 0.01
        self.seed = 42
        self.amplitude = 0.01
        self.levels = "0.35, 0.5, 0.65"
        self.write_vtk = True
        self.initial_time_step = 1e-5
        self.max_time_step = 1e-3
        self.final_time = 0.02
        self.growth = 1.5
        self.easy_iterations = 3
        self.max_halvings = 5
        self.steady_tolerance = 1e-8

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("FE degree", self.degree, Integer(1, 2))
        params.declare_entry("Theta", self.theta, Real(0.0), "Height of the double-well potential.")
        params.declare_entry("Lambda", self.kappa, Real(0.0), "Interface energy coefficient.")
        params.declare_entry("Random seed", self.seed, Integer(0))
        params.declare_entry(
            "Initial perturbation", self.amplitude, Real(0.0, 0.5),
            "The initial concentration is uniform in 0.5 +- this amplitude.")
        params.declare_entry("Contour levels", self.levels, AnyString())
        params.declare_entry("Write VTK", self.write_vtk, Bool())
        params.leave_subsection_path()

        params.enter_subsection_path(self.time_path)
        params.declare_entry("Initial time step", self.initial_time_step, Real(0.0))
        params.declare_entry("Maximum time step", self.max_time_step, Real(0.0))
        params.declare_entry("Final time", self.final_time, Real(0.0))
        params.declare_entry(
            "Growth factor", self.growth, Real(1.0),
            "Step growth after a solve needing at most the easy number of iterations.")
        params.declare_entry("Easy Newton iterations", self.easy_iterations, Integer(1))
        params.declare_entry("Maximum halvings", self.max_halvings, Integer(0))
        params.declare_entry(
            "Steady state tolerance", self.steady_tolerance, Real(0.0),
            "Stop when the largest nodal change of c over a step is below this.")
        params.leave_subsection_path()

        self.mesh.declare_parameters(params)
        self.nonlinear_solver.declare_parameters(params)
        self.linear_solver.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.degree = params.get_integer("FE degree")
            self.theta = params.get_double("Theta")
            self.kappa = params.get_double("Lambda")
            self.seed = params.get_integer("Random seed")
            self.amplitude = params.get_double("Initial perturbation")
            self.levels = params.get("Contour levels")
            self.write_vtk = params.get_bool("Write VTK")
        finally:
            params.leave_subsection_path()
        params.enter_subsection_path(self.time_path)
        try:
            self.initial_time_step = params.get_double("Initial time step")
            self.max_time_step = params.get_double("Maximum time step")
            self.final_time = params.get_double("Final time")
            self.growth = params.get_double("Growth factor")
            self.easy_iterations = params.get_integer("Easy Newton iterations")
            self.max_halvings = params.get_integer("Maximum halvings")
            self.steady_tolerance = params.get_double("Steady state tolerance")
        finally:
            params.leave_subsection_path()
        parse_levels(self.levels)
        if not 0.0 < self.initial_time_step <= self.max_time_step:
            raise ParameterError(
                "time steps must satisfy 0 < initial <= maximum; "
                f"got {self.initial_time_step} and {self.max_time_step}")
        self.mesh.parse_parameters(params)
        self.nonlinear_solver.parse_parameters(params)
        self.linear_solver.parse_parameters(params)

    def setup_system(self) -> _numpy.ndarray:
        """
        Build the two-component space and the initial state.
        """
        self.space = build_space(self.mesh.build(), self.degree, n_components=2)
        self.quadrature = gauss_quadrature(self.space.dim, self.degree + 2)
        rng = _numpy.random.default_rng(self.seed)
        concentration = 0.5 + self.amplitude * (2.0 * rng.random(self.space.n_nodes) - 1.0)
        return interleave([concentration, _numpy.zeros(self.space.n_nodes)])

    def potential_derivative(self, c):
        """
        f'(c) = 2 θ c (1 - c) (1 - 2 c), for arrays and dual numbers.
        """
        return 2.0 * self.theta * c * (1.0 - c) * (1.0 - 2.0 * c)

    def cell_residual(self, values, local, previous_c, dt: float):
        c, mu = values.values(local, 0), values.values(local, 1)
        grad_c, grad_mu = values.gradients(local, 0), values.gradients(local, 1)
        residual_c = values.test((c - previous_c) / dt) + values.test_gradients(grad_mu)
        residual_mu = (values.test(mu - self.potential_derivative(c))
                       - values.test_gradients(grad_c) * self.kappa)
        return interleave([residual_c, residual_mu])

    def assemble(
            self,
            x: _numpy.ndarray,
            previous: _numpy.ndarray,
            dt: float,
            want_jacobian: bool) -> Tuple[_numpy.ndarray, Optional[_sparse.csr_matrix]]:
        """
        Residual and Jacobian of an implicit Euler step from previous.
        """
        def kernel(values):
            local = x[values.dofs]
            previous_c = values.values(previous[values.dofs], 0)
            if not want_jacobian:
                return None, self.cell_residual(values, local, previous_c, dt)
            residual, jacobian = jacobian_via_dual(
                lambda z: self.cell_residual(values, z, previous_c, dt), local)
            return jacobian, residual

        jacobian, residual = assemble_system(self.space, self.quadrature, kernel)
        return residual, jacobian if want_jacobian else None

    def mass(self, x: _numpy.ndarray) -> float:
        """
        Integral of c over the domain.
        """
        total = 0.0
        for cell in range(self.space.mesh.n_cells):
            values = reinit_cell(self.space, cell, self.quadrature)
            total += float(values.JxW @ values.values(x[values.dofs], 0))
        return total

    def free_energy(self, x: _numpy.ndarray) -> float:
        """
        Integral of f(c) + λ/2 |∇c|².
        """
        total = 0.0
        for cell in range(self.space.mesh.n_cells):
            values = reinit_cell(self.space, cell, self.quadrature)
            local = x[values.dofs]
            c, grad_c = values.values(local, 0), values.gradients(local, 0)
            density = self.theta * c ** 2 * (1.0 - c) ** 2 + 0.5 * self.kappa * (grad_c ** 2).sum(axis=1)
            total += float(values.JxW @ density)
        return total

    def step(self, newton, x: _numpy.ndarray, dt: float) -> Tuple[_numpy.ndarray, int]:
        """
        One implicit Euler step; raises SolverError when Newton fails.
        """
        callbacks = NewtonCallbacks(
            lambda z, want: self.assemble(z, x, dt, want), self.linear_solver.solve_function())
        newton.reset()
        x_new, report = newton.solve(x.copy(), callbacks)
        if not report.converged or not _numpy.all(_numpy.isfinite(x_new)):
            raise SolverError(f"Newton solver failed with dt = {dt:g}: {report.reason}")
        return x_new, report.iterations

    def run(self) -> CahnHilliardResult:
        x = self.setup_system()
        newton = self.nonlinear_solver.build()
        t, dt, step = 0.0, self.initial_time_step, 0
        steady = False
        rows = [[0, t, 0.0, 0, self.mass(x), self.free_energy(x), float("nan")]]

        while t < self.final_time * (1.0 - 1e-12) and not steady:
            dt_try = min(dt, self.final_time - t)
            for halving in range(self.max_halvings + 1):
                try:
                    x_new, iterations = self.step(newton, x, dt_try)
                    break
                except SolverError as error:
                    if halving == self.max_halvings:
                        raise SolverError(
                            f"no convergence at t = {t:g} after {self.max_halvings} halvings") from error
                    _logger.warning("%s; halving the time step", error)
                    dt_try *= 0.5
            change = float(_numpy.max(_numpy.abs(x_new[0::2] - x[0::2])))
            x, t, step = x_new, t + dt_try, step + 1
            steady = change < self.steady_tolerance
            dt = min(dt_try * self.growth, self.max_time_step) if iterations <= self.easy_iterations else dt_try
            rows.append([step, t, dt_try, iterations, self.mass(x), self.free_energy(x), change])
            _logger.info("step %d, t = %g, dt = %g: %d Newton iterations, change %.3e",
                         step, t, dt_try, iterations, change)

        table = CsvTable(["step", "time", "dt", "newton iterations", "mass", "energy", "change"], rows)
        csv_write(self.output_dir / "history.csv", table)
        contours = export_contours(
            self.space, x, parse_levels(self.levels), self.output_dir / "contours.csv",
            self.output_dir / "contours.png", component=0)
        if self.write_vtk:
            scalar_space = build_space(self.space.mesh, self.degree)
            vtk_write(self.output_dir / f"solution_{step}.vtk", scalar_space,
                      {"c": x[0::2], "mu": x[1::2]}, time=t)
        status(f"{'steady state' if steady else 'final time'} reached at t = {t:g} after {step} steps; "
               f"c in [{x[0::2].min():.3f}, {x[0::2].max():.3f}]")
        return CahnHilliardResult(self.space, x, table, t, step, steady, contours)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="Cahn-Hilliard equation in mixed form")
parser.set_defaults(model=CahnHilliard)
