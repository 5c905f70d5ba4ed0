"""
Linear parabolic problem ∂u/∂t - Δu = f advanced with BDF of order 1 to
3, with checkpointing and restart.

Manufactured solutions, spatially linear so that the error is purely
temporal:

- ``Cosine``: u = cos(t) (1 + Σ x_d), f = -sin(t) (1 + Σ x_d).
- ``Stationary``: u = 1 + Σ x_d, f = 0.

The scheme starts from the exact solution at t0, t0 - dt, ... Writes
``norms.csv`` (errors per step), ``solution_<step>.vtk`` and, every
checkpoint period, ``checkpoint_<step>.fxcp`` holding the BDF history.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial03:parser
   :prog: flexfem tutorial03
"""

# annotations
from typing import Callable, Dict, Optional, Tuple

# external
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy

# internal
from flexfem._core import CheckpointError, CoreModel, join_path, status
from flexfem._fem import (
    FeSpace,
    apply_constraints,
    assemble_system,
    build_space,
    dirichlet_constraints,
    error_norm,
    gauss_quadrature,
    interpolate,
    mass_matrix,
    stiffness_matrix)
from flexfem._io import Checkpoint, CsvTable, checkpoint_load, checkpoint_save, csv_write, vtk_write
from flexfem._linalg import LinearSolverHandler
from flexfem._mesh import BoxMeshHandler
from flexfem._params import CLI_PARSER, AnyString, Bool, Integer, ParamTree, Selection
from flexfem._timeint import (
    BdfState,
    TimeSolverHandler,
    bdf_advance,
    bdf_extrapolate,
    bdf_init,
    bdf_time_derivative_term)


__all__ = [
    "Heat",
    "HeatResult",
    "parser"]


_logger = _logging.getLogger(__name__)


TimeFunction = Callable[[_numpy.ndarray, float], _numpy.ndarray]

_EXACT: Dict[str, Tuple[TimeFunction, TimeFunction]] = {
    "Cosine": (
        lambda x, t: _numpy.cos(t) * (1.0 + x.sum(axis=1)),
        lambda x, t: -_numpy.sin(t) * (1.0 + x.sum(axis=1))),
    "Stationary": (
        lambda x, t: 1.0 + x.sum(axis=1),
        lambda x, t: _numpy.zeros(len(x)))}


@_dataclasses.dataclass
class HeatResult:
    """
    Final state of a heat run.
    """

    space: FeSpace
    solution: _numpy.ndarray
    table: CsvTable
    time: float
    step: int
    error: float


class Heat(CoreModel):
    """
    Heat equation with BDF time stepping.
    """

    def __init__(self, subsection_path: str = "Tutorial03", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.mesh = BoxMeshHandler(subsection_path)
        self.time_solver = TimeSolverHandler(join_path(subsection_path, "Time solver"))
        self.linear_solver = LinearSolverHandler(subsection_path, "CG", "SSOR")
        self.linear_solver.config = _dataclasses.replace(self.linear_solver.config, tolerance=1e-12)
        self.degree = 1
        self.exact = "Cosine"
        self.write_vtk = True
        self.output_period = 0
        self.checkpoint_period = 0
        self.restart_file = ""

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("FE degree", self.degree, Integer(1, 2))
        params.declare_entry("Exact solution", self.exact, Selection(list(_EXACT)))
        params.declare_entry("Write VTK", self.write_vtk, Bool())
        params.declare_entry(
            "Output period", self.output_period, Integer(0),
            "Write VTK every n steps; 0 writes the final step only.")
        params.declare_entry(
            "Checkpoint period", self.checkpoint_period, Integer(0),
            "Write a checkpoint every n steps; 0 disables checkpoints.")
        params.declare_entry(
            "Restart file", self.restart_file, AnyString(),
            "Checkpoint to continue from; empty starts at the initial time.")
        params.leave_subsection_path()
        self.mesh.declare_parameters(params)
        self.time_solver.declare_parameters(params)
        self.linear_solver.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.degree = params.get_integer("FE degree")
            self.exact = params.get("Exact solution")
            self.write_vtk = params.get_bool("Write VTK")
            self.output_period = params.get_integer("Output period")
            self.checkpoint_period = params.get_integer("Checkpoint period")
            self.restart_file = params.get("Restart file")
        finally:
            params.leave_subsection_path()
        self.mesh.parse_parameters(params)
        self.time_solver.parse_parameters(params)
        self.linear_solver.parse_parameters(params)

    def _start(self, space: FeSpace) -> Tuple[BdfState, int]:
        time = self.time_solver
        if not self.restart_file:
            exact = _EXACT[self.exact][0]
            history = [interpolate(space, lambda x, t=time.time(-j): exact(x, t))
                       for j in range(time.order)]
            return bdf_init(time.order, history, time.time_step), 0
        checkpoint = checkpoint_load(self.restart_file)
        checkpoint.check_mesh(space.mesh, space.degree)
        if checkpoint.order != time.order or checkpoint.dt != time.time_step:
            raise CheckpointError(
                f"checkpoint must use BDF order {time.order} and step {time.time_step}; "
                f"got {checkpoint.order} and {checkpoint.dt}")
        history = [checkpoint.vectors[f"u_{j}"] for j in range(checkpoint.order)]
        status(f"restarting from {self.restart_file} at step {checkpoint.step}")
        return bdf_init(checkpoint.order, history, checkpoint.dt), checkpoint.step

    def _checkpoint(self, space: FeSpace, state: BdfState, step: int) -> None:
        checkpoint_save(self.output_dir / f"checkpoint_{step}.fxcp", Checkpoint(
            time=self.time_solver.time(step),
            step=step,
            dt=state.dt,
            order=state.order,
            mesh=space.mesh.descriptor,
            degree=space.degree,
            vectors={f"u_{j}": u for j, u in enumerate(state.history)}))

    def run(self) -> HeatResult:
        exact, forcing = _EXACT[self.exact]
        space = build_space(self.mesh.build(), self.degree)
        quadrature = gauss_quadrature(space.dim, self.degree + 1)
        mass = mass_matrix(space, quadrature)
        stiffness = stiffness_matrix(space, quadrature)
        state, first = self._start(space)
        n_steps = self.time_solver.n_steps
        rows = []
        error = 0.0
        t = self.time_solver.time(first)

        for step in range(first + 1, n_steps + 1):
            t = self.time_solver.time(step)
            a, history = bdf_time_derivative_term(state)
            _, load = assemble_system(
                space, quadrature, lambda values: (None, values.load(forcing(values.points, t))))
            constraints = dirichlet_constraints(space, space.mesh.tags, lambda x: exact(x, t))
            matrix, rhs = apply_constraints(
                (a * mass + stiffness).tocsr(), mass @ history + load, constraints)
            u, report = self.linear_solver.solve(
                matrix, rhs, x0=bdf_extrapolate(state), raise_on_failure=True)
            bdf_advance(state, u)

            errors = [
                error_norm(space, u, lambda x: exact(x, t), "L2"),
                error_norm(space, u, lambda x: exact(x, t), "Linf-nodal")]
            error = errors[1]
            rows.append([step, t, *errors, report.iterations])
            _logger.info("step %d, t = %g: nodal error %.3e", step, t, error)
            if self.write_vtk and self.output_period and step % self.output_period == 0:
                vtk_write(self.output_dir / f"solution_{step}.vtk", space, {"u": u}, time=t)
            if self.checkpoint_period and step % self.checkpoint_period == 0:
                self._checkpoint(space, state, step)

        table = CsvTable(["step", "time", "L2", "Linf-nodal", "iterations"], rows)
        csv_write(self.output_dir / "norms.csv", table)
        last = max(first, n_steps)
        if self.write_vtk and not (self.output_period and last % self.output_period == 0):
            vtk_write(self.output_dir / f"solution_{last}.vtk", space, {"u": state.solution}, time=t)
        status(f"reached t = {t:g} after {last} steps, nodal error {error:.3e}")
        return HeatResult(space, state.solution, table, t, last, error)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="heat equation with BDF time stepping and restart")
parser.set_defaults(model=Heat)
