"""
Backward differentiation formulas of order 1 to 3 with the matching
extrapolation, and the time parameters shared by every time-dependent
model.
"""

# annotations
from typing import List, Sequence, Tuple

# external
import logging as _logging
import dataclasses as _dataclasses

import numpy as _numpy

# internal
from flexfem._core import CoreModel, ParameterError
from flexfem._params import Integer, ParamTree, Real


__all__ = [
    "BdfState",
    "TimeSolverHandler",
    "bdf_coefficients",
    "bdf_init",
    "bdf_time_derivative_term",
    "bdf_extrapolate",
    "bdf_advance"]


_logger = _logging.getLogger(__name__)


# alpha[0] multiplies u^{n+1}, alpha[j] multiplies u^{n+1-j}
_BDF_ALPHA = {
    1: (1.0, -1.0),
    2: (1.5, -2.0, 0.5),
    3: (11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0)}

_BDF_BETA = {
    1: (1.0,),
    2: (2.0, -1.0),
    3: (3.0, -3.0, 1.0)}


def bdf_coefficients(order: int) -> Tuple[_numpy.ndarray, _numpy.ndarray]:
    """
    BDF and extrapolation coefficients of an order.

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray]: alpha (order + 1 entries,
        summing to 0) and beta (order entries, summing to 1).

    Raises:
        ValueError: When order is not 1, 2 or 3.

    Examples:
        >>> alpha, beta = bdf_coefficients(2)
        >>> alpha.tolist(), beta.tolist()
        ([1.5, -2.0, 0.5], [2.0, -1.0])
    """
    if order not in _BDF_ALPHA:
        raise ValueError(f"BDF order must be 1, 2 or 3; got {order}")
    return _numpy.array(_BDF_ALPHA[order]), _numpy.array(_BDF_BETA[order])


@_dataclasses.dataclass
class BdfState:
    """
    History of the most recent solutions, newest first, with the fixed
    step size and the coefficients of the scheme.
    """

    order: int
    dt: float
    history: List[_numpy.ndarray]
    alpha: _numpy.ndarray
    beta: _numpy.ndarray

    @property
    def solution(self) -> _numpy.ndarray:
        """
        The newest stored solution u^n.
        """
        return self.history[0]


def bdf_init(order: int, initial_solutions: Sequence[_numpy.ndarray], dt: float) -> BdfState:
    """
    Start a BDF scheme from caller-supplied bootstrap values.

    Args:
        order: 1, 2 or 3.
        initial_solutions: Exactly order vectors, newest first:
            u^n, u^{n-1}, ...
        dt: Step size > 0.

    Raises:
        ValueError: On a bad order, step size or bootstrap count.

    Examples:
        >>> state = bdf_init(1, [_numpy.zeros(2)], 0.1)
        >>> state.alpha.tolist()
        [1.0, -1.0]
    """
    alpha, beta = bdf_coefficients(order)
    if not dt > 0.0:
        raise ValueError(f"time step must be > 0; got {dt}")
    if len(initial_solutions) != order:
        raise ValueError(
            f"BDF{order} needs {order} initial solutions; got {len(initial_solutions)}")
    history = [_numpy.array(u, dtype=float) for u in initial_solutions]
    shapes = {u.shape for u in history}
    if len(shapes) != 1:
        raise ValueError(f"initial solutions must share one shape; got {sorted(shapes)}")
    return BdfState(order, float(dt), history, alpha, beta)


def bdf_time_derivative_term(state: BdfState) -> Tuple[float, _numpy.ndarray]:
    """
    Split the BDF derivative as alpha0 / dt * u^{n+1} - rhs, with
    rhs = -(1 / dt) * sum_j alpha_j u^{n+1-j}.

    Returns:
        Tuple[float, numpy.ndarray]: alpha0 / dt and the history
        combination rhs.

    Examples:
        >>> state = bdf_init(1, [_numpy.array([2.0])], 0.5)
        >>> bdf_time_derivative_term(state)
        (2.0, array([4.]))
    """
    rhs = -sum(a * u for a, u in zip(state.alpha[1:], state.history)) / state.dt
    return float(state.alpha[0] / state.dt), rhs


def bdf_extrapolate(state: BdfState) -> _numpy.ndarray:
    """
    Predict u^{n+1} as sum_j beta_j u^{n+1-j}; exact on polynomial
    histories of degree < order.
    """
    return sum(b * u for b, u in zip(state.beta, state.history))


def bdf_advance(state: BdfState, u_new: _numpy.ndarray) -> None:
    """
    Shift the history: u_new becomes u^n and the oldest entry is dropped.
    """
    u_new = _numpy.array(u_new, dtype=float)
    if u_new.shape != state.history[0].shape:
        raise ValueError(f"new solution must have shape {state.history[0].shape}; got {u_new.shape}")
    state.history = [u_new] + state.history[:-1]


class TimeSolverHandler(CoreModel):
    """
    BDF order, time interval and step size of a time-dependent model.
    """

    def __init__(
            self,
            subsection_path: str,
            order: int = 1,
            initial_time: float = 0.0,
            final_time: float = 1.0,
            time_step: float = 0.1):
        """
        Owns the entries "BDF order", "Initial time", "Final time" and
        "Time step" at subsection_path, e.g. "Tutorial03 / Time solver".
        """
        super().__init__(subsection_path)
        self.order = order
        self.initial_time = initial_time
        self.final_time = final_time
        self.time_step = time_step

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("BDF order", self.order, Integer(1, 3))
        params.declare_entry("Initial time", self.initial_time, Real())
        params.declare_entry("Final time", self.final_time, Real())
        params.declare_entry("Time step", self.time_step, Real(0.0))
        params.leave_subsection_path()

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.order = params.get_integer("BDF order")
            self.initial_time = params.get_double("Initial time")
            self.final_time = params.get_double("Final time")
            self.time_step = params.get_double("Time step")
        finally:
            params.leave_subsection_path()
        if self.time_step <= 0.0:
            raise ParameterError(f"time step must be > 0; got {self.time_step}")
        if self.final_time < self.initial_time:
            raise ParameterError(
                f"final time must be >= initial time; got {self.final_time} < {self.initial_time}")

    @property
    def n_steps(self) -> int:
        """
        Number of steps covering the interval; the last step may overshoot
        the final time by less than 1e-9 steps.
        """
        return int(_numpy.ceil((self.final_time - self.initial_time) / self.time_step - 1e-9))

    def time(self, step: int) -> float:
        """
        Time after a number of steps; computed from the step count, not
        accumulated.
        """
        return self.initial_time + step * self.time_step
