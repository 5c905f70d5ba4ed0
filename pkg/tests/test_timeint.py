"""
BDF coefficients, history handling and convergence order on u' = -u.
"""

# external
import numpy as np
import pytest

# internal
from flexfem._core import ParameterError, convergence_rate
from flexfem._timeint import (
    TimeSolverHandler,
    bdf_advance,
    bdf_coefficients,
    bdf_extrapolate,
    bdf_init,
    bdf_time_derivative_term)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_coefficient_sums(order):
    alpha, beta = bdf_coefficients(order)
    assert len(alpha) == order + 1 and len(beta) == order
    assert alpha.sum() == pytest.approx(0.0, abs=1e-14)
    assert beta.sum() == pytest.approx(1.0)
    # exact derivative of t on the grid t = 0, -1, -2, ...
    assert -(alpha[1:] @ np.arange(1.0, order + 1)) == pytest.approx(1.0)


def test_bad_order_and_bootstrap():
    with pytest.raises(ValueError):
        bdf_coefficients(4)
    with pytest.raises(ValueError):
        bdf_init(2, [np.zeros(3)], 0.1)
    with pytest.raises(ValueError):
        bdf_init(1, [np.zeros(3)], 0.0)
    with pytest.raises(ValueError):
        bdf_init(2, [np.zeros(3), np.zeros(2)], 0.1)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_extrapolation_is_exact_below_order(order):
    # histories t^k for k < order, at t = 0, -1, ... newest first
    times = -np.arange(order, dtype=float)
    for k in range(order):
        state = bdf_init(order, [np.array([t ** k]) for t in times], 1.0)
        assert bdf_extrapolate(state)[0] == pytest.approx(1.0 ** k)


def test_advance_shifts_history():
    state = bdf_init(3, [np.full(2, 3.0), np.full(2, 2.0), np.full(2, 1.0)], 0.1)
    bdf_advance(state, np.full(2, 4.0))
    assert [u[0] for u in state.history] == [4.0, 3.0, 2.0]
    assert state.solution.tolist() == [4.0, 4.0]
    with pytest.raises(ValueError):
        bdf_advance(state, np.zeros(3))


def _decay_error(order, dt, final_time=1.0):
    state = bdf_init(order, [np.array([np.exp(j * dt)]) for j in range(order)], dt)
    for _ in range(int(round(final_time / dt))):
        coefficient, rhs = bdf_time_derivative_term(state)
        bdf_advance(state, rhs / (coefficient + 1.0))
    return abs(state.solution[0] - np.exp(-final_time))


@pytest.mark.parametrize("order", [1, 2, 3])
def test_decay_converges_with_order(order):
    steps = [0.02, 0.01, 0.005]
    errors = [_decay_error(order, dt) for dt in steps]
    assert convergence_rate(steps, errors) == pytest.approx(order, abs=0.15)


def test_handler_steps_and_validation():
    handler = TimeSolverHandler("Problem / Time solver")
    handler.setup({"Problem": {"Time solver": {
        "BDF order": 2, "Initial time": 1.0, "Final time": 2.0, "Time step": 0.1}}})
    assert handler.order == 2
    assert handler.n_steps == 10
    assert handler.time(10) == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        handler.setup({"Problem": {"Time solver": {"Final time": 0.5}}})
    with pytest.raises(ParameterError):
        handler.setup({"Problem": {"Time solver": {"BDF order": 4}}})
