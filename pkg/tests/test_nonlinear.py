"""
Newton variants, fixed-point acceleration and dual numbers.
"""

# external
import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import spsolve

# internal
from flexfem._core import ParameterError
from flexfem._linalg import LinearSolverHandler
from flexfem._nonlinear import (
    AccelerationConfig,
    Aitken,
    Anderson,
    Dual,
    NewtonCallbacks,
    NewtonConfig,
    NewtonSolver,
    NoAcceleration,
    NonLinearSolverHandler,
    StaticRelaxation,
    accelerate,
    build_accelerator,
    cos,
    exp,
    fd_jacobian,
    interleave,
    jacobian_via_dual,
    log,
    newton_solve,
    sin,
    sqrt,
    stack,
    update_forcing)


N = 12
A = sparse.diags([-np.ones(N - 1), 4.0 * np.ones(N), -np.ones(N - 1)], [-1, 0, 1]).tocsr()


def _residual(x):
    return A @ x + 0.1 * x ** 3 - 1.0


def _assemble(x, want):
    return _residual(x), (A + sparse.diags(0.3 * x ** 2)).tocsr() if want else None


def _direct(J, r, forcing):  # noqa: N803
    return spsolve(sparse.csc_matrix(J), -r)


CALLBACKS = NewtonCallbacks(_assemble, _direct)


@pytest.fixture(scope="module")
def reference():
    x, report = newton_solve(np.zeros(N), CALLBACKS, NewtonConfig(tolerance_residual=1e-13))
    assert report.converged
    return x


def test_exact_newton_converges_quadratically(reference):
    x, report = newton_solve(np.zeros(N), CALLBACKS)
    assert report.converged
    assert report.iterations <= 6
    assert report.jacobian_assemblies == report.iterations
    assert len(report.residual_norms) == report.iterations + 1
    norms = report.residual_norms
    for previous, current in zip(norms[1:], norms[2:]):
        assert current <= 10.0 * previous ** 2 + 1e-14
    np.testing.assert_allclose(_residual(x), 0.0, atol=1e-10)


def test_frozen_jacobian_is_assembled_once(reference):
    x, report = newton_solve(np.zeros(N), CALLBACKS, NewtonConfig("FrozenJacobian", max_iterations=50))
    assert report.converged
    assert report.jacobian_assemblies == 1
    np.testing.assert_allclose(x, reference, atol=1e-9)


def test_frozen_jacobian_reassembly_periods():
    solver = NewtonSolver(NewtonConfig("FrozenJacobian", max_iterations=50, jacobian_every_n=2))
    _, first = solver.solve(np.zeros(N), CALLBACKS)
    assert first.converged
    assert first.jacobian_assemblies == 1 + (first.iterations - 1) // 2

    solver = NewtonSolver(NewtonConfig("FrozenJacobian", max_iterations=50, jacobian_step_period=2))
    _, first = solver.solve(np.zeros(N), CALLBACKS)
    solver.advance()
    _, second = solver.solve(np.zeros(N), CALLBACKS)
    solver.advance()
    _, third = solver.solve(np.zeros(N), CALLBACKS)
    assert (first.jacobian_assemblies, second.jacobian_assemblies, third.jacobian_assemblies) == (1, 0, 1)
    solver.reset()
    _, fourth = solver.solve(np.zeros(N), CALLBACKS)
    assert fourth.jacobian_assemblies == 1


def test_finite_difference_newton(reference):
    calls = []

    def assemble(x, want):
        calls.append(want)
        return _assemble(x, want)

    x, report = newton_solve(np.zeros(N), NewtonCallbacks(assemble, _direct), NewtonConfig("QuasiNewtonFD"))
    assert report.converged
    assert not any(calls)
    assert report.jacobian_assemblies == report.iterations
    np.testing.assert_allclose(x, reference, atol=1e-8)


def test_inexact_newton_truncates_linear_solves(reference):
    handler = LinearSolverHandler("Problem", "CG", "Jacobi")
    forcings = []
    solve = handler.solve_function()

    def tracking(J, r, forcing):  # noqa: N803
        forcings.append(forcing)
        return solve(J, r, forcing)

    x, report = newton_solve(np.zeros(N), NewtonCallbacks(_assemble, tracking), NewtonConfig("Inexact"))
    assert report.converged
    assert forcings[0] == 0.9
    assert all(0.0 < eta <= 0.9 for eta in forcings)
    assert min(forcings) < 0.9
    np.testing.assert_allclose(x, reference, atol=1e-8)


def test_failure_is_reported_not_raised():
    _, report = newton_solve(np.zeros(N), CALLBACKS, NewtonConfig(max_iterations=1))
    assert not report.converged
    assert report.iterations == 1
    assert "maximum" in report.reason

    _, report = newton_solve(
        np.zeros(N), NewtonCallbacks(lambda x, want: (np.full(N, np.nan), None), _direct))
    assert not report.converged
    assert report.reason == "residual is not finite"


def test_bad_callbacks():
    with pytest.raises(ValueError):
        newton_solve(np.zeros(N), NewtonCallbacks(lambda x, want: (np.ones(3), None), _direct))
    with pytest.raises(ValueError):
        newton_solve(np.zeros(N), NewtonCallbacks(lambda x, want: (np.ones(N), None), _direct))


def test_relative_tolerances():
    config = NewtonConfig(relative=True, tolerance_residual=1e-6, tolerance_increment=1e-30)
    _, report = newton_solve(np.zeros(N), CALLBACKS, config)
    assert report.converged
    assert report.residual_norms[-1] <= 1e-6 * report.residual_norms[0]


def test_update_forcing_clamps():
    config = NewtonConfig("Inexact")
    assert update_forcing(None, 1.0, None, config) == 0.9
    assert update_forcing(0.5, 1e-6, 1.0, config) == 1e-6
    assert update_forcing(0.5, 2.0, 1.0, config) == 0.9
    assert update_forcing(0.5, 0.5, 1.0, config) == pytest.approx(0.225)


def test_newton_config_validation():
    with pytest.raises(ParameterError):
        NewtonConfig("Broyden")
    with pytest.raises(ParameterError):
        NewtonConfig(eta_min=0.5, eta_max=0.1)
    with pytest.raises(ParameterError):
        NewtonConfig(jacobian_step_period=0)


def test_fd_jacobian_matches_analytic():
    x = np.linspace(-1.0, 1.0, N)
    approx = fd_jacobian(_residual, x).toarray()
    np.testing.assert_allclose(approx, _assemble(x, True)[1].toarray(), atol=1e-6)
    coarse = fd_jacobian(_residual, x, epsilon=1e-4).toarray()
    np.testing.assert_allclose(coarse, approx, atol=1e-3)


def test_nonlinear_handler():
    handler = NonLinearSolverHandler("Problem")
    handler.setup({"Problem": {"Non-linear solver": {
        "Type": "Inexact",
        "Inexact": {"Gamma": 0.5},
        "Acceleration": {"Scheme": "StaticRelaxation", "Relaxation": 0.8}}}})
    assert handler.config.variant == "Inexact"
    assert handler.config.gamma == 0.5
    assert handler.config.fd_epsilon is None
    solver = handler.build()
    assert isinstance(solver.accelerator, StaticRelaxation)
    assert solver.accelerator.omega == 0.8
    with pytest.raises(ParameterError):
        handler.setup({"Problem": {"Non-linear solver": {"Inexact": {"Minimum forcing": 0.95}}}})


def _iterate(accelerator, g, x0, tol=1e-10, max_iters=500):
    x = np.array(x0, dtype=float)
    for iteration in range(1, max_iters + 1):
        x_new = accelerate(accelerator, x, g(x))
        if np.linalg.norm(x_new - x) <= tol:
            return x_new, iteration
        x = x_new
    return x, max_iters


M = np.diag([0.9, 0.5, -0.5, 0.2])
C = np.array([1.0, -1.0, 2.0, 0.5])
FIXED_POINT = np.linalg.solve(np.eye(4) - M, C)


def test_anderson_beats_plain_iteration():
    g = lambda x: M @ x + C  # noqa: E731
    x_plain, plain = _iterate(NoAcceleration(), g, np.zeros(4))
    x_anderson, anderson = _iterate(Anderson(depth=5), g, np.zeros(4))
    np.testing.assert_allclose(x_plain, FIXED_POINT, atol=1e-8)
    np.testing.assert_allclose(x_anderson, FIXED_POINT, atol=1e-8)
    assert plain > 100
    assert anderson <= 12


def test_aitken_solves_scalar_linear_maps_in_two_steps():
    accelerator = Aitken(0.5)
    x = np.zeros(1)
    for _ in range(2):
        x = accelerate(accelerator, x, -3.0 * x + 4.0)
    assert x[0] == pytest.approx(1.0)
    accelerator.reset()
    assert accelerator.omega == 0.5


def test_static_relaxation_damps_oscillation():
    g = lambda x: -x + 2.0  # noqa: E731
    assert accelerate(StaticRelaxation(0.5), np.zeros(1), g(np.zeros(1)))[0] == 1.0
    plain = NoAcceleration()
    x = np.zeros(1)
    for _ in range(2):
        x = accelerate(plain, x, g(x))
    assert x[0] == 0.0


def test_anderson_drops_dependent_history():
    anderson = Anderson(depth=3, omega=0.5)
    x, gx = np.ones(2), np.array([3.0, 1.0])
    accelerate(anderson, x, gx)
    np.testing.assert_allclose(accelerate(anderson, x, gx), x + 0.5 * (gx - x))


def test_build_accelerator():
    assert isinstance(build_accelerator(AccelerationConfig()), NoAcceleration)
    assert isinstance(build_accelerator(AccelerationConfig("Aitken", 0.3)), Aitken)
    anderson = build_accelerator(AccelerationConfig("Anderson", 1.0, 2))
    assert isinstance(anderson, Anderson) and anderson.depth == 2
    with pytest.raises(ParameterError):
        AccelerationConfig("Aitken", 2.0)
    with pytest.raises(ParameterError):
        AccelerationConfig("IQN-ILS")


def test_dual_scalar_rules():
    z = Dual.variables(np.array([0.7, 1.3]))
    x, y = z[0], z[1]
    f = x * y + x / y - y ** 2 + sin(x) * exp(y) + sqrt(x) + log(y) + cos(y) + 1.0 / x + 2.0 ** x - (3.0 - y)
    xv, yv = 0.7, 1.3
    expected = [
        yv + 1.0 / yv + np.cos(xv) * np.exp(yv) + 0.5 / np.sqrt(xv) - 1.0 / xv ** 2 + np.log(2.0) * 2.0 ** xv,
        xv - xv / yv ** 2 - 2.0 * yv + np.sin(xv) * np.exp(yv) + 1.0 / yv - np.sin(yv) + 1.0]
    np.testing.assert_allclose(f.derivs, expected, rtol=1e-12)
    assert (x ** y).derivs[1] == pytest.approx(np.log(xv) * xv ** yv)
    assert (x ** 0).value == 1.0 and not (x ** 0).derivs.any()


def test_jacobian_via_dual_matches_analytic():
    x = np.linspace(-1.0, 1.0, N)
    value, jacobian = jacobian_via_dual(lambda z: A.toarray() @ z + 0.1 * z ** 3 - 1.0, x)
    np.testing.assert_allclose(value, _residual(x), atol=1e-14)
    np.testing.assert_allclose(jacobian, _assemble(x, True)[1].toarray(), atol=1e-14)
    _, zero = jacobian_via_dual(lambda z: np.ones(3), np.zeros(2))
    assert zero.shape == (3, 2) and not zero.any()


def test_dual_arrays():
    z = Dual.variables(np.array([1.0, 2.0, 3.0]))
    B = np.arange(6.0).reshape(2, 3)  # noqa: N806
    np.testing.assert_array_equal((B @ z).derivs, B)
    np.testing.assert_array_equal((z @ B.T).derivs, B)
    total = (z * z).sum()
    assert total.value == 14.0
    assert total.derivs.tolist() == [2.0, 4.0, 6.0]
    assert len(z) == 3 and z.shape == (3,) and z.ndim == 1
    with pytest.raises(TypeError):
        z @ z
    with pytest.raises(ValueError):
        Dual(np.zeros(2), np.zeros((3, 1)))
    stacked = stack([z[0] * z[1], 5.0])
    assert stacked.derivs.tolist() == [[2.0, 1.0, 0.0], [0.0, 0.0, 0.0]]


def test_interleave_arrays_and_duals():
    assert interleave([np.array([1.0, 2.0]), np.array([3.0, 4.0])]).tolist() == [1.0, 3.0, 2.0, 4.0]
    z = Dual.variables(np.array([1.0, 2.0]))
    mixed = interleave([z, np.array([5.0, 6.0])])
    assert mixed.value.tolist() == [1.0, 5.0, 2.0, 6.0]
    assert mixed.derivs.tolist() == [[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]
