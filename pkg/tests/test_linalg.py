"""
Krylov solvers and preconditioners against dense solves.
"""

# external
import numpy as np
import pytest
from scipy import sparse

# internal
from flexfem._core import ParameterError, SolverError
from flexfem._linalg import (
    LinearSolverHandler,
    PreconditionerConfig,
    SolverConfig,
    build_preconditioner,
    check_finite,
    solve,
    spmv)


def _laplacian(n):
    return sparse.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()


def _random_spd(n, seed):
    rng = np.random.default_rng(seed)
    B = sparse.random(n, n, density=0.1, random_state=rng)  # noqa: N806
    return (B @ B.T + n * sparse.identity(n)).tocsr()


def _random_nonsymmetric(n, seed):
    rng = np.random.default_rng(seed)
    B = sparse.random(n, n, density=0.1, random_state=rng)  # noqa: N806
    C = sparse.random(n, n, density=0.1, random_state=rng)  # noqa: N806
    return (B - 0.5 * C + 8.0 * sparse.identity(n)).tocsr()


@pytest.mark.parametrize("precond", ["Identity", "Jacobi", "SSOR", "ILU0"])
@pytest.mark.parametrize("n, seed", [(8, 0), (33, 1), (64, 2)])
def test_cg_matches_dense_solve(n, seed, precond):
    A = _random_spd(n, seed)  # noqa: N806
    b = np.random.default_rng(seed + 10).standard_normal(n)
    x, report = solve(A, b, SolverConfig("CG", tolerance=1e-12), PreconditionerConfig(precond))
    assert report.converged
    assert report.final_residual <= 1e-12 * np.linalg.norm(b)
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-9)


@pytest.mark.parametrize("method", ["GMRES", "BiCGStab"])
@pytest.mark.parametrize("precond", ["Identity", "Jacobi", "ILU0"])
@pytest.mark.parametrize("n, seed", [(10, 3), (64, 4)])
def test_nonsymmetric_solvers_match_dense_solve(n, seed, method, precond):
    A = _random_nonsymmetric(n, seed)  # noqa: N806
    b = np.random.default_rng(seed).standard_normal(n)
    x, report = solve(A, b, SolverConfig(method, tolerance=1e-12), PreconditionerConfig(precond))
    assert report.converged, report.reason
    np.testing.assert_allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-9)


def test_restarted_gmres_converges():
    A = _random_nonsymmetric(48, 5)  # noqa: N806
    b = np.ones(48)
    x, report = solve(A, b, SolverConfig("GMRES", tolerance=1e-11, gmres_restart=4))
    assert report.converged
    assert np.linalg.norm(b - A @ x) == pytest.approx(report.final_residual)


def test_ilu0_is_exact_on_tridiagonal_matrices():
    A = _laplacian(40)  # noqa: N806
    b = np.linspace(0.0, 1.0, 40)
    _, report = solve(A, b, SolverConfig("GMRES"), PreconditionerConfig("ILU0"))
    assert report.converged
    assert report.iterations <= 2


def test_preconditioning_reduces_iterations():
    A = _laplacian(64)  # noqa: N806
    b = np.ones(64)
    _, plain = solve(A, b, SolverConfig("CG", tolerance=1e-10))
    _, ssor = solve(A, b, SolverConfig("CG", tolerance=1e-10), PreconditionerConfig("SSOR", 1.5))
    assert plain.converged and ssor.converged
    assert ssor.iterations < plain.iterations


def test_history_ends_with_true_residual():
    A = _random_spd(20, 6)  # noqa: N806
    b = np.ones(20)
    x, report = solve(A, b, SolverConfig("CG", log_history=True))
    assert report.history[0] == pytest.approx(np.linalg.norm(b))
    assert report.history[-1] == report.final_residual
    assert report.final_residual == pytest.approx(np.linalg.norm(b - A @ x))
    _, quiet = solve(A, b, SolverConfig("CG"))
    assert quiet.history == []


def test_exact_initial_guess_and_zero_rhs_take_no_iterations():
    A = _random_spd(12, 7)  # noqa: N806
    exact = np.arange(12.0)
    x, report = solve(A, A @ exact, SolverConfig("BiCGStab"), x0=exact)
    assert report.converged and report.iterations == 0
    np.testing.assert_array_equal(x, exact)
    x, report = solve(A, np.zeros(12), SolverConfig("GMRES"))
    assert report.converged and report.iterations == 0
    assert not x.any()


def test_cg_reports_indefinite_matrix():
    A = sparse.diags([1.0, -1.0]).tocsr()  # noqa: N806
    _, report = solve(A, np.ones(2), SolverConfig("CG"))
    assert not report.converged
    assert "SPD" in report.reason


def test_iteration_cap_is_reported():
    A = _laplacian(50)  # noqa: N806
    _, report = solve(A, np.ones(50), SolverConfig("CG", max_iterations=3))
    assert not report.converged
    assert report.iterations == 3
    assert "maximum" in report.reason


def test_shape_errors():
    A = _laplacian(4)  # noqa: N806
    with pytest.raises(SolverError):
        solve(A, np.ones(3))
    with pytest.raises(SolverError):
        solve(A, np.ones(4), x0=np.ones(5))
    with pytest.raises(SolverError):
        solve(sparse.csr_matrix(np.ones((2, 3))), np.ones(2))
    with pytest.raises(SolverError):
        spmv(A, np.ones(3))
    assert spmv(A, np.ones(4)).tolist() == [1.0, 0.0, 0.0, 1.0]


def test_config_validation():
    with pytest.raises(ParameterError):
        SolverConfig("MINRES")
    with pytest.raises(ParameterError):
        SolverConfig(tolerance=0.0)
    with pytest.raises(ParameterError):
        PreconditionerConfig("AMG")
    with pytest.raises(ParameterError):
        PreconditionerConfig("SSOR", 2.0)


def test_preconditioner_failures():
    singular = sparse.csr_matrix(np.array([[0.0, 1.0], [1.0, 2.0]]))
    for kind in ("Jacobi", "SSOR", "ILU0"):
        with pytest.raises(SolverError):
            build_preconditioner(singular, PreconditionerConfig(kind))
    with pytest.raises(SolverError):
        check_finite(np.array([1.0, np.nan]))
    check_finite(np.ones(3))


def test_jacobi_action():
    M = build_preconditioner(sparse.diags([2.0, 4.0, 8.0]).tocsr(), PreconditionerConfig("Jacobi"))  # noqa: N806
    assert M.matvec(np.array([2.0, 2.0, 2.0])).tolist() == [1.0, 0.5, 0.25]


def test_handler_reads_parameters():
    handler = LinearSolverHandler("Problem", "CG", "Jacobi")
    handler.setup({"Problem": {
        "Linear solver": {"Type": "BiCGStab", "Tolerance": 1e-8, "GMRES": {"Max. number of temporary vectors": 7}},
        "Preconditioner": {"Type": "SSOR", "SSOR": {"Omega": 1.2}}}})
    assert handler.config.type == "BiCGStab"
    assert handler.config.tolerance == 1e-8
    assert handler.config.gmres_restart == 7
    assert handler.preconditioner.config == PreconditionerConfig("SSOR", 1.2)
    with pytest.raises(ParameterError):
        handler.setup({"Problem": {"Preconditioner": {"SSOR": {"Omega": 2.0}}}})


def test_handler_solve_and_newton_callback():
    handler = LinearSolverHandler("Problem", "CG", "SSOR")
    handler.config = SolverConfig("CG", tolerance=1e-13)
    A = _laplacian(16)  # noqa: N806
    b = np.ones(16)
    x, report = handler.solve(A, b, raise_on_failure=True)
    assert handler.last_report is report
    np.testing.assert_allclose(A @ x, b, atol=1e-8)
    step = handler.solve_function()(A, b, 1e-12)
    np.testing.assert_allclose(step, -x, rtol=1e-7)
    handler.config = SolverConfig("CG", max_iterations=1)
    with pytest.raises(SolverError):
        handler.solve(A, b, raise_on_failure=True)


def test_newton_callback_raises_on_failed_solve():
    handler = LinearSolverHandler("Problem", "CG", "Identity")
    handler.setup()
    indefinite = sparse.diags([1.0, -1.0, 2.0, -3.0]).tocsr()
    callback = handler.solve_function()
    for forcing in (0.0, 0.5):
        with pytest.raises(SolverError, match="SPD"):
            callback(indefinite, np.ones(4), forcing)
    assert not handler.last_report.converged

    handler.config = SolverConfig("CG", max_iterations=1)
    A = _laplacian(16)  # noqa: N806
    with pytest.raises(SolverError, match="maximum"):
        callback(A, np.ones(16), 0.0)
    step = callback(A, np.ones(16), 1e-3)
    assert step.shape == (16,)
    assert handler.last_report.reason.startswith("maximum")
