"""
Sparse linear algebra: Krylov solvers (CG, GMRES, BiCGStab),
preconditioners (Jacobi, SSOR, ILU0) and the handlers that configure
them from a parameter file.

Matrices are ``scipy.sparse.csr_matrix`` with sorted column indices and
vectors are 1D ``numpy.ndarray``. Every solver stops when
``||b - A x|| <= max(tolerance * ||b||, absolute_tolerance)``.
"""

# annotations
from typing import Callable, List, Optional, Tuple

# external
import logging as _logging
import dataclasses as _dataclasses

import numpy as _numpy
from scipy import sparse as _sparse
from scipy.linalg import solve_triangular as _solve_triangular
from scipy.sparse.linalg import (
    LinearOperator as _LinearOperator,
    spsolve_triangular as _spsolve_triangular)

# internal
from flexfem._core import CoreModel, ParameterError, SolverError, join_path
from flexfem._params import Integer, ParamTree, Real, Bool, Selection, Verbosity


__all__ = [
    "CsrMatrix",
    "DVector",
    "SOLVER_TYPES",
    "PRECONDITIONER_TYPES",
    "SolverConfig",
    "PreconditionerConfig",
    "SolveReport",
    "LinearSolverHandler",
    "PreconditionerHandler",
    "spmv",
    "check_finite",
    "solve",
    "build_preconditioner"]


_logger = _logging.getLogger(__name__)

_ITERATION_CAP = "maximum number of iterations reached"


CsrMatrix = _sparse.csr_matrix
DVector = _numpy.ndarray

SOLVER_TYPES = ("CG", "GMRES", "BiCGStab")
PRECONDITIONER_TYPES = ("Identity", "Jacobi", "SSOR", "ILU0")

_BREAKDOWN = 1e-30


@_dataclasses.dataclass
class SolverConfig:
    """
    Krylov solver settings.
    """

    type: str = "GMRES"
    max_iterations: int = 1000
    tolerance: float = 1e-10
    absolute_tolerance: float = 1e-14
    gmres_restart: int = 100
    log_history: bool = False

    def __post_init__(self):
        if self.type not in SOLVER_TYPES:
            raise ParameterError(f"solver type must be one of {SOLVER_TYPES}; got {self.type!r}")
        if self.max_iterations < 1:
            raise ParameterError(f"maximum iterations must be >= 1; got {self.max_iterations}")
        if self.tolerance <= 0 or self.absolute_tolerance <= 0:
            raise ParameterError(
                f"tolerances must be > 0; got {self.tolerance} and {self.absolute_tolerance}")
        if self.gmres_restart < 1:
            raise ParameterError(f"GMRES restart must be >= 1; got {self.gmres_restart}")


@_dataclasses.dataclass
class PreconditionerConfig:
    """
    Preconditioner settings; omega is used by SSOR only.
    """

    type: str = "Identity"
    omega: float = 1.0

    def __post_init__(self):
        if self.type not in PRECONDITIONER_TYPES:
            raise ParameterError(
                f"preconditioner type must be one of {PRECONDITIONER_TYPES}; got {self.type!r}")
        if not 0.0 < self.omega < 2.0:
            raise ParameterError(f"SSOR omega must be in (0, 2); got {self.omega}")


@_dataclasses.dataclass
class SolveReport:
    """
    Outcome of a linear solve. When history is logged its last entry is
    the recomputed true residual norm, equal to final_residual.
    """

    converged: bool
    iterations: int
    final_residual: float
    history: List[float] = _dataclasses.field(default_factory=list)
    reason: str = ""


def spmv(A: CsrMatrix, x: DVector) -> DVector:  # noqa: N803
    """
    Sparse matrix-vector product.

    Examples:
        >>> spmv(_sparse.csr_matrix([[2.0, 1.0], [0.0, 3.0]]), _numpy.ones(2)).tolist()
        [3.0, 3.0]
    """
    x = _numpy.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise SolverError(f"vector length must be {A.shape[1]}; got {x.shape[0]}")
    return A @ x


def check_finite(vec: DVector, name: str = "vector") -> None:
    """
    Raise SolverError when a vector holds NaN or Inf entries.
    """
    if not _numpy.all(_numpy.isfinite(vec)):
        raise SolverError(f"{name} must be finite; got {int(_numpy.sum(~_numpy.isfinite(vec)))} "
                          "non-finite entries")


def _identity(n: int) -> _LinearOperator:
    return _LinearOperator((n, n), matvec=lambda r: _numpy.array(r, dtype=float).ravel())


def _diagonal(A: CsrMatrix) -> _numpy.ndarray:  # noqa: N803
    diagonal = A.diagonal()
    if _numpy.any(diagonal == 0.0):
        raise SolverError(
            f"matrix diagonal must be nonzero; got zero in row {int(_numpy.argmin(_numpy.abs(diagonal)))}")
    return diagonal


def _jacobi(A: CsrMatrix) -> _LinearOperator:  # noqa: N803
    inverse = 1.0 / _diagonal(A)
    return _LinearOperator(A.shape, matvec=lambda r: inverse * _numpy.ravel(r))


def _ssor(A: CsrMatrix, omega: float) -> _LinearOperator:  # noqa: N803
    # M = w/(2-w) (D/w + L) (D/w)^-1 (D/w + U)
    scaled = _diagonal(A) / omega
    lower = (_sparse.tril(A, -1) + _sparse.diags(scaled)).tocsr()
    upper = (_sparse.triu(A, 1) + _sparse.diags(scaled)).tocsr()
    factor = (2.0 - omega) / omega

    def apply(r):
        y = _spsolve_triangular(lower, _numpy.ravel(r), lower=True)
        return factor * _spsolve_triangular(upper, scaled * y, lower=False)

    return _LinearOperator(A.shape, matvec=apply)


def _ilu0(A: CsrMatrix) -> _LinearOperator:  # noqa: N803
    A = _sparse.csr_matrix(A, dtype=float, copy=True)  # noqa: N806
    A.sum_duplicates()
    A.sort_indices()
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data
    diagonal = _numpy.full(n, -1)
    for i in range(n):
        hits = _numpy.flatnonzero(indices[indptr[i]:indptr[i + 1]] == i)
        if not len(hits):
            raise SolverError(f"matrix diagonal must be in the sparsity pattern; missing in row {i}")
        diagonal[i] = indptr[i] + hits[0]

    position = _numpy.full(n, -1)
    for i in range(n):
        start, stop = indptr[i], indptr[i + 1]
        cols = indices[start:stop]
        position[cols] = _numpy.arange(start, stop)
        for offset in range(start, diagonal[i]):
            k = indices[offset]
            pivot = data[diagonal[k]]
            if pivot == 0.0:
                raise SolverError(f"ILU0 pivot must be nonzero; got zero in row {k}")
            data[offset] /= pivot
            upper = slice(diagonal[k] + 1, indptr[k + 1])
            targets = position[indices[upper]]
            keep = targets >= 0
            data[targets[keep]] -= data[offset] * data[upper][keep]
        position[cols] = -1
        if data[diagonal[i]] == 0.0:
            raise SolverError(f"ILU0 pivot must be nonzero; got zero in row {i}")

    lower = (_sparse.tril(A, -1) + _sparse.identity(n)).tocsr()
    upper = _sparse.triu(A).tocsr()

    def apply(r):
        y = _spsolve_triangular(lower, _numpy.ravel(r), lower=True, unit_diagonal=True)
        return _spsolve_triangular(upper, y, lower=False)

    return _LinearOperator(A.shape, matvec=apply)


def build_preconditioner(A: CsrMatrix, config: PreconditionerConfig) -> _LinearOperator:  # noqa: N803
    """
    Build the action of M^-1 for a matrix.

    Args:
        A: Square sparse matrix.
        config: Preconditioner choice.

    Returns:
        scipy.sparse.linalg.LinearOperator: The fixed linear action; ILU0
        keeps the sparsity of A without fill.

    Raises:
        SolverError: On a zero (or, for ILU0, structurally missing)
            diagonal entry or a zero ILU0 pivot.

    Examples:
        >>> M = build_preconditioner(
        ...     _sparse.diags([2.0, 4.0]).tocsr(), PreconditionerConfig("Jacobi"))
        >>> M.matvec(_numpy.array([2.0, 4.0])).tolist()
        [1.0, 1.0]
    """
    A = _sparse.csr_matrix(A)  # noqa: N806
    if config.type == "Jacobi":
        return _jacobi(A)
    if config.type == "SSOR":
        return _ssor(A, config.omega)
    if config.type == "ILU0":
        return _ilu0(A)
    return _identity(A.shape[0])


def _cg(A, b, x, M, threshold, config, history):  # noqa: N803
    r = b - A @ x
    z = M.matvec(r)
    p = z.copy()
    rz = r @ z
    norm = _numpy.linalg.norm(r)
    history.append(norm)
    iterations = 0
    while norm > threshold:
        if iterations >= config.max_iterations:
            return x, iterations, False, _ITERATION_CAP
        Ap = A @ p  # noqa: N806
        curvature = p @ Ap
        if curvature <= 0.0:
            return x, iterations, False, "non-positive curvature; matrix is not SPD"
        alpha = rz / curvature
        x = x + alpha * p
        r = r - alpha * Ap
        z = M.matvec(r)
        rz, rz_old = r @ z, rz
        p = z + (rz / rz_old) * p
        iterations += 1
        norm = _numpy.linalg.norm(r)
        history.append(norm)
        _logger.debug("CG iteration %d: residual %.3e", iterations, norm)
    return x, iterations, True, "converged"


def _gmres(A, b, x, M, threshold, config, history):  # noqa: N803
    n = len(b)
    m = min(config.gmres_restart, max(n, 1))
    r = b - A @ x
    beta = _numpy.linalg.norm(r)
    history.append(beta)
    iterations = 0
    while beta > threshold:
        if iterations >= config.max_iterations:
            return x, iterations, False, _ITERATION_CAP
        V = _numpy.zeros((m + 1, n))  # noqa: N806
        H = _numpy.zeros((m + 1, m))  # noqa: N806
        cs, sn = _numpy.zeros(m), _numpy.zeros(m)
        g = _numpy.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        while k < m and iterations < config.max_iterations:
            w = A @ M.matvec(V[k])
            for i in range(k + 1):
                H[i, k] = w @ V[i]
                w = w - H[i, k] * V[i]
            H[k + 1, k] = _numpy.linalg.norm(w)
            happy = H[k + 1, k] <= _BREAKDOWN * max(beta, 1.0)
            if not happy:
                V[k + 1] = w / H[k + 1, k]
            for i in range(k):
                H[i, k], H[i + 1, k] = (
                    cs[i] * H[i, k] + sn[i] * H[i + 1, k],
                    -sn[i] * H[i, k] + cs[i] * H[i + 1, k])
            radius = _numpy.hypot(H[k, k], H[k + 1, k])
            cs[k], sn[k] = H[k, k] / radius, H[k + 1, k] / radius
            H[k, k], H[k + 1, k] = radius, 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k += 1
            iterations += 1
            history.append(abs(g[k]))
            _logger.debug("GMRES iteration %d: residual %.3e", iterations, abs(g[k]))
            if abs(g[k]) <= threshold or happy:
                break
        y = _solve_triangular(H[:k, :k], g[:k])
        x = x + M.matvec(V[:k].T @ y)
        r = b - A @ x
        beta = _numpy.linalg.norm(r)
        if happy and beta > threshold:
            return x, iterations, False, "Krylov space exhausted above tolerance"
    return x, iterations, True, "converged"


def _bicgstab(A, b, x, M, threshold, config, history):  # noqa: N803
    r = b - A @ x
    r_hat = r.copy()
    rho_old = alpha = omega = 1.0
    v = _numpy.zeros_like(b)
    p = _numpy.zeros_like(b)
    norm = _numpy.linalg.norm(r)
    history.append(norm)
    iterations = 0
    while norm > threshold:
        if iterations >= config.max_iterations:
            return x, iterations, False, _ITERATION_CAP
        rho = r_hat @ r
        if abs(rho) < _BREAKDOWN:
            return x, iterations, False, "breakdown: rho vanished"
        p = r + (rho / rho_old) * (alpha / omega) * (p - omega * v)
        p_hat = M.matvec(p)
        v = A @ p_hat
        projection = r_hat @ v
        if abs(projection) < _BREAKDOWN:
            return x, iterations, False, "breakdown: search direction orthogonal to shadow residual"
        alpha = rho / projection
        s = r - alpha * v
        iterations += 1
        if _numpy.linalg.norm(s) <= threshold:
            x = x + alpha * p_hat
            norm = _numpy.linalg.norm(s)
            history.append(norm)
            break
        s_hat = M.matvec(s)
        t = A @ s_hat
        tt = t @ t
        if tt < _BREAKDOWN:
            x = x + alpha * p_hat
            return x, iterations, False, "breakdown: stabilization step vanished"
        omega = (t @ s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        rho_old = rho
        norm = _numpy.linalg.norm(r)
        history.append(norm)
        _logger.debug("BiCGStab iteration %d: residual %.3e", iterations, norm)
        if omega == 0.0:
            return x, iterations, False, "breakdown: omega vanished"
    return x, iterations, True, "converged"


_SOLVERS = {"CG": _cg, "GMRES": _gmres, "BiCGStab": _bicgstab}


def solve(
        A: CsrMatrix,  # noqa: N803
        b: DVector,
        config: Optional[SolverConfig] = None,
        precond: Optional[PreconditionerConfig] = None,
        x0: Optional[DVector] = None,
        preconditioner: Optional[_LinearOperator] = None) -> Tuple[DVector, SolveReport]:
    """
    Solve A x = b with a preconditioned Krylov method.

    GMRES is right-preconditioned and restarted; CG and BiCGStab use the
    preconditioner in their standard form. The final residual is always
    recomputed from the returned x.

    Args:
        A: Square sparse matrix; symmetric (with an SPD preconditioner)
            for CG.
        b: Right-hand side.
        config: Solver settings; GMRES with defaults when omitted.
        precond: Preconditioner settings; Identity when omitted.
        x0: Initial guess; zero when omitted.
        preconditioner: A prebuilt M^-1, overriding precond.

    Returns:
        Tuple[numpy.ndarray, SolveReport]: Solution and report; the
        solution stays at x0 on immediate breakdown.

    Raises:
        SolverError: On dimension mismatch or a preconditioner failure.
    """
    config = config or SolverConfig()
    A = _sparse.csr_matrix(A)  # noqa: N806
    b = _numpy.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[1] != n:
        raise SolverError(f"matrix must be square; got shape {A.shape}")
    if b.shape != (n,):
        raise SolverError(f"right-hand side must have length {n}; got shape {b.shape}")
    x = _numpy.zeros(n) if x0 is None else _numpy.array(x0, dtype=float)
    if x.shape != (n,):
        raise SolverError(f"initial guess must have length {n}; got shape {x.shape}")
    M = preconditioner or build_preconditioner(A, precond or PreconditionerConfig())  # noqa: N806

    threshold = max(config.tolerance * _numpy.linalg.norm(b), config.absolute_tolerance)
    history: List[float] = []
    x, iterations, converged, reason = _SOLVERS[config.type](A, b, x, M, threshold, config, history)

    final = float(_numpy.linalg.norm(b - A @ x))
    history[-1] = final
    if converged and final > threshold + _roundoff(A, b, x):
        converged, reason = False, "true residual above tolerance"
    report = SolveReport(
        converged=converged,
        iterations=iterations,
        final_residual=final,
        history=[float(h) for h in history] if config.log_history else [],
        reason=reason)
    if converged:
        _logger.debug("%s converged in %d iterations, residual %.3e", config.type, iterations, final)
    else:
        _logger.warning("%s did not converge after %d iterations (%s), residual %.3e",
                        config.type, iterations, reason, final)
    return x, report


def _roundoff(A: _sparse.csr_matrix, b: _numpy.ndarray, x: _numpy.ndarray) -> float:  # noqa: N803
    """
    Floor of the attainable true residual norm in double precision.
    """
    norm_a = float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
    eps = _numpy.finfo(float).eps
    return 10.0 * _numpy.sqrt(A.shape[0]) * eps * (norm_a * _numpy.linalg.norm(x) + _numpy.linalg.norm(b))


class PreconditionerHandler(CoreModel):
    """
    Preconditioner chosen at run time from a parameter file.
    """

    def __init__(self, subsection_path: str, default_type: str = "SSOR"):
        """
        Declares "Type" with one subsection per configurable type below
        subsection_path, e.g. "Tutorial01 / Preconditioner".
        """
        super().__init__(subsection_path)
        self.config = PreconditionerConfig(default_type)

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry(
            "Type", self.config.type, Selection(PRECONDITIONER_TYPES),
            "Preconditioner applied inside the Krylov solver.")
        params.enter_subsection_path("SSOR")
        params.declare_entry("Omega", self.config.omega, Real(0.0, 2.0), "Relaxation factor in (0, 2).")
        params.leave_subsection_path()
        params.leave_subsection_path()

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.config = PreconditionerConfig(
                params.get("Type"), params.get_double("SSOR / Omega"))
        except ValueError as error:
            raise ParameterError(str(error)) from error
        finally:
            params.leave_subsection_path()

    def build(self, A: CsrMatrix) -> _LinearOperator:  # noqa: N803
        """
        Build the configured preconditioner for a matrix.
        """
        return build_preconditioner(A, self.config)


class LinearSolverHandler(CoreModel):
    """
    Krylov solver and preconditioner chosen at run time from a parameter
    file.
    """

    def __init__(
            self,
            subsection_path: str,
            default_type: str = "GMRES",
            default_preconditioner: str = "SSOR"):
        """
        Owns "<path> / Linear solver" and "<path> / Preconditioner".

        Args:
            subsection_path: Subsection of the owning model.
            default_type: Declared default solver.
            default_preconditioner: Declared default preconditioner.

        Examples:
            >>> handler = LinearSolverHandler("Problem", "CG", "Jacobi")
            >>> _ = handler.setup({"Problem": {"Linear solver": {"Type": "BiCGStab"}}})
            >>> handler.config.type, handler.preconditioner.config.type
            ('BiCGStab', 'Jacobi')
        """
        super().__init__(join_path(subsection_path, "Linear solver"))
        self.config = SolverConfig(default_type)
        self.preconditioner = PreconditionerHandler(
            join_path(subsection_path, "Preconditioner"), default_preconditioner)
        self.last_report: Optional[SolveReport] = None

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry(
            "Type", self.config.type, Selection(SOLVER_TYPES), "Krylov method.")
        params.declare_entry(
            "Maximum number of iterations", self.config.max_iterations, Integer(1))
        params.declare_entry(
            "Tolerance", self.config.tolerance, Real(0.0),
            "Stop when the residual is below this fraction of ||b||.")
        params.set_verbosity(Verbosity.FULL)
        params.declare_entry(
            "Absolute tolerance", self.config.absolute_tolerance, Real(0.0),
            "Floor of the stopping threshold.")
        params.declare_entry(
            "Log history", self.config.log_history, Bool(),
            "Keep the residual history of every solve.")
        params.reset_verbosity()
        params.enter_subsection_path("GMRES")
        params.declare_entry(
            "Max. number of temporary vectors", self.config.gmres_restart, Integer(1),
            "Restart length.")
        params.leave_subsection_path()
        params.leave_subsection_path()
        self.preconditioner.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.config = SolverConfig(
                type=params.get("Type"),
                max_iterations=params.get_integer("Maximum number of iterations"),
                tolerance=params.get_double("Tolerance"),
                absolute_tolerance=params.get_double("Absolute tolerance"),
                gmres_restart=params.get_integer("GMRES / Max. number of temporary vectors"),
                log_history=params.get_bool("Log history"))
        except ValueError as error:
            raise ParameterError(str(error)) from error
        finally:
            params.leave_subsection_path()
        self.preconditioner.parse_parameters(params)

    def solve(
            self,
            A: CsrMatrix,  # noqa: N803
            b: DVector,
            x0: Optional[DVector] = None,
            raise_on_failure: bool = False) -> Tuple[DVector, SolveReport]:
        """
        Solve with the configured method; the report is kept as
        last_report.

        Raises:
            SolverError: On non-convergence when raise_on_failure is set.
        """
        x, report = solve(A, b, self.config, x0=x0, preconditioner=self.preconditioner.build(A))
        self.last_report = report
        if not report.converged and raise_on_failure:
            raise SolverError(f"linear solver did not converge: {report.reason}")
        return x, report

    def solve_function(self) -> Callable[[CsrMatrix, DVector, float], DVector]:
        """
        A solve(J, r, forcing) callback for the Newton solver: returns the
        increment solving J d = -r with the relative tolerance taken from
        forcing when it is positive.

        Raises:
            SolverError: When the solve fails; an inexact solve (forcing > 0)
                stopped by the iteration cap is accepted.
        """
        def _solve(J, r, forcing):  # noqa: N803
            config = self.config
            if forcing > 0.0:
                config = _dataclasses.replace(config, tolerance=forcing)
            x, report = solve(J, -_numpy.asarray(r), config,
                              preconditioner=self.preconditioner.build(J))
            self.last_report = report
            if not report.converged and not (forcing > 0.0 and report.reason == _ITERATION_CAP):
                raise SolverError(f"linear solve of the Newton step failed: {report.reason}")
            return x

        return _solve
