"""
Newton-type solvers, fixed-point acceleration and forward-mode automatic
differentiation.

Newton variants:

    Exact:
        The Jacobian is assembled at every iteration.
    FrozenJacobian:
        The Jacobian is reused: rebuilt at the start of a solve every
        "step period" calls to advance(), and within a solve every
        "reassembly period" iterations (0: never).
    QuasiNewtonFD:
        The Jacobian is approximated column by column with finite
        differences of the residual.
    Inexact:
        Exact Jacobian, linear solves truncated to a forcing term chosen
        with the Eisenstat-Walker rule.
"""

# annotations
from typing import Callable, List, Optional, Tuple, Union

# external
import logging as _logging
import dataclasses as _dataclasses

import numpy as _numpy
from scipy import sparse as _sparse
from scipy.linalg import qr as _qr, solve_triangular as _solve_triangular

# internal
from flexfem._core import CoreModel, ParameterError, join_path
from flexfem._params import Bool, Integer, ParamTree, Real, Selection, Verbosity


__all__ = [
    "NEWTON_VARIANTS",
    "ACCELERATION_SCHEMES",
    "NewtonConfig",
    "NewtonCallbacks",
    "NewtonReport",
    "NewtonSolver",
    "AccelerationConfig",
    "Accelerator",
    "NoAcceleration",
    "StaticRelaxation",
    "Aitken",
    "Anderson",
    "AccelerationHandler",
    "NonLinearSolverHandler",
    "Dual",
    "newton_solve",
    "update_forcing",
    "fd_jacobian",
    "build_accelerator",
    "accelerate",
    "jacobian_via_dual",
    "stack",
    "interleave",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt"]


_logger = _logging.getLogger(__name__)


NEWTON_VARIANTS = ("Exact", "FrozenJacobian", "QuasiNewtonFD", "Inexact")
ACCELERATION_SCHEMES = ("None", "StaticRelaxation", "Aitken", "Anderson")

_SQRT_EPS = float(_numpy.sqrt(_numpy.finfo(float).eps))


# -- configuration -----------------------------------------------------------

@_dataclasses.dataclass
class NewtonConfig:
    """
    Newton solver settings.
    """

    variant: str = "Exact"
    max_iterations: int = 20
    tolerance_residual: float = 1e-10
    tolerance_increment: float = 1e-10
    relative: bool = False
    jacobian_every_n: int = 0
    jacobian_step_period: int = 1
    fd_epsilon: Optional[float] = None
    gamma: float = 0.9
    alpha: float = 2.0
    eta_max: float = 0.9
    eta_min: float = 1e-6

    def __post_init__(self):
        if self.variant not in NEWTON_VARIANTS:
            raise ParameterError(f"Newton variant must be one of {NEWTON_VARIANTS}; got {self.variant!r}")
        if self.max_iterations < 1:
            raise ParameterError(f"maximum iterations must be >= 1; got {self.max_iterations}")
        if self.tolerance_residual <= 0 or self.tolerance_increment <= 0:
            raise ParameterError(
                f"tolerances must be > 0; got {self.tolerance_residual} and {self.tolerance_increment}")
        if self.jacobian_every_n < 0 or self.jacobian_step_period < 1:
            raise ParameterError(
                "Jacobian periods must be >= 0 (iterations) and >= 1 (steps); "
                f"got {self.jacobian_every_n} and {self.jacobian_step_period}")
        if self.fd_epsilon is not None and self.fd_epsilon <= 0:
            raise ParameterError(f"finite difference epsilon must be > 0; got {self.fd_epsilon}")
        if not 0.0 < self.gamma <= 1.0:
            raise ParameterError(f"forcing gamma must be in (0, 1]; got {self.gamma}")
        if not 0.0 < self.eta_min <= self.eta_max < 1.0:
            raise ParameterError(
                f"forcing bounds must satisfy 0 < min <= max < 1; got {self.eta_min} and {self.eta_max}")


@_dataclasses.dataclass
class NewtonCallbacks:
    """
    The problem side of a Newton solve.

    Attributes:
        assemble: (x, want_jacobian) -> (residual, Jacobian or None).
        solve: (Jacobian, residual, forcing) -> increment d with
            J d = -residual, to a relative tolerance forcing when it is
            positive.
    """

    assemble: Callable[[_numpy.ndarray, bool], Tuple[_numpy.ndarray, Optional[_sparse.spmatrix]]]
    solve: Callable[[_sparse.spmatrix, _numpy.ndarray, float], _numpy.ndarray]


@_dataclasses.dataclass
class NewtonReport:
    """
    Outcome of a Newton solve; residual_norms holds one more entry than
    increment_norms unless the solve stopped on the increment.
    """

    converged: bool
    iterations: int
    residual_norms: List[float] = _dataclasses.field(default_factory=list)
    increment_norms: List[float] = _dataclasses.field(default_factory=list)
    solution_norms: List[float] = _dataclasses.field(default_factory=list)
    jacobian_assemblies: int = 0
    reason: str = ""


@_dataclasses.dataclass
class AccelerationConfig:
    """
    Fixed-point acceleration settings; omega is the static relaxation,
    the first Aitken factor, or the Anderson mixing parameter.
    """

    scheme: str = "None"
    omega: float = 1.0
    depth: int = 5

    def __post_init__(self):
        if self.scheme not in ACCELERATION_SCHEMES:
            raise ParameterError(
                f"acceleration scheme must be one of {ACCELERATION_SCHEMES}; got {self.scheme!r}")
        if not 0.0 < self.omega < 2.0:
            raise ParameterError(f"relaxation must be in (0, 2); got {self.omega}")
        if self.depth < 1:
            raise ParameterError(f"Anderson depth must be >= 1; got {self.depth}")


# -- Newton ------------------------------------------------------------------

def update_forcing(
        eta_prev: Optional[float],
        res_norm: float,
        res_norm_prev: Optional[float],
        config: NewtonConfig) -> float:
    """
    Eisenstat-Walker forcing term: gamma * (res / res_prev) ** alpha,
    clamped to [eta_min, eta_max]; eta_max without history.

    Examples:
        >>> config = NewtonConfig(variant="Inexact")
        >>> update_forcing(None, 1.0, None, config)
        0.9
        >>> round(update_forcing(0.9, 0.1, 1.0, config), 12)
        0.009
    """
    if res_norm_prev is None or eta_prev is None or res_norm_prev == 0.0:
        return config.eta_max
    eta = config.gamma * (res_norm / res_norm_prev) ** config.alpha
    return float(min(max(eta, config.eta_min), config.eta_max))


def fd_jacobian(
        residual: Callable[[_numpy.ndarray], _numpy.ndarray],
        x: _numpy.ndarray,
        epsilon: Optional[float] = None,
        r0: Optional[_numpy.ndarray] = None) -> _sparse.csr_matrix:
    """
    Forward-difference Jacobian: column j is (F(x + e_j h_j) - F(x)) / h_j
    with h_j = epsilon, or sqrt(machine eps) * max(1, |x_j|) by default.

    Args:
        residual: The map F.
        x: Linearization point.
        epsilon: Fixed step.
        r0: F(x), when already known.

    Returns:
        scipy.sparse.csr_matrix: The (dense) approximation.
    """
    x = _numpy.asarray(x, dtype=float)
    r0 = _numpy.asarray(residual(x) if r0 is None else r0, dtype=float)
    columns = []
    for j in range(len(x)):
        h = epsilon if epsilon is not None else _SQRT_EPS * max(1.0, abs(x[j]))
        shifted = x.copy()
        shifted[j] += h
        columns.append((_numpy.asarray(residual(shifted), dtype=float) - r0) / h)
    return _sparse.csr_matrix(_numpy.stack(columns, axis=1).reshape(len(r0), len(x)))


def _norm(vec) -> float:
    return float(_numpy.linalg.norm(vec))


class NewtonSolver:
    """
    Newton solver keeping its Jacobian between calls for the
    frozen-Jacobian variant.
    """

    def __init__(self, config: Optional[NewtonConfig] = None, accelerator: Optional['Accelerator'] = None):
        """
        Args:
            config: Solver settings.
            accelerator: Applied to x -> x + d at every iteration; plain
                Newton when omitted.
        """
        self.config = config or NewtonConfig()
        self.accelerator = accelerator or NoAcceleration()
        self._jacobian = None
        self._steps_since_jacobian = 0

    def advance(self) -> None:
        """
        Mark the start of a new time step.
        """
        self._steps_since_jacobian += 1

    def reset(self) -> None:
        """
        Forget the stored Jacobian.
        """
        self._jacobian = None
        self._steps_since_jacobian = 0

    def _wants_jacobian(self, iteration: int) -> bool:
        config = self.config
        if config.variant in ("Exact", "Inexact"):
            return True
        if config.variant == "QuasiNewtonFD":
            return False
        if self._jacobian is None:
            return True
        if iteration == 0:
            return self._steps_since_jacobian >= config.jacobian_step_period
        return config.jacobian_every_n > 0 and iteration % config.jacobian_every_n == 0

    def solve(self, x0: _numpy.ndarray, callbacks: NewtonCallbacks) -> Tuple[_numpy.ndarray, NewtonReport]:
        """
        Iterate from x0 until the residual norm, then the increment norm,
        falls below its tolerance (relative to the initial values when
        configured).

        Returns:
            Tuple[numpy.ndarray, NewtonReport]: The last iterate and the
            report; non-convergence is reported, not raised.
        """
        config = self.config
        x = _numpy.array(x0, dtype=float)
        report = NewtonReport(converged=False, iterations=0)
        self.accelerator.reset()
        eta = None
        previous = None
        reference_residual = reference_increment = None

        for iteration in range(config.max_iterations + 1):
            want = self._wants_jacobian(iteration)
            residual, jacobian = callbacks.assemble(x, want)
            residual = _numpy.asarray(residual, dtype=float)
            if residual.shape != x.shape:
                raise ValueError(f"residual must have shape {x.shape}; got {residual.shape}")
            norm = _norm(residual)
            report.residual_norms.append(norm)
            report.solution_norms.append(_norm(x))
            _logger.debug("Newton iteration %d: residual %.3e", iteration, norm)
            if reference_residual is None:
                reference_residual = norm if config.relative and norm > 0 else 1.0
            if not _numpy.isfinite(norm):
                report.reason = "residual is not finite"
                break
            if norm <= config.tolerance_residual * reference_residual:
                report.converged, report.reason = True, "residual below tolerance"
                break
            if iteration == config.max_iterations:
                report.reason = "maximum number of iterations reached"
                break

            if config.variant == "QuasiNewtonFD":
                jacobian = fd_jacobian(
                    lambda y: callbacks.assemble(y, False)[0], x, config.fd_epsilon, residual)
                report.jacobian_assemblies += 1
            elif want:
                if jacobian is None:
                    raise ValueError("assemble returned no Jacobian although one was requested")
                self._jacobian = jacobian
                self._steps_since_jacobian = 0
                report.jacobian_assemblies += 1
            else:
                jacobian = self._jacobian

            forcing = 0.0
            if config.variant == "Inexact":
                eta = update_forcing(eta, norm, previous, config)
                forcing = eta
            previous = norm

            increment = _numpy.asarray(callbacks.solve(jacobian, residual, forcing), dtype=float)
            x_new = self.accelerator.accelerate(x, x + increment)
            step = _norm(x_new - x)
            x = x_new
            report.iterations += 1
            report.increment_norms.append(step)
            if reference_increment is None:
                reference_increment = step if config.relative and step > 0 else 1.0
            if step <= config.tolerance_increment * reference_increment:
                report.converged, report.reason = True, "increment below tolerance"
                break

        if report.converged:
            _logger.info("%s Newton converged in %d iterations (%s)",
                         config.variant, report.iterations, report.reason)
        else:
            _logger.warning("%s Newton did not converge after %d iterations (%s)",
                            config.variant, report.iterations, report.reason)
        return x, report


def newton_solve(
        x0: _numpy.ndarray,
        callbacks: NewtonCallbacks,
        config: Optional[NewtonConfig] = None) -> Tuple[_numpy.ndarray, NewtonReport]:
    """
    One-shot Newton solve with a fresh solver.

    Examples:
        >>> callbacks = NewtonCallbacks(
        ...     assemble=lambda x, want: (x ** 2 - 2.0, _sparse.diags(2.0 * x)),
        ...     solve=lambda J, r, forcing: -r / J.diagonal())
        >>> x, report = newton_solve(_numpy.array([1.0]), callbacks)
        >>> round(float(x[0]), 9), report.converged
        (1.414213562, True)
    """
    return NewtonSolver(config).solve(x0, callbacks)


# -- acceleration ------------------------------------------------------------

class Accelerator:
    """
    Maps the current iterate x and its image g(x) to the next iterate.
    """

    def reset(self) -> None:
        """
        Forget the history of previous iterations.
        """

    def accelerate(self, x: _numpy.ndarray, gx: _numpy.ndarray) -> _numpy.ndarray:
        raise NotImplementedError


class NoAcceleration(Accelerator):
    """
    Plain fixed-point iteration: x_{k+1} = g(x_k).
    """

    def accelerate(self, x, gx):
        return _numpy.array(gx, dtype=float)


class StaticRelaxation(Accelerator):
    """
    x_{k+1} = x_k + omega (g(x_k) - x_k).
    """

    def __init__(self, omega: float = 1.0):
        self.omega = omega

    def accelerate(self, x, gx):
        x = _numpy.asarray(x, dtype=float)
        return x + self.omega * (_numpy.asarray(gx, dtype=float) - x)


class Aitken(Accelerator):
    """
    Relaxation with a dynamic factor computed from consecutive residuals
    r = g(x) - x.
    """

    def __init__(self, omega: float = 1.0):
        self.initial_omega = omega
        self.reset()

    def reset(self):
        self.omega = self.initial_omega
        self._residual = None

    def accelerate(self, x, gx):
        x = _numpy.asarray(x, dtype=float)
        residual = _numpy.asarray(gx, dtype=float) - x
        if self._residual is not None:
            change = residual - self._residual
            denominator = change @ change
            if denominator > 0.0:
                self.omega = -self.omega * (self._residual @ change) / denominator
        self._residual = residual
        return x + self.omega * residual


class Anderson(Accelerator):
    """
    Anderson mixing over the last depth residual differences, with the
    least-squares problem solved by QR.
    """

    def __init__(self, depth: int = 5, omega: float = 1.0, rcond: float = 1e-12):
        self.depth = depth
        self.omega = omega
        self.rcond = rcond
        self.reset()

    def reset(self):
        self._x: List[_numpy.ndarray] = []
        self._r: List[_numpy.ndarray] = []

    def accelerate(self, x, gx):
        x = _numpy.array(x, dtype=float)
        residual = _numpy.asarray(gx, dtype=float) - x
        self._x.append(x)
        self._r.append(residual)
        del self._x[:-(self.depth + 1)]
        del self._r[:-(self.depth + 1)]
        relaxed = x + self.omega * residual

        d_x = _numpy.diff(_numpy.array(self._x), axis=0).T
        d_r = _numpy.diff(_numpy.array(self._r), axis=0).T
        while d_r.shape[1]:
            q, r = _qr(d_r, mode="economic")
            diagonal = _numpy.abs(_numpy.diag(r))
            if diagonal.min() > self.rcond * max(diagonal.max(), _numpy.finfo(float).tiny):
                gamma = _solve_triangular(r, q.T @ residual)
                return relaxed - (d_x + self.omega * d_r) @ gamma
            # rank deficient: drop the oldest difference
            d_x, d_r = d_x[:, 1:], d_r[:, 1:]
            del self._x[0]
            del self._r[0]
        return relaxed


def build_accelerator(config: AccelerationConfig) -> Accelerator:
    """
    Build the accelerator for a configuration.
    """
    if config.scheme == "StaticRelaxation":
        return StaticRelaxation(config.omega)
    if config.scheme == "Aitken":
        return Aitken(config.omega)
    if config.scheme == "Anderson":
        return Anderson(config.depth, config.omega)
    return NoAcceleration()


def accelerate(state: Accelerator, x: _numpy.ndarray, gx: _numpy.ndarray) -> _numpy.ndarray:
    """
    Next fixed-point iterate from x and g(x), updating state.

    Examples:
        >>> state = build_accelerator(AccelerationConfig("Aitken", 0.5))
        >>> x = _numpy.zeros(1)
        >>> for _ in range(2):
        ...     x = accelerate(state, x, 0.5 * x + 1.0)
        >>> x.tolist()
        [2.0]
    """
    return state.accelerate(x, gx)


# -- handlers ----------------------------------------------------------------

class AccelerationHandler(CoreModel):
    """
    Acceleration scheme of a fixed-point loop chosen from a parameter file.
    """

    def __init__(self, subsection_path: str, default: Optional[AccelerationConfig] = None):
        super().__init__(subsection_path)
        self.config = default or AccelerationConfig()

    def declare_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("Scheme", self.config.scheme, Selection(ACCELERATION_SCHEMES))
        params.declare_entry(
            "Relaxation", self.config.omega, Real(0.0, 2.0),
            "Static relaxation, first Aitken factor or Anderson mixing.")
        params.declare_entry("Anderson depth", self.config.depth, Integer(1))
        params.leave_subsection_path()

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            self.config = AccelerationConfig(
                params.get("Scheme"), params.get_double("Relaxation"),
                params.get_integer("Anderson depth"))
        except ValueError as error:
            raise ParameterError(str(error)) from error
        finally:
            params.leave_subsection_path()

    def build(self) -> Accelerator:
        """
        A fresh accelerator.
        """
        return build_accelerator(self.config)


class NonLinearSolverHandler(CoreModel):
    """
    Newton variant and its constants chosen from a parameter file.
    """

    def __init__(self, subsection_path: str, default: Optional[NewtonConfig] = None):
        """
        Owns "<path> / Non-linear solver", including its "Acceleration"
        subsection used to damp the Newton update.

        Examples:
            >>> handler = NonLinearSolverHandler("Problem")
            >>> _ = handler.setup(
            ...     {"Problem": {"Non-linear solver": {"Type": "FrozenJacobian"}}})
            >>> handler.config.variant
            'FrozenJacobian'
        """
        super().__init__(join_path(subsection_path, "Non-linear solver"))
        self.config = default or NewtonConfig()
        self.acceleration = AccelerationHandler(join_path(self.prm_subsection_path, "Acceleration"))

    def declare_parameters(self, params: ParamTree) -> None:
        config = self.config
        params.enter_subsection_path(self.prm_subsection_path)
        params.declare_entry("Type", config.variant, Selection(NEWTON_VARIANTS))
        params.declare_entry("Maximum number of iterations", config.max_iterations, Integer(1))
        params.declare_entry("Residual tolerance", config.tolerance_residual, Real(0.0))
        params.declare_entry("Increment tolerance", config.tolerance_increment, Real(0.0))
        params.set_verbosity(Verbosity.FULL)
        params.declare_entry(
            "Relative tolerances", config.relative, Bool(),
            "Scale tolerances by the first residual and increment norms.")
        params.reset_verbosity()
        params.enter_subsection_path("Frozen Jacobian")
        params.declare_entry(
            "Reassembly period", config.jacobian_every_n, Integer(0),
            "Rebuild every n iterations within a solve; 0 keeps it for the whole solve.")
        params.declare_entry(
            "Time step period", config.jacobian_step_period, Integer(1),
            "Rebuild once every n time steps.")
        params.leave_subsection_path()
        params.set_verbosity(Verbosity.FULL)
        params.enter_subsection_path("Finite differences")
        params.declare_entry(
            "Epsilon", 0.0 if config.fd_epsilon is None else config.fd_epsilon, Real(0.0),
            "Difference step; 0 selects sqrt(eps) * max(1, |x_j|).")
        params.leave_subsection_path()
        params.enter_subsection_path("Inexact")
        params.declare_entry("Gamma", config.gamma, Real(0.0, 1.0))
        params.declare_entry("Alpha", config.alpha, Real(1.0, 2.0))
        params.declare_entry("Maximum forcing", config.eta_max, Real(0.0, 1.0))
        params.declare_entry("Minimum forcing", config.eta_min, Real(0.0, 1.0))
        params.leave_subsection_path()
        params.reset_verbosity()
        params.leave_subsection_path()
        self.acceleration.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        params.enter_subsection_path(self.prm_subsection_path)
        try:
            epsilon = params.get_double("Finite differences / Epsilon")
            self.config = NewtonConfig(
                variant=params.get("Type"),
                max_iterations=params.get_integer("Maximum number of iterations"),
                tolerance_residual=params.get_double("Residual tolerance"),
                tolerance_increment=params.get_double("Increment tolerance"),
                relative=params.get_bool("Relative tolerances"),
                jacobian_every_n=params.get_integer("Frozen Jacobian / Reassembly period"),
                jacobian_step_period=params.get_integer("Frozen Jacobian / Time step period"),
                fd_epsilon=epsilon if epsilon > 0.0 else None,
                gamma=params.get_double("Inexact / Gamma"),
                alpha=params.get_double("Inexact / Alpha"),
                eta_max=params.get_double("Inexact / Maximum forcing"),
                eta_min=params.get_double("Inexact / Minimum forcing"))
        except ValueError as error:
            raise ParameterError(str(error)) from error
        finally:
            params.leave_subsection_path()
        self.acceleration.parse_parameters(params)

    def build(self) -> NewtonSolver:
        """
        A solver with the configured variant and acceleration.
        """
        return NewtonSolver(self.config, self.acceleration.build())


# -- automatic differentiation -----------------------------------------------

Number = Union[float, _numpy.ndarray]


class Dual:
    """
    Forward-mode dual number over arrays: value has shape S and derivs
    shape S + (k,), one trailing slot per seed direction.
    """

    __array_ufunc__ = None

    def __init__(self, value: Number, derivs: _numpy.ndarray):
        self.value = _numpy.asarray(value, dtype=float)
        self.derivs = _numpy.asarray(derivs, dtype=float)
        if self.derivs.shape[:-1] != self.value.shape:
            raise ValueError(
                f"derivatives must have shape {self.value.shape} + (k,); got {self.derivs.shape}")

    @classmethod
    def variables(cls, x: _numpy.ndarray) -> 'Dual':
        """
        Seed independent variables: d x_i / d x_j = delta_ij.

        Examples:
            >>> Dual.variables(_numpy.array([1.0, 2.0])).derivs.tolist()
            [[1.0, 0.0], [0.0, 1.0]]
        """
        x = _numpy.asarray(x, dtype=float).ravel()
        return cls(x, _numpy.eye(len(x)))

    @classmethod
    def constant(cls, value: Number, n_derivs: int) -> 'Dual':
        value = _numpy.asarray(value, dtype=float)
        return cls(value, _numpy.zeros(value.shape + (n_derivs,)))

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.derivs!r})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __len__(self) -> int:
        return len(self.value)

    def __getitem__(self, index) -> 'Dual':
        return Dual(self.value[index], self.derivs[index])

    def _lift(self, other) -> 'Dual':
        if isinstance(other, Dual):
            return other
        return Dual.constant(other, self.derivs.shape[-1])

    def __neg__(self) -> 'Dual':
        return Dual(-self.value, -self.derivs)

    def __pos__(self) -> 'Dual':
        return self

    def __add__(self, other) -> 'Dual':
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.derivs + other.derivs)
        other = _numpy.asarray(other, dtype=float)
        value = self.value + other
        return Dual(value, _numpy.broadcast_to(self.derivs, value.shape + self.derivs.shape[-1:]))

    __radd__ = __add__

    def __sub__(self, other) -> 'Dual':
        return self + (-other)

    def __rsub__(self, other) -> 'Dual':
        return (-self) + other

    def __mul__(self, other) -> 'Dual':
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.derivs * other.value[..., None] + self.value[..., None] * other.derivs)
        other = _numpy.asarray(other, dtype=float)
        return Dual(self.value * other, self.derivs * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other) -> 'Dual':
        if isinstance(other, Dual):
            return Dual(
                self.value / other.value,
                (self.derivs * other.value[..., None] - self.value[..., None] * other.derivs)
                / (other.value ** 2)[..., None])
        other = _numpy.asarray(other, dtype=float)
        return Dual(self.value / other, self.derivs / other[..., None])

    def __rtruediv__(self, other) -> 'Dual':
        return self._lift(other) / self

    def __pow__(self, exponent) -> 'Dual':
        if isinstance(exponent, Dual):
            return exp(exponent * log(self))
        exponent = float(exponent)
        if exponent == 0.0:
            return Dual.constant(_numpy.ones_like(self.value), self.derivs.shape[-1])
        return Dual(
            self.value ** exponent,
            self.derivs * (exponent * self.value ** (exponent - 1.0))[..., None])

    def __rpow__(self, base) -> 'Dual':
        return exp(self * _numpy.log(base))

    def __matmul__(self, other) -> 'Dual':
        if isinstance(other, Dual):
            raise TypeError("product of two dual arrays is not supported")
        other = _numpy.asarray(other, dtype=float)
        derivs = _numpy.moveaxis(_numpy.moveaxis(self.derivs, -1, 0) @ other, 0, -1)
        return Dual(self.value @ other, derivs)

    def __rmatmul__(self, other) -> 'Dual':
        other = _numpy.asarray(other, dtype=float)
        if self.value.ndim == 1:
            derivs = other @ self.derivs
        else:
            derivs = _numpy.moveaxis(other @ _numpy.moveaxis(self.derivs, -1, 0), 0, -1)
        return Dual(other @ self.value, derivs)

    def sum(self, axis: Optional[int] = None) -> 'Dual':
        """
        Sum over all entries, or over one value axis.
        """
        if axis is None:
            k = self.derivs.shape[-1]
            return Dual(self.value.sum(), self.derivs.reshape(-1, k).sum(axis=0))
        axis = axis % self.value.ndim
        return Dual(self.value.sum(axis=axis), self.derivs.sum(axis=axis))


def _unary(name: str, f, df):
    def function(x):
        if isinstance(x, Dual):
            return Dual(f(x.value), x.derivs * df(x.value)[..., None])
        return f(x)

    function.__name__ = name
    function.__doc__ = f"{name} of a number, array or dual number."
    return function


sin = _unary("sin", _numpy.sin, _numpy.cos)
cos = _unary("cos", _numpy.cos, lambda v: -_numpy.sin(v))
exp = _unary("exp", _numpy.exp, _numpy.exp)
log = _unary("log", _numpy.log, lambda v: 1.0 / v)
sqrt = _unary("sqrt", _numpy.sqrt, lambda v: 0.5 / _numpy.sqrt(v))


def jacobian_via_dual(
        residual_fn: Callable[[Dual], Dual],
        x: _numpy.ndarray) -> Tuple[_numpy.ndarray, _numpy.ndarray]:
    """
    Residual and Jacobian of a vector function by forward-mode
    differentiation.

    Returns:
        Tuple[numpy.ndarray, numpy.ndarray]: F(x) and the dense Jacobian.

    Examples:
        >>> def F(z):
        ...     return stack([z[0] * z[1], z[0] + z[1]])
        >>> value, jacobian = jacobian_via_dual(F, _numpy.array([2.0, 3.0]))
        >>> jacobian.tolist()
        [[3.0, 2.0], [1.0, 1.0]]
    """
    result = residual_fn(Dual.variables(x))
    if not isinstance(result, Dual):
        result = Dual.constant(result, len(_numpy.ravel(x)))
    k = result.derivs.shape[-1]
    return result.value.reshape(-1), result.derivs.reshape(-1, k)


def stack(items) -> Dual:
    """
    Stack scalar dual numbers into a dual vector.
    """
    items = list(items)
    k = next(item.derivs.shape[-1] for item in items if isinstance(item, Dual))
    lifted = [item if isinstance(item, Dual) else Dual.constant(item, k) for item in items]
    return Dual(
        _numpy.stack([item.value for item in lifted]),
        _numpy.stack([item.derivs for item in lifted]))


def interleave(parts):
    """
    Interleave equal-length vectors entry by entry, as the components of
    a vector space: [a0, b0, a1, b1, ...]. Works on arrays and dual
    numbers alike.

    Examples:
        >>> interleave([_numpy.array([1.0, 2.0]), _numpy.array([3.0, 4.0])]).tolist()
        [1.0, 3.0, 2.0, 4.0]
    """
    parts = list(parts)
    if not any(isinstance(part, Dual) for part in parts):
        return _numpy.stack([_numpy.asarray(part, dtype=float) for part in parts], axis=1).reshape(-1)
    k = next(part.derivs.shape[-1] for part in parts if isinstance(part, Dual))
    lifted = [part if isinstance(part, Dual) else Dual.constant(part, k) for part in parts]
    return Dual(
        _numpy.stack([part.value for part in lifted], axis=1).reshape(-1),
        _numpy.stack([part.derivs for part in lifted], axis=1).reshape(-1, k))
