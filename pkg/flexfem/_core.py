"""
Common functions and artifacts shared between other submodules.
"""

# annotations
from typing import Any, Callable, Optional, Sequence, Tuple, Union, TYPE_CHECKING

# external
import abc as _abc
import logging as _logging
import datetime as _datetime
from pathlib import Path as _Path

import numpy as _numpy
from scipy.optimize import curve_fit as _curve_fit

if TYPE_CHECKING:
    from flexfem._params import CliOptions, ParamTree


__all__ = [
    "FlexFemError",
    "ParameterError",
    "DeclarationError",
    "ParseError",
    "UnknownParameterError",
    "CliError",
    "MeshError",
    "AssemblyError",
    "SolverError",
    "CheckpointError",
    "InterfaceError",
    "DataError",
    "CoreModel",
    "AppContext",
    "join_path",
    "split_path",
    "convergence_rate",
    "run_model",
    "status"]


_logger = _logging.getLogger(__name__)


class FlexFemError(Exception):
    """
    Base class for every error raised by flexfem.
    """


class ParameterError(FlexFemError, ValueError):
    """
    A parameter could not be declared, parsed or applied.
    """


class DeclarationError(ParameterError):
    """
    A parameter declaration is invalid (duplicate name, bad default).
    """


class ParseError(ParameterError):
    """
    A parameter file is malformed.
    """

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class UnknownParameterError(ParameterError):
    """
    A parameter file names an entry that was never declared.
    """


class CliError(FlexFemError):
    """
    The command line could not be parsed; message holds the usage text.
    """


class MeshError(FlexFemError, ValueError):
    """
    Invalid mesh geometry or an unknown boundary tag.
    """


class AssemblyError(FlexFemError, ValueError):
    """
    A local kernel returned data of the wrong shape.
    """


class SolverError(FlexFemError):
    """
    A linear, non-linear or coupling solver failed.
    """


class CheckpointError(FlexFemError):
    """
    A checkpoint file is truncated, corrupt or of another version.
    """


class InterfaceError(FlexFemError, ValueError):
    """
    Two interface discretizations do not match.
    """


class DataError(FlexFemError, ValueError):
    """
    Malformed CSV, VTK or time-series input.
    """


def split_path(path: Union[str, Sequence[str]]) -> Tuple[str, ...]:
    """
    Split a subsection path into its components.

    Args:
        path: A slash-separated string like "Problem / Linear solver" or
            an already split sequence of names.

    Returns:
        Tuple[str, ...]: The trimmed, non-empty path components.

    Raises:
        ParameterError: When a component is empty.

    Examples:
        >>> split_path("Problem / Linear solver")
        ('Problem', 'Linear solver')

        >>> split_path("")
        ()
    """
    parts = path.split("/") if isinstance(path, str) else list(path)
    parts = [part.strip() for part in parts]
    if parts == [""]:
        return ()
    if any(not part for part in parts):
        raise ParameterError(f"subsection path components must be nonempty; got {path!r}")
    return tuple(parts)


def join_path(*paths: Union[str, Sequence[str]]) -> str:
    """
    Join subsection paths with " / ".

    Examples:
        >>> join_path("Tutorial01", "Linear solver")
        'Tutorial01 / Linear solver'
    """
    return " / ".join(part for path in paths for part in split_path(path))


def convergence_rate(h: Sequence[float], errors: Sequence[float]) -> float:
    """
    Estimate the order p in error ≈ C h^p by a log-log least-squares fit.

    Args:
        h: Mesh sizes (or time steps).
        errors: Errors measured at each h.

    Returns:
        float: The fitted slope p.

    Examples:
        >>> round(convergence_rate([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4]), 6)
        2.0
    """
    x = _numpy.log(_numpy.asarray(h, dtype=float))
    y = _numpy.log(_numpy.asarray(errors, dtype=float))
    (slope, _), *_ = _curve_fit(lambda t, p, c: p * t + c, x, y, p0=(1.0, 0.0))
    return float(slope)


def status(message: Any, **kwargs) -> None:
    """
    Print a status message for CLI runs and mirror it to the log.

    Args:
        message: The message to print.
        **kwargs: Additional keyword arguments to pass to print().

    Examples:
        >>> status("step 1")
        step 1
    """
    _logger.info("%s", message)
    print(str(message), **kwargs)


class AppContext:
    """
    Lifespan handler holding the attributes common to a whole run.
    """

    _instance: Optional['AppContext'] = None

    def __init__(self, cli: 'CliOptions', params: Optional['ParamTree'] = None):
        """
        Process-wide run context; exactly one may be live at a time and it
        must be entered before any model runs.

        Args:
            cli: The parsed command line.
            params: The parameter tree of the run; created on demand.

        Examples:
            >>> from flexfem._params import CliOptions
            >>> with AppContext(CliOptions(output_dir=_Path("out"))) as ctx:
            ...     AppContext.get() is ctx
            True
        """
        from flexfem._params import ParamTree

        self.cli = cli
        self.params = params if params is not None else ParamTree()
        self.output_dir = _Path(cli.output_dir)
        self.timestamp = _datetime.datetime.now()

    def __enter__(self) -> 'AppContext':
        if AppContext._instance is not None:
            raise FlexFemError("an AppContext is already live in this process")
        AppContext._instance = self
        _logger.debug("run context opened at %s", self.timestamp.isoformat())
        return self

    def __exit__(self, exception, value, traceback):
        AppContext._instance = None
        _logger.debug("run context closed")
        return False

    @classmethod
    def get(cls) -> Optional['AppContext']:
        """
        The live context, or None outside of a run.
        """
        return cls._instance


class CoreModel(_abc.ABC):
    """
    Interface shared by every model and handler configured from a
    parameter file.
    """

    def __init__(self, subsection_path: str, output_dir: Optional[_Path] = None):
        """
        Base for all models: parameters live below subsection_path and
        are declared, then parsed, then the model is run.

        Args:
            subsection_path: Slash-separated parameter path owned by the
                model, e.g. "Tutorial01 / Linear solver".
            output_dir: Directory for output files; defaults to the live
                AppContext's directory, then to "./output".
        """
        self.prm_subsection_path = join_path(subsection_path)
        self._output_dir = None if output_dir is None else _Path(output_dir)

    @property
    def output_dir(self) -> _Path:
        """
        Where the model writes its files; created on first access.
        """
        context = AppContext.get()
        path = self._output_dir or (context.output_dir if context else _Path("output"))
        path.mkdir(parents=True, exist_ok=True)
        return path

    @_abc.abstractmethod
    def declare_parameters(self, params: 'ParamTree') -> None:
        """
        Declare this model's entries (and those of its handlers).
        """

    @_abc.abstractmethod
    def parse_parameters(self, params: 'ParamTree') -> None:
        """
        Read back this model's entries into attributes.
        """

    def run(self) -> Any:
        """
        Run the model; does nothing by default.
        """
        return None

    def setup(self, values: Optional[dict] = None) -> 'ParamTree':
        """
        Declare, override and parse in one call.

        Args:
            values: Nested dict of entries relative to the tree root, in
                the same shape as a json parameter file.

        Returns:
            ParamTree: The configured tree.
        """
        from flexfem._params import ParamTree, parse_json_data

        params = ParamTree()
        self.declare_parameters(params)
        if values:
            params.apply(parse_json_data(values))
        self.parse_parameters(params)
        return params


def run_model(factory: Callable[[], CoreModel], cli: 'CliOptions') -> Any:
    """
    Run an application from parsed command-line options: open the run
    context, build and declare the model, then either write its parameter
    file (generate mode) or read the parameter file, parse and run.

    Args:
        factory: Builds the model; called inside the run context.
        cli: Parsed options.

    Returns:
        Any: The model's run() result; None in generate mode.
    """
    from flexfem._params import read_params_file, write_params_file

    with AppContext(cli) as context:
        model = factory()
        model.declare_parameters(context.params)
        if cli.generate is not None:
            name = model.prm_subsection_path.split(" / ")[0].lower().replace(" ", "_")
            path = cli.params_file or context.output_dir / f"{name}.prm"
            write_params_file(context.params, path, cli.generate)
            status(f"wrote {path}")
            return None
        if cli.params_file is not None:
            read_params_file(context.params, cli.params_file)
        model.parse_parameters(context.params)
        _logger.info("running %s", type(model).__name__)
        return model.run()
