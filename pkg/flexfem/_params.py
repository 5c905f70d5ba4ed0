"""
Tree-structured parameter declaration and parsing, with verbosity
control, default overrides and command-line handling.

Parameters are declared by models into a :class:`ParamTree` and read
back from ``prm`` or ``json`` files. The ``prm`` grammar is::

    # comment
    subsection Linear solver
      set Type = GMRES
      subsection GMRES
        set Max. number of temporary vectors = 100
      end
    end

Entry names may contain spaces and dots but not ``=``, ``#`` or ``/``;
values are trimmed and may not contain ``#``. Names and selections are
case-sensitive.
"""

# annotations
from typing import (
    Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union)

# external
import re as _re
import abc as _abc
import json as _json
import enum as _enum
import logging as _logging
import argparse as _argparse
import dataclasses as _dataclasses
from pathlib import Path as _Path

# internal
from flexfem._core import (
    CliError,
    DeclarationError,
    ParameterError,
    ParseError,
    UnknownParameterError,
    split_path as _split_path)


__all__ = [
    "Verbosity",
    "Validator",
    "AnyString",
    "Integer",
    "Real",
    "Bool",
    "Selection",
    "ParamEntry",
    "ParamTree",
    "ParamOverlay",
    "CliOptions",
    "declare",
    "parse_prm",
    "parse_json",
    "parse_json_data",
    "emit",
    "apply_overrides",
    "read_params_file",
    "write_params_file",
    "params_format",
    "parse_cli",
    "CLI_PARSER"]


_logger = _logging.getLogger(__name__)


ParamOverlay = List[Tuple[Tuple[str, ...], str, str]]
"""
A list of (subsection path, entry name, value) assignments read from a
parameter file, not yet checked against a declared tree.
"""


_FORBIDDEN_NAME = _re.compile(r"[=#/\n]")
_INTEGER = _re.compile(r"^[+-]?\d+$")
_INDENT = "  "


class Verbosity(_enum.IntEnum):
    """
    Visibility class of a parameter; a file generated at level L lists
    every entry with verbosity <= L.
    """

    MINIMAL = 0
    STANDARD = 1
    FULL = 2

    @classmethod
    def parse(cls, value: Union[str, 'Verbosity']) -> 'Verbosity':
        """
        Get a Verbosity from its lower-case name.

        Examples:
            >>> Verbosity.parse("full")
            <Verbosity.FULL: 2>
        """
        if isinstance(value, Verbosity):
            return value
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ParameterError(
                f"verbosity must be one of minimal, standard, full; got {value!r}") from None


class Validator(_abc.ABC):
    """
    Pattern a parameter value must match.
    """

    @_abc.abstractmethod
    def check(self, value: str) -> bool:
        """
        True when value is acceptable.
        """

    @_abc.abstractmethod
    def describe(self) -> str:
        """
        Human readable description of accepted values.
        """

    def convert(self, value: str) -> Any:
        """
        Convert an accepted value to its Python type.
        """
        return value

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.describe()})"


class AnyString(Validator):
    """
    Accepts any single-line string.
    """

    def check(self, value: str) -> bool:
        return "\n" not in value and "#" not in value

    def describe(self) -> str:
        return "any string"


class Integer(Validator):
    """
    Accepts integers in the closed range [minimum, maximum].
    """

    def __init__(self, minimum: Optional[int] = None, maximum: Optional[int] = None):
        self.minimum = minimum
        self.maximum = maximum

    def check(self, value: str) -> bool:
        if not _INTEGER.match(value.strip()):
            return False
        number = int(value)
        return ((self.minimum is None or number >= self.minimum)
                and (self.maximum is None or number <= self.maximum))

    def convert(self, value: str) -> int:
        return int(value)

    def describe(self) -> str:
        low = "-inf" if self.minimum is None else self.minimum
        high = "inf" if self.maximum is None else self.maximum
        return f"integer in [{low}, {high}]"


class Real(Validator):
    """
    Accepts floating point numbers in the closed range [minimum, maximum].
    """

    def __init__(self, minimum: Optional[float] = None, maximum: Optional[float] = None):
        self.minimum = minimum
        self.maximum = maximum

    def check(self, value: str) -> bool:
        try:
            number = float(value)
        except ValueError:
            return False
        if number != number:
            return False
        return ((self.minimum is None or number >= self.minimum)
                and (self.maximum is None or number <= self.maximum))

    def convert(self, value: str) -> float:
        return float(value)

    def describe(self) -> str:
        low = "-inf" if self.minimum is None else self.minimum
        high = "inf" if self.maximum is None else self.maximum
        return f"real in [{low}, {high}]"


class Bool(Validator):
    """
    Accepts "true" or "false".
    """

    def check(self, value: str) -> bool:
        return value in ("true", "false")

    def convert(self, value: str) -> bool:
        return value == "true"

    def describe(self) -> str:
        return "true|false"


class Selection(Validator):
    """
    Accepts one of a fixed list of options (case-sensitive).
    """

    def __init__(self, options: Sequence[str]):
        self.options = tuple(options)
        if not self.options:
            raise DeclarationError("selection must offer at least one option")

    def check(self, value: str) -> bool:
        return value in self.options

    def describe(self) -> str:
        return "|".join(self.options)


class ParamEntry:
    """
    A declared parameter.
    """

    def __init__(
            self,
            default_value: str,
            validator: Validator,
            description: str = "",
            verbosity: Verbosity = Verbosity.STANDARD):
        """
        A parameter's default and current value with its validator.

        Args:
            default_value: Default as it is written in a parameter file.
            validator: Pattern values must match.
            description: Text written as comment lines in prm files.
            verbosity: Lowest generation level that lists the entry.

        Raises:
            DeclarationError: When the default violates the validator.
        """
        default_value = str(default_value).strip()
        if not validator.check(default_value):
            raise DeclarationError(
                f"default must satisfy {validator!r}; got {default_value!r}")
        self.default_value = default_value
        self.current_value = default_value
        self.validator = validator
        self.description = str(description)
        self.verbosity = Verbosity(verbosity)

    def __repr__(self) -> str:
        return f"ParamEntry({self.current_value!r}, {self.validator!r}, {self.verbosity.name})"


class _Node:
    """
    A subsection: ordered child subsections and ordered entries.
    """

    def __init__(self):
        self.subsections: Dict[str, '_Node'] = {}
        self.entries: Dict[str, ParamEntry] = {}

    def visible(self, level: Verbosity) -> bool:
        return (any(entry.verbosity <= level for entry in self.entries.values())
                or any(node.visible(level) for node in self.subsections.values()))


class ParamTree:
    """
    Hierarchical store of declared parameters.
    """

    def __init__(self):
        """
        An empty tree. Declarations happen relative to a current path,
        navigated with enter_subsection_path/leave_subsection_path, at the
        current verbosity (standard unless changed with set_verbosity).

        Examples:
            >>> params = ParamTree()
            >>> params.enter_subsection_path("Problem / Linear solver")
            >>> params.declare_entry("Type", "GMRES", Selection(["CG", "GMRES"]))
            >>> params.get("Type")
            'GMRES'
            >>> params.leave_subsection_path()
            >>> params.get("Problem / Linear solver / Type")
            'GMRES'
        """
        self.root = _Node()
        self._path: List[str] = []
        self._entered: List[int] = []
        self._verbosity = Verbosity.STANDARD

    # -- navigation --------------------------------------------------------

    @property
    def current_path(self) -> Tuple[str, ...]:
        """
        The subsection path declarations and lookups are relative to.
        """
        return tuple(self._path)

    def enter_subsection_path(self, path: Union[str, Sequence[str]]) -> None:
        """
        Descend into a (possibly multi-level) subsection path.
        """
        parts = _split_path(path)
        self._path.extend(parts)
        self._entered.append(len(parts))

    def leave_subsection_path(self) -> None:
        """
        Undo the matching enter_subsection_path.
        """
        if not self._entered:
            raise ParameterError("leave_subsection_path without matching enter")
        count = self._entered.pop()
        del self._path[len(self._path) - count:]

    def set_verbosity(self, verbosity: Union[str, Verbosity]) -> None:
        """
        Set the verbosity of subsequent declarations.
        """
        self._verbosity = Verbosity.parse(verbosity)

    def reset_verbosity(self) -> None:
        """
        Return to standard verbosity.
        """
        self._verbosity = Verbosity.STANDARD

    # -- declaration -------------------------------------------------------

    def _node(self, path: Sequence[str], create: bool = False) -> Optional[_Node]:
        node = self.root
        for name in path:
            if name not in node.subsections:
                if not create:
                    return None
                if name in node.entries:
                    raise DeclarationError(f"subsection name clashes with a parameter: {name!r}")
                node.subsections[name] = _Node()
            node = node.subsections[name]
        return node

    def declare_entry(
            self,
            name: str,
            default: Any,
            validator: Optional[Validator] = None,
            description: str = "",
            verbosity: Optional[Verbosity] = None) -> None:
        """
        Declare an entry at the current path.

        Args:
            name: Entry name, unique within its subsection.
            default: Default value; bools are written true/false.
            validator: Accepted values; any string when omitted.
            description: Comment text for prm files.
            verbosity: Overrides the current verbosity for this entry.

        Raises:
            DeclarationError: On a duplicate or malformed name or a
                default rejected by the validator.
        """
        declare(self, self.current_path, name, default, validator,
                self._verbosity if verbosity is None else verbosity, description)

    # -- access ------------------------------------------------------------

    def _locate(self, name: str) -> Tuple[Tuple[str, ...], str]:
        parts = _split_path(name)
        if not parts:
            raise ParameterError("parameter name must be nonempty")
        return self.current_path + parts[:-1], parts[-1]

    def entry(self, path: Union[str, Sequence[str]], name: str) -> ParamEntry:
        """
        Get the entry declared at an absolute path.

        Raises:
            UnknownParameterError: When no such entry exists.
        """
        path = _split_path(path)
        node = self._node(path)
        if node is None or name not in node.entries:
            location = " / ".join((*path, name))
            raise UnknownParameterError(f"unknown parameter: {location}")
        return node.entries[name]

    def has_entry(self, path: Union[str, Sequence[str]], name: str) -> bool:
        """
        True when an entry is declared at an absolute path.
        """
        node = self._node(_split_path(path))
        return node is not None and name in node.entries

    def get(self, name: str) -> str:
        """
        Current value of an entry, relative to the current path; name may
        carry a relative subsection prefix like "Linear solver / Type".
        """
        return self.entry(*self._locate(name)).current_value

    def get_integer(self, name: str) -> int:
        """
        Current value of an entry as int.
        """
        return int(self.get(name))

    def get_double(self, name: str) -> float:
        """
        Current value of an entry as float.
        """
        return float(self.get(name))

    def get_bool(self, name: str) -> bool:
        """
        Current value of an entry as bool.
        """
        value = self.get(name)
        if value not in ("true", "false"):
            raise ParameterError(f"{name} must be true or false; got {value!r}")
        return value == "true"

    def walk(self) -> Iterator[Tuple[Tuple[str, ...], str, ParamEntry]]:
        """
        Yield (path, name, entry) for every entry in declaration order,
        entries of a subsection before its children.
        """
        def _walk(node: _Node, path: Tuple[str, ...]):
            for name, entry in node.entries.items():
                yield path, name, entry
            for name, child in node.subsections.items():
                yield from _walk(child, path + (name,))

        yield from _walk(self.root, ())

    # -- application -------------------------------------------------------

    def _checked(self, overlay: ParamOverlay) -> List[Tuple[ParamEntry, str]]:
        checked = []
        for path, name, value in overlay:
            entry = self.entry(path, name)
            value = str(value).strip()
            if not entry.validator.check(value):
                location = " / ".join((*path, name))
                raise ParameterError(
                    f"{location} must be {entry.validator.describe()}; got {value!r}")
            checked.append((entry, value))
        return checked

    def apply(self, overlay: ParamOverlay) -> None:
        """
        Set current values from an overlay; nothing changes on error.

        Raises:
            UnknownParameterError: When an assignment names no entry.
            ParameterError: When a value is rejected by its validator.
        """
        for entry, value in self._checked(overlay):
            entry.current_value = value
        _logger.debug("applied %d parameter assignments", len(overlay))


def declare(
        tree: ParamTree,
        path: Union[str, Sequence[str]],
        name: str,
        default: Any,
        validator: Optional[Validator] = None,
        verbosity: Union[str, Verbosity] = Verbosity.STANDARD,
        description: str = "") -> None:
    """
    Declare an entry at an absolute subsection path.

    Args:
        tree: The tree to declare into.
        path: Subsection path; components must be nonempty.
        name: Entry name, unique within the subsection.
        default: Default value.
        validator: Accepted values; any string when omitted.
        verbosity: Lowest generation level that lists the entry.
        description: Comment text for prm files.

    Raises:
        DeclarationError: On a duplicate or malformed name or a default
            rejected by the validator.

    Examples:
        >>> tree = ParamTree()
        >>> declare(tree, "Problem", "Element type", "Hex", Selection(["Hex"]))
        >>> declare(tree, "Problem", "Element type", "Hex")
        Traceback (most recent call last):
        ...
        flexfem._core.DeclarationError: duplicate parameter: Problem / Element type
    """
    path = _split_path(path)
    name = str(name).strip()
    if not name or _FORBIDDEN_NAME.search(name):
        raise DeclarationError(f"parameter name must be nonempty without '=', '#', '/'; got {name!r}")
    if isinstance(default, bool):
        default = "true" if default else "false"
    node = tree._node(path, create=True)
    if name in node.entries:
        raise DeclarationError(f"duplicate parameter: {' / '.join((*path, name))}")
    if name in node.subsections:
        raise DeclarationError(f"parameter name clashes with a subsection: {' / '.join((*path, name))}")
    node.entries[name] = ParamEntry(
        default, validator or AnyString(), description, Verbosity.parse(verbosity))


def parse_prm(text: str) -> ParamOverlay:
    """
    Read the assignments of a prm file.

    Args:
        text: File content.

    Returns:
        ParamOverlay: Assignments in file order.

    Raises:
        ParseError: On a syntax error, with its line number.

    Examples:
        >>> parse_prm("subsection Linear solver\\n set Type = GMRES\\nend")
        [(('Linear solver',), 'Type', 'GMRES')]
    """
    overlay: ParamOverlay = []
    path: List[str] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *rest = line.split(None, 1)
        rest = rest[0].strip() if rest else ""
        if keyword == "subsection":
            if not rest:
                raise ParseError("subsection without a name", number)
            path.append(rest)
        elif keyword == "end" and not rest:
            if not path:
                raise ParseError("'end' without matching subsection", number)
            path.pop()
        elif keyword == "set":
            name, equals, value = rest.partition("=")
            if not equals or not name.strip():
                raise ParseError(f"expected 'set <name> = <value>'; got {line!r}", number)
            overlay.append((tuple(path), name.strip(), value.strip()))
        else:
            raise ParseError(f"unexpected statement {line!r}", number)
    if path:
        raise ParseError(f"missing 'end' for subsection {' / '.join(path)}")
    return overlay


def _json_value(value: Any, location: str) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return value.strip()
    raise ParseError(f"{location} must be a string, number or bool; got {value!r}")


def parse_json_data(data: Dict[str, Any]) -> ParamOverlay:
    """
    Read the assignments of already decoded json data: nested objects are
    subsections, leaves are values.

    Examples:
        >>> parse_json_data({"Preconditioner": {"AMG": {"W-cycle": True}}})
        [(('Preconditioner', 'AMG'), 'W-cycle', 'true')]
    """
    if not isinstance(data, dict):
        raise ParseError(f"parameter json must be an object; got {type(data).__name__}")

    overlay: ParamOverlay = []

    def _read(node: Dict[str, Any], path: Tuple[str, ...]):
        for name, value in node.items():
            if isinstance(value, dict):
                _read(value, path + (name.strip(),))
            else:
                location = " / ".join((*path, name))
                overlay.append((path, name.strip(), _json_value(value, location)))

    _read(data, ())
    return overlay


def parse_json(text: str) -> ParamOverlay:
    """
    Read the assignments of a json parameter file.

    Raises:
        ParseError: On malformed json, with its line number.

    Examples:
        >>> parse_json('{"Problem": {"Element type": "Hex"}}')
        [(('Problem',), 'Element type', 'Hex')]
    """
    if not text.strip():
        return []
    try:
        data = _json.loads(text)
    except _json.JSONDecodeError as error:
        raise ParseError(f"malformed json: {error.msg}", error.lineno) from None
    return parse_json_data(data)


def _emit_prm(node: _Node, level: Verbosity, depth: int, lines: List[str]) -> None:
    indent = _INDENT * depth
    entries = [(name, entry) for name, entry in node.entries.items() if entry.verbosity <= level]
    width = max((len(name) for name, _ in entries), default=0)
    for name, entry in entries:
        for text in entry.description.splitlines():
            lines.append(f"{indent}# {text}".rstrip())
        lines.append(f"{indent}set {name.ljust(width)} = {entry.current_value}".rstrip())
    emitted = bool(entries)
    for name, child in node.subsections.items():
        if not child.visible(level):
            continue
        if emitted:
            lines.append("")
        emitted = True
        lines.append(f"{indent}subsection {name}")
        _emit_prm(child, level, depth + 1, lines)
        lines.append(f"{indent}end")


def _emit_json(node: _Node, level: Verbosity) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        name: entry.current_value
        for name, entry in node.entries.items() if entry.verbosity <= level}
    for name, child in node.subsections.items():
        if child.visible(level):
            data[name] = _emit_json(child, level)
    return data


def emit(
        tree: ParamTree,
        format: str = "prm",
        verbosity: Union[str, Verbosity] = Verbosity.STANDARD) -> str:
    """
    Write the tree as a parameter file.

    Args:
        tree: A fully declared tree.
        format: "prm" or "json".
        verbosity: Entries with a higher verbosity are left out.

    Returns:
        str: The file content; it parses back without error.

    Examples:
        >>> tree = ParamTree()
        >>> declare(tree, "Linear solver", "Type", "GMRES", description="Solver.")
        >>> print(emit(tree), end="")
        # Listing of Parameters
        # ---------------------
        subsection Linear solver
          # Solver.
          set Type = GMRES
        end
    """
    level = Verbosity.parse(verbosity)
    if format == "json":
        return _json.dumps(_emit_json(tree.root, level), indent=2) + "\n"
    if format != "prm":
        raise ParameterError(f"format must be prm or json; got {format!r}")
    lines = ["# Listing of Parameters", "# ---------------------"]
    _emit_prm(tree.root, level, 0, lines)
    return "\n".join(lines) + "\n"


def apply_overrides(
        tree: ParamTree,
        overrides: Union[str, Dict[str, Any], ParamOverlay]) -> None:
    """
    Replace declared defaults; nothing changes on error.

    Args:
        tree: The declared tree.
        overrides: json text, decoded json data or an overlay naming
            declared entries and their new defaults.

    Raises:
        UnknownParameterError: When an override names no entry.
        ParameterError: When a new default is rejected by its validator.
    """
    if isinstance(overrides, str):
        overrides = parse_json(overrides)
    elif isinstance(overrides, dict):
        overrides = parse_json_data(overrides)
    for entry, value in tree._checked(overrides):
        entry.default_value = value
        entry.current_value = value
    _logger.debug("applied %d default overrides", len(overrides))


def params_format(path: Union[str, _Path]) -> str:
    """
    Parameter file format inferred from the file extension.

    Examples:
        >>> params_format("p.json")
        'json'
    """
    suffix = _Path(path).suffix.lstrip(".").lower()
    if suffix not in ("prm", "json"):
        raise ParameterError(f"parameter file extension must be .prm or .json; got {str(path)!r}")
    return suffix


def read_params_file(tree: ParamTree, path: Union[str, _Path]) -> None:
    """
    Parse a prm or json file into the declared tree.
    """
    path = _Path(path)
    parse = parse_json if params_format(path) == "json" else parse_prm
    tree.apply(parse(path.read_text(encoding="utf-8")))
    _logger.info("read parameters from %s", path)


def write_params_file(
        tree: ParamTree,
        path: Union[str, _Path],
        verbosity: Union[str, Verbosity] = Verbosity.STANDARD) -> None:
    """
    Write the declared tree to a prm or json file.
    """
    path = _Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(emit(tree, params_format(path), verbosity), encoding="utf-8")
    _logger.info("wrote %s parameters to %s", Verbosity.parse(verbosity).name.lower(), path)


@_dataclasses.dataclass
class CliOptions:
    """
    Parsed command-line options of an application.
    """

    help: bool = False
    generate: Optional[Verbosity] = None
    params_file: Optional[_Path] = None
    output_dir: _Path = _Path("output")
    app_args: List[str] = _dataclasses.field(default_factory=list)


class _Parser(_argparse.ArgumentParser):

    def error(self, message: str):
        raise CliError(f"{self.format_usage()}{self.prog}: error: {message}")


CLI_PARSER = _Parser(
    prog="flexfem <tutorial-name>",
    formatter_class=_argparse.RawTextHelpFormatter,
    add_help=False,
    description="options shared by every application")
CLI_PARSER.add_argument(
    "-h", "--help",
    action="store_true",
    help="show this help message and exit")
CLI_PARSER.add_argument(
    "-g", "--generate-params",
    nargs="?",
    const="standard",
    choices=["minimal", "standard", "full"],
    dest="generate",
    metavar="{minimal,full}",
    help="write the parameter file given by -f and exit;"
         "\ndefault verbosity: standard")
CLI_PARSER.add_argument(
    "-f", "--params-file",
    type=_Path,
    dest="params_file",
    help="parameter file (.prm or .json)")
CLI_PARSER.add_argument(
    "-o", "--output-directory",
    type=_Path,
    default=_Path("output"),
    dest="output_dir",
    help="directory for output files;"
         "\ndefault: %(default)s")


def parse_cli(argv: Sequence[str]) -> CliOptions:
    """
    Parse the options shared by every application.

    Args:
        argv: Arguments following the application name.

    Returns:
        CliOptions: Parsed options; positional tokens land in app_args.

    Raises:
        CliError: On an unknown flag or a bad flag argument.

    Examples:
        >>> parse_cli(["-g", "full", "-f", "p.prm"]).generate
        <Verbosity.FULL: 2>
    """
    namespace, rest = CLI_PARSER.parse_known_args(list(argv))
    unknown = [token for token in rest if token.startswith("-") and not _is_number(token)]
    if unknown:
        CLI_PARSER.error(f"unrecognized arguments: {' '.join(unknown)}")
    return CliOptions(
        help=namespace.help,
        generate=None if namespace.generate is None else Verbosity.parse(namespace.generate),
        params_file=namespace.params_file,
        output_dir=namespace.output_dir,
        app_args=list(rest))


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True
