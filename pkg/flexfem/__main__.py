"""
Main CLI entry point: ``flexfem <tutorial-name> [flags]``.
"""

# annotations
from typing import Dict, Optional, Sequence

# external
import sys as _sys
import logging as _logging
import argparse as _argparse

# internal
from flexfem._core import CliError, FlexFemError, run_model
from flexfem._params import CliOptions, Verbosity, _Parser
from flexfem import (
    transmission,
    tutorial01,
    tutorial02,
    tutorial03,
    tutorial04,
    tutorial04_ad,
    tutorial05,
    tutorial06,
    tutorial07)
# the package root re-exports the _mesh.mesh_info function under the same name,
# so the application submodule must be imported by its full path
import flexfem.mesh_info as mesh_info


__all__ = [
    "cli_main",
    "parser"]


APPLICATIONS = (
    tutorial01,
    tutorial02,
    tutorial03,
    tutorial04,
    tutorial04_ad,
    tutorial05,
    tutorial06,
    tutorial07,
    transmission,
    mesh_info)


parser = _Parser(
    prog="flexfem",
    formatter_class=_argparse.RawTextHelpFormatter,
    add_help=False,
    description="desk-scale multiphysics finite elements")
parser.add_argument(
    "-h", "--help",
    action="store_true",
    dest="main_help",
    help="show this help message and exit")
parser.add_argument(
    "-v", "--verbose",
    action="count",
    default=0,
    help="log progress; repeat for debug output")
commands = parser.add_subparsers(metavar="TUTORIAL", dest="command")
subparsers: Dict[str, _argparse.ArgumentParser] = {}
for module in APPLICATIONS:
    subparsers[module.parser.prog] = commands.add_parser(
        module.parser.prog,
        parents=[module.parser],
        formatter_class=_argparse.RawTextHelpFormatter,
        help=module.parser.description,
        description=module.parser.description,
        add_help=False)


def _configure_logging(verbose: int) -> None:
    level = _logging.WARNING if verbose == 0 else _logging.INFO if verbose == 1 else _logging.DEBUG
    _logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one application from command-line arguments.

    Returns:
        int: 0 on success, 1 on a run error, 2 on a usage error.
    """
    try:
        namespace, rest = parser.parse_known_args(list(_sys.argv[1:] if argv is None else argv))
        if namespace.main_help:
            parser.print_help()
            return 0
        if namespace.command is None:
            parser.error("a tutorial name is required")
        unknown = [token for token in rest if token.startswith("-")]
        if unknown:
            subparsers[namespace.command].error(f"unrecognized arguments: {' '.join(unknown)}")
        if namespace.help:
            subparsers[namespace.command].print_help()
            return 0
        _configure_logging(namespace.verbose)
        cli = CliOptions(
            help=False,
            generate=None if namespace.generate is None else Verbosity.parse(namespace.generate),
            params_file=namespace.params_file,
            output_dir=namespace.output_dir,
            app_args=list(rest))
        run_model(namespace.model, cli)
    except CliError as error:
        print(error, file=_sys.stderr)
        return 2
    except (FlexFemError, OSError) as error:
        print(f"error: {error}", file=_sys.stderr)
        return 1
    return 0


def _flexfem():
    """
    Main entry point for flexfem CLI.
    """
    _sys.exit(cli_main(_sys.argv[1:]))


if __name__ == '__main__':
    _flexfem()
