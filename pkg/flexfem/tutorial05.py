"""
The coupled parabolic system of :mod:`flexfem.tutorial06` solved
monolithically: one Newton iteration per step on both fields.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial05:parser
   :prog: flexfem tutorial05
"""

# annotations
from typing import Optional

# external
import argparse as _argparse
from pathlib import Path as _Path

# internal
from flexfem._params import CLI_PARSER
from flexfem.tutorial06 import ParabolicSystem


__all__ = [
    "MonolithicSystem",
    "parser"]


class MonolithicSystem(ParabolicSystem):
    """
    ParabolicSystem defaulting to the monolithic scheme.
    """

    default_scheme = "Monolithic"

    def __init__(self, subsection_path: str = "Tutorial05", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="coupled parabolic system, monolithic scheme")
parser.set_defaults(model=MonolithicSystem)
