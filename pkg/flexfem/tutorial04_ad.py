"""
The non-linear parabolic problem of :mod:`flexfem.tutorial04` with the
cell Jacobian assembled by automatic differentiation of the residual.

CLI Subcommand
==============

.. autoprogram:: flexfem.tutorial04_ad:parser
   :prog: flexfem tutorial04_ad
"""

# external
import argparse as _argparse
from pathlib import Path as _Path

# internal
from flexfem._params import CLI_PARSER
from flexfem.tutorial04 import NonlinearHeat


__all__ = [
    "NonlinearHeatAD",
    "parser"]


class NonlinearHeatAD(NonlinearHeat):
    """
    NonlinearHeat defaulting to the AutoDiff Jacobian.
    """

    default_jacobian = "AutoDiff"


parser = _argparse.ArgumentParser(
    prog=_Path(__file__).stem,
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="non-linear parabolic problem, automatic differentiation Jacobian")
parser.set_defaults(model=NonlinearHeatAD)
