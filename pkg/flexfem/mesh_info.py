"""
Print the measures of the configured box mesh: cell and vertex counts,
volume, boundary measure per tag and cell diameters.

CLI Subcommand
==============

.. autoprogram:: flexfem.mesh_info:parser
   :prog: flexfem mesh-info
"""

# annotations
from typing import Optional

# external
import argparse as _argparse
from pathlib import Path as _Path

# internal
from flexfem._core import CoreModel, status
from flexfem._mesh import BoxMeshHandler, MeshInfo, mesh_info
from flexfem._params import CLI_PARSER, ParamTree


__all__ = [
    "MeshInfoApp",
    "parser"]


class MeshInfoApp(CoreModel):
    """
    Reports MeshInfo of a box mesh.
    """

    def __init__(self, subsection_path: str = "Mesh info", output_dir: Optional[_Path] = None):
        super().__init__(subsection_path, output_dir)
        self.mesh = BoxMeshHandler(subsection_path)

    def declare_parameters(self, params: ParamTree) -> None:
        self.mesh.declare_parameters(params)

    def parse_parameters(self, params: ParamTree) -> None:
        self.mesh.parse_parameters(params)

    def run(self) -> MeshInfo:
        mesh = self.mesh.build()
        info = mesh_info(mesh)
        status(f"{mesh.dim}D box: {mesh.n_cells} cells, {mesh.n_vertices} vertices")
        status(f"volume: {info.volume:.6g}")
        for tag, area in sorted(info.surface_area_by_tag.items()):
            status(f"boundary {tag}: {area:.6g}")
        low, high, mean = info.cell_diameter_stats
        status(f"cell diameter: min {low:.6g}, max {high:.6g}, mean {mean:.6g}")
        return info


parser = _argparse.ArgumentParser(
    prog="mesh-info",
    parents=[CLI_PARSER],
    add_help=False,
    formatter_class=_argparse.RawTextHelpFormatter,
    description="print measures of the configured mesh")
parser.set_defaults(model=MeshInfoApp)
