"""
Desk-scale multiphysics finite elements on structured box meshes.
"""

# shorten API member imports
from flexfem._core import * # noqa
from flexfem._params import * # noqa
from flexfem._mesh import * # noqa
from flexfem._fem import * # noqa
from flexfem._linalg import * # noqa
from flexfem._timeint import * # noqa
from flexfem._nonlinear import * # noqa
from flexfem._coupling import * # noqa
from flexfem._io import * # noqa
