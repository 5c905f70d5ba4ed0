"""
Data plumbing: CSV tables, time-series interpolation, binary
checkpoints, legacy VTK export and structured-grid import, and contour
export of scalar fields.
"""

# annotations
from typing import Dict, List, Optional, Sequence, Tuple, Union

# external
import csv as _csv
import struct as _struct
import logging as _logging
import dataclasses as _dataclasses
from pathlib import Path as _Path

import numpy as _numpy
from scipy.interpolate import (
    CubicSpline as _CubicSpline,
    RegularGridInterpolator as _RegularGridInterpolator)
from scipy.optimize import brentq as _brentq
from matplotlib import pyplot as _plt

# internal
from flexfem._core import CheckpointError, DataError
from flexfem._fem import FeSpace, evaluate_at_points
from flexfem._mesh import Mesh


__all__ = [
    "INTERPOLATION_MODES",
    "CsvTable",
    "TimeSeries",
    "Checkpoint",
    "GridData",
    "csv_read",
    "csv_write",
    "interp_eval",
    "time_series_from_csv",
    "checkpoint_save",
    "checkpoint_load",
    "vtk_write",
    "grid_read",
    "grid_eval",
    "grid_to_fe",
    "export_contours",
    "plot_convergence"]


_logger = _logging.getLogger(__name__)


PathLike = Union[str, _Path]


# -- CSV ---------------------------------------------------------------------

@_dataclasses.dataclass
class CsvTable:
    """
    Header row plus string cells; every row has the header's arity.
    """

    headers: List[str]
    rows: List[List[str]] = _dataclasses.field(default_factory=list)

    def __post_init__(self):
        self.headers = [str(h) for h in self.headers]
        self.rows = [[_cell(v) for v in row] for row in self.rows]
        for number, row in enumerate(self.rows, start=2):
            if len(row) != len(self.headers):
                raise DataError(
                    f"row {number} must have {len(self.headers)} cells; got {len(row)}")

    def numeric(self) -> _numpy.ndarray:
        """
        All cells as floats, shape (n_rows, n_columns).

        Raises:
            DataError: On a non-numeric cell.
        """
        try:
            return _numpy.array(self.rows, dtype=float).reshape(len(self.rows), len(self.headers))
        except ValueError as error:
            raise DataError(f"table cells must be numeric; {error}") from error

    def column(self, name: str) -> _numpy.ndarray:
        """
        One column as floats.
        """
        if name not in self.headers:
            raise DataError(f"column must be one of {self.headers}; got {name!r}")
        return self.numeric()[:, self.headers.index(name)]


def _cell(value, precision: int = 17) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, _numpy.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, _numpy.integer)):
        return str(int(value))
    return f"{float(value):.{precision}g}"


def csv_read(path: PathLike) -> CsvTable:
    """
    Read a comma-separated table whose first row holds the headers;
    cells may be double-quoted and lines end in LF or CRLF.

    Raises:
        DataError: On an empty file or a ragged row (with its number).
    """
    with open(path, newline="", encoding="utf-8") as stream:
        rows = [row for row in _csv.reader(stream) if row]
    if not rows:
        raise DataError(f"CSV file must have a header row; got an empty file {str(path)!r}")
    return CsvTable(rows[0], rows[1:])


def csv_write(
        path: PathLike,
        table: Union[CsvTable, Tuple[Sequence[str], Sequence[Sequence]]],
        precision: int = 17) -> None:
    """
    Write a table; numeric cells use precision significant digits.

    Args:
        path: Output file.
        table: A CsvTable or (headers, rows) with numbers or strings.
        precision: Significant digits of float cells; 17 round-trips.
    """
    headers, rows = (table.headers, table.rows) if isinstance(table, CsvTable) else table
    path = _Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = _csv.writer(stream, lineterminator="\n")
        writer.writerow(headers)
        for row in rows:
            writer.writerow([_cell(v, precision) for v in row])
    _logger.debug("wrote %s", path)


# -- time interpolation ------------------------------------------------------

INTERPOLATION_MODES = (
    "Linear", "CubicSpline", "SmoothingSpline", "Trigonometric", "DerivativeLinear", "DerivativeSpline")


def _smoothing_spline(times: _numpy.ndarray, values: _numpy.ndarray, budget: float) -> _CubicSpline:
    # curvature-minimizing spline with sum of squared residuals <= budget
    n = len(times)
    if budget <= 0.0 or n < 3:
        return _CubicSpline(times, values, bc_type="natural")
    h = _numpy.diff(times)
    Q = _numpy.zeros((n, n - 2))  # noqa: N806
    R = _numpy.zeros((n - 2, n - 2))  # noqa: N806
    for j in range(1, n - 1):
        Q[j - 1, j - 1] = 1.0 / h[j - 1]
        Q[j, j - 1] = -1.0 / h[j - 1] - 1.0 / h[j]
        Q[j + 1, j - 1] = 1.0 / h[j]
        R[j - 1, j - 1] = (h[j - 1] + h[j]) / 3.0
        if j < n - 2:
            R[j - 1, j] = R[j, j - 1] = h[j] / 6.0
    QtQ, Qty = Q.T @ Q, Q.T @ values  # noqa: N806

    def fitted(weight):
        gamma = _numpy.linalg.solve(R + weight * QtQ, Qty)
        return values - weight * (Q @ gamma)

    def excess(log_weight):
        return float(_numpy.sum((values - fitted(10.0 ** log_weight)) ** 2) - budget)

    low, high = -12.0, 12.0
    if excess(high) <= 0.0:
        smoothed = fitted(10.0 ** high)
    else:
        smoothed = fitted(10.0 ** _brentq(excess, low, high, xtol=1e-14, rtol=1e-14))
    return _CubicSpline(times, smoothed, bc_type="natural")


class TimeSeries:
    """
    Samples of a scalar signal in time with an interpolation mode.
    """

    def __init__(
            self,
            times: Sequence[float],
            values: Sequence[float],
            mode: str = "Linear",
            smoothing: float = 0.0):
        """
        Args:
            times: Strictly increasing sample times, at least 2.
            values: Samples, one per time.
            mode: One of INTERPOLATION_MODES.
            smoothing: Residual budget S of the smoothing spline.

        Raises:
            DataError: On too few or unsorted samples, mismatched
                lengths, or nonuniform spacing for Trigonometric.
        """
        self.times = _numpy.asarray(times, dtype=float)
        self.values = _numpy.asarray(values, dtype=float)
        self.mode = mode
        self.smoothing = float(smoothing)
        if mode not in INTERPOLATION_MODES:
            raise DataError(f"interpolation mode must be one of {INTERPOLATION_MODES}; got {mode!r}")
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise DataError(
                f"times and values must be 1D of equal length; got {self.times.shape} and {self.values.shape}")
        if len(self.times) < 2:
            raise DataError(f"time series must have at least 2 samples; got {len(self.times)}")
        steps = _numpy.diff(self.times)
        if _numpy.any(steps <= 0.0):
            raise DataError("sample times must be strictly increasing")
        if mode == "Trigonometric" and not _numpy.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise DataError("trigonometric interpolation needs uniformly spaced samples")
        if self.smoothing < 0.0:
            raise DataError(f"smoothing budget must be >= 0; got {self.smoothing}")

        self._spline = None
        if mode in ("CubicSpline", "DerivativeSpline"):
            self._spline = _CubicSpline(self.times, self.values, bc_type="natural")
        elif mode == "SmoothingSpline":
            self._spline = _smoothing_spline(self.times, self.values, self.smoothing)
        elif mode == "Trigonometric":
            self._period = len(self.times) * steps[0]
            self._coefficients = _numpy.fft.rfft(self.values) / len(self.values)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def _trigonometric(self, t: _numpy.ndarray) -> _numpy.ndarray:
        n = len(self.values)
        phase = 2.0 * _numpy.pi * (t - self.times[0]) / self._period
        result = _numpy.full(t.shape, self._coefficients[0].real)
        for k in range(1, len(self._coefficients)):
            c = self._coefficients[k]
            if 2 * k == n:
                result += c.real * _numpy.cos(k * phase)
            else:
                result += 2.0 * (c.real * _numpy.cos(k * phase) - c.imag * _numpy.sin(k * phase))
        return result

    def __call__(self, t):
        """
        Evaluate the interpolant; outside the sample range values clamp to
        the end samples and derivatives vanish, except Trigonometric which
        extends periodically.
        """
        t = _numpy.asarray(t, dtype=float)
        inside = (t >= self.times[0]) & (t <= self.times[-1])
        clamped = _numpy.clip(t, self.times[0], self.times[-1])
        if self.mode == "Linear":
            result = _numpy.interp(clamped, self.times, self.values)
        elif self.mode in ("CubicSpline", "SmoothingSpline"):
            result = self._spline(clamped)
        elif self.mode == "Trigonometric":
            result = self._trigonometric(t)
        elif self.mode == "DerivativeSpline":
            result = _numpy.where(inside, self._spline(clamped, 1), 0.0)
        else:
            slopes = _numpy.diff(self.values) / _numpy.diff(self.times)
            segment = _numpy.clip(
                _numpy.searchsorted(self.times, clamped, side="right") - 1, 0, len(slopes) - 1)
            result = _numpy.where(inside, slopes[segment], 0.0)
        return float(result) if result.ndim == 0 else result


def interp_eval(series: TimeSeries, t) -> float:
    """
    Evaluate a time series at t.

    Examples:
        >>> interp_eval(TimeSeries([0.0, 1.0], [0.0, 2.0]), 0.35)
        0.7
    """
    return series(t)


def time_series_from_csv(
        path: PathLike,
        time_column: str,
        value_column: str,
        mode: str = "Linear",
        smoothing: float = 0.0) -> TimeSeries:
    """
    Build a time series from two columns of a CSV file.
    """
    table = csv_read(path)
    return TimeSeries(table.column(time_column), table.column(value_column), mode, smoothing)


# -- checkpoints -------------------------------------------------------------

_MAGIC = b"FXCP"
_VERSION = 1


@_dataclasses.dataclass
class Checkpoint:
    """
    Serialized simulation state: time state, mesh descriptor, element
    degree and named vectors in insertion order.
    """

    time: float
    step: int
    dt: float
    order: int
    mesh: Tuple[int, Tuple[float, ...], Tuple[float, ...], Tuple[int, ...]]
    degree: int
    vectors: Dict[str, _numpy.ndarray] = _dataclasses.field(default_factory=dict)

    def check_mesh(self, mesh: Mesh, degree: int) -> None:
        """
        Raise CheckpointError unless the checkpoint was written for this
        mesh and degree.
        """
        if tuple(self.mesh) != mesh.descriptor or self.degree != degree:
            raise CheckpointError(
                f"checkpoint must match mesh {mesh.descriptor} with degree {degree}; "
                f"got {self.mesh} with degree {self.degree}")


def checkpoint_save(path: PathLike, checkpoint: Checkpoint) -> None:
    """
    Write a checkpoint (little-endian): magic "FXCP", u32 version, f64
    time, u64 step, f64 dt, u32 order, u32 dim, dim f64 lower corner,
    dim f64 upper corner, dim u32 subdivisions, u32 degree, u32 vector
    count, then per vector u32 name length, utf-8 name, u64 length and
    f64 data.
    """
    dim, lower, upper, subdivisions = checkpoint.mesh
    chunks = [
        _MAGIC,
        _struct.pack("<IdQdII", _VERSION, checkpoint.time, checkpoint.step,
                     checkpoint.dt, checkpoint.order, dim),
        _numpy.asarray(lower, dtype="<f8").tobytes(),
        _numpy.asarray(upper, dtype="<f8").tobytes(),
        _numpy.asarray(subdivisions, dtype="<u4").tobytes(),
        _struct.pack("<II", checkpoint.degree, len(checkpoint.vectors))]
    for name, vector in checkpoint.vectors.items():
        encoded = name.encode("utf-8")
        data = _numpy.asarray(vector, dtype="<f8").ravel()
        chunks += [_struct.pack("<I", len(encoded)), encoded, _struct.pack("<Q", len(data)), data.tobytes()]
    path = _Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    _logger.info("wrote checkpoint %s at step %d", path, checkpoint.step)


class _Reader:

    def __init__(self, data: bytes, path: PathLike):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"checkpoint file is truncated: {str(self.path)!r}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return _struct.unpack(fmt, self.take(_struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> _numpy.ndarray:
        return _numpy.frombuffer(self.take(_numpy.dtype(dtype).itemsize * count), dtype=dtype)


def checkpoint_load(path: PathLike) -> Checkpoint:
    """
    Read a checkpoint written by checkpoint_save; floats are bit-exact.

    Raises:
        CheckpointError: On a wrong magic or version, truncation or
            trailing bytes.
    """
    reader = _Reader(_Path(path).read_bytes(), path)
    if reader.take(4) != _MAGIC:
        raise CheckpointError(f"file is not a flexfem checkpoint: {str(path)!r}")
    version, time, step, dt, order, dim = reader.unpack("<IdQdII")
    if version != _VERSION:
        raise CheckpointError(f"checkpoint version must be {_VERSION}; got {version}")
    lower = tuple(float(v) for v in reader.array("<f8", dim))
    upper = tuple(float(v) for v in reader.array("<f8", dim))
    subdivisions = tuple(int(v) for v in reader.array("<u4", dim))
    degree, count = reader.unpack("<II")
    vectors = {}
    for _ in range(count):
        (length,) = reader.unpack("<I")
        try:
            name = reader.take(length).decode("utf-8")
        except UnicodeDecodeError as error:
            raise CheckpointError(f"checkpoint vector name is not utf-8: {error}") from error
        (size,) = reader.unpack("<Q")
        vectors[name] = reader.array("<f8", size).astype(float)
    if reader.offset != len(reader.data):
        raise CheckpointError(f"checkpoint has {len(reader.data) - reader.offset} trailing bytes")
    _logger.info("read checkpoint %s at step %d", path, step)
    return Checkpoint(time, step, dt, order, (dim, lower, upper, subdivisions), degree, vectors)


# -- VTK ---------------------------------------------------------------------

_VTK_CELL_TYPES = {1: 3, 2: 9, 3: 12}
# lattice corner offsets in VTK line/quad/hexahedron order
_VTK_CORNERS = {
    1: [(0,), (1,)],
    2: [(0, 0), (1, 0), (1, 1), (0, 1)],
    3: [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
        (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]}

VtkField = Union[_numpy.ndarray, Tuple[FeSpace, _numpy.ndarray]]


def _lattice_cells(shape: Tuple[int, ...]) -> _numpy.ndarray:
    dim = len(shape)
    grids = _numpy.meshgrid(*[_numpy.arange(n - 1) for n in shape], indexing="ij")
    origins = _numpy.stack([g.ravel(order="F") for g in grids], axis=-1)
    corners = _numpy.array(_VTK_CORNERS[dim])
    index = origins[:, None, :] + corners[None, :, :]
    return _numpy.ravel_multi_index(tuple(index[..., d] for d in range(dim)), shape, order="F")


def _fmt(values: _numpy.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in _numpy.ravel(values))


def vtk_write(
        path: PathLike,
        space: FeSpace,
        named_vectors: Dict[str, VtkField],
        time: Optional[float] = None) -> None:
    """
    Write legacy ASCII VTK (DataFile Version 3.0) unstructured-grid data
    on the support-point lattice of a space; degree 2 spaces are written
    on their refined lattice with linear sub-cells.

    Args:
        path: Output file.
        space: Space whose lattice defines points and cells.
        named_vectors: Point data: a vector of space, or a (space,
            vector) pair on the same mesh evaluated at the lattice
            points. Vectors with dim components become VECTORS, other
            multi-component data one SCALARS array per component.
        time: Stored as field data TIME.
    """
    dim = space.dim
    points = space.node_coords
    n_points = len(points)
    cells = _lattice_cells(space.node_shape)
    padded = _numpy.zeros((n_points, 3))
    padded[:, :dim] = points

    lines = ["# vtk DataFile Version 3.0", "flexfem output", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    if time is not None:
        lines += ["FIELD FieldData 1", "TIME 1 1 double", f"{time:.17g}"]
    lines.append(f"POINTS {n_points} double")
    lines += [_fmt(p) for p in padded]
    lines.append(f"CELLS {len(cells)} {len(cells) * (cells.shape[1] + 1)}")
    lines += [f"{cells.shape[1]} " + " ".join(str(v) for v in cell) for cell in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(_VTK_CELL_TYPES[dim])] * len(cells)

    if named_vectors:
        lines.append(f"POINT_DATA {n_points}")
    for name, field in named_vectors.items():
        source, vector = field if isinstance(field, tuple) else (space, field)
        if source is space:
            data = _numpy.asarray(vector, dtype=float).reshape(n_points, source.n_components)
        else:
            data = evaluate_at_points(source, vector, points).reshape(n_points, source.n_components)
        label = name.replace(" ", "_")
        if data.shape[1] == dim and dim > 1:
            vectors = _numpy.zeros((n_points, 3))
            vectors[:, :dim] = data
            lines.append(f"VECTORS {label} double")
            lines += [_fmt(v) for v in vectors]
            continue
        for c in range(data.shape[1]):
            suffix = f"_{c}" if data.shape[1] > 1 else ""
            lines += [f"SCALARS {label}{suffix} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in data[:, c]]

    path = _Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    _logger.debug("wrote %s", path)


@_dataclasses.dataclass
class GridData:
    """
    Point data on a structured lattice; points are numbered with x
    running fastest and arrays have shape (n_points,) or (n_points, k).
    """

    origin: _numpy.ndarray
    spacing: _numpy.ndarray
    dimensions: Tuple[int, ...]
    arrays: Dict[str, _numpy.ndarray] = _dataclasses.field(default_factory=dict)

    def __post_init__(self):
        self.origin = _numpy.asarray(self.origin, dtype=float)
        self.spacing = _numpy.asarray(self.spacing, dtype=float)
        self.dimensions = tuple(int(n) for n in self.dimensions)
        for name, values in self.arrays.items():
            if len(values) != self.n_points:
                raise DataError(
                    f"array {name!r} must have {self.n_points} points; got {len(values)}")

    @property
    def dim(self) -> int:
        return len(self.dimensions)

    @property
    def n_points(self) -> int:
        return int(_numpy.prod(self.dimensions))

    @property
    def axes(self) -> List[_numpy.ndarray]:
        return [o + s * _numpy.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dimensions)]

    @property
    def points(self) -> _numpy.ndarray:
        grids = _numpy.meshgrid(*self.axes, indexing="ij")
        return _numpy.stack([g.ravel(order="F") for g in grids], axis=-1)


class _Tokens:

    def __init__(self, text: str):
        self.tokens = text.split()
        self.position = 0

    def next(self) -> str:
        if self.position >= len(self.tokens):
            raise DataError("VTK file ended unexpectedly")
        token = self.tokens[self.position]
        self.position += 1
        return token

    def floats(self, count: int) -> _numpy.ndarray:
        chunk = self.tokens[self.position:self.position + count]
        if len(chunk) != count:
            raise DataError(f"VTK file must hold {count} values here; got {len(chunk)}")
        self.position += count
        try:
            return _numpy.array(chunk, dtype=float)
        except ValueError as error:
            raise DataError(f"VTK data must be numeric; {error}") from error

    def done(self) -> bool:
        return self.position >= len(self.tokens)


def _trim(dimensions, origin, spacing):
    dimensions = list(dimensions)
    while len(dimensions) > 1 and dimensions[-1] == 1:
        dimensions.pop()
    dim = len(dimensions)
    return tuple(dimensions), _numpy.asarray(origin[:dim]), _numpy.asarray(spacing[:dim])


def _read_point_data(tokens: _Tokens, n_points: int) -> Dict[str, _numpy.ndarray]:
    arrays = {}
    while not tokens.done():
        keyword = tokens.next().upper()
        if keyword == "SCALARS":
            name, _ = tokens.next(), tokens.next()
            components = 1
            following = tokens.tokens[tokens.position] if not tokens.done() else ""
            if following.isdigit():
                components = int(tokens.next())
            if tokens.next().upper() != "LOOKUP_TABLE":
                raise DataError("VTK SCALARS must be followed by LOOKUP_TABLE")
            tokens.next()
            values = tokens.floats(n_points * components)
            arrays[name] = values if components == 1 else values.reshape(n_points, components)
        elif keyword == "VECTORS":
            name, _ = tokens.next(), tokens.next()
            arrays[name] = tokens.floats(3 * n_points).reshape(n_points, 3)
        elif keyword == "FIELD":
            tokens.next()
            for _ in range(int(tokens.next())):
                name, components, count, _ = (tokens.next() for _ in range(4))
                values = tokens.floats(int(components) * int(count))
                if int(count) == n_points:
                    arrays[name] = values if int(components) == 1 else values.reshape(n_points, -1)
        elif keyword in ("CELL_DATA", "POINT_DATA"):
            tokens.next()
            if keyword == "CELL_DATA":
                break
        else:
            raise DataError(f"unsupported VTK data section {keyword!r}")
    return arrays


def grid_read(path: PathLike) -> GridData:
    """
    Read point data on a structured lattice from legacy ASCII VTK: a
    STRUCTURED_POINTS dataset or an UNSTRUCTURED_GRID whose points form
    a lattice (as written by vtk_write).

    Raises:
        DataError: On unsupported datasets or non-lattice points.
    """
    lines = _Path(path).read_text(encoding="ascii").splitlines()
    if len(lines) < 4 or not lines[0].startswith("# vtk DataFile"):
        raise DataError(f"file is not legacy VTK: {str(path)!r}")
    if lines[2].strip().upper() != "ASCII":
        raise DataError("only ASCII VTK files are supported")
    tokens = _Tokens("\n".join(lines[3:]))
    if tokens.next().upper() != "DATASET":
        raise DataError("VTK file must declare a DATASET")
    kind = tokens.next().upper()

    if kind == "STRUCTURED_POINTS":
        fields = {}
        while len(fields) < 3:
            keyword = tokens.next().upper()
            if keyword == "DIMENSIONS":
                fields["dimensions"] = tokens.floats(3).astype(int)
            elif keyword == "ORIGIN":
                fields["origin"] = tokens.floats(3)
            elif keyword in ("SPACING", "ASPECT_RATIO"):
                fields["spacing"] = tokens.floats(3)
            else:
                raise DataError(f"unexpected VTK keyword {keyword!r}")
        if tokens.next().upper() != "POINT_DATA":
            raise DataError("STRUCTURED_POINTS data must be POINT_DATA")
        n_points = int(tokens.next())
        dimensions, origin, spacing = _trim(fields["dimensions"], fields["origin"], fields["spacing"])
        return GridData(origin, spacing, dimensions, _read_point_data(tokens, n_points))

    if kind != "UNSTRUCTURED_GRID":
        raise DataError(f"VTK dataset must be STRUCTURED_POINTS or UNSTRUCTURED_GRID; got {kind!r}")
    keyword = tokens.next().upper()
    if keyword == "FIELD":
        tokens.next()
        for _ in range(int(tokens.next())):
            _, components, count, _ = (tokens.next() for _ in range(4))
            tokens.floats(int(components) * int(count))
        keyword = tokens.next().upper()
    if keyword != "POINTS":
        raise DataError("UNSTRUCTURED_GRID must list POINTS")
    n_points = int(tokens.next())
    tokens.next()
    points = tokens.floats(3 * n_points).reshape(n_points, 3)
    while not tokens.done():
        keyword = tokens.next().upper()
        if keyword == "POINT_DATA":
            tokens.next()
            break
        if keyword in ("CELLS", "CELL_TYPES"):
            count = int(tokens.next())
            size = int(tokens.next()) if keyword == "CELLS" else count
            tokens.floats(size)
    arrays = _read_point_data(tokens, n_points)

    axes = [_numpy.unique(_numpy.round(points[:, d], 12)) for d in range(3)]
    dimensions = [len(a) for a in axes]
    if int(_numpy.prod(dimensions)) != n_points:
        raise DataError("UNSTRUCTURED_GRID points must form a structured lattice")
    spacing = [(a[-1] - a[0]) / (len(a) - 1) if len(a) > 1 else 1.0 for a in axes]
    origin = [a[0] for a in axes]
    index = _numpy.stack([
        _numpy.rint((points[:, d] - origin[d]) / spacing[d]).astype(int) for d in range(3)], axis=-1)
    order = _numpy.argsort(_numpy.ravel_multi_index(tuple(index.T), dimensions, order="F"))
    if not _numpy.allclose(points[order], _lattice_points(origin, spacing, dimensions), atol=1e-9):
        raise DataError("UNSTRUCTURED_GRID points must lie on a uniform lattice")
    arrays = {name: values[order] for name, values in arrays.items()}
    dimensions, origin, spacing = _trim(dimensions, origin, spacing)
    return GridData(origin, spacing, dimensions, arrays)


def _lattice_points(origin, spacing, dimensions) -> _numpy.ndarray:
    return GridData(origin, spacing, dimensions).points


def grid_eval(
        data: GridData,
        points,
        method: str = "LinearInterp",
        name: Optional[str] = None) -> _numpy.ndarray:
    """
    Evaluate grid data at points, clamped onto the lattice box.

    Args:
        data: The grid.
        points: One point or an array (n, dim); extra coordinates are
            ignored.
        method: "ClosestPoint" (nearest lattice value) or "LinearInterp"
            (multilinear in the containing cell).
        name: Array to evaluate; the first one by default.

    Returns:
        numpy.ndarray: Values (n,) or (n, k); a single point gives (), (k,).
    """
    if not data.arrays:
        raise DataError("grid holds no point data")
    name = name or next(iter(data.arrays))
    if name not in data.arrays:
        raise DataError(f"grid array must be one of {list(data.arrays)}; got {name!r}")
    values = data.arrays[name]
    raw = _numpy.asarray(points, dtype=float)
    single = raw.ndim <= 1
    pts = _numpy.atleast_2d(raw)[:, :data.dim]
    upper = data.origin + data.spacing * (_numpy.array(data.dimensions) - 1)
    pts = _numpy.clip(pts, data.origin, upper)

    if method == "ClosestPoint":
        index = _numpy.rint((pts - data.origin) / data.spacing).astype(int)
        index = _numpy.clip(index, 0, _numpy.array(data.dimensions) - 1)
        flat = _numpy.ravel_multi_index(tuple(index.T), data.dimensions, order="F")
        result = values[flat]
    elif method == "LinearInterp":
        shape = data.dimensions + values.shape[1:]
        grid = values.reshape(shape, order="F") if values.ndim == 1 else _numpy.stack(
            [values[:, k].reshape(data.dimensions, order="F") for k in range(values.shape[1])], axis=-1)
        axes = [a if len(a) > 1 else _numpy.array([a[0], a[0] + 1.0]) for a in data.axes]
        for d, n in enumerate(data.dimensions):
            if n == 1:
                grid = _numpy.concatenate([grid, grid], axis=d)
        result = _RegularGridInterpolator(axes, grid)(pts)
    else:
        raise DataError(f"grid evaluation method must be ClosestPoint or LinearInterp; got {method!r}")
    return result[0] if single else result


def grid_to_fe(
        space: FeSpace,
        data: GridData,
        name: Optional[str] = None,
        method: str = "LinearInterp") -> _numpy.ndarray:
    """
    Interpolate grid data onto the support points of a space.

    Raises:
        DataError: When the array has a component count other than the
            space's (VECTORS arrays are cut to the space dimension).
    """
    values = grid_eval(data, space.node_coords, method, name)
    if values.ndim == 2 and values.shape[1] == 3 and space.n_components == space.dim:
        values = values[:, :space.dim]
    components = 1 if values.ndim == 1 else values.shape[1]
    if components != space.n_components:
        raise DataError(f"grid array must have {space.n_components} components; got {components}")
    return _numpy.ascontiguousarray(values).reshape(-1)


# -- contours ----------------------------------------------------------------

def export_contours(
        space: FeSpace,
        vector: _numpy.ndarray,
        levels: Sequence[float],
        csv_path: PathLike,
        png_path: Optional[PathLike] = None,
        component: int = 0) -> Dict[float, int]:
    """
    Export level sets of one component of a field: line segments in 2D
    (the mid-plane z slice in 3D), crossing points in 1D. The CSV lists
    level, segment number, x and y (x only in 1D).

    Returns:
        Dict[float, int]: Number of segments (crossings in 1D) per level.
    """
    nc = space.n_components
    values = _numpy.asarray(vector, dtype=float).reshape(space.n_nodes, nc)[:, component]
    shape = space.node_shape
    grid = values.reshape(shape, order="F")
    axes = [_numpy.unique(space.node_coords[:, d]) for d in range(space.dim)]
    counts: Dict[float, int] = {}
    rows = []

    if space.dim == 1:
        x = axes[0]
        for level in levels:
            shifted = grid - level
            crossings = _numpy.flatnonzero(shifted[:-1] * shifted[1:] < 0.0)
            for number, i in enumerate(crossings):
                weight = shifted[i] / (shifted[i] - shifted[i + 1])
                rows.append([level, number, x[i] + weight * (x[i + 1] - x[i])])
            counts[float(level)] = len(crossings)
        csv_write(csv_path, (["level", "segment", "x"], rows))
        return counts

    if space.dim == 3:
        grid = grid[:, :, shape[2] // 2]
    figure, axis = _plt.subplots()
    try:
        contours = axis.contour(axes[0], axes[1], grid.T, levels=sorted(levels))
        for level, segments in zip(contours.levels, contours.allsegs):
            counts[float(level)] = len(segments)
            for number, segment in enumerate(segments):
                rows += [[float(level), number, px, py] for px, py in segment]
        for level in levels:
            counts.setdefault(float(level), 0)
        axis.set_xlabel("x")
        axis.set_ylabel("y")
        axis.set_aspect("equal")
        if png_path is not None:
            _Path(png_path).parent.mkdir(parents=True, exist_ok=True)
            figure.savefig(png_path)
    finally:
        _plt.close(figure)
    csv_write(csv_path, (["level", "segment", "x", "y"], rows))
    return counts


def plot_convergence(table: CsvTable, x_column: str, y_columns: Sequence[str], path: PathLike) -> None:
    """
    Log-log plot of error columns against a mesh-size column, saved as
    PNG.
    """
    x = table.column(x_column)
    figure, axis = _plt.subplots()
    try:
        for name in y_columns:
            axis.loglog(x, table.column(name), "o-", label=name)
        axis.set_xlabel(x_column)
        axis.set_ylabel("error")
        axis.legend()
        _Path(path).parent.mkdir(parents=True, exist_ok=True)
        figure.savefig(path)
    finally:
        _plt.close(figure)
    _logger.info("wrote convergence plot %s", path)
