"""
CSV tables, time series, checkpoints, VTK output and grid import.
"""

# external
import numpy as np
import pytest

# internal
from flexfem._core import CheckpointError, DataError
from flexfem._fem import build_space, interpolate
from flexfem._io import (
    Checkpoint,
    CsvTable,
    TimeSeries,
    checkpoint_load,
    checkpoint_save,
    csv_read,
    csv_write,
    export_contours,
    grid_eval,
    grid_read,
    grid_to_fe,
    interp_eval,
    time_series_from_csv,
    vtk_write)
from flexfem._mesh import generate_box


def test_csv_write_and_read(tmp_path):
    path = tmp_path / "nested" / "table.csv"
    csv_write(path, (["step", "time", "label", "ok"], [[1, 0.1, "a, b", True], [2, 0.2, "c", False]]))
    table = csv_read(path)
    assert table.headers == ["step", "time", "label", "ok"]
    assert table.rows[0] == ["1", "0.10000000000000001", "a, b", "true"]
    assert [float(row[1]) for row in table.rows] == [0.1, 0.2]
    with pytest.raises(DataError):
        table.column("missing")
    with pytest.raises(DataError):
        table.numeric()


def test_csv_read_crlf_and_quotes(tmp_path):
    path = tmp_path / "crlf.csv"
    path.write_bytes(b'"t","value"\r\n0,1.5\r\n"1",2.5\r\n')
    table = csv_read(path)
    assert table.numeric().tolist() == [[0.0, 1.5], [1.0, 2.5]]


def test_csv_errors(tmp_path):
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("a,b\n1,2\n3\n")
    with pytest.raises(DataError, match="row 3"):
        csv_read(ragged)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(DataError):
        csv_read(empty)
    with pytest.raises(DataError):
        CsvTable(["a"], [[1, 2]])


def test_linear_series_clamps():
    series = TimeSeries([0.0, 1.0, 3.0], [0.0, 2.0, 0.0])
    assert interp_eval(series, 0.5) == pytest.approx(1.0)
    assert interp_eval(series, 2.0) == pytest.approx(1.0)
    assert interp_eval(series, -1.0) == 0.0
    assert interp_eval(series, 5.0) == 0.0
    assert isinstance(interp_eval(series, 0.5), float)
    np.testing.assert_allclose(series(np.array([0.25, 1.0])), [0.5, 2.0])
    assert series.start == 0.0 and series.end == 3.0


def test_derivative_modes():
    linear = TimeSeries([0.0, 1.0, 3.0], [0.0, 2.0, 0.0], "DerivativeLinear")
    assert linear(0.5) == pytest.approx(2.0)
    assert linear(2.0) == pytest.approx(-1.0)
    assert linear(4.0) == 0.0
    spline = TimeSeries([0.0, 1.0, 2.0, 3.0], [1.0, 3.0, 5.0, 7.0], "DerivativeSpline")
    assert spline(1.7) == pytest.approx(2.0)
    assert spline(-1.0) == 0.0


def test_cubic_spline_interpolates():
    times = np.linspace(0.0, 2.0, 9)
    series = TimeSeries(times, np.sin(times), "CubicSpline")
    np.testing.assert_allclose(series(times), np.sin(times), atol=1e-14)
    assert series(0.9) == pytest.approx(np.sin(0.9), abs=1e-3)
    assert series(3.0) == pytest.approx(np.sin(2.0))


def test_smoothing_spline_meets_budget():
    times = np.linspace(0.0, 3.0, 20)
    values = np.sin(times) + 0.05 * np.random.default_rng(0).standard_normal(20)
    exact = TimeSeries(times, values, "SmoothingSpline")
    np.testing.assert_allclose(exact(times), values, atol=1e-12)
    smooth = TimeSeries(times, values, "SmoothingSpline", smoothing=0.01)
    assert np.sum((smooth(times) - values) ** 2) == pytest.approx(0.01, rel=1e-6)


def test_trigonometric_series_is_periodic():
    times = np.arange(8) / 8.0
    series = TimeSeries(times, np.cos(2.0 * np.pi * times) + 0.5 * np.sin(4.0 * np.pi * times), "Trigonometric")
    expected = np.cos(2.0 * np.pi * 0.1) + 0.5 * np.sin(4.0 * np.pi * 0.1)
    assert series(0.1) == pytest.approx(expected)
    assert series(1.1) == pytest.approx(expected)
    with pytest.raises(DataError):
        TimeSeries([0.0, 0.1, 0.3], [1.0, 2.0, 3.0], "Trigonometric")


@pytest.mark.parametrize("times, values, mode, smoothing", [
    ([0.0], [1.0], "Linear", 0.0),
    ([0.0, 1.0], [1.0], "Linear", 0.0),
    ([0.0, 0.0, 1.0], [1.0, 2.0, 3.0], "Linear", 0.0),
    ([0.0, 1.0], [1.0, 2.0], "Akima", 0.0),
    ([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], "SmoothingSpline", -1.0)])
def test_series_validation(times, values, mode, smoothing):
    with pytest.raises(DataError):
        TimeSeries(times, values, mode, smoothing)


def test_series_from_csv(tmp_path):
    path = tmp_path / "inflow.csv"
    csv_write(path, (["t", "q"], [[0.0, 1.0], [1.0, 3.0]]))
    series = time_series_from_csv(path, "t", "q")
    assert series(0.5) == pytest.approx(2.0)


def _checkpoint(mesh):
    return Checkpoint(
        time=0.30000000000000004, step=3, dt=0.1, order=2, mesh=mesh.descriptor, degree=2,
        vectors={"u": np.array([np.pi, -0.0, 1e-300]), "u old": np.arange(4.0)})


def test_checkpoint_roundtrip_is_bit_exact(tmp_path):
    mesh = generate_box(2, [0.0, -1.0], [1.0, 1.0], [2, 3])
    path = tmp_path / "state.chk"
    checkpoint_save(path, _checkpoint(mesh))
    loaded = checkpoint_load(path)
    assert loaded.time == 0.30000000000000004
    assert (loaded.step, loaded.dt, loaded.order, loaded.degree) == (3, 0.1, 2, 2)
    assert list(loaded.vectors) == ["u", "u old"]
    assert loaded.vectors["u"].tobytes() == np.array([np.pi, -0.0, 1e-300]).tobytes()
    loaded.check_mesh(mesh, 2)
    with pytest.raises(CheckpointError):
        loaded.check_mesh(mesh, 1)
    with pytest.raises(CheckpointError):
        loaded.check_mesh(generate_box(2, 0.0, 1.0, 2), 2)


def test_corrupt_checkpoints(tmp_path):
    path = tmp_path / "state.chk"
    checkpoint_save(path, _checkpoint(generate_box(1, 0.0, 1.0, 4)))
    data = path.read_bytes()
    cases = {
        "magic": b"NOPE" + data[4:],
        "version": data[:4] + (2).to_bytes(4, "little") + data[8:],
        "truncated": data[:-5],
        "trailing": data + b"\x00"}
    for name, corrupt in cases.items():
        broken = tmp_path / f"{name}.chk"
        broken.write_bytes(corrupt)
        with pytest.raises(CheckpointError):
            checkpoint_load(broken)


def test_vtk_output_reads_back_as_grid(tmp_path):
    mesh = generate_box(2, 0.0, 1.0, 2)
    space = build_space(mesh, 2)
    flow_space = build_space(mesh, 1, 2)
    u = interpolate(space, lambda x: x[:, 0] ** 2 + x[:, 1])
    flow = interpolate(flow_space, lambda x: np.stack([x[:, 1], -x[:, 0]], axis=1))
    path = tmp_path / "solution.vtk"
    vtk_write(path, space, {"u": u, "flow": (flow_space, flow)}, time=0.5)

    text = path.read_text()
    assert text.startswith("# vtk DataFile Version 3.0\n")
    assert "TIME 1 1 double\n0.5\n" in text
    assert "CELLS 16 80" in text
    assert "VECTORS flow double" in text

    grid = grid_read(path)
    assert grid.dimensions == (5, 5)
    np.testing.assert_allclose(grid.spacing, [0.25, 0.25])
    np.testing.assert_allclose(grid.arrays["u"], u)
    np.testing.assert_allclose(grid.arrays["flow"][:, :2], flow.reshape(-1, 2), atol=1e-14)
    assert not grid.arrays["flow"][:, 2].any()
    np.testing.assert_allclose(grid_to_fe(flow_space, grid, "flow"), flow, atol=1e-14)
    with pytest.raises(DataError):
        grid_to_fe(space, grid, "flow")


def test_multicomponent_scalars(tmp_path):
    space = build_space(generate_box(1, 0.0, 1.0, 2), 1, 2)
    vtk_write(tmp_path / "pair.vtk", space, {"c mu": np.arange(6.0)})
    text = (tmp_path / "pair.vtk").read_text()
    assert "SCALARS c_mu_0 double 1" in text
    assert "SCALARS c_mu_1 double 1" in text
    grid = grid_read(tmp_path / "pair.vtk")
    assert grid.arrays["c_mu_1"].tolist() == [1.0, 3.0, 5.0]


STRUCTURED = """# vtk DataFile Version 3.0
temperature on a lattice
ASCII
DATASET STRUCTURED_POINTS
DIMENSIONS 3 2 1
ORIGIN 0 0 0
SPACING 0.5 1 1
POINT_DATA 6
SCALARS temperature double 1
LOOKUP_TABLE default
1 2 3
4 5 6
"""


def test_structured_points_and_evaluation(tmp_path):
    path = tmp_path / "grid.vtk"
    path.write_text(STRUCTURED)
    grid = grid_read(path)
    assert grid.dimensions == (3, 2)
    assert grid.dim == 2 and grid.n_points == 6
    assert grid_eval(grid, [0.25, 0.5]) == pytest.approx(3.0)
    assert grid_eval(grid, [0.3, 0.9], "ClosestPoint") == 5.0
    assert grid_eval(grid, [5.0, -1.0]) == pytest.approx(3.0)
    np.testing.assert_allclose(grid_eval(grid, np.array([[0.0, 0.0], [1.0, 1.0]])), [1.0, 6.0])
    with pytest.raises(DataError):
        grid_eval(grid, [0.0, 0.0], "Cubic")
    with pytest.raises(DataError):
        grid_eval(grid, [0.0, 0.0], name="pressure")

    space = build_space(generate_box(2, 0.0, 1.0, 2))
    np.testing.assert_allclose(
        grid_to_fe(space, grid), interpolate(space, lambda x: 1.0 + 2.0 * x[:, 0] + 3.0 * x[:, 1]))


def test_bad_vtk_files(tmp_path):
    path = tmp_path / "bad.vtk"
    path.write_text("not vtk\n\n\n\n")
    with pytest.raises(DataError):
        grid_read(path)
    path.write_text(STRUCTURED.replace("ASCII", "BINARY"))
    with pytest.raises(DataError):
        grid_read(path)
    path.write_text(STRUCTURED.replace("4 5 6", "4 5"))
    with pytest.raises(DataError):
        grid_read(path)


def test_contours_in_one_dimension(tmp_path):
    space = build_space(generate_box(1, 0.0, 1.0, 10))
    u = interpolate(space, lambda x: 4.0 * x[:, 0] * (1.0 - x[:, 0]))
    counts = export_contours(space, u, [0.5, 2.0], tmp_path / "levels.csv")
    assert counts == {0.5: 2, 2.0: 0}
    table = csv_read(tmp_path / "levels.csv")
    np.testing.assert_allclose(
        table.column("x"), [0.5 - 0.5 ** 1.5, 0.5 + 0.5 ** 1.5], atol=0.01)


def test_contours_in_two_dimensions(tmp_path):
    space = build_space(generate_box(2, -1.0, 1.0, 16), 1, 2)
    u = interpolate(space, lambda x: np.stack([x[:, 0] ** 2 + x[:, 1] ** 2, np.zeros(len(x))], axis=1))
    counts = export_contours(space, u, [0.25, 0.5], tmp_path / "levels.csv", tmp_path / "levels.png")
    assert counts == {0.25: 1, 0.5: 1}
    assert (tmp_path / "levels.png").stat().st_size > 0
    table = csv_read(tmp_path / "levels.csv")
    inner = table.numeric()[table.column("level") == 0.25]
    np.testing.assert_allclose(np.hypot(inner[:, 2], inner[:, 3]), 0.5, atol=0.02)
