"""
Subsection paths, rates, the run context and model setup.
"""

# external
import pytest

# internal
from flexfem._core import (
    AppContext,
    FlexFemError,
    ParameterError,
    convergence_rate,
    join_path,
    split_path,
    status)
from flexfem._params import CliOptions
from flexfem.mesh_info import MeshInfoApp


def test_split_and_join_path():
    assert split_path(" Tutorial01 /Linear solver ") == ("Tutorial01", "Linear solver")
    assert split_path(["A", " B "]) == ("A", "B")
    assert split_path("") == ()
    assert join_path("A / B", "", ["C"]) == "A / B / C"
    with pytest.raises(ParameterError):
        split_path("A // B")


def test_convergence_rate_recovers_slope():
    h = [0.2, 0.1, 0.05, 0.025]
    assert convergence_rate(h, [3.0 * x ** 3 for x in h]) == pytest.approx(3.0, abs=1e-6)
    assert convergence_rate(h, [0.5 * x for x in h]) == pytest.approx(1.0, abs=1e-6)


def test_status_prints(capsys):
    status("step 3 done")
    assert capsys.readouterr().out == "step 3 done\n"


def test_app_context_is_exclusive(tmp_path):
    assert AppContext.get() is None
    with AppContext(CliOptions(output_dir=tmp_path)) as context:
        assert AppContext.get() is context
        assert context.output_dir == tmp_path
        with pytest.raises(FlexFemError):
            with AppContext(CliOptions(output_dir=tmp_path)):
                pass
        assert AppContext.get() is context
    assert AppContext.get() is None


def test_output_dir_follows_context(tmp_path):
    model = MeshInfoApp()
    with AppContext(CliOptions(output_dir=tmp_path / "run")):
        assert model.output_dir == tmp_path / "run"
        assert (tmp_path / "run").is_dir()
    explicit = MeshInfoApp(output_dir=tmp_path / "explicit")
    assert explicit.output_dir == tmp_path / "explicit"


def test_setup_declares_overrides_and_parses():
    model = MeshInfoApp()
    params = model.setup({"Mesh info": {"Mesh": {"Dimension": 3, "Number of subdivisions": 2}}})
    assert params.get_integer("Mesh info / Mesh / Dimension") == 3
    info = model.run()
    assert info.surface_area == pytest.approx(6.0)
    assert info.volume == pytest.approx(1.0)
