"""
Parameter trees, prm/json files and the shared command line.
"""

# external
import json as _json

import pytest

# internal
from flexfem._core import (
    CliError,
    DeclarationError,
    ParameterError,
    ParseError,
    UnknownParameterError)
from flexfem._params import (
    Bool,
    Integer,
    ParamTree,
    Real,
    Selection,
    Verbosity,
    apply_overrides,
    declare,
    emit,
    parse_cli,
    parse_json,
    parse_prm,
    read_params_file,
    write_params_file)
from flexfem.tutorial06 import ParabolicSystem


def _tree():
    tree = ParamTree()
    tree.enter_subsection_path("Problem")
    tree.declare_entry("Degree", 1, Integer(1, 3), "Polynomial degree.")
    tree.declare_entry("Write output", True, Bool())
    tree.set_verbosity(Verbosity.MINIMAL)
    tree.declare_entry("Name", "box")
    tree.set_verbosity(Verbosity.FULL)
    tree.declare_entry("Tolerance", 1e-8, Real(0.0))
    tree.reset_verbosity()
    tree.enter_subsection_path("Linear solver")
    tree.declare_entry("Type", "CG", Selection(["CG", "GMRES"]))
    tree.leave_subsection_path()
    tree.leave_subsection_path()
    return tree


def test_typed_access():
    tree = _tree()
    assert tree.get_integer("Problem / Degree") == 1
    assert tree.get_bool("Problem / Write output") is True
    assert tree.get_double("Problem / Tolerance") == 1e-8
    tree.enter_subsection_path("Problem")
    assert tree.get("Linear solver / Type") == "CG"
    tree.leave_subsection_path()


def test_declaration_errors():
    tree = _tree()
    with pytest.raises(DeclarationError):
        declare(tree, "Problem", "Degree", 2, Integer(1, 3))
    with pytest.raises(DeclarationError):
        declare(tree, "Problem", "Order", 7, Integer(1, 3))
    with pytest.raises(DeclarationError):
        declare(tree, "Problem", "a = b", 1)
    with pytest.raises(ParameterError):
        tree.leave_subsection_path()


def test_entry_and_subsection_names_cannot_clash():
    tree = ParamTree()
    declare(tree, "Problem", "Solver", "CG")
    with pytest.raises(DeclarationError, match="clashes"):
        declare(tree, "Problem / Solver", "Type", "CG")

    tree = ParamTree()
    declare(tree, "Problem / Solver", "Type", "CG")
    with pytest.raises(DeclarationError, match="clashes"):
        declare(tree, "Problem", "Solver", "CG")


def test_prm_roundtrip_fixpoint_at_every_verbosity():
    for level in Verbosity:
        tree = _tree()
        text = emit(tree, "prm", level)
        tree.apply(parse_prm(text))
        assert emit(tree, "prm", level) == text


def test_verbosity_filters_entries():
    minimal = emit(_tree(), "prm", "minimal")
    full = emit(_tree(), "prm", "full")
    assert "Name" in minimal and "Degree" not in minimal and "Linear solver" not in minimal
    assert "Tolerance" in full and "Tolerance" not in emit(_tree(), "prm", "standard")


def test_prm_values_are_applied():
    tree = _tree()
    tree.apply(parse_prm(
        "subsection Problem\n"
        "  set Degree = 2  # trailing comment\n"
        "  subsection Linear solver\n"
        "    set Type = GMRES\n"
        "  end\n"
        "end\n"))
    assert tree.get_integer("Problem / Degree") == 2
    assert tree.get("Problem / Linear solver / Type") == "GMRES"


def test_prm_keywords_may_be_separated_by_tabs():
    text = "subsection\tProblem\n\tset\tDegree = 2\nend\n"
    assert parse_prm(text) == [(("Problem",), "Degree", "2")]


@pytest.mark.parametrize("text, line", [
    ("subsection Problem\n  set Degree 2\nend\n", 2),
    ("end\n", 1),
    ("subsection Problem\n  oops\nend\n", 2)])
def test_prm_syntax_errors_name_the_line(text, line):
    with pytest.raises(ParseError) as error:
        parse_prm(text)
    assert error.value.line == line


def test_missing_end_is_an_error():
    with pytest.raises(ParseError):
        parse_prm("subsection Problem\n  set Degree = 2\n")


def test_rejected_values_leave_the_tree_unchanged():
    tree = _tree()
    with pytest.raises(ParameterError):
        tree.apply(parse_prm("subsection Problem\n set Degree = 2\n set Write output = yes\nend\n"))
    assert tree.get_integer("Problem / Degree") == 1
    with pytest.raises(UnknownParameterError):
        tree.apply(parse_prm("subsection Problem\n set Colour = red\nend\n"))


def test_json_roundtrip():
    tree = _tree()
    text = emit(tree, "json", "full")
    data = _json.loads(text)
    assert data["Problem"]["Linear solver"]["Type"] == "CG"
    tree.apply(parse_json(text))
    assert emit(tree, "json", "full") == text
    with pytest.raises(ParseError):
        parse_json("{\n  \"Problem\": \n}")


def test_json_overrides_defaults():
    tree = _tree()
    apply_overrides(tree, {"Problem": {"Degree": 3, "Linear solver": {"Type": "GMRES"}}})
    assert tree.entry("Problem", "Degree").default_value == "3"
    assert tree.get("Problem / Linear solver / Type") == "GMRES"
    with pytest.raises(ParameterError):
        apply_overrides(tree, '{"Problem": {"Degree": 9}}')


def test_prm_and_json_files_agree_on_a_full_application_tree(tmp_path):
    values = {"Tutorial06": {
        "Coupling scheme": "Monolithic",
        "Mesh": {"Dimension": 2, "Number of subdivisions": 4},
        "Time solver": {"Time step": 0.05}}}
    trees = {}
    for suffix in ("prm", "json"):
        model = ParabolicSystem()
        tree = model.setup(values)
        path = tmp_path / f"system.{suffix}"
        write_params_file(tree, path, "full")
        fresh = ParabolicSystem()
        trees[suffix] = fresh.setup()
        read_params_file(trees[suffix], path)
        fresh.parse_parameters(trees[suffix])
        assert fresh.scheme == "Monolithic"
        assert fresh.time_solver.time_step == 0.05
    assert emit(trees["prm"], "prm", "full") == emit(trees["json"], "prm", "full")


def test_unknown_file_extension(tmp_path):
    with pytest.raises(ParameterError):
        write_params_file(_tree(), tmp_path / "p.yaml")


def test_parse_cli():
    options = parse_cli(["-g", "-f", "p.prm", "-o", "out", "extra"])
    assert options.generate == Verbosity.STANDARD
    assert str(options.params_file) == "p.prm"
    assert str(options.output_dir) == "out"
    assert options.app_args == ["extra"]
    assert parse_cli([]).generate is None
    with pytest.raises(CliError):
        parse_cli(["--bogus"])
    with pytest.raises(CliError):
        parse_cli(["-g", "loud"])
