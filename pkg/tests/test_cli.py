import copy
import json

import jsonschema
import pytest

from wrenchforge import cli

FAST = ["task.search.resolution=9"]


def _schema(name):
    return cli._schema(name)


def _strip(rep):
    rep = copy.deepcopy(rep)
    rep.pop("run_info", None)
    return rep


def _static_doc(**task):
    doc = {"schema_version": "1", "name": "t", "seed": 0, "model": "paper2d",
           "task": {"kind": "static", "pose": [0, 0, 0], "direction": [1, 0, 0], "objective": "beta2",
                    "search": {"method": "grid", "resolution": 7}}}
    doc["task"].update(task)
    return doc


def test_list(capsys):
    assert cli.main(["list"]) == 0
    assert capsys.readouterr().out.split() == list(cli.BUNDLED_SCENARIOS)


@pytest.mark.parametrize("name", cli.BUNDLED_SCENARIOS)
def test_bundled_scenarios_validate(name):
    assert [d for d in cli.validate(name) if d["level"] == "error"] == []


def test_validate_reports_pointers(tmp_path, capsys):
    doc = _static_doc(direction=[1, 0])
    doc["task"]["kind"] = "static"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert cli.main(["validate", str(p)]) == 2
    assert "/task/direction" in capsys.readouterr().out
    doc = _static_doc()
    doc["task"]["kind"] = "dance"
    diags = cli.validate_document(doc)
    assert diags and diags[0]["pointer"] == "/task/kind"


def test_semantic_checks():
    d = cli.validate_document(_static_doc(kind="impulse", T=1.0, k=3, t_h=4))
    assert any(x["pointer"] == "/task/t_h" for x in d)
    d = cli.validate_document(_static_doc(direction=[2, 0, 0]))
    assert [x["level"] for x in d] == ["warning"]
    d = cli.validate_document(_static_doc(kind="multi_contact"))
    assert any(x["pointer"] == "/model" for x in d)


def test_overrides():
    doc = cli.apply_overrides(_static_doc(), ["task.search.resolution=5", "name=renamed", "task.extra.deep=[1,2]"])
    assert doc["task"]["search"]["resolution"] == 5 and doc["name"] == "renamed"
    assert doc["task"]["extra"]["deep"] == [1, 2]
    with pytest.raises(cli.ScenarioError):
        cli.apply_overrides(doc, ["no-equals-sign"])


def test_run_static_report(tmp_path, capsys):
    out = tmp_path / "fig4"
    assert cli.main(["run", "paper2d-figure4", "--out", str(out)] + sum((["--override", o] for o in FAST), [])) == 0
    rep = json.loads((out / "report.json").read_text())
    jsonschema.validate(rep, _schema("report"))
    assert rep["status"] == "ok" and rep["exit_code"] == 0
    h = rep["headline"]
    assert h["beta1"] <= h["beta2"] + 1e-9 <= h["beta3"] + 2e-9
    assert "default" in h
    assert "ok:" in capsys.readouterr().out


def test_run_is_deterministic(tmp_path):
    doc = _static_doc(objective=["beta2", "beta3"])
    a = cli.execute(doc, tmp_path / "a")[1]
    b = cli.execute(doc, tmp_path / "b")[1]
    assert json.dumps(_strip(a), sort_keys=True) == json.dumps(_strip(b), sort_keys=True)


def test_slice_artifacts(tmp_path):
    code = cli.run("paper2d-figure2", tmp_path, ["task.n_rays=12"])
    assert code == 0
    assert (tmp_path / "slice.csv").read_text().startswith("angle")
    assert (tmp_path / "slice.svg").read_text().lstrip().startswith("<svg")


def test_invalid_scenario_exit_code(tmp_path):
    doc = _static_doc()
    del doc["task"]["pose"]
    code, rep = cli.execute(doc, tmp_path)
    assert code == 2 and rep["status"] == "validation_error"
    assert cli.run(str(tmp_path / "missing.json"), tmp_path / "m") == 2


def test_infeasible_exit_code(tmp_path):
    # the wrench may only act along y, so nothing can absorb the x acceleration
    doc = {"schema_version": "1", "name": "dash", "seed": 0, "model": "paper2d",
           "task": {"kind": "trajectory", "path": {"start": [0, 0, 0], "displacement": [6, 0, 0]},
                    "direction": [0, 1, 0], "T": 0.3, "k": 3, "init": "neutral",
                    "search": {"n_starts": 0, "max_iter": 1}}}
    code, rep = cli.execute(doc, tmp_path)
    assert code == 3 and rep["status"] == "dynamically_infeasible"
    jsonschema.validate(json.loads((tmp_path / "report.json").read_text()), _schema("report"))


def test_compare(tmp_path, capsys):
    cli.execute(_static_doc(), tmp_path / "a")
    cli.execute(_static_doc(objective="beta3"), tmp_path / "b")
    assert cli.main(["compare", str(tmp_path / "a" / "report.json"), str(tmp_path / "b" / "report.json")]) == 0
    out = capsys.readouterr().out
    assert "beta2 vs beta3" in out
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    rows = {r["quantity"]: r for r in cli.compare(a, b)["rows"]}
    assert rows["beta2 vs beta3"]["ratio"] >= 1.0 - 1e-12
