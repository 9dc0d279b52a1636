import csv
import io
import json
import subprocess
import sys

import pytest

from orbit_shift import SCENARIO_DIR
from orbit_shift.cli import main


def run_cli(tmp_path, doc, *extra):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "out.txt"
    code = main(["run", str(path), "--out", str(out), *extra])
    return code, out.read_text()


def shift_doc(**kw):
    doc = {
        "schema": 1,
        "dim": 2,
        "task": "apply",
        "stages": [
            {"field": {"kind": "translation", "direction": [1, 0]}, "func": "x2"},
            {"field": {"kind": "translation", "direction": [0, 1]}, "func": "x1"},
        ],
        "points": [[1, 2]],
    }
    doc.update(kw)
    return doc


def test_apply(tmp_path):
    code, text = run_cli(tmp_path, shift_doc())
    assert code == 0
    rep = json.loads(text)
    assert rep["ok"] and rep["task"] == "apply"
    assert rep["records"] == [{"x1": 1.0, "x2": 2.0, "y1": 3.0, "y2": 3.0}]


def test_grid_csv_layout(tmp_path):
    doc = {
        "schema": 1,
        "dim": 1,
        "task": "grid",
        "stages": [{"field": {"kind": "translation", "direction": [1]}, "func": "-x^2"}],
        "grid": [{"min": -2, "max": 2, "count": 5}],
        "format": "csv",
    }
    code, text = run_cli(tmp_path, doc)
    assert code == 0
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["x1", "lambda", "residual", "verdict", "residual_ok"]
    assert [float(r[0]) for r in rows[1:]] == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert [float(r[1]) for r in rows[1:]] == [5.0, 3.0, 1.0, -1.0, -3.0]
    assert [r[3] for r in rows[1:]] == ["diffeomorphism_preserving"] * 3 + ["diffeomorphism_reversing"] * 2


def test_grid_is_lexicographic(tmp_path):
    doc = shift_doc(task="grid", grid=[{"min": 0, "max": 1, "count": 2}, {"min": 0, "max": 1, "count": 3}])
    del doc["points"]
    code, text = run_cli(tmp_path, doc)
    assert code == 0
    pts = [(r["x1"], r["x2"]) for r in json.loads(text)["records"]]
    assert pts == sorted(pts) and len(pts) == 6


def test_classify_with_oracle_columns(tmp_path):
    doc = shift_doc(task="classify", oracle=True, format="csv")
    code, text = run_cli(tmp_path, doc)
    assert code == 0
    header = text.splitlines()[0].split(",")
    assert header == ["x1", "x2", "lambda", "residual", "verdict", "fd_det", "oracle_residual", "residual_ok"]


def test_format_flag_overrides_scenario(tmp_path):
    code, text = run_cli(tmp_path, shift_doc(format="json"), "--format", "csv")
    assert code == 0
    assert text.startswith("x1,x2,y1,y2\n")


def test_validation_error_paths(tmp_path):
    doc = shift_doc()
    doc["stages"][1]["field"]["direction"] = [0, 1, 0]
    doc["stages"][0]["func"] = "x1 + x3"
    code, text = run_cli(tmp_path, doc)
    assert code == 2
    rep = json.loads(text)
    assert rep["status"] == "validation_error"
    paths = {e["path"] for e in rep["errors"]}
    assert paths == {"stages/1/field/direction", "stages/0/func"}


@pytest.mark.parametrize("patch,path", [
    ({"schema": 2}, "schema"),
    ({"task": "plot"}, "task"),
    ({"dim": 0}, "dim"),
    ({"points": [[1, 2, 3]]}, "points/0"),
])
def test_schema_violations(tmp_path, patch, path):
    code, text = run_cli(tmp_path, shift_doc(**patch))
    assert code == 2
    assert path in {e["path"] for e in json.loads(text)["errors"]}


def test_unreadable_scenario(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "out.json"
    assert main(["run", str(bad), "--out", str(out)]) == 2


def test_flow_failure_exit_code(tmp_path):
    doc = shift_doc()
    doc["stages"][1] = {"field": {"kind": "expression", "components": ["-x2", "x1"]}, "func": "20*x1"}
    doc["flow"] = {"max_time": 5}
    code, text = run_cli(tmp_path, doc)
    assert code == 3
    err = json.loads(text)["error"]
    assert err["type"] == "TimeBoundError" and err["stage"] == 1


def test_leaf_violation_exit_code(tmp_path):
    doc = {"schema": 1, "dim": 2, "task": "decompose", "map": ["x1 + x2", "2*x2"], "leaf_dim": 1}
    code, text = run_cli(tmp_path, doc)
    assert code == 3
    err = json.loads(text)["error"]
    assert err["type"] == "LeafPreservationError" and "witness" in err


def test_verify_identities(tmp_path):
    doc = {"schema": 1, "dim": 1, "task": "verify-identities", "seed": 3, "pairs": 40, "rank_deficient": 10}
    code, text = run_cli(tmp_path, doc)
    assert code == 0
    rep = json.loads(text)
    assert rep["summary"]["pairs"] == 41
    assert rep["summary"]["failures"] == 0
    assert rep["records"][0]["det_residual"] == 0.0


def test_commutator_scenario(tmp_path):
    doc = json.loads((SCENARIO_DIR / "commutator.json").read_text())
    doc["format"] = "json"
    code, text = run_cli(tmp_path, doc)
    assert code == 0
    rep = json.loads(text)
    assert all(abs(r["lambda"] - 1) <= 1e-9 for r in rep["records"])
    assert rep["summary"]["verdicts"] == {"diffeomorphism_preserving": 9}


def test_decompose_rotation_scenario(tmp_path):
    doc = json.loads((SCENARIO_DIR / "decompose_rotation.json").read_text())
    code, text = run_cli(tmp_path, doc)
    assert code == 0
    rep = json.loads(text)
    assert rep["summary"]["periodic_blocks"] == [0]
    for r in rep["records"]:
        assert r["alpha1"] == pytest.approx(0.7, abs=1e-8)
        assert r["roundtrip_error"] <= 1e-9


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIO_DIR.glob("*.json")))
def test_bundled_scenarios_run_and_repeat(tmp_path, name):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    path = str(SCENARIO_DIR / name)
    assert main(["run", path, "--out", str(out1)]) == 0
    assert main(["run", path, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_module_entry_point_writes_stdout():
    proc = subprocess.run([sys.executable, "-m", "orbit_shift", "run", str(SCENARIO_DIR / "apply_identity.json")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["records"][0]["y1"] == 1.0
