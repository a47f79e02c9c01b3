import csv
import io
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from piid import cli


def schema(name):
    return json.loads(resources.files("piid").joinpath(f"schemas/{name}.schema.json").read_text())


def invoke(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_version(capsys):
    code, out, _ = invoke(capsys, "--version")
    assert code == 0 and out.startswith("piid 0.1.0 (python ")


def test_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "piid.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "numpy" in r.stdout


def test_kt_counts(capsys):
    code, out, _ = invoke(capsys, "kt")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, schema("kt"))
    assert d["counts"]["reconstructed"] is True
    assert d["counts"]["xA"] == 1611 and d["counts"]["xJ"] == 1103
    assert d["abs_diff"] <= 1e-6


def test_solve_printed_rectangle(capsys):
    code, out, _ = invoke(capsys, "solve", "--spec", "fixture:kt.json")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, schema("solve"))
    assert d["lower"] == pytest.approx(0.195, abs=0.002)


def test_solve_with_data(capsys, tmp_path):
    path = tmp_path / "bdm.json"
    code, _, err = invoke(capsys, "solve", "--spec", "fixture:bdm.json", "--data", "fixture:bdm.csv",
                          "--shape", "box", "--K", "4", "--G", "50", "-o", str(path))
    assert code == 0, err
    d = json.loads(path.read_text())
    jsonschema.validate(d, schema("solve"))
    assert d["data"] == {"n": 2000, "p": 4}
    assert d["lower"] <= d["upper"]


def test_bundled_problems_validate():
    sch = schema("problem")
    for name in ("kt", "kt_counts", "mc_problem", "bdm", "hp"):
        doc = json.loads(resources.files("piid").joinpath(f"data/{name}.json").read_text())
        jsonschema.validate(doc, sch)


def test_missing_data_is_io_error(capsys, tmp_path):
    out = tmp_path / "res.json"
    code, stdout, err = invoke(capsys, "solve", "--spec", "fixture:bdm.json",
                               "--data", str(tmp_path / "nope.csv"), "-o", str(out))
    assert code == 3
    assert err.startswith("error: IoError:")
    assert not out.exists() and stdout == ""


def test_bad_alpha_is_config_error(capsys):
    code, _, err = invoke(capsys, "solve", "--spec", "fixture:kt.json", "--alpha", "1.5")
    assert code == 2 and "ConfigError" in err


def test_unknown_flag(capsys):
    code, _, _ = invoke(capsys, "kt", "--bogus")
    assert code == 2


def test_no_command(capsys):
    assert invoke(capsys)[0] == 2


def test_coverage_bound(capsys):
    code, out, _ = invoke(capsys, "coverage-bound", "--n", "2000", "--p", "18", "--mu3bar", "5",
                          "--c-sigma", "1", "--kappa1", "3")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, schema("coverage_bound"))
    assert d["vacuous"] is True
    assert d["inputs"]["p_hat"] == 0.95


def test_coverage_bound_plug_in(capsys):
    code, out, _ = invoke(capsys, "coverage-bound", "--data", "fixture:bdm.csv")
    d = json.loads(out)
    assert code == 0 and set(d["plug_in"]) == {"mu3bar", "c_sigma", "kappa1"}
    jsonschema.validate(d, schema("coverage_bound"))


def test_coverage_bound_missing_inputs(capsys):
    code, _, err = invoke(capsys, "coverage-bound", "--n", "100")
    assert code == 2 and "--p" in err


def test_minsker_s(capsys):
    code, out, _ = invoke(capsys, "minsker-s", "--data", "fixture:mc_sample.csv")
    assert code == 0
    d = json.loads(out)
    jsonschema.validate(d, schema("minsker_s"))
    assert d["s"]["shape"] == "minsker"


def test_mc_small_and_csv(capsys, tmp_path):
    js, cs = tmp_path / "mc.json", tmp_path / "mc.csv"
    argv = ["mc", "--n", "300", "--reps", "2", "--shape", "box", "--mode", "outer,inner",
            "--K", "3", "--G", "30", "-o", str(js), "--csv", str(cs)]
    code, _, err = invoke(capsys, *argv)
    assert code == 0, err
    first = js.read_bytes()
    d = json.loads(first)
    jsonschema.validate(d, schema("mc"))
    rows = list(csv.DictReader(io.StringIO(cs.read_text())))
    assert [r["mode"] for r in rows] == ["outer", "inner"]
    assert float(rows[0]["avg_lower"]) == pytest.approx(d["rows"][0]["avg_lower"], rel=1e-11)
    # repeated invocation is byte-identical
    assert invoke(capsys, *argv)[0] == 0
    assert js.read_bytes() == first


def test_clean_handles_non_finite():
    assert cli.clean({"a": float("inf"), "b": [float("-inf"), float("nan")], "c": 0.1 + 0.2}) == \
        {"a": "inf", "b": ["-inf", "nan"], "c": 0.3}
