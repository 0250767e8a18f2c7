import csv
import io
import json
import math
import subprocess
import sys

import pytest

from paneitz_lab import __version__
from paneitz_lab.cli import run


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def doc_of(*argv):
    code, out, err = invoke(*argv, "--reproducible")
    assert code == 0, err
    return json.loads(out)


def test_model_volume():
    doc = doc_of("model", "--kind", "sphere", "--l-max", "16")
    assert doc["command"] == "model"
    assert doc["version"] == __version__
    assert doc["status"] == "ok"
    assert "timestamp" not in doc


def test_reproducible_output_is_byte_identical():
    a = invoke("bubble", "--q", "3", "--reproducible")[1]
    b = invoke("bubble", "--q", "3", "--reproducible")[1]
    assert a == b


def test_timestamp_present_by_default():
    code, out, _ = invoke("moments", "--index", "0,0")
    assert code == 0 and "timestamp" in json.loads(out)


def test_bubble_mass_csv():
    code, out, _ = invoke("bubble", "--q", "3", "--format", "csv", "--reproducible")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert float(rows[0]["q_times_mass"]) == pytest.approx(8 * math.pi**2, rel=1e-12)
    assert rows[0]["L"] == "inf"


def test_moments_value():
    doc = doc_of("moments", "--index", "1,1,2,2")
    assert doc["result"]["value"] == pytest.approx(1 / 24)


def test_capacity_command():
    doc = doc_of("capacity", "--r", "0.1", "--R", "1", "--P1", "1", "--P2", "0", "--Q1", "0", "--Q2", "0")
    assert doc["result"]["A"] == pytest.approx(-0.7562082390794505, rel=1e-12)
    assert doc["result"]["energy"] == pytest.approx(59.707809316468634, rel=1e-12)


def test_green_sphere():
    doc = doc_of("green", "--kind", "sphere", "--l-max", "64", "--point", "north")
    assert doc["result"]["S0"] == pytest.approx(2 * math.log(2) - 5 / 6, abs=1e-2)
    assert len(doc["result"]["a_sym"]) == 10


def test_minimize_converges():
    doc = doc_of("minimize", "--kind", "sphere", "--l-max", "16", "--eps", "2")
    assert doc["status"] == "ok"
    assert doc["result"]["value"] == pytest.approx(-(8 * math.pi**2 - 2) * math.log(8 * math.pi**2), rel=1e-9)


def test_minimize_nonconvergence_exit_code():
    code, out, err = invoke("minimize", "--kind", "sphere", "--l-max", "16", "--eps", "1", "--max-iter", "2")
    assert code == 1
    assert json.loads(out)["status"] == "not_converged"
    assert "did not converge" in err


def test_criterion_flat_dictionary():
    args = ["--qp", "3", "--a", "0.1,0,0,0", "--c", "0,0.2,0,0", "--b", "0.3,0,0,0"]
    conf = doc_of("criterion", "--which", "conformal", *args)["result"]["value"]
    main2 = doc_of(
        "criterion", "--which", "main2", "--qp", "3", "--grad-s", "0.1,0.2,0,0", "--lap-s", "0",
        "--grad-q", "0.3,0,0,0", "--lap-q", "0", "--R-scalar", "0",
    )["result"]["value"]
    assert main2 == pytest.approx(2 * 3 * conf, rel=1e-12)


def test_lambda_points():
    doc = doc_of("lambda", "--kind", "sphere", "--l-max", "64", "--points", "north;south")
    assert len(doc["result"]["entries"]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["bubble", "--lambda", "-1"],
        ["model", "--kind", "torus", "--n", "4"],
        ["nosuch"],
        ["capacity", "--r", "2", "--R", "1", "--P1", "0", "--P2", "0", "--Q1", "0", "--Q2", "0"],
        ["minimize", "--kind", "sphere", "--l-max", "16", "--eps", "0"],
    ],
)
def test_usage_errors(argv):
    code, out, err = invoke(*argv)
    assert code == 2
    assert err.startswith("paneitz-lab: error:")
    assert len(err.strip().splitlines()) == 1


def test_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PANEITZ_LAB_OUTPUT_DIR", str(tmp_path))
    code, _, _ = invoke("bubble", "--q", "1", "--output", "b.json", "--reproducible")
    assert code == 0
    assert json.loads((tmp_path / "b.json").read_text())["command"] == "bubble"


def test_sweep_testfn(tmp_path):
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("# flat test function\ncommand = testfn\neps = 1e-3, 2e-3\nL = 10, 20\n")
    code, out, err = invoke("sweep", "--config", str(cfg), "--format", "csv", "--reproducible")
    assert code == 0, err
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["eps", "L", "numeric", "predicted", "gap"]
    assert len(rows) == 4
    # the gap depends on L, not eps
    assert float(rows[0]["gap"]) == pytest.approx(float(rows[2]["gap"]), rel=1e-5)


@pytest.mark.parametrize(
    "text",
    ["eps = 1\n", "command = testfn\neps = 1\neps = 2\n", "command = testfn\nbogus = 1\n", "command = nope\n"],
)
def test_sweep_config_errors(tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    code, _, err = invoke("sweep", "--config", str(cfg))
    assert code == 2 and err.startswith("paneitz-lab: error:")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "paneitz_lab", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert __version__ in res.stdout
