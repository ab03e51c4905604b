import json
import subprocess
import sys

import numpy as np
import pytest

from fisdim.cli import load, parse_config, run
from fisdim.errors import ConfigError

from conftest import ROOT

MINIMAL = {"n_axis": 2, "domain": [0, 1, 0, 1],
           "z": [[0, 0, 0], [0, 1, 0], [0, 0, 0]],
           "S": "0.5", "g": "0", "h": "16*x*(1-x)*y*(1-y)"}
CONST = str(ROOT / "configs" / "const_s06.json")


def errors_of(data):
    with pytest.raises(ConfigError) as info:
        parse_config(data)
    return dict(info.value.errors)


def test_load_minimal(write_config):
    cfg = load(write_config(MINIMAL))
    assert cfg.n_axis == 2 and cfg.z.shape == (3, 3)
    assert cfg.system().grid.side == 1.0


def test_wrong_z_shape():
    errs = errors_of({**MINIMAL, "z": [[0, 0], [0, 0]]})
    assert errs["z"] == "z must be (N+1)x(N+1)"


def test_non_square_domain():
    errs = errors_of({**MINIMAL, "domain": [0, 1, 0, 2]})
    assert "N=M >= 2 and |I|=|J|" in errs["domain"]


def test_many_errors_at_once():
    errs = errors_of({"n_axis": 1, "domain": [0, 1], "S": "sin(x", "g": 3, "extra": True})
    assert set(errs) >= {"n_axis", "domain", "S", "g", "h", "z", "extra"}
    assert "offset 6" in errs["S"]


def test_rejects_non_json_constants(write_config):
    with pytest.raises(ConfigError):
        load(write_config('{"n_axis": NaN}'))
    with pytest.raises(ConfigError):
        load(write_config('{"n_axis": 2, // comment\n}'))


def test_error_json_on_stderr(write_config, capsys):
    code = run(["dim", str(write_config({**MINIMAL, "z": [[0]]}))])
    err = json.loads(capsys.readouterr().err)
    assert code == 1
    assert err["error"] == "ConfigError" and err["errors"][0]["field"] == "z"


def test_missing_file(capsys, tmp_path):
    assert run(["validate", str(tmp_path / "nope.json")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_validate_failure_exit(write_config, capsys):
    code = run(["validate", str(write_config({**MINIMAL, "S": "1.2*x"}))])
    out = capsys.readouterr()
    assert code == 1
    assert not json.loads(out.out)["validation"]["ok"]
    assert json.loads(out.err)["error"] == "ValidationError"


def test_validate_ok(capsys):
    assert run(["validate", CONST]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["validation"]["ok"] and doc["conditions"]["a5"] == "verified"


def test_render_shape(capsys):
    assert run(["render", CONST, "--level", "7"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# fisdim level=7 N=2"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == 129 and all(len(r) == 129 for r in rows)


def test_spectra_constant(capsys):
    assert run(["spectra", CONST, "--n-max", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["levels"]) == 3
    for lv in doc["levels"]:
        for kind in ("upper", "lower"):
            r = lv[kind]
            assert r["rho_lo"] <= 2.4 <= r["rho_hi"] and r["rho_hi"] - r["rho_lo"] <= 1e-8


def test_spectra_exports_matrices(tmp_path):
    out = tmp_path / "o"
    assert run(["spectra", CONST, "--n-max", "2", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["lower_n1.mtx", "lower_n2.mtx", "meta.json", "spectra.json",
                     "upper_n1.mtx", "upper_n2.mtx"]
    assert (out / "upper_n2.mtx").read_text().splitlines()[1] == "16 16 64"


def test_osc_command(capsys):
    assert run(["osc", CONST, "--n", "2", "--k", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# fisdim oscvector n=2 k=1" and len(lines) == 18


def test_dim_report(capsys):
    assert run(["dim", CONST, "--level", "9"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert {"upper_bound", "lower_bound", "exact"} <= set(doc)
    assert doc["exact"]["value"] == pytest.approx(2.263034, abs=1e-6)
    assert doc["settings"]["eval_level"] == 9


@pytest.mark.parametrize("argv", [["dim", "--level", "8"], ["render", "--level", "5"],
                                  ["spectra", "--n-max", "2"], ["osc", "--n", "1", "--k", "2"],
                                  ["validate"]])
def test_idempotent(argv, tmp_path):
    outs = []
    for run_id in range(2):
        out = tmp_path / f"run{run_id}"
        assert run([argv[0], CONST, *argv[1:], "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "meta.json"})
        assert (out / "meta.json").exists()
    assert outs[0] == outs[1] and outs[0]


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("FISDIM_THREADS", "1")
    assert run(["spectra", CONST, "--n-max", "1"]) == 0
    monkeypatch.setenv("FISDIM_THREADS", "many")
    assert run(["spectra", CONST, "--n-max", "1"]) == 1
    assert "FISDIM_THREADS" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "fisdim", "render", CONST, "--level", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    vals = np.array([[float(v) for v in ln.split(",")] for ln in res.stdout.splitlines()[1:]])
    assert vals.shape == (5, 5)
    res = subprocess.run([sys.executable, "-m", "fisdim", "frobnicate", CONST],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 2
    assert json.loads(res.stderr)["error"] == "UsageError"
