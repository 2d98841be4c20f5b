import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from abloop.cli import main, resolve

CURVES = Path(__file__).resolve().parents[1] / "curves"


def rows(path):
    return list(csv.reader(open(path)))


def test_spectrum_and_config_echo(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["spectrum", "--curve", str(CURVES / "circle.json"), "-n", "3", "--out", str(out)]) == 0
    assert "mu_1 = -0.1875" in capsys.readouterr().out
    r = rows(out / "spectrum.csv")
    assert r[0] == ["j", "mu"] and float(r[1][1]) == pytest.approx(-0.1875, abs=1e-12)
    echoed = json.loads((out / "config.json").read_text())
    assert echoed["command"] == "spectrum" and echoed["n"] == 3


def test_transverse(tmp_path):
    assert main(["transverse", "--beta", "10", "--a", "2", "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "transverse.csv")
    assert r[0][:2] == ["sign", "zeta"]
    plus = next(x for x in r[1:] if x[0] == "+")
    assert float(plus[1]) == pytest.approx(-25.0, abs=1e-6)


def test_transverse_needs_beta(tmp_path, capsys):
    assert main(["transverse", "--a", "0.3", "--out", str(tmp_path)]) == 1
    assert "--beta" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["spectrum", "--curve", "nope.json"], ["frobnicate"],
                                  ["bracket", "--beta", "20", "--grid", "7by9"]])
def test_bad_input_exits_one(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 1


def test_malformed_curve_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"fourier": [[1.0, 0.0]], "length": 6.283185307179586}')
    assert main(["spectrum", "--curve", str(bad), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("text", ["{not json", '{"colour": 1}', "[1, 2]"])
def test_bad_config_exits_one(tmp_path, text):
    cfg = tmp_path / "c.json"
    cfg.write_text(text)
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("ABLOOP_OUT", "from-env")
    assert resolve(["spectrum"])["out"] == "from-env"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"c0": 0.1, "out": "from-file", "betas": "20,40"}))
    r = resolve(["spectrum", "--config", str(cfg)])
    assert r["c0"] == 0.1 and r["out"] == "from-file" and r["betas"] == [20.0, 40.0]
    r = resolve(["spectrum", "--config", str(cfg), "--c0", "0.4", "--out", "from-flag"])
    assert r["c0"] == 0.4 and r["out"] == "from-flag"


def test_bracket_command(tmp_path):
    assert main(["bracket", "--beta", "20", "-n", "2", "--out", str(tmp_path)]) == 0
    r = rows(tmp_path / "bracket.csv")
    assert r[0][:3] == ["param", "j", "mu"] and len(r) == 3


def test_lemma2_command(tmp_path):
    code = main(["lemma2", "--curve", "perturbed-circle", "--beta", "10", "--a", "0.3",
                 "--grid", "24x17", "--out", str(tmp_path)])
    assert code == 0
    assert len(rows(tmp_path / "lemma2.csv")) == 4


def test_sweep_flux_command(tmp_path):
    code = main(["sweep-flux", "--beta", "40", "--c0s", "0.3,0.5,0.7", "--grid", "9x61",
                 "--threads", "2", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "sweep_flux.csv").exists() and (tmp_path / "sweep_flux.svg").exists()


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "abloop", "spectrum", "-n", "1", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert p.returncode == 0 and "mu_1" in p.stdout
