import csv
import json

import pytest

from erspin import cli


def run(tmp_path, *args, name="o"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


@pytest.mark.parametrize("cmd", ["spectrum", "purcell", "pump", "readout-map"])
def test_fast_subcommands(tmp_path, cmd):
    code, out = run(tmp_path, cmd)
    assert code == 0
    raw = (out / f"{cmd}.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    header = next(csv.reader(raw.decode().splitlines()))
    assert all(h and not h[0].isdigit() for h in header)
    man = json.loads((out / f"{cmd}.manifest.json").read_text())
    assert {"config_sha256", "seed", "versions", "wall_time_s", "exit_code"} <= set(man)
    assert man["exit_code"] == 0


def test_purcell_values(tmp_path):
    code, out = run(tmp_path, "purcell")
    s = json.loads((out / "purcell.json").read_text())
    assert s["peak_purcell"] == 95.0
    rows = list(csv.DictReader((out / "purcell.csv").open()))
    assert float(next(r for r in rows if float(r["detuning_mhz"]) == 0)["purcell"]) == 95.0


def test_readout_analytic(tmp_path):
    code, out = run(tmp_path, "readout", "--analytic")
    s = json.loads((out / "readout.json").read_text())
    assert code == 0
    assert s["min_fidelity"] == pytest.approx(0.9096, abs=1e-4)


def test_readout_thread_determinism(tmp_path):
    _, a = run(tmp_path, "readout", "--shots", "20000", "--threads", "1", name="a")
    _, b = run(tmp_path, "readout", "--shots", "20000", "--threads", "8", name="b")
    for f in ("readout.csv", "readout.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_svg_deterministic(tmp_path):
    pytest.importorskip("matplotlib")
    _, a = run(tmp_path, "purcell", "--svg", name="a")
    _, b = run(tmp_path, "purcell", "--svg", name="b")
    assert (a / "purcell.svg").read_bytes() == (b / "purcell.svg").read_bytes()


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[cavity]\nkappa = 1\n")
    code, out = run(tmp_path, "pump", "--config", str(bad))
    assert code == 2
    assert not (out / "pump.json").exists()


def test_env_config(tmp_path, monkeypatch):
    ini = tmp_path / "c.ini"
    ini.write_text("[pump]\nrepetitions = 10\n")
    monkeypatch.setenv("ERSPIN_CONFIG", str(ini))
    code, out = run(tmp_path, "pump")
    assert code == 0
    assert json.loads((out / "pump.json").read_text())["repetitions"] == 10


def test_bad_seed_and_threads(tmp_path):
    assert run(tmp_path, "pump", "--seed", str(2**64))[0] == 2
    assert run(tmp_path, "pump", "--threads", "0")[0] == 2


def test_infeasible_exit_code(tmp_path):
    code, out = run(tmp_path, "calibrate", "--stage", "branching", "--pump-target", "1.0")
    assert code == 4
    man = json.loads((out / "calibrate.manifest.json").read_text())
    assert man["exit_code"] == 4 and "infeasible" in man["error"]


def test_calibrate_writes_config(tmp_path):
    ini = tmp_path / "cal.ini"
    code, out = run(tmp_path, "calibrate", "--stage", "readout", "--stage", "branching", "--write-config", str(ini))
    assert code == 0
    text = ini.read_text()
    assert "[calibrated]" in text and "readout.flip_prob" in text
    rep = json.loads((out / "calibrate.json").read_text())
    assert all(t["passed"] for t in rep["targets_met"])


def test_fit_subcommand(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x,y\n" + "".join(f"{i},{3.0 * (i + 1) ** 0.5}\n" for i in range(6)))
    code, out = run(tmp_path, "fit", "--input", str(data), "--model", "power_law")
    assert code == 3                                 # N = 0 has no logarithm
    data.write_text("x,y\n" + "".join(f"{i + 1},{3.0 * (i + 1) ** 0.5}\n" for i in range(6)))
    code, out = run(tmp_path, "fit", "--input", str(data), "--model", "power_law")
    assert code == 0
    assert json.loads((out / "fit.json").read_text())["parameters"]["exponent"] == pytest.approx(0.5)


def test_fit_nonconverged_is_numerical_failure(tmp_path):
    data = tmp_path / "flat.csv"
    data.write_text("x,y\n" + "".join(f"{i},0.5\n" for i in range(10)))
    code, _ = run(tmp_path, "fit", "--input", str(data))
    assert code == 3


def test_echo_reports_revival(tmp_path):
    code, out = run(tmp_path, "echo")
    s = json.loads((out / "echo.json").read_text())
    assert code == 0
    assert s["revival_s"] == pytest.approx(0.03, rel=0.2)
