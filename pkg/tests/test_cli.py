import csv
import io
import json
import math
import subprocess
import sys

import pytest

from herald_sim import cli
from herald_sim.cli import CSV_HEADER, PRESET_DE2, ConfigError, load_config, main, parse_config
from herald_sim.protocol import prepare_params


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


GATE = ("--set", "C=100", "--set", "Delta_E2_over_gamma=100")


# -------------------------------------------------------------- gate

def test_gate_json(capsys):
    code, out, _ = run(capsys, "gate", *GATE)
    assert code == 0
    d = json.loads(out)
    assert d["variant"] == "NonlocalCZ"
    assert d["infidelity"] == pytest.approx(7.94e-4, rel=0.02)
    assert d["P_success"] == pytest.approx(0.2292, abs=5e-4)


def test_gate_analytic_level(capsys):
    code, out, _ = run(capsys, "gate", *GATE, "--level", "analytic")
    d = json.loads(out)
    assert code == 0 and d["level"] == "analytic"
    assert d["P_success"] == d["P_analytic"] == pytest.approx(math.exp(-d["Gamma"] * d["t_gate"]))


def test_gate_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"variant": "dfs", "C": 600, "lambda": 1.84,
                               "Delta_E2_over_gamma": 220, "level": "effective"}))
    code, out, _ = run(capsys, "gate", "--config", str(cfg))
    assert code == 0
    assert json.loads(out)["variant"] == "LocalCZ_DFS"


def test_unknown_field_exit_1(capsys):
    code, _, err = run(capsys, "gate", *GATE, "--set", "bogus_key=3")
    assert code == 1
    assert "bogus_key" in err


def test_bad_json_reports_position(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"C": 100,\n "lambda": }')
    code, _, err = run(capsys, "gate", "--config", str(cfg))
    assert code == 1
    assert "line 2" in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(capsys, "gate", "--config", str(tmp_path / "nope.json"))
    assert code == 1


def test_herald_impossible_exit_2(capsys):
    with pytest.warns(UserWarning):
        code, _, err = run(capsys, "gate", "--set", "C=0.01", "--set", "Delta_E2_over_gamma=100",
                           "--level", "analytic")
    assert code == 2
    assert "herald" in err


def test_integrator_failure_exit_3(capsys):
    code, _, err = run(capsys, "gate", "--set", "C=600", "--set", "Delta_E2_over_gamma=180",
                       "--set", "method=rk45")
    assert code == 3
    assert "integrator" in err


def test_gate_needs_single_point(capsys):
    code, _, err = run(capsys, "gate", "--set", "C=[100,600]", "--set", "Delta_E2_over_gamma=100")
    assert code == 1


@pytest.mark.parametrize("key,value", [("C", "-5"), ("lambda", "0"), ("level", "fast"),
                                       ("variant", "ring"), ("tol", "0"), ("Delta_E2_over_gamma", "[]")])
def test_invalid_values_exit_1(capsys, key, value):
    code, _, err = run(capsys, "gate", *GATE, "--set", f"{key}={value}")
    assert code == 1
    assert err.startswith("error:")


# -------------------------------------------------------------- sweep

SWEEP = ("--set", "C=[600,100]", "--set", "Delta_E2_over_gamma=[140,100,120]")


def test_sweep_csv_format(capsys):
    code, out, _ = run(capsys, "sweep", *SWEEP, "--level", "analytic")
    assert code == 0
    rows = read_csv(out)
    assert tuple(rows[0]) == CSV_HEADER
    keys = [(float(r[0]), float(r[2])) for r in rows[1:]]
    assert keys == sorted(keys) and len(keys) == 6
    for r in rows[1:]:
        rec = dict(zip(CSV_HEADER, r))
        assert float(rec["P_numeric"]) == float(rec["P_analytic"])
        assert float(rec["runtime_s"]) == 0.0


def test_sweep_p_analytic_is_exponential(capsys):
    _, out, _ = run(capsys, "sweep", *SWEEP, "--level", "effective")
    for r in read_csv(out)[1:]:
        rec = dict(zip(CSV_HEADER, map(float, r)))
        p, Gamma = prepare_params(rec["C"], rec["lambda"], rec["delta_E2_over_gamma"])
        assert rec["P_analytic"] == pytest.approx(math.exp(-Gamma * rec["t_CZ_gamma"]), rel=1e-12)


def test_sweep_worker_count_does_not_change_output(tmp_path):
    args = ["sweep", "--set", "C=[100]", "--set", "Delta_E2_over_gamma=[100,120]",
            "--set", "samples=4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--workers", "1", "--out", str(a)]) == 0
    assert main(args + ["--workers", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_workers_env(monkeypatch):
    monkeypatch.setenv("HERALD_SIM_WORKERS", "3")
    assert cli._default_workers() == 3
    monkeypatch.setenv("HERALD_SIM_WORKERS", "zero")
    assert cli._default_workers() == 1
    monkeypatch.delenv("HERALD_SIM_WORKERS")
    assert cli._default_workers() == 1


def test_record_runtime(capsys):
    _, out, _ = run(capsys, "sweep", "--set", "C=100", "--set", "Delta_E2_over_gamma=100",
                    "--set", "record_runtime=true", "--level", "effective")
    assert float(dict(zip(CSV_HEADER, read_csv(out)[1]))["runtime_s"]) > 0


def test_gnuplot_hint(tmp_path, capsys):
    path = tmp_path / "s.csv"
    code, out, _ = run(capsys, "sweep", *SWEEP, "--level", "analytic", "--out", str(path),
                       "--gnuplot-hint")
    assert code == 0
    assert str(path) in out and "plot" in out
    assert read_csv(path.read_text())[0] == list(CSV_HEADER)
    code, out, err = run(capsys, "sweep", *SWEEP, "--level", "analytic", "--gnuplot-hint")
    assert "plot" in err and "plot" not in out


def test_output_path_from_config(tmp_path, capsys):
    path = tmp_path / "o.csv"
    code, out, _ = run(capsys, "sweep", *SWEEP, "--level", "analytic", "--set", f"output_path={path}")
    assert code == 0 and out == ""
    assert path.exists()


@pytest.mark.parametrize("preset,variant", [("fig2", "nonlocal"), ("fig4", "dfs")])
def test_presets(preset, variant, capsys):
    raw = load_config(None, preset)
    cfg = parse_config(raw)
    assert cfg.variant == variant
    assert cfg.Delta_E2_over_gamma == PRESET_DE2
    code, out, _ = run(capsys, preset, "--level", "analytic", "--set", "C=600")
    assert code == 0
    assert len(read_csv(out)) == 1 + len(PRESET_DE2)


def test_range_syntax():
    cfg = parse_config({"C": 100, "Delta_E2_over_gamma": {"start": 100, "stop": 140, "step": 20}})
    assert cfg.Delta_E2_over_gamma == [100.0, 120.0, 140.0]
    with pytest.raises(ConfigError) as e:
        parse_config({"C": 100, "Delta_E2_over_gamma": {"start": 100, "stop": 140, "step": 0}})
    assert e.value.field == "Delta_E2_over_gamma"


def test_set_override_beats_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"C_values": [100, 600], "lambda": 3}))
    raw = load_config(str(cfg), None, {"C": 50})
    assert "C_values" not in raw and raw["C"] == 50 and raw["lambda"] == 3


# -------------------------------------------------------------- other commands

def test_effective_command(capsys):
    code, out, _ = run(capsys, "effective", "--set", "C=600", "--set", "Delta_E2_over_gamma=180")
    assert code == 0
    d = json.loads(out)
    assert set(d["NumericInversion"]) == {"00", "10", "01", "11"}
    gaps = d["gap_NumericInversion_ClosedForm"]
    assert max(v for sector in gaps.values() for v in sector.values()) < 1e-10


def test_tune_command(capsys):
    code, out, _ = run(capsys, "tune", "--set", "C=600", "--set", "Delta_E2_over_gamma=180")
    d = json.loads(out)
    assert code == 0
    assert d["Delta_E1_over_gamma"] == pytest.approx(17.3205080756887729, rel=1e-12)
    assert d["Delta_e_over_gamma"] == pytest.approx(10.8936879739200440, rel=1e-12)
    assert d["Gamma"] == pytest.approx(1 / 10800, rel=1e-12)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "herald_sim", "tune", "--set", "C=100",
                        "--set", "Delta_E2_over_gamma=100"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "Z_p" in json.loads(r.stdout)
