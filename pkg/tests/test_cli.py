import json
import os

import numpy as np
import pytest

from pcopo import critical_wavenumber
from pcopo.cli import (FigureDataset, _apply_overrides, _parse_value, main)

KC = critical_wavenumber(-1.0)


def write_config(tmp_path, extra=None):
    cfg = {
        "preset": "opo",
        "pump": {"E": 0.9},
        "grid": {"n": 64, "length": 4 * 2 * np.pi / KC},
        "campaign": {"n_trajectories": 4, "burn_in": 5.0, "duration": 20.0,
                     "calibration_trajectories": 4, "calibration_duration": 20.0,
                     "theta_points": 8, "phi_points": 4},
    }
    if extra:
        for key, val in extra.items():
            if val is None:
                cfg.pop(key, None)
            elif isinstance(val, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


# ---------------------------------------------------------------------------
# datasets


def test_dataset_round_trip_is_byte_identical(tmp_path):
    ds = FigureDataset("demo", ["a", "b"], [[1, 2.5], ["x", None]],
                       {"seed": 7, "nested": {"z": [1, 2]}})
    text = ds.to_json()
    again = FigureDataset.from_json(text)
    assert again.to_json() == text
    ds.write(str(tmp_path))
    assert (tmp_path / "demo.json").read_text() == text
    csv_lines = (tmp_path / "demo.csv").read_text().splitlines()
    assert csv_lines[0] == "a,b"
    assert csv_lines[1] == "1,2.5"


def test_dataset_json_is_canonical():
    d1 = FigureDataset("x", ["c"], [[1]], {"b": 1, "a": 2})
    d2 = FigureDataset("x", ["c"], [[1]], {"a": 2, "b": 1})
    assert d1.to_json() == d2.to_json()


# ---------------------------------------------------------------------------
# override parsing


def test_parse_value_types():
    assert _parse_value("0.9") == 0.9
    assert _parse_value("true") is True
    assert _parse_value("null") is None
    assert _parse_value("[1,2]") == [1, 2]
    assert _parse_value("pc-pump") == "pc-pump"


def test_apply_overrides_dotted_paths():
    data = {"pump": {"E": 0.5}}
    out = _apply_overrides(data, ["--pump.E=0.9", "--campaign.workers=2",
                                  "--preset=pc-both"])
    assert out["pump"]["E"] == 0.9
    assert out["campaign"]["workers"] == 2
    assert out["preset"] == "pc-both"
    from pcopo import ConfigError
    with pytest.raises(ConfigError, match="override"):
        _apply_overrides({}, ["--no-equals"])


# ---------------------------------------------------------------------------
# subcommands, exit codes, run directories


def test_threshold_command(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "runs")
    assert main(["threshold", "--config", cfg, "--out", out]) == 0
    captured = capsys.readouterr().out
    assert "opo" in captured and "E_th" in captured
    rundirs = os.listdir(out)
    assert len(rundirs) == 1
    seed = rundirs[0].rsplit("-", 1)[-1]
    assert seed == "12345"
    files = set(os.listdir(os.path.join(out, rundirs[0])))
    assert {"thresholds.csv", "thresholds.json"} <= files
    ds = FigureDataset.from_json(
        (tmp_path / "runs" / rundirs[0] / "thresholds.json").read_text())
    vals = dict((r[0], r[1]) for r in ds.rows)
    assert vals["opo"] == pytest.approx(1.0, abs=1e-3)
    assert vals["pc-signal"] > vals["opo"] > vals["pc-pump"]


def test_threshold_respects_configured_detuning(tmp_path):
    cfg = write_config(tmp_path, {"delta1": {"mean": -1.0},
                                  "delta0": {"mean": 0.2}, "preset": None})
    out = str(tmp_path / "runs")
    assert main(["threshold", "--config", cfg, "--out", out,
                 "--campaign.presets=[\"opo\"]"]) == 0
    rundir = os.listdir(out)[0]
    ds = FigureDataset.from_json(
        (tmp_path / "runs" / rundir / "thresholds.json").read_text())
    assert ds.rows[0][1] == pytest.approx(np.sqrt(1.04), abs=1e-3)


def test_exit_code_2_on_config_errors(tmp_path, capsys):
    # positive signal detuning: no off-axis instability exists
    cfg = write_config(tmp_path)
    out = str(tmp_path / "runs")
    assert main(["threshold", "--config", cfg, "--out", out,
                 "--delta1.mean=0.5"]) == 2
    assert "config error" in capsys.readouterr().err
    # unreadable config file
    assert main(["threshold", "--config", str(tmp_path / "missing.json"),
                 "--out", out]) == 2
    # invalid JSON
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["threshold", "--config", str(bad), "--out", out]) == 2
    # unknown preset name
    assert main(["threshold", "--config", cfg, "--out", out,
                 "--campaign.presets=[\"quasicrystal\"]"]) == 2


def test_exit_code_3_on_numerical_failure(tmp_path, capsys):
    # pump far beyond the validity domain aborts the campaign
    cfg = write_config(tmp_path, {"pump": {"E": 3.0}})
    out = str(tmp_path / "runs")
    assert main(["simulate", "--config", cfg, "--out", out]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_exit_code_4_on_insufficient_statistics(tmp_path, capsys):
    cfg = write_config(tmp_path, {"campaign": {"duration": 0.0}})
    out = str(tmp_path / "runs")
    code = main(["fig2", "--config", cfg, "--out", out,
                 "--campaign.presets=[\"opo\"]"])
    assert code == 4
    assert "insufficient statistics" in capsys.readouterr().err


def test_simulate_writes_accumulators_and_manifest(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "runs")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    rundir = os.path.join(out, os.listdir(out)[0])
    acc = json.loads(open(os.path.join(rundir, "accumulators.json")).read())
    man = json.loads(open(os.path.join(rundir, "manifest.json")).read())
    assert acc["moments"]["n"] > 0
    assert man["master_seed"] == 12345
    assert man["n_invalid"] == 0
    assert man["config_hash"] == os.path.basename(rundir).rsplit("-", 1)[0]


def test_calibrate_reports_unit_vacuum(tmp_path, capsys):
    cfg = write_config(tmp_path, {"campaign": {"calibration_trajectories": 16,
                                               "calibration_duration": 50.0}})
    out = str(tmp_path / "runs")
    assert main(["calibrate", "--config", cfg, "--out", out]) == 0
    rundir = os.path.join(out, os.listdir(out)[0])
    blob = json.loads(open(os.path.join(rundir, "calibration.json")).read())
    inten = np.array(blob["mode_intensity_q"])
    assert abs(np.mean(inten) - 1.0) < 0.05


def test_fig1_analytic_only(tmp_path):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "runs")
    assert main(["fig1", "--config", cfg, "--out", out,
                 "--campaign.presets=[\"opo\",\"pc-pump\"]"]) == 0
    rundir = os.path.join(out, os.listdir(out)[0])
    a = FigureDataset.from_json(open(os.path.join(rundir, "fig1a.json")).read())
    b = FigureDataset.from_json(open(os.path.join(rundir, "fig1b.json")).read())
    # intensity grows monotonically with pump for each preset
    for name in ("opo", "pc-pump"):
        vals = [r[2] for r in a.rows if r[0] == name]
        assert vals == sorted(vals)
        assert all(v > 0 for v in vals)
    # spectrum covers every grid mode
    ks = {r[1] for r in b.rows if r[0] == "opo"}
    assert len(ks) == 64


def test_commands_are_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert main(["simulate", "--config", cfg, "--out", out1]) == 0
    assert main(["simulate", "--config", cfg, "--out", out2]) == 0
    d1 = os.path.join(out1, os.listdir(out1)[0], "accumulators.json")
    d2 = os.path.join(out2, os.listdir(out2)[0], "accumulators.json")
    assert open(d1).read() == open(d2).read()
