import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mjnfet.cli_io import (ConfigError, RunConfig, TrendData, cli, export_field_grid,
                           load_config, parse_config, read_iv_csv, read_metrics_json,
                           render_plot, serialize_config, write_iv_csv, write_metrics_json)
from mjnfet.curves import IVCurve
from mjnfet.device import BiasPoint
from mjnfet.extraction import DeviceMetrics
from mjnfet.materials import GateMaterial
from mjnfet.solver import solve_equilibrium


def curve(kind="transfer", n=30):
    v = np.linspace(-0.5, 1.0, n)
    return IVCurve(kind, BiasPoint(V_d=0.05), v, 1e-12 * np.exp(15 * (v + 0.5)) / 3,
                   np.arange(n) % 7 != 3)


# --- config ---------------------------------------------------------------------------

def test_default_round_trip():
    cfg = RunConfig()
    assert parse_config(serialize_config(cfg)) == cfg


def test_full_round_trip(paper):
    text = """
device:
  gate: {kind: doped_poly, poly_doping: -1.0e+20}
  dielectric_thickness: 3.0
solver: {tol_psi: 1.0e-7}
protocol: {V_dd: 0.8, vg_step: 0.02, cgg_points: [0.0, 1.0]}
resolution: coarse
sweep:
  axes:
    - {path: doping, values: [1.0e+19, 2.0e+19]}
    - {path: channel_length, values: [22, 30]}
  parallelism: 2
fields:
  - {V_g: 0.0, V_d: 0.1}
compare_poly: {poly_doping: -5.0e+19}
output_dir: somewhere
emit_plots: true
"""
    cfg = parse_config(text)
    assert cfg.device.gate.kind == GateMaterial.poly(-1e20).kind
    assert cfg.device.gate.poly_doping == -1e20
    assert cfg.device.dielectric_thickness == 3.0
    assert cfg.protocol.cgg_points == (0.0, 1.0)
    assert cfg.sweep.axes == (("doping", (1e19, 2e19)), ("channel_length", (22.0, 30.0)))
    assert cfg.fields == (BiasPoint(0.0, 0.1),)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)


def test_named_metal_lookup():
    cfg = parse_config("device:\n  gate: {kind: metal, name: Nickel}\n")
    assert cfg.device.gate.workfunction == 5.22


@pytest.mark.parametrize("text,line,col", [
    ("device:\n  channel_lenght: 30\n", 2, 3),
    ("solver:\n  tol_psi: 1.0e-6\n  speed: 3\n", 3, 3),
    ("output_dir: x\nbogus: 1\n", 2, 1),
    ("sweep:\n  axes:\n    - {path: doping, valuez: [1]}\n", 3, 22),
])
def test_unknown_keys_located(text, line, col):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert (err.value.line, err.value.column) == (line, col)
    assert f"line {line}, column {col}" in str(err.value)


@pytest.mark.parametrize("text", [
    "device:\n  dielectric_thickness: 0\n",
    "device:\n  channel_doping: 2.0e+19\n  sd_doping: -1.0e+20\n",
    "resolution: ultra\n",
    "sweep:\n  axes:\n    - {path: gate.color, values: [1]}\n",
    "protocol: {vg_step: -1}\n",
    "emit_plots: maybe\n",
    "device: [1, 2]\n",
    "device:\n  gate: {kind: metal, name: Unobtainium}\n",
])
def test_invalid_values_rejected(text):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line is not None


def test_malformed_yaml():
    with pytest.raises(ConfigError) as err:
        parse_config("device: {channel_length: 3\n")
    assert err.value.line is not None


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


# --- writers --------------------------------------------------------------------------

def test_iv_csv_round_trip(tmp_path):
    c = curve()
    p = tmp_path / "sub" / "iv.csv"
    write_iv_csv(c, p)
    assert p.read_text().splitlines()[0] == "sweep_V,I_d_A,converged"
    v, i, ok = read_iv_csv(p)
    np.testing.assert_array_equal(v, c.sweep_v)
    np.testing.assert_allclose(i, c.current, rtol=1e-12)
    np.testing.assert_array_equal(ok, c.converged)


def test_metrics_json(tmp_path):
    m = DeviceMetrics(0.31, "constant_current", float("nan"), 1e-5, 1e-12, 1e7, 2e-5, [(0.5, 1e-17)])
    p = tmp_path / "m.json"
    write_metrics_json(m, p)
    doc = json.loads(p.read_text())
    assert set(doc) == {"V_th", "V_th_method", "SS", "I_on", "I_off", "on_off_ratio",
                        "gm_max", "C_gg_samples"}
    assert doc["SS"] is None
    back = read_metrics_json(p)
    assert back.V_th == m.V_th and np.isnan(back.SS)


def test_writer_reports_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        write_iv_csv(curve(), blocker / "iv.csv")


def test_field_grid(paper, paper_mesh, tmp_path):
    sol = solve_equilibrium(paper_mesh, paper)
    p = tmp_path / "f.csv"
    export_field_grid(sol, paper_mesh, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x_nm,y_nm,psi_V,n_cm3,region"
    assert len(lines) - 1 == paper_mesh.n_nodes
    assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} == {
        "channel_semiconductor", "sd_semiconductor", "gate_dielectric"}


# --- plots ----------------------------------------------------------------------------

def test_transfer_plot_is_svg(tmp_path):
    p = tmp_path / "t.svg"
    assert render_plot(curve(), p) == "log"
    assert p.stat().st_size > 0
    root = ET.parse(p).getroot()
    assert root.tag.endswith("svg")


def test_plot_is_reproducible(tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    assert render_plot(curve("output"), a) == "linear"
    render_plot(curve("output"), b)
    assert a.read_bytes() == b.read_bytes()


def test_trend_plot_has_fit_annotation(tmp_path):
    p = tmp_path / "trend.svg"
    x = np.array([4.63, 4.8, 5.0, 5.22])
    render_plot(TrendData(x, x - 4.7, "phi_m (eV)", "V_th (V)", (1.0, -4.7, 1.0)), p)
    assert "slope 1" in p.read_text()


def test_empty_plot_rejected(tmp_path):
    with pytest.raises(ValueError):
        render_plot(TrendData(np.array([]), np.array([]), "x", "y"), tmp_path / "e.svg")


# --- commands -------------------------------------------------------------------------

def test_preset_then_simulate(tmp_path):
    out = tmp_path / "run"
    assert cli(["preset-paper", "--out", str(out)]) == 0
    cfg = out / "config.yaml"
    assert load_config(cfg) == RunConfig(output_dir=str(out))
    assert cli(["simulate", "--config", str(cfg), "--resolution", "coarse",
                "--emit-plots", "--emit-fields"]) == 0
    m = json.loads((out / "metrics.json").read_text())
    for key in ("V_th", "SS", "I_on", "I_off"):
        assert isinstance(m[key], float) and np.isfinite(m[key])
    for name in ("transfer_lin.csv", "transfer_sat.csv", "output.csv", "output.svg",
                 "fields_equilibrium.csv"):
        assert (out / name).exists()


def test_fields_command_contrast(tmp_path):
    out = tmp_path / "f"
    assert cli(["fields", "--out", str(out), "--resolution", "coarse"]) == 0
    summary = json.loads((out / "fields_summary.json").read_text())
    assert len(summary) == 2
    assert summary[0]["min_n_over_Nd"] < 1e-3
    assert summary[1]["min_n_over_Nd"] >= 0.95
    for s in summary:
        rows = (out / s["file"]).read_text().splitlines()
        assert rows[0] == "x_nm,y_nm,psi_V,n_cm3,region"


def test_classify_command(tmp_path):
    assert cli(["classify", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "classify.json").read_text())
    by_name = {g["name"]: g for g in report["gates"]}
    assert by_name["Tungsten"]["class"] == "n_depleting"
    assert by_name["Nickel"]["class"] == "n_depleting"


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("device:\n  channel_lenght: 3\n")
    assert cli(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "line 2, column 3" in capsys.readouterr().err


def test_sweep_without_plan_is_config_error(tmp_path):
    assert cli(["sweep", "--out", str(tmp_path)]) == 2


def test_solver_failure_exit_code(tmp_path):
    cfg = tmp_path / "starved.yaml"
    cfg.write_text("solver: {max_gummel_iterations: 1, max_newton_iterations: 1}\n"
                   f"output_dir: {tmp_path}\n")
    assert cli(["simulate", "--config", str(cfg), "--resolution", "coarse"]) == 3
    diag = json.loads((tmp_path / "solver_failure.json").read_text())
    assert diag["command"] == "simulate" and diag["error"]


def test_sweep_command_outputs(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("sweep:\n  axes:\n    - {path: gate.workfunction, values: [4.8, 5.0, 5.22]}\n"
                   "resolution: coarse\n")
    out = tmp_path / "o"
    assert cli(["sweep", "--config", str(cfg), "--out", str(out), "--emit-plots"]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[0].startswith("gate.workfunction_eV,")
    trends = json.loads((out / "trends.json").read_text())
    assert trends["V_th"]["slope"] == pytest.approx(1.0, abs=0.15)
    assert (out / "trend_V_th.svg").exists()
