"""
Configuration files, command-line entry points and every file the package
writes: I-V curves, metrics, field grids and optional SVG plots.

The config is a YAML document::

    device:
      channel_length: 22.0
      gate: {kind: metal, workfunction: 4.63, name: Tungsten}
    solver: {tol_psi: 1.0e-6}
    protocol: {V_dd: 1.0}
    resolution: default
    sweep:
      axes:
        - {path: gate.workfunction, values: [4.63, 4.8, 5.0, 5.22]}
      parallelism: 1
    output_dir: out

Unknown keys are rejected with their line and column.  All numbers are
written with ``repr`` so files are locale-independent and byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .curves import IVCurve
from .device import BiasPoint, DeviceSpec, default_paper_device, is_metal, validate
from .extraction import DeviceMetrics, compare_gate_stacks
from .materials import (DielectricMaterial, GateMaterial, GateKind, SemiconductorMaterial,
                        builtin_metal_table, channel_workfunction, classify_gate,
                        metal_workfunction)
from .mesh import RESOLUTIONS, Region, StructuredMesh, build_mesh
from .solver import (ConvergenceError, FieldSolution, SolverSettings, channel_ratio,
                     classify_regime, solve_bias, solve_equilibrium)
from .sweep import (BiasProtocol, SweepPlan, SweepResult, fit_linear_trend,
                    run_sweep, simulate_device)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line, self.column = line, column


# --- config -------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    axes: tuple  # ((path, (values...)), ...)
    parallelism: int = 1


@dataclass(frozen=True)
class RunConfig:
    device: DeviceSpec = field(default_factory=default_paper_device)
    solver: SolverSettings = SolverSettings()
    protocol: BiasProtocol = BiasProtocol()
    resolution: str = "default"
    sweep: Optional[SweepConfig] = None
    fields: tuple = ()  # BiasPoints for `fields`; empty means V_g = 0 and V_g = V_FB
    compare_poly: float = -1e20  # poly doping for `compare-poly`
    output_dir: str = "out"
    emit_fields: bool = False
    emit_plots: bool = False

    def sweep_plan(self) -> SweepPlan:
        if self.sweep is None:
            raise ConfigError("config has no 'sweep' section")
        return SweepPlan(self.device, self.sweep.axes, self.protocol, self.resolution,
                         self.sweep.parallelism, self.solver)


def _names(cls):
    return {f.name for f in dataclasses.fields(cls)}


# schema: dict of allowed keys -> sub-schema (dict), list item schema ([dict]) or None (leaf)
_DEVICE = {k: None for k in _names(DeviceSpec)}
_DEVICE["channel_material"] = {k: None for k in _names(SemiconductorMaterial)}
_DEVICE["dielectric"] = {k: None for k in _names(DielectricMaterial)}
_DEVICE["gate"] = {k: None for k in _names(GateMaterial)}
_SCHEMA = {
    "device": _DEVICE,
    "solver": {k: None for k in _names(SolverSettings)},
    "protocol": {k: None for k in _names(BiasProtocol)},
    "resolution": None,
    "sweep": {"axes": [{"path": None, "values": None}], "parallelism": None},
    "fields": [{k: None for k in _names(BiasPoint)}],
    "compare_poly": {"poly_doping": None},
    "output_dir": None,
    "emit_fields": None,
    "emit_plots": None,
}


def _check_keys(node, schema, marks, path=()):
    """Reject keys missing from ``schema``; record each key's position."""
    if isinstance(schema, dict):
        if not isinstance(node, yaml.MappingNode):
            m = node.start_mark
            raise ConfigError(f"'{'.'.join(path) or 'config'}' must be a mapping",
                              m.line + 1, m.column + 1)
        for key_node, value_node in node.value:
            key = key_node.value
            m = key_node.start_mark
            if key not in schema:
                raise ConfigError(f"unknown key '{'.'.join(path + (key,))}'",
                                  m.line + 1, m.column + 1)
            marks[path + (key,)] = (m.line + 1, m.column + 1)
            _check_keys(value_node, schema[key], marks, path + (key,))
    elif isinstance(schema, list):
        if not isinstance(node, yaml.SequenceNode):
            m = node.start_mark
            raise ConfigError(f"'{'.'.join(path)}' must be a list", m.line + 1, m.column + 1)
        for k, item in enumerate(node.value):
            marks[path + (str(k),)] = (item.start_mark.line + 1, item.start_mark.column + 1)
            _check_keys(item, schema[0], marks, path + (str(k),))


def _build_gate(d: dict) -> GateMaterial:
    d = dict(d)
    kind = GateKind(d.get("kind", "metal"))
    if kind is GateKind.METAL and d.get("workfunction") is None and d.get("name"):
        d["workfunction"] = metal_workfunction(d["name"])
        if d["workfunction"] is None:
            raise ValueError(f"unknown metal {d['name']!r} and no workfunction given")
    return GateMaterial(**d)


def _device_from_dict(d: dict) -> DeviceSpec:
    d = dict(d)
    if "gate" in d:
        d["gate"] = _build_gate(d["gate"])
    return DeviceSpec.from_dict(d)


def config_from_dict(doc: dict, marks: Optional[dict] = None) -> RunConfig:
    marks = marks or {}

    def fail(section, exc):
        line, col = marks.get((section,), (None, None))
        raise ConfigError(f"invalid '{section}': {exc}", line, col) from exc

    kw = {}
    try:
        kw["device"] = _device_from_dict(doc.get("device", {}) or {}) if "device" in doc \
            else default_paper_device()
        problems = validate(kw["device"])
        if problems:
            raise ValueError("; ".join(problems))
    except (TypeError, ValueError) as exc:
        fail("device", exc)
    for section, cls in (("solver", SolverSettings), ("protocol", BiasProtocol)):
        if section in doc:
            try:
                d = dict(doc[section] or {})
                if "cgg_points" in d:
                    d["cgg_points"] = tuple(float(v) for v in d["cgg_points"])
                kw[section] = cls(**d)
            except (TypeError, ValueError) as exc:
                fail(section, exc)
    if "resolution" in doc:
        if doc["resolution"] not in RESOLUTIONS:
            fail("resolution", ValueError(f"expected one of {sorted(RESOLUTIONS)}"))
        kw["resolution"] = doc["resolution"]
    if doc.get("sweep") is not None:
        try:
            s = doc["sweep"]
            axes = tuple((str(a["path"]), tuple(float(v) for v in a["values"]))
                         for a in s.get("axes", []))
            kw["sweep"] = SweepConfig(axes, int(s.get("parallelism", 1)))
            problems = SweepPlan(kw["device"], axes, parallelism=kw["sweep"].parallelism
                                 ).validate()
            if problems:
                raise ValueError("; ".join(problems))
        except (KeyError, TypeError, ValueError) as exc:
            fail("sweep", exc)
    if "fields" in doc:
        try:
            kw["fields"] = tuple(BiasPoint(**b) for b in doc["fields"] or [])
        except (TypeError, ValueError) as exc:
            fail("fields", exc)
    if "compare_poly" in doc:
        try:
            kw["compare_poly"] = float(doc["compare_poly"]["poly_doping"])
            problems = GateMaterial.poly(kw["compare_poly"]).violations()
            if problems:
                raise ValueError("; ".join(problems))
        except (KeyError, TypeError, ValueError) as exc:
            fail("compare_poly", exc)
    if "output_dir" in doc:
        kw["output_dir"] = str(doc["output_dir"])
    for flag in ("emit_fields", "emit_plots"):
        if flag in doc:
            if not isinstance(doc[flag], bool):
                fail(flag, ValueError("must be true or false"))
            kw[flag] = doc[flag]
    return RunConfig(**kw)


def parse_config(text: str) -> RunConfig:
    """Parse YAML config text; raises ConfigError with line/column on problems."""
    try:
        node = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        m = exc.problem_mark
        raise ConfigError(f"malformed config: {exc.problem}",
                          m.line + 1 if m else None, m.column + 1 if m else None) from exc
    if node is None:
        return RunConfig()
    marks = {}
    _check_keys(node, _SCHEMA, marks)
    return config_from_dict(yaml.safe_load(text), marks)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def config_to_dict(cfg: RunConfig) -> dict:
    device = cfg.device.to_dict()
    device["gate"] = {k: v for k, v in device["gate"].items() if v is not None}
    doc = {
        "device": device,
        "solver": dataclasses.asdict(cfg.solver),
        "protocol": {**dataclasses.asdict(cfg.protocol),
                     "cgg_points": list(cfg.protocol.cgg_points)},
        "resolution": cfg.resolution,
    }
    if cfg.sweep is not None:
        doc["sweep"] = {"axes": [{"path": p, "values": list(v)} for p, v in cfg.sweep.axes],
                        "parallelism": cfg.sweep.parallelism}
    if cfg.fields:
        doc["fields"] = [dataclasses.asdict(b) for b in cfg.fields]
    doc["compare_poly"] = {"poly_doping": cfg.compare_poly}
    doc.update(output_dir=cfg.output_dir, emit_fields=cfg.emit_fields,
               emit_plots=cfg.emit_plots)
    return doc


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


# --- file writers -------------------------------------------------------------------

def _num(x) -> str:
    return repr(float(x))


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_iv_csv(curve: IVCurve, path) -> None:
    """Columns ``sweep_V,I_d_A,converged``."""
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep_V", "I_d_A", "converged"])
        for v, i, c in curve.points:
            w.writerow([_num(v), _num(i), "true" if c else "false"])


def read_iv_csv(path):
    """Inverse of write_iv_csv: arrays ``(sweep_V, I_d_A, converged)``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    v = np.array([float(r["sweep_V"]) for r in rows])
    i = np.array([float(r["I_d_A"]) for r in rows])
    c = np.array([r["converged"] == "true" for r in rows])
    return v, i, c


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def write_json(doc, path) -> None:
    with _open_for_write(path) as fh:
        fh.write(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def write_metrics_json(metrics: DeviceMetrics, path) -> None:
    write_json(metrics.to_dict(), path)


def read_metrics_json(path) -> DeviceMetrics:
    d = json.loads(Path(path).read_text())
    d = {k: (float("nan") if v is None else v) for k, v in d.items()}
    return DeviceMetrics.from_dict(d)


def export_field_grid(solution: FieldSolution, mesh: StructuredMesh, path) -> None:
    """One row per mesh node: ``x_nm,y_nm,psi_V,n_cm3,region``."""
    X, Y = mesh.node_xy
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_nm", "y_nm", "psi_V", "n_cm3", "region"])
        for xv, yv, p, n, r in zip(X, Y, solution.psi, solution.n, mesh.node_region):
            w.writerow([_num(xv), _num(yv), _num(p), _num(n), Region(r).tag])


# --- plots --------------------------------------------------------------------------

@dataclass
class TrendData:
    x: np.ndarray
    y: np.ndarray
    xlabel: str
    ylabel: str
    fit: Optional[tuple] = None  # (slope, intercept, r_squared)


def render_plot(data, path, log_y: Optional[bool] = None, title: str = "") -> str:
    """Static SVG of an IVCurve or a TrendData.  Transfer curves default to a
    log current axis; output curves and trends are linear.  Returns the y-axis
    scale used."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(data, IVCurve):
        x, y = data.valid()
        y = np.abs(y) if (log_y if log_y is not None else data.kind == "transfer") else y
        log_y = data.kind == "transfer" if log_y is None else log_y
        xlabel = "V_g (V)" if data.kind == "transfer" else "V_d (V)"
        ylabel, fit = "I_d (A)", None
    else:
        x, y, xlabel, ylabel, fit = data.x, data.y, data.xlabel, data.ylabel, data.fit
        log_y = bool(log_y)
    if len(x) == 0:
        raise ValueError("nothing to plot: no data points")
    with matplotlib.rc_context({"svg.hashsalt": "mjnfet", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        ax.plot(x, y, "o-", ms=3)
        if fit is not None:
            xs = np.array([min(x), max(x)])
            ax.plot(xs, fit[0] * xs + fit[1], "--",
                    label=f"slope {fit[0]:.3g}, R$^2$ = {fit[2]:.3f}")
            ax.legend()
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        scale = ax.get_yscale()
        plt.close(fig)
    return scale


# --- commands -----------------------------------------------------------------------

def _vfb(spec: DeviceSpec) -> float:
    phi_s = channel_workfunction(spec.channel_material, spec.channel_doping, spec.temperature)
    return spec.gate.workfunction - phi_s


def cmd_preset(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(serialize_config(dataclasses.replace(cfg, output_dir=str(out))))
    print(f"wrote {out / 'config.yaml'}")
    return EXIT_OK


def _write_fields(cfg, spec, mesh, biases, out):
    summary = []
    for b in biases:
        sol = solve_bias(mesh, spec, b, cfg.solver)
        name = f"fields_Vg{b.V_g:+.3f}_Vd{b.V_d:+.3f}.csv"
        export_field_grid(sol, mesh, out / name)
        summary.append({"file": name, "V_g": b.V_g, "V_d": b.V_d,
                        "min_n_over_Nd": channel_ratio(sol, mesh),
                        "regime": classify_regime(sol, spec, mesh)})
    return summary


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    spec = cfg.device
    mesh = build_mesh(spec, cfg.resolution)
    eq = solve_equilibrium(mesh, spec, cfg.solver)
    run = simulate_device(spec, cfg.protocol, cfg.solver, cfg.resolution, output=True)
    write_iv_csv(run.transfer_lin, out / "transfer_lin.csv")
    write_iv_csv(run.transfer_sat, out / "transfer_sat.csv")
    write_iv_csv(run.output, out / "output.csv")
    write_metrics_json(run.metrics, out / "metrics.json")
    write_json({"spec_fingerprint": spec.fingerprint(), **run.diagnostics,
                "equilibrium_regime": classify_regime(eq, spec, mesh)},
               out / "diagnostics.json")
    if cfg.emit_fields:
        export_field_grid(eq, mesh, out / "fields_equilibrium.csv")
    if cfg.emit_plots:
        render_plot(run.transfer_lin, out / "transfer_lin.svg", title="transfer, linear V_d")
        render_plot(run.transfer_sat, out / "transfer_sat.svg", title="transfer, V_d = V_dd")
        render_plot(run.output, out / "output.svg", title="output, V_g = V_dd")
    m = run.metrics
    print(f"V_th = {m.V_th:.4f} V  SS = {m.SS:.1f} mV/dec  I_on = {m.I_on:.4e} A  "
          f"I_off = {m.I_off:.4e} A")
    return EXIT_OK


def sweep_trends(result: SweepResult) -> dict:
    """Linear fits of V_th and I_on against the swept parameter (one-axis sweeps)."""
    trends = {}
    if len(result.paths) != 1:
        return trends
    for metric in ("V_th", "I_on"):
        try:
            fit = fit_linear_trend(result, result.paths[0], metric)
        except ValueError as exc:
            trends[metric] = {"error": str(exc)}
            continue
        trends[metric] = fit._asdict()
    return trends


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    result = run_sweep(cfg.sweep_plan())
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(result.to_csv())
    (out / "sweep.json").write_text(result.to_json())
    trends = sweep_trends(result)
    write_json(trends, out / "trends.json")
    if cfg.emit_plots and "V_th" in trends and "slope" in trends["V_th"]:
        x = result.paths[0]
        for metric, unit in (("V_th", "V"), ("I_on", "A")):
            t = trends.get(metric, {})
            if "slope" not in t:
                continue
            render_plot(TrendData(result.column(x), result.column(metric), x, f"{metric} ({unit})",
                                  (t["slope"], t["intercept"], t["r_squared"])),
                        out / f"trend_{metric}.svg")
    print(f"{len(result.rows)} rows, {len(result.failures)} failures")
    for metric, t in trends.items():
        if "slope" in t:
            print(f"{metric}: slope {t['slope']:.4g}  R^2 {t['r_squared']:.4f}")
    return EXIT_OK


def cmd_classify(cfg: RunConfig, out: Path) -> int:
    import warnings

    spec = cfg.device
    phi_s = channel_workfunction(spec.channel_material, spec.channel_doping, spec.temperature)
    gates = list(builtin_metal_table())
    if is_metal(spec) and spec.gate.workfunction not in [w for _, w in gates]:
        gates.append((spec.gate.name or "device gate", spec.gate.workfunction))
    report = {"channel_type": spec.channel_type, "channel_workfunction_eV": phi_s, "gates": []}
    for name, phi_m in gates:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            c = classify_gate(phi_m, phi_s, spec.channel_type)
        report["gates"].append({"name": name, "workfunction_eV": phi_m,
                                "class": c.kind.value, "warning": c.warning,
                                "V_FB_V": phi_m - phi_s})
        flag = "  (does not deplete channel)" if c.warning else ""
        print(f"{name:>14s} {phi_m:6.3f} eV  {c.kind.value}{flag}")
    write_json(report, out / "classify.json")
    return EXIT_OK


def cmd_fields(cfg: RunConfig, out: Path) -> int:
    spec = cfg.device
    biases = cfg.fields
    if not biases:
        if not is_metal(spec):
            raise ConfigError("poly gate has no analytic flat band; list 'fields' biases")
        biases = (BiasPoint(V_g=0.0), BiasPoint(V_g=_vfb(spec)))
    mesh = build_mesh(spec, cfg.resolution)
    summary = _write_fields(cfg, spec, mesh, biases, out)
    write_json(summary, out / "fields_summary.json")
    for s in summary:
        print(f"{s['file']}: min n/N_d = {s['min_n_over_Nd']:.3e} ({s['regime']})")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out: Path) -> int:
    metal = cfg.device
    if not is_metal(metal):
        raise ConfigError("compare-poly needs a metal-gate device")
    poly = metal.replace(gate=GateMaterial.poly(cfg.compare_poly))
    cmp_ = compare_gate_stacks(metal, poly, cfg.protocol.V_dd, cfg.solver, cfg.protocol,
                               cfg.resolution)
    write_json(cmp_.to_dict(), out / "compare_poly.json")
    print(f"metal V_th {cmp_.metal.V_th:.3f} V (phi_m {cmp_.metal.spec.gate.workfunction:.3f} eV)"
          f", poly V_th {cmp_.poly.V_th:.3f} V")
    print(f"on/off ratio quotient {cmp_.ratio_quotient:.3g}, SS poly - metal "
          f"{cmp_.ss_difference:.2f} mV/dec")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "single device: equilibrium, transfer and output curves, metrics"),
    "sweep": (cmd_sweep, "run the parameter sweep in the config"),
    "classify": (cmd_classify, "gate workfunction classification report"),
    "fields": (cmd_fields, "export potential and carrier grids"),
    "compare-poly": (cmd_compare, "metal versus doped-poly gate at matched threshold"),
    "preset-paper": (cmd_preset, "write the default device config"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mjnfet", description="Junctionless nanowire FET simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="YAML run config (default: built-in device)")
        s.add_argument("--out", help="output directory (overrides output_dir)")
        s.add_argument("--resolution", choices=sorted(RESOLUTIONS))
        s.add_argument("--emit-fields", action="store_true")
        s.add_argument("--emit-plots", action="store_true")
        s.add_argument("--parallelism", type=int)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.out:
        changes["output_dir"] = args.out
    if args.resolution:
        changes["resolution"] = args.resolution
    if args.emit_fields:
        changes["emit_fields"] = True
    if args.emit_plots:
        changes["emit_plots"] = True
    if args.parallelism is not None:
        if args.parallelism < 1:
            raise ConfigError("--parallelism must be >= 1")
        if cfg.sweep is not None:
            changes["sweep"] = dataclasses.replace(cfg.sweep, parallelism=args.parallelism)
    return dataclasses.replace(cfg, **changes)


def cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = _apply_flags(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)
    handler = COMMANDS[args.command][0]
    try:
        out.mkdir(parents=True, exist_ok=True)
        return handler(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        diag = out / "solver_failure.json"
        try:
            write_json({"command": args.command, "error": str(exc), "residual": exc.residual,
                        "trace": list(exc.trace), "traceback": traceback.format_exc()}, diag)
        except OSError:
            pass
        print(f"solver failure: {exc} (diagnostics in {diag})", file=sys.stderr)
        return EXIT_SOLVER
    except Exception as exc:  # any other failure: message and nonzero exit
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
