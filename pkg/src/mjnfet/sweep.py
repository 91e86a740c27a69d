"""
Single-device simulation protocol and deterministic parameter sweeps.

A sweep is a map over the cartesian product of its axes; every point builds
its own spec, mesh and curves, so points can run in worker processes.  Rows
come back in lexicographic axis order whatever the completion order.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import itertools
import json
import logging
import traceback
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .curves import IVCurve
from .device import BiasPoint, DeviceSpec, validate
from .extraction import (DeviceMetrics, ExtractionError, extract_vth_constant_current,
                         gate_capacitance, on_off_metrics, subthreshold_swing,
                         transconductance)
from .materials import GateMaterial
from .mesh import build_mesh
from .solver import SolverSettings, SweepSpec, iv_sweep

log = logging.getLogger(__name__)

MAX_POINTS = 10_000


def _grid(start, stop, step):
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 10)


@dataclass(frozen=True)
class BiasProtocol:
    """Bias grids for one device: transfer curves at ``V_d_lin`` (threshold,
    swing) and at ``V_dd`` (on/off), and an output curve at V_g = V_dd."""

    V_dd: float = 1.0
    V_d_lin: float = 0.05
    vg_start: float = -0.6
    vg_stop: Optional[float] = None  # defaults to V_dd
    vg_step: float = 0.025
    vd_step: float = 0.05
    cgg_points: tuple = ()

    def __post_init__(self):
        if self.vg_step <= 0 or self.vd_step <= 0:
            raise ValueError("bias steps must be positive")
        if self.vg_start > 0 or self.stop < self.V_dd:
            raise ValueError("transfer grid must cover V_g = 0 and V_g = V_dd")

    @property
    def stop(self) -> float:
        return self.V_dd if self.vg_stop is None else self.vg_stop

    def transfer_grid(self):
        return _grid(self.vg_start, self.stop, self.vg_step)

    def output_grid(self):
        return _grid(0.0, self.V_dd, self.vd_step)


@dataclass
class DeviceRun:
    spec: DeviceSpec
    transfer_lin: IVCurve
    transfer_sat: IVCurve
    output: Optional[IVCurve]
    metrics: DeviceMetrics
    diagnostics: dict


def simulate_device(spec: DeviceSpec, protocol: BiasProtocol = BiasProtocol(),
                    settings: SolverSettings = SolverSettings(), resolution="default",
                    output: bool = True) -> DeviceRun:
    """Transfer (and optionally output) curves of one device plus its metrics."""
    mesh = build_mesh(spec, resolution)
    vg = protocol.transfer_grid()
    lin = iv_sweep(spec, settings, SweepSpec("Vg", BiasPoint(0.0, protocol.V_d_lin), vg), mesh)
    sat = iv_sweep(spec, settings, SweepSpec("Vg", BiasPoint(0.0, protocol.V_dd), vg), mesh)
    out = None
    if output:
        out = iv_sweep(spec, settings,
                       SweepSpec("Vd", BiasPoint(protocol.V_dd, 0.0), protocol.output_grid()), mesh)
    vth = extract_vth_constant_current(lin, spec)
    try:
        ss = subthreshold_swing(lin, spec)
    except ExtractionError as exc:
        log.warning("subthreshold swing unavailable: %s", exc)
        ss = float("nan")
    oo = on_off_metrics(sat, protocol.V_dd)
    _, _, gm = transconductance(lin)
    cgg = [(float(v), gate_capacitance(spec, mesh, settings, v)) for v in protocol.cgg_points]
    metrics = DeviceMetrics(V_th=vth, V_th_method="constant_current", SS=ss,
                            I_on=oo.I_on, I_off=oo.I_off, on_off_ratio=oo.ratio,
                            gm_max=float(gm.max()), C_gg_samples=cgg)
    curves = [c for c in (lin, sat, out) if c is not None]
    diagnostics = {
        "nodes": mesh.n_nodes,
        "nonconverged_points": int(sum((~c.converged).sum() for c in curves)),
        "I_off_floored": bool(oo.floored),
    }
    return DeviceRun(spec, lin, sat, out, metrics, diagnostics)


# --- parameter paths ------------------------------------------------------------------

PARAMETER_PATHS = (
    "gate.workfunction",
    "gate.poly_doping",
    "doping",
    "dielectric_thickness",
    "channel_length",
    "channel_width",
    "channel_height",
    "sd_extension_length",
)
PATH_UNITS = {
    "gate.workfunction": "eV",
    "gate.poly_doping": "cm3",
    "doping": "cm3",
    "dielectric_thickness": "nm",
    "channel_length": "nm",
    "channel_width": "nm",
    "channel_height": "nm",
    "sd_extension_length": "nm",
}


def apply_parameter(spec: DeviceSpec, path: str, value: float) -> DeviceSpec:
    """Copy of ``spec`` with one parameter set.  ``doping`` sets channel and
    S/D together, keeping the device junctionless."""
    value = float(value)
    if path == "gate.workfunction":
        return spec.with_workfunction(value)
    if path == "gate.poly_doping":
        return spec.replace(gate=GateMaterial.poly(value))
    if path == "doping":
        return spec.replace(channel_doping=value, sd_doping=value)
    if path in PARAMETER_PATHS:
        return spec.replace(**{path: value})
    raise ValueError(f"unsupported parameter path {path!r}; expected one of {PARAMETER_PATHS}")


@dataclass(frozen=True)
class SweepPlan:
    base_spec: DeviceSpec
    axes: Sequence[tuple]  # (path, values)
    protocol: BiasProtocol = BiasProtocol()
    resolution: str = "default"
    parallelism: int = 1
    settings: SolverSettings = SolverSettings()

    def __post_init__(self):
        axes = tuple((str(p), tuple(float(v) for v in vals)) for p, vals in self.axes)
        object.__setattr__(self, "axes", axes)

    def validate(self) -> list[str]:
        out = []
        if not self.axes:
            out.append("sweep needs at least one axis")
        size = 1
        for path, values in self.axes:
            if path not in PARAMETER_PATHS:
                out.append(f"unsupported parameter path {path!r}")
            if not values:
                out.append(f"axis {path!r} has no values")
            size *= max(len(values), 1)
        if size > MAX_POINTS:
            out.append(f"sweep has {size} points (limit {MAX_POINTS})")
        if int(self.parallelism) < 1:
            out.append("parallelism must be >= 1")
        out.extend("base spec: " + v for v in validate(self.base_spec))
        return out

    @property
    def paths(self) -> tuple:
        return tuple(p for p, _ in self.axes)

    def points(self):
        return list(itertools.product(*(vals for _, vals in self.axes)))

    def spec_for(self, values) -> DeviceSpec:
        spec = self.base_spec
        for (path, _), v in zip(self.axes, values):
            spec = apply_parameter(spec, path, v)
        return spec


class SweepRow(NamedTuple):
    params: tuple
    metrics: DeviceMetrics
    diagnostics: dict


@dataclass
class SweepResult:
    paths: tuple
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (params, message)

    def column(self, name: str):
        """Parameter values or a metric field across successful rows."""
        if name in self.paths:
            k = self.paths.index(name)
            return np.array([r.params[k] for r in self.rows])
        return np.array([getattr(r.metrics, name) for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"{p}_{PATH_UNITS.get(p, '')}".rstrip("_") for p in self.paths]
                  + CSV_METRIC_COLUMNS + ["status"])
        merged = [(r.params, r) for r in self.rows] + [(p, m) for p, m in self.failures]
        order = {p: k for k, p in enumerate(_all_params(self))}
        for params, item in sorted(merged, key=lambda t: order[t[0]]):
            cells = [repr(float(v)) for v in params]
            if isinstance(item, SweepRow):
                m = item.metrics
                cells += [repr(float(getattr(m, k))) for k in _METRIC_FIELDS] + ["ok"]
            else:
                cells += [""] * len(_METRIC_FIELDS) + ["failed: " + item.replace("\n", " ")]
            w.writerow(cells)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "paths": list(self.paths),
            "rows": [{"params": [float(v) for v in r.params],
                      "metrics": r.metrics.to_dict(),
                      "diagnostics": r.diagnostics} for r in self.rows],
            "failures": [{"params": [float(v) for v in p], "error": msg}
                         for p, msg in self.failures],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


_METRIC_FIELDS = ("V_th", "SS", "I_on", "I_off", "on_off_ratio", "gm_max")
CSV_METRIC_COLUMNS = ["V_th_V", "SS_mV_per_dec", "I_on_A", "I_off_A", "on_off_ratio", "gm_max_S"]


def _all_params(result):
    return [r.params for r in result.rows] + [p for p, _ in result.failures]


def _run_point(args):
    plan, values = args
    try:
        spec = plan.spec_for(values)
        run = simulate_device(spec, plan.protocol, plan.settings, plan.resolution, output=False)
        return values, run.metrics, run.diagnostics, None
    except Exception as exc:  # a failed corner must not end the sweep
        log.debug("sweep point %s failed:\n%s", values, traceback.format_exc())
        return values, None, None, f"{type(exc).__name__}: {exc}"


def run_sweep(plan: SweepPlan) -> SweepResult:
    """Simulate every point of ``plan``; failures are recorded, not raised."""
    problems = plan.validate()
    if problems:
        raise ValueError("invalid sweep plan: " + "; ".join(problems))
    jobs = [(plan, values) for values in plan.points()]
    if plan.parallelism == 1 or len(jobs) == 1:
        outcomes = [_run_point(j) for j in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=int(plan.parallelism)) as ex:
            outcomes = list(ex.map(_run_point, jobs))
    result = SweepResult(plan.paths)
    for values, metrics, diag, err in outcomes:
        if err is None:
            result.rows.append(SweepRow(tuple(values), metrics, diag))
        else:
            result.failures.append((tuple(values), err))
    return result


class TrendFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def fit_linear_trend(result: SweepResult, x: str, y: str) -> TrendFit:
    """Ordinary least squares of metric ``y`` against parameter ``x``."""
    if x not in result.paths:
        raise ValueError(f"{x!r} is not a swept parameter")
    rows = [r for r in result.rows if np.isfinite(getattr(r.metrics, y))]
    if len(rows) < 3:
        raise ValueError(f"need at least 3 successful rows, got {len(rows)}")
    k = result.paths.index(x)
    others = {tuple(v for j, v in enumerate(r.params) if j != k) for r in rows}
    if len(others) > 1:
        raise ValueError(f"rows vary along parameters other than {x!r}")
    xs = np.array([r.params[k] for r in rows], dtype=float)
    ys = np.array([getattr(r.metrics, y) for r in rows], dtype=float)
    if np.ptp(xs) == 0:
        raise ValueError("degenerate x: all values equal")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return TrendFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)))
