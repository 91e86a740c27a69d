"""
Figures of merit from I-V curves and field solutions.

Threshold voltage by constant current (default) or maximum transconductance,
subthreshold swing, on/off currents, quasi-static gate capacitance, and the
metal-versus-poly gate comparison at matched threshold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .curves import IVCurve
from .device import BiasPoint, DeviceSpec, is_metal
from .mesh import StructuredMesh, build_mesh

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-18  # A
I_CRIT_PER_SQUARE = 100e-9  # A


class ExtractionError(ValueError):
    pass


@dataclass
class DeviceMetrics:
    V_th: float
    V_th_method: str
    SS: float  # mV/decade
    I_on: float
    I_off: float
    on_off_ratio: float
    gm_max: float
    C_gg_samples: list = field(default_factory=list)  # (V_g, F)

    def to_dict(self) -> dict:
        return {
            "V_th": self.V_th,
            "V_th_method": self.V_th_method,
            "SS": self.SS,
            "I_on": self.I_on,
            "I_off": self.I_off,
            "on_off_ratio": self.on_off_ratio,
            "gm_max": self.gm_max,
            "C_gg_samples": [[float(v), float(c)] for v, c in self.C_gg_samples],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceMetrics":
        d = dict(d)
        d["C_gg_samples"] = [tuple(x) for x in d.get("C_gg_samples", [])]
        return cls(**d)


def critical_current(spec: DeviceSpec) -> float:
    """Constant-current threshold criterion, 100 nA x W_eff / L."""
    return I_CRIT_PER_SQUARE * spec.channel_width * spec.effective_width_factor / spec.channel_length


def _transfer_points(curve: IVCurve, minimum=2):
    if curve.kind != "transfer":
        raise ExtractionError("a transfer curve is required")
    v, i = curve.valid()
    if len(v) < minimum:
        raise ExtractionError(f"need at least {minimum} converged points, got {len(v)}")
    return v, i


def extract_vth_constant_current(curve: IVCurve, spec: DeviceSpec,
                                 i_crit: Optional[float] = None) -> float:
    """Gate voltage where |I_d| first rises through the criterion current,
    interpolated linearly in log(I)."""
    v, i = _transfer_points(curve)
    i_crit = critical_current(spec) if i_crit is None else i_crit
    mag = np.abs(i)
    above = mag >= i_crit
    if not above.any() or above[0]:
        raise ExtractionError("curve does not bracket threshold")
    k = int(np.argmax(above))
    lo, hi = max(mag[k - 1], NOISE_FLOOR), mag[k]
    frac = (math.log(i_crit) - math.log(lo)) / (math.log(hi) - math.log(lo))
    return float(v[k - 1] + frac * (v[k] - v[k - 1]))


def transconductance(curve: IVCurve):
    v, i = _transfer_points(curve, minimum=3)
    return v, i, np.gradient(i, v)


def extract_vth_max_gm(curve: IVCurve, spec: DeviceSpec = None) -> float:
    """Linear extrapolation from the peak-transconductance point, minus V_d/2.

    Invariant to a uniform scaling of the current.
    """
    v, i = _transfer_points(curve, minimum=7)
    gm = np.gradient(i, v)
    k = int(np.argmax(gm))
    if k == 0 or k == len(v) - 1 or gm[k] <= 0:
        raise ExtractionError("transconductance peak not resolved inside the curve")
    v_d = curve.fixed_bias.V_d - curve.fixed_bias.V_s
    return float(v[k] - i[k] / gm[k] - v_d / 2)


def subthreshold_swing(curve: IVCurve, spec: DeviceSpec, i_crit: Optional[float] = None) -> float:
    """Least-squares dV_g/dlog10(I_d) over [I_crit/1000, I_crit/10], mV/decade."""
    v, i = _transfer_points(curve, minimum=3)
    i_crit = critical_current(spec) if i_crit is None else i_crit
    mag = np.abs(i)
    # rising branch below threshold
    below = np.nonzero(mag >= i_crit)[0]
    stop = below[0] if len(below) else len(v)
    v, mag = v[:stop], mag[:stop]
    if not len(mag) or mag.min() > i_crit / 1000:
        raise ExtractionError("fewer than three decades of subthreshold current")
    sel = (mag >= i_crit / 1000) & (mag <= i_crit / 10)
    if sel.sum() < 3:
        raise ExtractionError("fewer than three points in the subthreshold window")
    slope = np.polyfit(np.log10(mag[sel]), v[sel], 1)[0]
    return float(slope * 1000)


class OnOff(NamedTuple):
    I_on: float
    I_off: float
    ratio: float
    floored: bool


def on_off_metrics(curve: IVCurve, V_dd: float) -> OnOff:
    """I_on at V_g = V_dd, I_off at V_g = 0, linearly interpolated in V_g."""
    v, i = _transfer_points(curve)
    for target in (0.0, V_dd):
        if not v[0] - 1e-12 <= target <= v[-1] + 1e-12:
            raise ExtractionError(f"curve does not cover V_g = {target}")
    i_on = float(np.interp(V_dd, v, np.abs(i)))
    i_off = float(np.interp(0.0, v, np.abs(i)))
    floored = i_off < NOISE_FLOOR
    ratio = i_on / max(i_off, NOISE_FLOOR) if (i_off > 0 or floored) else 1.0
    if i_on == i_off:
        ratio = 1.0
    return OnOff(i_on, i_off, ratio, floored)


# --- solver-backed extractions ----------------------------------------------------

def gate_capacitance(spec: DeviceSpec, mesh: StructuredMesh, settings, V_g: float,
                     delta: float = 5e-3) -> float:
    """Quasi-static C_gg (F) from the semiconductor charge at V_g +/- delta, V_d = 0."""
    from .solver import semiconductor_charge, solve_bias

    q = []
    for v in (V_g - delta, V_g + delta):
        sol = solve_bias(mesh, spec, BiasPoint(V_g=v), settings)
        q.append(semiconductor_charge(sol, mesh))
    return abs(q[1] - q[0]) / (2 * delta)


@dataclass
class GateStackSide:
    spec: DeviceSpec
    V_th: float
    SS: float
    on_off: OnOff


@dataclass
class GateComparison:
    metal: GateStackSide
    poly: GateStackSide
    V_dd: float
    matched_workfunction: Optional[float]
    ratio_quotient: float
    ss_difference: float  # poly minus metal, mV/decade

    def to_dict(self) -> dict:
        def side(s: GateStackSide):
            return {"V_th": s.V_th, "SS": s.SS, "I_on": s.on_off.I_on,
                    "I_off": s.on_off.I_off, "on_off_ratio": s.on_off.ratio,
                    "gate": s.spec.gate.kind.value,
                    "workfunction": s.spec.gate.workfunction,
                    "poly_doping": s.spec.gate.poly_doping}
        return {"V_dd": self.V_dd, "matched_workfunction": self.matched_workfunction,
                "ratio_quotient": self.ratio_quotient, "ss_difference": self.ss_difference,
                "metal": side(self.metal), "poly": side(self.poly)}


def compare_gate_stacks(metal_spec: DeviceSpec, poly_spec: DeviceSpec, V_dd: float = 1.0,
                        settings=None, protocol=None, resolution="default",
                        tol: float = 0.02, window=(3.5, 6.0)) -> GateComparison:
    """Side-by-side metal vs poly transfer metrics, with the metal workfunction
    adjusted until both thresholds agree within ``tol``."""
    from .solver import SolverSettings
    from .sweep import BiasProtocol, simulate_device

    settings = settings or SolverSettings()
    protocol = protocol or BiasProtocol(V_dd=V_dd)

    def measure(spec):
        run = simulate_device(spec, protocol, settings, resolution, output=False)
        return GateStackSide(spec, run.metrics.V_th, run.metrics.SS,
                             on_off_metrics(run.transfer_sat, V_dd))

    poly = measure(poly_spec)
    target = poly.V_th
    metal = measure(metal_spec)
    matched = None
    if abs(metal.V_th - target) >= tol:
        if not is_metal(metal_spec):
            raise ExtractionError("only a metal gate can be workfunction-matched")
        metal, matched = _match_workfunction(metal_spec, metal, target, measure, tol, window)
    quotient = metal.on_off.ratio / poly.on_off.ratio
    return GateComparison(metal, poly, V_dd, matched, quotient, poly.SS - metal.SS)


def _match_workfunction(spec, first, target, measure, tol, window):
    lo_w, hi_w = window
    phi0 = spec.gate.workfunction
    # threshold moves one-for-one with the workfunction; try that first
    guess = min(max(phi0 + (target - first.V_th), lo_w), hi_w)
    side = measure(spec.with_workfunction(guess))
    if abs(side.V_th - target) < tol:
        return side, guess
    pts = sorted([(phi0, first.V_th - target), (guess, side.V_th - target)])
    (a, fa), (b, fb) = pts
    while fa * fb > 0:
        # threshold rises with workfunction: extend the bracket towards the target
        edge = b + 0.25 if fb < 0 else a - 0.25
        if not lo_w <= edge <= hi_w:
            raise ExtractionError("cannot match threshold inside the workfunction window")
        s = measure(spec.with_workfunction(edge))
        f = s.V_th - target
        if abs(f) < tol:
            return s, edge
        if fb < 0:
            a, fa, b, fb = b, fb, edge, f
        else:
            a, fa, b, fb = edge, f, a, fa
    for _ in range(30):
        mid = (a + b) / 2
        s = measure(spec.with_workfunction(mid))
        f = s.V_th - target
        if abs(f) < tol:
            return s, mid
        if f * fa < 0:
            b, fb = mid, f
        else:
            a, fa = mid, f
    raise ExtractionError("workfunction bisection did not converge")
