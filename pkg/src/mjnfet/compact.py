"""
Charge-based closed-form model of the double-gate junctionless channel.

Serves as a fast estimate, as an initial-guess source, and as an independent
check on the numerical solver.  There is no subthreshold tail: the mobile
charge is exactly zero below threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .device import NM, DeviceSpec, is_metal
from .materials import Q, channel_workfunction


class NormallyOnWarning(UserWarning):
    """The analytic threshold voltage is negative."""


@dataclass(frozen=True)
class CompactParams:
    C_ox: float  # F/cm^2, per gate
    t_si: float  # cm
    V_FB: float  # V
    N_d: float  # cm^-3
    mu_n: float  # cm^2/V/s
    L: float  # cm
    W_eff: float  # cm
    eps_si: float  # F/cm

    def __post_init__(self):
        for name in ("C_ox", "t_si", "N_d", "mu_n", "L", "W_eff", "eps_si"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not np.isfinite(self.V_FB):
            raise ValueError("V_FB must be finite")

    @property
    def bulk_charge(self) -> float:
        """q N_d t_si, C/cm^2."""
        return Q * self.N_d * self.t_si

    @property
    def V_th(self) -> float:
        return (self.V_FB - self.bulk_charge / (2 * self.C_ox)
                - Q * self.N_d * self.t_si ** 2 / (8 * self.eps_si))


def flat_band_voltage(spec: DeviceSpec) -> float:
    """phi_m - phi_s for a metal gate."""
    if not is_metal(spec):
        raise ValueError("flat-band voltage of a poly gate depends on gate depletion; "
                         "use the numerical solver")
    phi_s = channel_workfunction(spec.channel_material, spec.channel_doping, spec.temperature)
    return spec.gate.workfunction - phi_s


def compact_params(spec: DeviceSpec) -> CompactParams:
    return CompactParams(
        C_ox=spec.oxide_capacitance,
        t_si=spec.channel_height * NM,
        V_FB=flat_band_voltage(spec),
        N_d=abs(spec.channel_doping),
        mu_n=spec.channel_material.mobility(spec.channel_doping),
        L=spec.channel_length * NM,
        W_eff=spec.effective_width_cm,
        eps_si=spec.channel_material.permittivity,
    )


def threshold_voltage_analytic(spec: DeviceSpec) -> float:
    """Full-depletion threshold of the symmetric double gate."""
    if spec.channel_type != "n":
        raise ValueError("analytic threshold implemented for n-type channels only")
    vth = compact_params(spec).V_th
    if vth < 0:
        warnings.warn(f"analytic V_th = {vth:.3f} V < 0 (normally-on device)",
                      NormallyOnWarning, stacklevel=2)
    return vth


def _charge_integral(p: CompactParams, v):
    """Antiderivative of the mobile charge per area Q(v) with respect to the
    local gate overdrive v = V_g - V(x); zero below threshold."""
    v = np.asarray(v, dtype=float)
    vth, vfb = p.V_th, p.V_FB
    span = vfb - vth
    q0 = p.bulk_charge
    c_acc = 2 * p.C_ox  # both gates accumulate
    ramp = q0 * np.clip(v - vth, 0, span) ** 2 / (2 * span)
    above = np.maximum(v - vfb, 0)
    return ramp + q0 * above + c_acc * above ** 2 / 2


def mobile_charge(p: CompactParams, v):
    """Mobile charge per area (C/cm^2) at local overdrive ``v``."""
    v = np.asarray(v, dtype=float)
    span = p.V_FB - p.V_th
    return (p.bulk_charge * np.clip((v - p.V_th) / span, 0, 1)
            + 2 * p.C_ox * np.maximum(v - p.V_FB, 0))


def extension_resistance(spec: DeviceSpec) -> float:
    """Resistance (Ohm) of one ungated S/D extension at flat band."""
    area = spec.channel_height * NM * spec.effective_width_cm
    mu = spec.channel_material.mobility(spec.sd_doping)
    return spec.sd_extension_length * NM / (Q * mu * abs(spec.sd_doping) * area)


def drain_current_compact(spec: DeviceSpec, V_g, V_d, include_extensions: bool = False):
    """Drain current (A) from the piecewise charge model, zero below threshold
    and saturating where the drain end pinches off.

    With ``include_extensions`` the two ungated extensions are added as series
    resistors and the internal channel biases are solved self-consistently.
    """
    V_d = np.asarray(V_d, dtype=float)
    if np.any(V_d < 0):
        raise ValueError("compact model requires V_d >= 0")
    p = compact_params(spec)
    V_g = np.asarray(V_g, dtype=float)
    k = (p.W_eff / p.L) * p.mu_n

    def channel(vg, vs, vd):
        return k * (_charge_integral(p, vg - vs) - _charge_integral(p, vg - vd))

    if not include_extensions:
        I = channel(V_g, 0.0, V_d)
        return I if I.ndim else float(I)
    R = extension_resistance(spec)
    vg_b, vd_b = np.broadcast_arrays(V_g, V_d)
    I = np.empty(vg_b.shape)
    for idx in np.ndindex(vg_b.shape):
        vg, vd = float(vg_b[idx]), float(vd_b[idx])
        hi = float(channel(vg, 0.0, vd))
        if hi <= 0 or vd == 0:
            I[idx] = 0.0
            continue
        # current falls as series drops eat into the channel bias
        I[idx] = brentq(lambda i: i - channel(vg, i * R, vd - i * R), 0.0, min(hi, vd / (2 * R)),
                        xtol=1e-18, rtol=1e-12)
    return I if I.ndim else float(I)
