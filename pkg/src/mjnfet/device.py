"""Device specification, bias points and the reference nanowire preset."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field

from .materials import (HFO2, SILICON, DielectricMaterial, GateKind, GateMaterial,
                        SemiconductorMaterial, T_REF)

NM = 1e-7  # cm


class GateCoverage(str, enum.Enum):
    DOUBLE_GATE = "double_gate"
    TRI_GATE = "tri_gate"


def tri_gate_width_factor(width_nm: float, height_nm: float) -> float:
    """Ratio of the tri-gate gated perimeter to the two faces of the slice."""
    return (width_nm + 2 * height_nm) / (2 * height_nm)


@dataclass(frozen=True)
class DeviceSpec:
    """Geometry (nm), doping (signed cm^-3), gate stack and temperature.

    The simulated slice runs along the channel (x) and across the
    thickness ``channel_height`` (y), gated on both faces.  Terminal currents
    are scaled by ``channel_width * effective_width_factor``.
    """

    channel_length: float = 22.0
    channel_width: float = 10.0
    channel_height: float = 10.0
    sd_extension_length: float = 10.0
    channel_doping: float = 2e19
    sd_doping: float = 2e19
    channel_material: SemiconductorMaterial = SILICON
    dielectric: DielectricMaterial = HFO2
    dielectric_thickness: float = 2.0
    gate: GateMaterial = field(default_factory=lambda: GateMaterial.metal(4.63, "Tungsten"))
    gate_coverage: GateCoverage = GateCoverage.DOUBLE_GATE
    temperature: float = T_REF
    effective_width_factor: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "gate_coverage", GateCoverage(self.gate_coverage))

    def replace(self, **changes) -> "DeviceSpec":
        return dataclasses.replace(self, **changes)

    def with_workfunction(self, phi_m: float) -> "DeviceSpec":
        return self.replace(gate=GateMaterial.metal(phi_m))

    @property
    def channel_type(self) -> str:
        return "n" if self.channel_doping > 0 else "p"

    @property
    def effective_width_cm(self) -> float:
        return self.channel_width * self.effective_width_factor * NM

    @property
    def total_length(self) -> float:
        """Source contact to drain contact, nm."""
        return self.channel_length + 2 * self.sd_extension_length

    @property
    def oxide_capacitance(self) -> float:
        """Gate dielectric capacitance per area, F/cm^2."""
        return self.dielectric.permittivity / (self.dielectric_thickness * NM)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["gate"]["kind"] = self.gate.kind.value
        d["gate_coverage"] = self.gate_coverage.value
        d["channel_material"]["mobility_table"] = [list(r) for r in
                                                   self.channel_material.mobility_table]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceSpec":
        d = dict(d)
        if "channel_material" in d and isinstance(d["channel_material"], dict):
            m = dict(d["channel_material"])
            if "mobility_table" in m:
                m["mobility_table"] = tuple(tuple(r) for r in m["mobility_table"])
            d["channel_material"] = SemiconductorMaterial(**m)
        if "dielectric" in d and isinstance(d["dielectric"], dict):
            d["dielectric"] = DielectricMaterial(**d["dielectric"])
        if "gate" in d and isinstance(d["gate"], dict):
            d["gate"] = GateMaterial(**d["gate"])
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class BiasPoint:
    V_g: float = 0.0
    V_d: float = 0.0
    V_s: float = 0.0

    def __post_init__(self):
        for name in ("V_g", "V_d", "V_s"):
            v = getattr(self, name)
            if not (math.isfinite(v) and abs(v) <= 5.0):
                raise ValueError(f"{name} = {v} V outside [-5, 5]")


def validate(spec: DeviceSpec) -> list[str]:
    """Every violated device invariant as a message; an empty list means valid."""
    out = []

    def num(name):
        v = getattr(spec, name, None)
        try:
            v = float(v)
        except (TypeError, ValueError):
            out.append(f"{name} is not a number")
            return None
        if not math.isfinite(v):
            out.append(f"{name} is not finite")
            return None
        return v

    for name in ("channel_length", "channel_width", "channel_height", "sd_extension_length"):
        v = num(name)
        if v is not None and v <= 0:
            out.append(f"{name} must be > 0 nm (got {v})")
    tox = num("dielectric_thickness")
    if tox is not None and not 0.5 < tox <= 20:
        out.append(f"dielectric thickness {tox} nm outside (0.5, 20]")
    ch, sd = num("channel_doping"), num("sd_doping")
    if ch is not None and ch == 0:
        out.append("channel doping must be nonzero")
    if sd is not None and sd == 0:
        out.append("S/D doping must be nonzero")
    if ch is not None and sd is not None and ch * sd < 0:
        out.append("doping sign mismatch (junctionless requires uniform type)")
    factor = num("effective_width_factor")
    if factor is not None and factor <= 0:
        out.append("effective_width_factor must be > 0")
    temp = num("temperature")
    if temp is not None and not 200 <= temp <= 500:
        out.append(f"temperature {temp} K outside [200, 500]")
    if isinstance(spec.gate, GateMaterial):
        out.extend(spec.gate.violations())
    else:
        out.append("gate is not a GateMaterial")
    if not isinstance(spec.channel_material, SemiconductorMaterial):
        out.append("channel_material is not a SemiconductorMaterial")
    if not isinstance(spec.dielectric, DielectricMaterial):
        out.append("dielectric is not a DielectricMaterial")
    return out


def default_paper_device() -> DeviceSpec:
    """22 x 10 x 10 nm n-type (2e19) nanowire, 2 nm HfO2, tungsten gate."""
    return DeviceSpec(
        channel_length=22.0,
        channel_width=10.0,
        channel_height=10.0,
        sd_extension_length=10.0,
        channel_doping=2e19,
        sd_doping=2e19,
        channel_material=SILICON,
        dielectric=HFO2,
        dielectric_thickness=2.0,
        gate=GateMaterial.metal(4.63, "Tungsten"),
        gate_coverage=GateCoverage.DOUBLE_GATE,
        temperature=300.0,
        effective_width_factor=tri_gate_width_factor(10.0, 10.0),
    )


def is_metal(spec: DeviceSpec) -> bool:
    return spec.gate.kind is GateKind.METAL
