"""
Physical constants, material records and workfunction arithmetic.

Units follow device-physics convention: lengths in cm unless a name says
otherwise, energies in eV, densities in cm^-3.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import NamedTuple, Optional

import numpy as np

Q = 1.602176634e-19  # C
K_B = 8.617333262e-5  # eV/K
EPS0 = 8.8541878128e-14  # F/cm
T_REF = 300.0  # K


def thermal_voltage(temperature: float = T_REF) -> float:
    """k_B T / q in volts."""
    return K_B * temperature


@dataclass(frozen=True)
class PhysicalConstants:
    q: float = Q
    k_B: float = K_B
    vacuum_permittivity: float = EPS0

    def thermal_voltage(self, temperature: float = T_REF) -> float:
        return self.k_B * temperature


CONSTANTS = PhysicalConstants()


# (doping cm^-3, electron mobility cm^2/V/s); pinned to 100 at 2e19
SILICON_MOBILITY_TABLE = (
    (1e15, 1350.0),
    (1e16, 1180.0),
    (1e17, 750.0),
    (1e18, 280.0),
    (1e19, 125.0),
    (2e19, 100.0),
    (1e20, 80.0),
    (1e21, 65.0),
)


@dataclass(frozen=True)
class SemiconductorMaterial:
    name: str
    relative_permittivity: float
    electron_affinity: float  # eV
    bandgap: float  # eV
    Nc: float  # cm^-3 at 300 K
    Nv: float  # cm^-3 at 300 K
    mobility_table: tuple = SILICON_MOBILITY_TABLE

    def __post_init__(self):
        if not self.relative_permittivity > 1:
            raise ValueError(f"{self.name}: permittivity must exceed 1")
        if not 0 < self.bandgap < 10:
            raise ValueError(f"{self.name}: bandgap outside (0, 10) eV")
        if not (self.Nc > 0 and self.Nv > 0):
            raise ValueError(f"{self.name}: effective densities must be positive")
        table = tuple((float(d), float(m)) for d, m in self.mobility_table)
        if not table:
            raise ValueError(f"{self.name}: empty mobility table")
        dop = [d for d, _ in table]
        mob = [m for _, m in table]
        if any(d <= 0 for d in dop) or any(m <= 0 for m in mob):
            raise ValueError(f"{self.name}: mobility table must be strictly positive")
        if any(b <= a for a, b in zip(dop, dop[1:])):
            raise ValueError(f"{self.name}: mobility table doping must increase")
        if any(b > a for a, b in zip(mob, mob[1:])):
            raise ValueError(f"{self.name}: mobility must be non-increasing in doping")
        object.__setattr__(self, "mobility_table", table)

    @property
    def permittivity(self) -> float:
        """Absolute permittivity in F/cm."""
        return self.relative_permittivity * EPS0

    def effective_dos(self, temperature: float = T_REF) -> tuple[float, float]:
        scale = (temperature / T_REF) ** 1.5
        return self.Nc * scale, self.Nv * scale

    def intrinsic_density(self, temperature: float = T_REF) -> float:
        Nc, Nv = self.effective_dos(temperature)
        return math.sqrt(Nc * Nv) * math.exp(-self.bandgap / (2 * K_B * temperature))

    def intrinsic_workfunction(self, temperature: float = T_REF) -> float:
        """Vacuum level to intrinsic level, eV (Boltzmann statistics)."""
        Nc, _ = self.effective_dos(temperature)
        ni = self.intrinsic_density(temperature)
        return self.electron_affinity + K_B * temperature * math.log(Nc / ni)

    def mobility(self, doping: float) -> float:
        """Low-field electron mobility, log-linear interpolation in |doping|."""
        dop = np.log10([d for d, _ in self.mobility_table])
        mob = [m for _, m in self.mobility_table]
        x = math.log10(max(abs(doping), 1.0))
        return float(np.interp(x, dop, mob))


@dataclass(frozen=True)
class DielectricMaterial:
    name: str
    relative_permittivity: float

    def __post_init__(self):
        if not self.relative_permittivity >= 1:
            raise ValueError(f"{self.name}: permittivity must be >= 1")

    @property
    def permittivity(self) -> float:
        return self.relative_permittivity * EPS0


class GateKind(str, enum.Enum):
    METAL = "metal"
    DOPED_POLY = "doped_poly"


@dataclass(frozen=True)
class GateMaterial:
    """Metal gate (``workfunction`` in eV) or doped polysilicon (``poly_doping``,
    signed cm^-3, positive for n+)."""

    kind: GateKind = GateKind.METAL
    workfunction: Optional[float] = None
    poly_doping: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))

    @classmethod
    def metal(cls, workfunction: float, name: str = "") -> "GateMaterial":
        return cls(GateKind.METAL, workfunction=float(workfunction), name=name)

    @classmethod
    def poly(cls, doping: float) -> "GateMaterial":
        return cls(GateKind.DOPED_POLY, poly_doping=float(doping), name="poly-Si")

    def violations(self) -> list[str]:
        out = []
        if self.kind is GateKind.METAL:
            if self.workfunction is None or not math.isfinite(self.workfunction):
                out.append("metal gate needs a finite workfunction")
            elif not 3.0 <= self.workfunction <= 6.5:
                out.append(f"metal workfunction {self.workfunction} eV outside [3.0, 6.5]")
        else:
            d = self.poly_doping
            if d is None or not math.isfinite(d):
                out.append("poly gate needs a finite doping")
            elif not 1e18 <= abs(d) <= 1e21:
                out.append(f"poly doping |{d:g}| outside [1e18, 1e21] cm^-3")
        return out


SILICON = SemiconductorMaterial(
    name="Si",
    relative_permittivity=11.7,
    electron_affinity=4.05,
    bandgap=1.12,
    Nc=2.8e19,
    Nv=1.04e19,
)

HFO2 = DielectricMaterial("HfO2", 22.0)
SIO2 = DielectricMaterial("SiO2", 3.9)

SEMICONDUCTORS = MappingProxyType({"Si": SILICON})
DIELECTRICS = MappingProxyType({"HfO2": HFO2, "SiO2": SIO2})

# Clean-surface metal workfunctions, eV.  W and Ni bound the studied window.
_METALS = (
    ("Tungsten", 4.63),
    ("Molybdenum", 4.6),
    ("Chromium", 4.5),
    ("Copper", 4.65),
    ("Cobalt", 5.0),
    ("Gold", 5.1),
    ("Palladium", 5.12),
    ("Nickel", 5.22),
    ("Platinum", 5.65),
    ("Titanium", 4.33),
    ("Aluminum", 4.28),
)
METAL_WORKFUNCTIONS = MappingProxyType(dict(_METALS))


def builtin_metal_table() -> list[tuple[str, float]]:
    """Built-in (name, workfunction eV) pairs, sorted by workfunction."""
    return sorted(_METALS, key=lambda item: (item[1], item[0]))


def metal_workfunction(name: str) -> Optional[float]:
    """Workfunction of a named metal, or None if it is not tabulated."""
    return METAL_WORKFUNCTIONS.get(name)


def channel_workfunction(material: SemiconductorMaterial, net_doping: float,
                         temperature: float = T_REF) -> float:
    """Workfunction of a uniformly doped semiconductor under Boltzmann statistics.

    ``net_doping`` is signed: positive for donors (n-type), negative for
    acceptors. The Fermi level is clamped at the band edge once the doping
    exceeds the effective density of states.
    """
    if net_doping == 0 or not math.isfinite(net_doping):
        raise ValueError("extrinsic Fermi level undefined for zero doping")
    if not 200.0 <= temperature <= 500.0:
        raise ValueError(f"temperature {temperature} K outside [200, 500]")
    kT = K_B * temperature
    Nc, Nv = material.effective_dos(temperature)
    if net_doping > 0:
        return material.electron_affinity + max(0.0, kT * math.log(Nc / net_doping))
    return (material.electron_affinity + material.bandgap
            - max(0.0, kT * math.log(Nv / -net_doping)))


class GateClass(str, enum.Enum):
    N_DEPLETING = "n_depleting"
    P_DEPLETING = "p_depleting"
    FLAT = "flat"


class GateClassification(NamedTuple):
    kind: GateClass
    warning: bool


FLAT_TOLERANCE = 1e-3  # eV


def classify_gate(phi_m: float, channel_phi_s: float, channel_type: str) -> GateClassification:
    """Classify a gate by its workfunction offset to the channel.

    ``warning`` is set when the gate does not deplete the given channel type
    (the returned class is then the opposite-type one).
    """
    for value in (phi_m, channel_phi_s):
        if not 3.0 <= value <= 6.5:
            raise ValueError(f"workfunction {value} eV outside [3.0, 6.5]")
    if channel_type not in ("n", "p"):
        raise ValueError(f"channel type must be 'n' or 'p', got {channel_type!r}")
    diff = phi_m - channel_phi_s
    if abs(diff) < FLAT_TOLERANCE:
        return GateClassification(GateClass.FLAT, False)
    kind = GateClass.N_DEPLETING if diff > 0 else GateClass.P_DEPLETING
    warn = (kind is GateClass.N_DEPLETING) != (channel_type == "n")
    if warn:
        warnings.warn(f"gate ({phi_m:.3f} eV) does not deplete the {channel_type}-type "
                      f"channel ({channel_phi_s:.3f} eV)", stacklevel=2)
    return GateClassification(kind, warn)
