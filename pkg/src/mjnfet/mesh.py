"""
Tensor-product mesh over the 2-D double-gate slice.

x runs source -> drain, y across the silicon thickness.  Nodes are indexed
``i * ny + j``.  Metal gates are Dirichlet boundaries on the outer dielectric
faces; a polysilicon gate is meshed as an extra semiconductor layer.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np

from .device import NM, DeviceSpec, validate
from .materials import GateKind

POLY_THICKNESS = 5.0  # nm


class Region(enum.IntEnum):
    CHANNEL = 0
    SD = 1
    DIELECTRIC = 2
    GATE = 3

    @property
    def tag(self) -> str:
        return _TAGS[self]


_TAGS = {
    Region.CHANNEL: "channel_semiconductor",
    Region.SD: "sd_semiconductor",
    Region.DIELECTRIC: "gate_dielectric",
    Region.GATE: "gate_electrode",
}


@dataclass(frozen=True)
class Resolution:
    """Target spacings in nm: uniform inside the dielectric (and poly),
    ``interface`` at silicon interfaces and gate edges, graded up to
    ``silicon`` with neighbour ratio at most ``ratio``."""

    dielectric: float
    interface: float
    silicon: float
    ratio: float = 1.25

    def __post_init__(self):
        if min(self.dielectric, self.interface, self.silicon) <= 0:
            raise ValueError("mesh spacings must be positive")
        if not 1.0 <= self.ratio <= 1.3:
            raise ValueError("grading ratio must lie in [1, 1.3]")

    def refined(self, factor: float = 2.0) -> "Resolution":
        return Resolution(self.dielectric / factor, self.interface / factor,
                          self.silicon / factor, self.ratio)


RESOLUTIONS = {
    "coarse": Resolution(0.5, 0.5, 1.5),
    "default": Resolution(0.4, 0.4, 1.0),
    "fine": Resolution(0.2, 0.2, 0.5),
}


def resolve_resolution(resolution: Union[str, Resolution, dict]) -> Resolution:
    if isinstance(resolution, Resolution):
        return resolution
    if isinstance(resolution, dict):
        return Resolution(**resolution)
    try:
        return RESOLUTIONS[resolution]
    except KeyError:
        raise ValueError(f"unknown resolution {resolution!r}; "
                         f"expected one of {sorted(RESOLUTIONS)}") from None


def graded_spacings(length, h_left, h_right, h_max, ratio):
    """Cell widths covering ``length`` that grow geometrically away from both
    ends, capped at ``h_max``.  Widths are scaled down uniformly so the sum is
    exact, which preserves the neighbour ratio."""
    h_left = min(h_left, h_max)
    h_right = min(h_right, h_max)
    left, right = [], []
    total = 0.0
    while total < length * (1 - 1e-12):
        if h_left <= h_right:
            left.append(h_left)
            total += h_left
            h_left = min(h_left * ratio, h_max)
        else:
            right.append(h_right)
            total += h_right
            h_right = min(h_right * ratio, h_max)
    cells = np.array(left + right[::-1])
    return cells * (length / cells.sum())


def _uniform(length, h):
    n = max(1, math.ceil(length / h - 1e-9))
    return np.full(n, length / n)


def _nodes(spacings_list, start=0.0):
    cells = np.concatenate(spacings_list)
    return np.concatenate([[start], start + np.cumsum(cells)])


class StructuredMesh:
    """Tensor-product grid with per-cell region, permittivity and doping.

    Geometry arrays are in nm; the finite-volume coefficients exposed as
    properties are in cm (per unit depth).
    """

    def __init__(self, x, y, cell_region, cell_eps, cell_doping, contacts, boxes):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.cell_region = np.asarray(cell_region, dtype=np.int8)
        self.cell_eps = np.asarray(cell_eps, dtype=float)
        self.cell_doping = np.asarray(cell_doping, dtype=float)
        self.contacts = {k: np.asarray(v, dtype=np.int64) for k, v in contacts.items()}
        self.boxes = boxes  # named (x0, x1, y0, y1) extents in nm
        for arr in (self.x, self.y, self.cell_region, self.cell_eps, self.cell_doping):
            arr.setflags(write=False)

    @property
    def nx(self) -> int:
        return len(self.x)

    @property
    def ny(self) -> int:
        return len(self.y)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def index(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    @cached_property
    def node_xy(self):
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return X.ravel(), Y.ravel()

    @property
    def extent(self) -> tuple[float, float]:
        return self.x[-1] - self.x[0], self.y[-1] - self.y[0]

    def region_at(self, px, py):
        """Region tag of the cell containing each point (points on faces go to
        the cell on the upper side, except at the outer boundary)."""
        i = np.clip(np.searchsorted(self.x, px, side="right") - 1, 0, self.nx - 2)
        j = np.clip(np.searchsorted(self.y, py, side="right") - 1, 0, self.ny - 2)
        return self.cell_region[i, j]

    # --- finite-volume geometry -------------------------------------------

    @cached_property
    def _cell_masks(self):
        semi = np.isin(self.cell_region, (Region.CHANNEL, Region.SD))
        poly = self.cell_region == Region.GATE
        return semi, poly

    @cached_property
    def edges(self):
        """Edge list ``(a, b, h_cm, eps_coef, semi_face_cm)``.

        ``eps_coef`` is the permittivity-weighted face length over edge length
        (F/cm per unit depth); ``semi_face_cm`` is the part of the face lying in
        transport semiconductor cells.
        """
        hx = np.diff(self.x) * NM
        hy = np.diff(self.y) * NM
        semi, _ = self._cell_masks
        nx, ny = self.nx, self.ny
        eps = self.cell_eps

        # x-directed edges: (i, j) -> (i+1, j); face spans half cells j-1 and j
        epad = np.zeros((nx - 1, ny + 1))
        epad[:, 1:-1] = eps * hy[None, :] / 2
        spad = np.zeros((nx - 1, ny + 1))
        spad[:, 1:-1] = semi * hy[None, :] / 2
        ex_eps = (epad[:, :-1] + epad[:, 1:])
        ex_semi = (spad[:, :-1] + spad[:, 1:])
        ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="ij")
        ax = (ii * ny + jj).ravel()
        bx = ((ii + 1) * ny + jj).ravel()
        hx_e = np.broadcast_to(hx[:, None], ii.shape).ravel()

        # y-directed edges: (i, j) -> (i, j+1); face spans half cells i-1 and i
        epad = np.zeros((nx + 1, ny - 1))
        epad[1:-1, :] = eps * hx[:, None] / 2
        spad = np.zeros((nx + 1, ny - 1))
        spad[1:-1, :] = semi * hx[:, None] / 2
        ey_eps = (epad[:-1, :] + epad[1:, :])
        ey_semi = (spad[:-1, :] + spad[1:, :])
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="ij")
        ay = (ii * ny + jj).ravel()
        by = (ii * ny + jj + 1).ravel()
        hy_e = np.broadcast_to(hy[None, :], ii.shape).ravel()

        a = np.concatenate([ax, ay])
        b = np.concatenate([bx, by])
        h = np.concatenate([hx_e, hy_e])
        eps_face = np.concatenate([ex_eps.ravel(), ey_eps.ravel()])
        semi_face = np.concatenate([ex_semi.ravel(), ey_semi.ravel()])
        return a, b, h, eps_face / h, semi_face

    def _quarter_sum(self, cell_values):
        """Sum of cell quarter-areas (cm^2) weighted by ``cell_values`` per node."""
        hx = np.diff(self.x) * NM
        hy = np.diff(self.y) * NM
        q = cell_values * np.outer(hx, hy) / 4
        out = np.zeros((self.nx, self.ny))
        out[:-1, :-1] += q
        out[1:, :-1] += q
        out[:-1, 1:] += q
        out[1:, 1:] += q
        return out.ravel()

    @cached_property
    def node_volumes(self):
        """Control-volume areas (cm^2): total, transport-semiconductor, poly."""
        semi, poly = self._cell_masks
        ones = np.ones_like(self.cell_eps)
        return (self._quarter_sum(ones), self._quarter_sum(semi.astype(float)),
                self._quarter_sum(poly.astype(float)))

    @cached_property
    def node_doping(self):
        """Volume-averaged net doping (cm^-3) of the semiconductor and poly parts."""
        semi, poly = self._cell_masks
        _, vs, vp = self.node_volumes
        ds = self._quarter_sum(self.cell_doping * semi)
        dp = self._quarter_sum(self.cell_doping * poly)
        with np.errstate(invalid="ignore", divide="ignore"):
            return (np.where(vs > 0, ds / np.where(vs > 0, vs, 1), 0.0),
                    np.where(vp > 0, dp / np.where(vp > 0, vp, 1), 0.0))

    @cached_property
    def node_region(self):
        """Per-node tag with priority channel > S/D > gate electrode > dielectric."""
        tags = np.full((self.nx, self.ny), Region.DIELECTRIC, dtype=np.int8)
        for reg in (Region.GATE, Region.SD, Region.CHANNEL):
            m = (self.cell_region == reg).astype(float)
            touch = np.zeros((self.nx, self.ny))
            touch[:-1, :-1] += m
            touch[1:, :-1] += m
            touch[:-1, 1:] += m
            touch[1:, 1:] += m
            tags[touch > 0] = reg
        return tags.ravel()

    def write_csv(self, path) -> None:
        """Node dump: ``x_nm,y_nm,region``."""
        X, Y = self.node_xy
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x_nm", "y_nm", "region"])
            for xv, yv, r in zip(X, Y, self.node_region):
                w.writerow([repr(float(xv)), repr(float(yv)), Region(r).tag])


def build_mesh(spec: DeviceSpec, resolution="default") -> StructuredMesh:
    """Mesh the device slice of ``spec`` at the requested resolution."""
    problems = validate(spec)
    if problems:
        raise ValueError("invalid device: " + "; ".join(problems))
    res = resolve_resolution(resolution)
    L, Lext, H, tox = (spec.channel_length, spec.sd_extension_length,
                       spec.channel_height, spec.dielectric_thickness)
    poly = spec.gate.kind is GateKind.DOPED_POLY
    tp = POLY_THICKNESS if poly else 0.0

    h_max, h_if, r = res.silicon, res.interface, res.ratio
    sx = [graded_spacings(Lext, h_max, h_if, h_max, r),
          graded_spacings(L, h_if, h_if, h_max, r),
          graded_spacings(Lext, h_if, h_max, h_max, r)]
    ox = _uniform(tox, res.dielectric)
    h_edge = min(h_if, ox[0])
    sy = [ox, graded_spacings(H, h_edge, h_edge, h_max, r), ox]
    if poly:
        pl = _uniform(tp, res.dielectric)
        sy = [pl] + sy + [pl]
    x = _nodes(sx)
    y = _nodes(sy)
    # exact breakpoints despite round-off
    x[-1] = L + 2 * Lext
    y[-1] = 2 * tp + 2 * tox + H

    n_ox = len(ox)
    n_ch_x, n_ch_y = len(sx[1]), len(sy[1 + bool(poly)])
    if n_ox < 4:
        raise ValueError(f"dielectric spanned by {n_ox} cells (< 4); refine the mesh")
    if n_ch_x < 10 or n_ch_y < 10:
        raise ValueError(f"channel spanned by {n_ch_x} x {n_ch_y} cells (< 10); "
                         "refine the mesh")

    boxes = {
        "source_ext": (0.0, Lext, tp + tox, tp + tox + H),
        "channel": (Lext, Lext + L, tp + tox, tp + tox + H),
        "drain_ext": (Lext + L, L + 2 * Lext, tp + tox, tp + tox + H),
    }
    if poly:
        boxes["gate_bottom"] = (Lext, Lext + L, 0.0, tp)
        boxes["gate_top"] = (Lext, Lext + L, y[-1] - tp, y[-1])

    xc = (x[:-1] + x[1:]) / 2
    yc = (y[:-1] + y[1:]) / 2
    XC, YC = np.meshgrid(xc, yc, indexing="ij")
    region = np.full(XC.shape, Region.DIELECTRIC, dtype=np.int8)
    eps = np.full(XC.shape, spec.dielectric.permittivity)
    dop = np.zeros(XC.shape)

    def inside(box):
        x0, x1, y0, y1 = box
        return (XC > x0) & (XC < x1) & (YC > y0) & (YC < y1)

    for name, reg, d in (("source_ext", Region.SD, spec.sd_doping),
                         ("drain_ext", Region.SD, spec.sd_doping),
                         ("channel", Region.CHANNEL, spec.channel_doping)):
        m = inside(boxes[name])
        region[m] = reg
        eps[m] = spec.channel_material.permittivity
        dop[m] = d
    if poly:
        for name in ("gate_bottom", "gate_top"):
            m = inside(boxes[name])
            region[m] = Region.GATE
            eps[m] = spec.channel_material.permittivity
            dop[m] = spec.gate.poly_doping

    ny = len(y)
    tol = 1e-9
    si = np.nonzero((y >= tp + tox - tol) & (y <= tp + tox + H + tol))[0]
    gx = np.nonzero((x >= Lext - tol) & (x <= Lext + L + tol))[0]
    contacts = {
        "source": 0 * ny + si,
        "drain": (len(x) - 1) * ny + si,
        "gate_bottom": gx * ny + 0,
        "gate_top": gx * ny + (ny - 1),
    }
    return StructuredMesh(x, y, region, eps, dop, contacts, boxes)
