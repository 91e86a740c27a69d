"""I-V curve container shared by the solver and the extraction routines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import BiasPoint


@dataclass(frozen=True, eq=False)
class IVCurve:
    """Ordered bias sweep of the drain current.

    ``kind`` is ``"transfer"`` (V_g swept) or ``"output"`` (V_d swept).
    Non-converged points carry ``converged = False`` and are ignored by the
    extraction routines.
    """

    kind: str
    fixed_bias: BiasPoint
    sweep_v: np.ndarray
    current: np.ndarray
    converged: np.ndarray
    spec_fingerprint: str = ""

    def __post_init__(self):
        if self.kind not in ("transfer", "output"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        v = np.asarray(self.sweep_v, dtype=float)
        i = np.asarray(self.current, dtype=float)
        c = np.asarray(self.converged, dtype=bool)
        if not (v.shape == i.shape == c.shape):
            raise ValueError("sweep_v, current and converged must have equal length")
        d = np.diff(v)
        if len(v) > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("swept values must be strictly monotone")
        object.__setattr__(self, "sweep_v", v)
        object.__setattr__(self, "current", i)
        object.__setattr__(self, "converged", c)

    def __len__(self):
        return len(self.sweep_v)

    @property
    def points(self):
        return list(zip(self.sweep_v.tolist(), self.current.tolist(), self.converged.tolist()))

    def valid(self):
        """Converged points, sorted by increasing swept voltage."""
        m = self.converged & np.isfinite(self.current)
        v, i = self.sweep_v[m], self.current[m]
        order = np.argsort(v)
        return v[order], i[order]

    def scaled(self, factor: float) -> "IVCurve":
        return IVCurve(self.kind, self.fixed_bias, self.sweep_v, self.current * factor,
                       self.converged, self.spec_fingerprint)
