"""
Electron density in the off and flat-band states
=================================================

Solves the equilibrium at V_g = 0, where the gate workfunction depletes the
whole channel, and at the flat-band voltage, where the electron density
equals the doping everywhere.  Also compares the numerical drain current
with the compact model.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mjnfet.compact import drain_current_compact, flat_band_voltage
from mjnfet.device import BiasPoint, default_paper_device
from mjnfet.mesh import build_mesh
from mjnfet.solver import channel_ratio, classify_regime, solve_bias, solve_equilibrium

spec = default_paper_device().with_workfunction(5.0)
mesh = build_mesh(spec)
vfb = flat_band_voltage(spec)

fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
for ax, vg in zip(axes, (0.0, vfb)):
    sol = solve_equilibrium(mesh, spec, V_g=vg)
    print(f"V_g = {vg:+.3f} V: min n/N_d = {channel_ratio(sol, mesh):.2e}, "
          f"{classify_regime(sol, spec, mesh)}")
    n = np.log10(np.maximum(sol.n, 1.0)).reshape(mesh.nx, mesh.ny)
    im = ax.pcolormesh(mesh.x, mesh.y, n.T, shading="auto", vmin=0, vmax=20)
    ax.set_title(f"log10 n, V_g = {vg:.2f} V")
    ax.set_xlabel("x (nm)")
axes[0].set_ylabel("y (nm)")
fig.colorbar(im, ax=axes)
fig.savefig("depletion_fields.png", dpi=120)

# numerical vs compact current above flat band, V_d = 50 mV
for vg in (vfb + 0.1, vfb + 0.3):
    sol = solve_bias(mesh, spec, BiasPoint(V_g=vg, V_d=0.05))
    plain = drain_current_compact(spec, vg, 0.05)
    series = drain_current_compact(spec, vg, 0.05, include_extensions=True)
    print(f"V_g = {vg:.2f} V: solver {sol.currents['drain']:.3e} A, "
          f"compact {plain:.3e} A, compact with extensions {series:.3e} A")
