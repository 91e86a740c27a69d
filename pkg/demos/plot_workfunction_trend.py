"""
Threshold voltage against gate workfunction
============================================

Sweeps the gate workfunction from 4.63 to 5.22 eV and fits the threshold
voltage and on-current trends.  Pass a worker count as the first argument
to run points in parallel; the rows come back in the same order either way.
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mjnfet.device import default_paper_device
from mjnfet.sweep import SweepPlan, fit_linear_trend, run_sweep

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1
phis = np.linspace(4.63, 5.22, 8)
plan = SweepPlan(default_paper_device(), [("gate.workfunction", phis)], parallelism=workers)
result = run_sweep(plan)

vth_fit = fit_linear_trend(result, "gate.workfunction", "V_th")
ion_fit = fit_linear_trend(result, "gate.workfunction", "I_on")
print(f"dV_th/dphi_m = {vth_fit.slope:.3f} V/eV (R2 {vth_fit.r_squared:.4f})")
print(f"dI_on/dphi_m = {ion_fit.slope * 1e6:.1f} uA/eV (R2 {ion_fit.r_squared:.4f})")

x = result.column("gate.workfunction")
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
ax1.plot(x, result.column("V_th"), "o")
ax1.plot(x, vth_fit.slope * x + vth_fit.intercept, "-")
ax1.set_xlabel("workfunction (eV)")
ax1.set_ylabel("V_th (V)")
ax2.plot(x, result.column("I_on") * 1e6, "o")
ax2.set_xlabel("workfunction (eV)")
ax2.set_ylabel("I_on (uA)")
fig.tight_layout()
fig.savefig("workfunction_trend.png", dpi=120)

with open("workfunction_sweep.csv", "w") as fh:
    fh.write(result.to_csv())
