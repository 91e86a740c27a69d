"""
Transfer and output curves of the default device
=================================================

Simulates the default metal-gated junctionless nanowire FET and plots its
transfer curves at low and high drain bias and its output curve at
V_g = 1 V.  Takes about a minute on one core.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from mjnfet.device import default_paper_device
from mjnfet.sweep import simulate_device

spec = default_paper_device()
run = simulate_device(spec)
m = run.metrics
print(f"V_th = {m.V_th:+.3f} V, SS = {m.SS:.1f} mV/dec, "
      f"I_on = {m.I_on * 1e6:.1f} uA, I_off = {m.I_off:.2e} A")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
for curve, label in ((run.transfer_lin, "V_d = 0.05 V"), (run.transfer_sat, "V_d = 1 V")):
    v, i = curve.valid()
    ax1.semilogy(v, abs(i), label=label)
ax1.axvline(m.V_th, ls=":", c="k")
ax1.set_xlabel("V_g (V)")
ax1.set_ylabel("I_d (A)")
ax1.legend()

v, i = run.output.valid()
ax2.plot(v, i * 1e6)
ax2.set_xlabel("V_d (V)")
ax2.set_ylabel("I_d (uA)")
fig.tight_layout()
fig.savefig("transfer_curves.png", dpi=120)
