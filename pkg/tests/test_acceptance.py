"""
Acceptance criteria for the junctionless nanowire FET simulator.

Each test prints one line, ``[ACCEPT] C<n> <name>: PASS|FAIL  <details>``,
and asserts at the stated tolerance.  The lines are repeated in the pytest
terminal summary.  Run alone with::

    pytest tests/test_acceptance.py -v
"""

import time

import numpy as np
import pytest

from mjnfet.cli_io import cli
from mjnfet.compact import flat_band_voltage
from mjnfet.device import BiasPoint, default_paper_device
from mjnfet.extraction import compare_gate_stacks, gate_capacitance
from mjnfet.materials import Q, GateMaterial
from mjnfet.mesh import build_mesh
from mjnfet.solver import (SolverSettings, SweepSpec, channel_ratio, gauss_check, iv_sweep,
                           solve_bias, solve_equilibrium)
from mjnfet.sweep import SweepPlan, fit_linear_trend, run_sweep, simulate_device

RESULTS = []
SETTINGS = SolverSettings()
WORKFUNCTIONS = tuple(float(v) for v in np.linspace(4.63, 5.22, 8))


def report(tag, name, ok, detail):
    line = f"[ACCEPT] {tag} {name}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def paper():
    return default_paper_device()


@pytest.fixture(scope="module")
def mesh(paper):
    return build_mesh(paper)


@pytest.fixture(scope="module")
def wf_sweep(paper):
    t0 = time.perf_counter()
    result = run_sweep(SweepPlan(paper, [("gate.workfunction", WORKFUNCTIONS)]))
    return result, time.perf_counter() - t0


def test_c1_threshold_workfunction_trend(wf_sweep):
    result, elapsed = wf_sweep
    fit = fit_linear_trend(result, "gate.workfunction", "V_th")
    vth = result.column("V_th")
    span = vth[-1] - vth[0]
    checks = {
        "slope": abs(fit.slope - 1.0) <= 0.15,
        "R2": fit.r_squared >= 0.98,
        "V_th(4.63)": -0.05 <= vth[0] <= 0.45,
        "span": 0.45 <= span <= 0.75,
        "runtime": elapsed < 600,
        "rows": len(result.rows) == 8,
    }
    failed = [k for k, v in checks.items() if not v]
    report("C1", "V_th-workfunction trend", not failed,
           f"slope={fit.slope:.4f} V/eV R2={fit.r_squared:.5f} V_th(4.63)={vth[0]:+.4f} V "
           f"span={span:.4f} V runtime={elapsed:.0f} s"
           + (f" failed={failed}" if failed else ""))


def test_c2_on_current_trend(wf_sweep):
    result, _ = wf_sweep
    i_on = result.column("I_on")
    fit = fit_linear_trend(result, "gate.workfunction", "I_on")
    checks = {
        "decreasing": bool(np.all(np.diff(i_on) < 0)),
        "R2": fit.r_squared >= 0.9,
        "I_on(4.63)": 2e-6 <= i_on[0] <= 40e-6,
    }
    failed = [k for k, v in checks.items() if not v]
    report("C2", "I_on trend", not failed,
           f"I_on(4.63)={i_on[0] * 1e6:.2f} uA I_on(5.22)={i_on[-1] * 1e6:.2f} uA "
           f"R2={fit.r_squared:.4f} strictly_decreasing={checks['decreasing']}"
           + (f" failed={failed}" if failed else ""))


def test_c3_output_saturation(paper, mesh):
    vd = np.round(np.arange(0.0, 1.0 + 1e-9, 0.05), 10)
    curve = iv_sweep(paper, SETTINGS, SweepSpec("Vd", BiasPoint(V_g=1.0), vd), mesh)
    g = np.gradient(curve.current, vd)
    k05 = int(np.argmin(np.abs(vd - 0.05)))
    ratio = g[-1] / g[k05]
    monotone = bool(np.all(np.diff(curve.current) >= 0))
    report("C3", "output saturation", curve.converged.all() and monotone and ratio < 0.15,
           f"gd(1.0)/gd(0.05)={ratio:.4f} (< 0.15) monotone={monotone} "
           f"I_d(1 V)={curve.current[-1] * 1e6:.2f} uA")


def test_c4_full_depletion_and_flat_band(paper, mesh):
    ratios = {}
    for phi in (4.8, 5.0, 5.22):
        sol = solve_equilibrium(mesh, paper.with_workfunction(phi), SETTINGS)
        ratios[phi] = channel_ratio(sol, mesh)
    vfb = flat_band_voltage(paper)
    fb = solve_equilibrium(mesh, paper, SETTINGS, V_g=vfb)
    _, semi, _ = mesh.node_volumes
    dev = float(np.max(np.abs(fb.n[semi > 0] / paper.channel_doping - 1)))
    ok = all(r < 1e-3 for r in ratios.values()) and dev < 0.02
    report("C4", "normally-off depletion and flat band", ok,
           "min n/N_d at V_g=0: " + ", ".join(f"{k}: {v:.2e}" for k, v in ratios.items())
           + f"; flat band max|n/N_d-1|={dev:.2e}")


def test_c5_poly_comparison(paper):
    poly = paper.replace(gate=GateMaterial.poly(-1e20))
    cmp_ = compare_gate_stacks(paper, poly, 1.0)
    matched = abs(cmp_.metal.V_th - cmp_.poly.V_th) < 0.02
    at_target = abs(cmp_.poly.V_th - 0.4) <= 0.02
    ok = matched and at_target and cmp_.ratio_quotient >= 5 and cmp_.metal.SS < cmp_.poly.SS
    report("C5", "metal vs poly at matched V_th", ok,
           f"V_th metal={cmp_.metal.V_th:.4f} poly={cmp_.poly.V_th:.4f} V "
           f"(phi_m={cmp_.metal.spec.gate.workfunction:.3f} eV) "
           f"ratio quotient={cmp_.ratio_quotient:.2f} (>= 5) "
           f"SS metal={cmp_.metal.SS:.1f} poly={cmp_.poly.SS:.1f} mV/dec")


def _conservation(spec, mesh):
    worst = 0.0
    for vary, fixed, pts in (("Vg", BiasPoint(V_d=1.0), np.arange(-0.6, 1.01, 0.1)),
                             ("Vd", BiasPoint(V_g=1.0), np.arange(0.05, 1.01, 0.05))):
        guess = None
        for v in pts:
            b = (BiasPoint(V_g=float(v), V_d=fixed.V_d) if vary == "Vg"
                 else BiasPoint(V_g=fixed.V_g, V_d=float(v)))
            sol = solve_bias(mesh, spec, b, SETTINGS, initial_guess=guess)
            guess = sol
            if sol.converged:
                I_s, I_d = sol.currents["source"], sol.currents["drain"]
                worst = max(worst, abs(I_s + I_d) / abs(I_d))
    return worst


def test_c6_numerical_oracles(paper, mesh):
    parts = {}
    # (a) flat-band slab resistor, contact-to-contact length
    vfb = flat_band_voltage(paper)
    sol = solve_bias(mesh, paper, BiasPoint(V_g=vfb, V_d=0.01), SETTINGS)
    mu = paper.channel_material.mobility(paper.channel_doping)
    area = paper.channel_height * 1e-7 * paper.effective_width_cm
    want = Q * mu * paper.channel_doping * area * 0.01 / (paper.total_length * 1e-7)
    err_a = abs(sol.currents["drain"] / want - 1)
    parts["a"] = (err_a < 0.05, f"slab err={err_a:.3%}")
    # (b) depletion width in a thick, long body
    thick = paper.replace(channel_height=40.0, channel_length=60.0)
    tm = build_mesh(thick)
    eq = solve_equilibrium(tm, thick, SETTINGS)
    i = int(np.argmin(np.abs(tm.x - tm.x[-1] / 2)))
    y = tm.y - thick.dielectric_thickness
    si = (y >= 0) & (y <= thick.channel_height / 2)
    col = tm.index(i, np.arange(tm.ny)[si])
    r = eq.n[col] / thick.channel_doping
    k = int(np.argmax(r >= 0.5))
    edge = np.interp(0.5, r[k - 1:k + 1], y[si][k - 1:k + 1])
    bend = eq.psi[col[-1]] - eq.psi[col[0]]
    width = np.sqrt(2 * thick.channel_material.permittivity * bend
                    / (Q * thick.channel_doping)) * 1e7
    err_b = abs(edge / width - 1)
    parts["b"] = (err_b < 0.10, f"depletion err={err_b:.2%}")
    # (c) Gauss law on sub-boxes of an on-state solution
    on = solve_bias(mesh, paper, BiasPoint(V_g=0.6, V_d=0.5), SETTINGS)
    xm = mesh.nx // 2
    errs = []
    for box in (((3, 20), (3, 20)), ((15, 35), (6, 18)), ((xm - 5, xm + 5), (1, mesh.ny // 2))):
        flux, charge = gauss_check(on, mesh, *box)
        errs.append(abs(flux / charge - 1))
    parts["c"] = (max(errs) < 0.01, f"gauss max err={max(errs):.1e}")
    # (d) terminal current conservation on every converged point
    worst = max(_conservation(paper, mesh), _conservation(paper.with_workfunction(5.22), mesh))
    parts["d"] = (worst < 1e-4, f"max |I_s+I_d|/|I_d|={worst:.1e}")
    # (e) accumulation capacitance
    c = gate_capacitance(paper, mesh, SETTINGS, 1.6)
    c_ox = paper.oxide_capacitance * 2 * paper.channel_length * 1e-7 * paper.effective_width_cm
    err_e = abs(c / c_ox - 1)
    parts["e"] = (err_e < 0.15, f"C_gg/(eps A/t_ox)={c / c_ox:.3f}")
    ok = all(v[0] for v in parts.values())
    report("C6", "numerical oracles", ok,
           "; ".join(f"({k}) {'ok' if v[0] else 'FAIL'} {v[1]}" for k, v in parts.items()))


def test_c7_mesh_robustness(paper):
    base = simulate_device(paper, resolution="default", output=False).metrics
    fine = simulate_device(paper, resolution="fine", output=False).metrics
    d_on = abs(fine.I_on / base.I_on - 1)
    d_vth = abs(fine.V_th - base.V_th)
    report("C7", "discretization robustness", d_on < 0.05 and d_vth < 0.020,
           f"dI_on={d_on:.3%} (< 5%) dV_th={d_vth * 1e3:.2f} mV (< 20 mV)")


def test_c8_sweep_determinism(tmp_path):
    cfg = tmp_path / "sweep.yaml"
    values = ", ".join(repr(v) for v in WORKFUNCTIONS[::2])
    cfg.write_text(f"sweep:\n  axes:\n    - {{path: gate.workfunction, values: [{values}]}}\n")
    outs = []
    for run, par in enumerate((1, 8, 1)):
        out = tmp_path / f"run{run}"
        assert cli(["sweep", "--config", str(cfg), "--out", str(out),
                    "--parallelism", str(par)]) == 0
        outs.append({n: (out / n).read_bytes() for n in ("sweep.csv", "sweep.json",
                                                          "trends.json")})
    same = outs[0] == outs[1] == outs[2]
    report("C8", "sweep determinism", same,
           f"parallelism 1/8/1 byte-identical={same} ({len(WORKFUNCTIONS[::2])} points)")
