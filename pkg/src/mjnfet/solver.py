"""
Nonlinear Poisson and electron drift-diffusion on a StructuredMesh.

Node-centred finite volumes on the tensor grid.  Poisson is solved by damped
Newton; transport by a Gummel loop whose continuity step uses
Scharfetter-Gummel fluxes.  Potentials are referenced to the intrinsic level
of the channel semiconductor; the electron quasi-Fermi potential is stored as
an offset from the nearest contact so that sub-femtoamp terminal currents
survive round-off.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .curves import IVCurve
from .device import NM, BiasPoint, DeviceSpec
from .materials import GateKind, Q, T_REF, thermal_voltage
from .mesh import Region, StructuredMesh

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Raised when a nonlinear iteration fails; carries the last residual and
    the per-iteration trace."""

    def __init__(self, message, residual=float("nan"), trace=()):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.trace = list(trace)


@dataclass(frozen=True)
class SolverSettings:
    tol_psi: float = 1e-6  # V
    tol_I: float = 1e-4  # relative
    max_gummel_iterations: int = 200
    max_newton_iterations: int = 50
    damping: float = 2 * thermal_voltage(T_REF)  # V per Newton step
    # switch from Gummel to coupled Newton once the outer update drops below this
    newton_switch: float = 1e-2  # V; 0 keeps pure Gummel

    def __post_init__(self):
        for name in ("tol_psi", "tol_I", "max_gummel_iterations",
                     "max_newton_iterations", "damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.newton_switch < 0:
            raise ValueError("newton_switch must be >= 0")


@dataclass
class FieldSolution:
    psi: np.ndarray  # V
    n: np.ndarray  # cm^-3, zero outside semiconductor
    phi_n: np.ndarray  # V
    converged: bool
    poisson_residual: float
    continuity_residual: float
    iterations: int
    bias: BiasPoint
    spec: DeviceSpec
    n_nodes: int
    currents: dict = field(default_factory=dict)  # A, current into the device


# --- Scharfetter-Gummel ------------------------------------------------------

def bernoulli(t):
    """B(t) = t / (exp(t) - 1), overflow-free, series below |t| = 1e-4."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = np.abs(t) < 1e-4
    pos = (t > 0) & ~small
    neg = (t < 0) & ~small
    ts = t[small]
    out[small] = 1 - ts / 2 + ts * ts / 12
    tp = t[pos]
    out[pos] = -tp * np.exp(-tp) / np.expm1(-tp)
    tn = t[neg]
    out[neg] = tn / np.expm1(tn)
    return out if out.ndim else float(out)


class EdgeGeometry(NamedTuple):
    length: float  # cm, node to node
    area: float  # cm^2, flux cross-section


def sg_edge_flux(psi_i, psi_j, n_i, n_j, mu, edge_geometry, temperature=T_REF):
    """Electron current (A) along the edge i -> j, positive in that direction."""
    if np.any(np.asarray(n_i) <= 0) or np.any(np.asarray(n_j) <= 0):
        raise ValueError("carrier densities must be positive")
    vt = thermal_voltage(temperature)
    t = (np.asarray(psi_j) - np.asarray(psi_i)) / vt
    h, area = edge_geometry
    return Q * mu * vt / h * area * (bernoulli(t) * n_j - bernoulli(-t) * n_i)


# --- discretization ------------------------------------------------------------

class _Model:
    """Bias-independent operators and node data for one (mesh, spec) pair."""

    def __init__(self, mesh: StructuredMesh, spec: DeviceSpec):
        self.mesh = mesh
        self.spec = spec
        mat = spec.channel_material
        self.vt = thermal_voltage(spec.temperature)
        self.ni = mat.intrinsic_density(spec.temperature)
        self.phi_int = mat.intrinsic_workfunction(spec.temperature)
        self.width = spec.effective_width_cm
        N = mesh.n_nodes

        a, b, h, eps_coef, semi_face = mesh.edges
        _, vs, vp = mesh.node_volumes
        ds, dp = mesh.node_doping
        self.vs, self.vp, self.ds, self.dp = vs, vp, ds, dp
        self.semi = vs > 0
        self.poly = vp > 0

        self.contact_nodes = {k: v for k, v in mesh.contacts.items()}
        src, drn = mesh.contacts["source"], mesh.contacts["drain"]
        gate = np.concatenate([mesh.contacts["gate_top"], mesh.contacts["gate_bottom"]])
        self.gate_nodes = np.unique(gate)
        dirichlet = np.zeros(N, bool)
        dirichlet[src] = dirichlet[drn] = dirichlet[self.gate_nodes] = True
        self.dirichlet = dirichlet
        self.free = np.nonzero(~dirichlet)[0]

        # Poisson operator: sum_b c_ab (psi_b - psi_a)
        self.lap = _laplacian(a, b, eps_coef, N)
        self.lap_ff = self.lap[self.free][:, self.free].tocsc()

        # transport edges: both ends in transport semiconductor, nonzero face
        te = (semi_face > 0) & self.semi[a] & self.semi[b]
        self.ta, self.tb = a[te], b[te]
        dop = np.maximum(np.abs(ds[self.ta]), np.abs(ds[self.tb]))
        mu = np.array([mat.mobility(d) for d in dop])
        self.tcoef = Q * mu * self.vt / h[te] * semi_face[te]  # A/cm per unit B*n
        self.t_mu = mu

        self.contact_semi = np.zeros(N, bool)
        self.contact_semi[src] = self.contact_semi[drn] = True
        self.cfree = np.nonzero(self.semi & ~self.contact_semi)[0]
        self.cindex = -np.ones(N, np.int64)
        self.cindex[self.cfree] = np.arange(len(self.cfree))

        X, _ = mesh.node_xy
        self.drain_side = X >= (mesh.x[0] + mesh.x[-1]) / 2

        # mid-channel column for regime classification
        x_mid = (mesh.boxes["channel"][0] + mesh.boxes["channel"][1]) / 2
        i_mid = int(np.argmin(np.abs(mesh.x - x_mid)))
        col = mesh.index(i_mid, np.arange(mesh.ny))
        self.mid_column = col[self.semi[col]]
        self.channel_nodes = np.nonzero(mesh.node_region == Region.CHANNEL)[0]

    # boundary values
    def neutral_psi(self, phi, doping):
        return phi + self.vt * np.arcsinh(doping / (2 * self.ni))

    def electron_neutral_psi(self, phi, doping):
        return phi + self.vt * np.log(doping / self.ni)

    def dirichlet_values(self, bias: BiasPoint):
        psi = np.zeros(self.mesh.n_nodes)
        for name, v in (("source", bias.V_s), ("drain", bias.V_d)):
            nodes = self.mesh.contacts[name]
            psi[nodes] = self.electron_neutral_psi(v, self.ds[nodes])
        g = self.gate_nodes
        if self.spec.gate.kind is GateKind.METAL:
            psi[g] = bias.V_g - self.spec.gate.workfunction + self.phi_int
        else:
            psi[g] = self.neutral_psi(bias.V_g, self.spec.gate.poly_doping)
        return psi

    def reference(self, bias: BiasPoint):
        return np.where(self.drain_side, bias.V_d, bias.V_s)

    def initial_psi(self, bias: BiasPoint):
        psi = np.full(self.mesh.n_nodes,
                      float(self.electron_neutral_psi(bias.V_s, abs(self.spec.channel_doping))))
        semi = self.semi
        psi[semi] = self.electron_neutral_psi(self.reference(bias)[semi],
                                              np.abs(self.ds[semi]))
        poly = self.poly & ~semi
        psi[poly] = self.neutral_psi(bias.V_g, self.dp[poly])
        d = self.dirichlet
        psi[d] = self.dirichlet_values(bias)[d]
        return psi

    def electron_density(self, psi, phi):
        n = np.zeros_like(psi)
        s = self.semi
        n[s] = self.ni * np.exp((psi[s] - phi[s]) / self.vt)
        return n


def _laplacian(a, b, w, N):
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    data = np.concatenate([-w, w, w, -w])
    return sp.csr_matrix((data, (rows, cols)), shape=(N, N))


@functools.lru_cache(maxsize=16)
def _model(mesh: StructuredMesh, spec: DeviceSpec) -> _Model:
    return _Model(mesh, spec)


# --- Poisson -------------------------------------------------------------------

def _poisson(m: _Model, psi, phi, V_g, settings: SolverSettings):
    """Damped Newton on the nonlinear Poisson equation with frozen quasi-Fermi
    potentials.  Returns the new potential."""
    psi = psi.copy()
    free = m.free
    vt, ni = m.vt, m.ni
    tol = settings.tol_psi * 1e-2
    trace = []
    for _ in range(settings.max_newton_iterations):
        n = m.electron_density(psi, phi)
        rho = m.vs * (m.ds - n)
        dq = m.vs * n / vt
        if m.poly.any():
            p_el = ni * np.exp((psi - V_g) / vt)
            p_ho = ni * np.exp((V_g - psi) / vt)
            rho = rho + m.vp * (m.dp - p_el + p_ho)
            dq = dq + m.vp * (p_el + p_ho) / vt
        F = m.lap @ psi + Q * rho
        J = m.lap_ff - sp.diags(Q * dq[free], format="csc")
        delta = splu(J).solve(-F[free])
        step = float(np.max(np.abs(delta))) if delta.size else 0.0
        trace.append(step)
        if not np.isfinite(step):
            raise ConvergenceError("Poisson Newton diverged", step, trace)
        psi[free] += np.clip(delta, -settings.damping, settings.damping)
        if step < tol:
            return psi
    raise ConvergenceError("Poisson Newton did not converge", trace[-1], trace)


# --- electron continuity -------------------------------------------------------

def _edge_currents(m: _Model, psi, w, ref):
    """Conventional current (A/cm depth) along each transport edge a -> b and
    its derivatives with respect to the quasi-Fermi potentials."""
    a, b = m.ta, m.tb
    vt = m.vt
    t = (psi[b] - psi[a]) / vt
    dphi = (w[b] - w[a]) + (ref[b] - ref[a])
    nb = m.ni * np.exp((psi[b] - w[b] - ref[b]) / vt)
    G = m.tcoef * bernoulli(t) * nb
    e = dphi / vt
    I = -G * np.expm1(e)
    dIa = G * np.exp(e) / vt
    dIb = -G / vt
    return I, dIa, dIb


def _continuity(m: _Model, psi, w, ref, bias: BiasPoint):
    """Solve div J_n = 0 for the quasi-Fermi offset ``w`` with ``psi`` frozen."""
    a, b = m.ta, m.tb
    vt = m.vt
    cfree, idx = m.cfree, m.cindex
    nf = len(cfree)
    phi_c = np.zeros(len(psi))
    phi_c[m.mesh.contacts["source"]] = bias.V_s
    phi_c[m.mesh.contacts["drain"]] = bias.V_d

    # predictor: linear problem in u = exp(-(phi - phi_ref)/vt), ref = V_s
    shift = bias.V_s
    t = (psi[b] - psi[a]) / vt
    logg = np.log(m.tcoef) + np.log(bernoulli(t)) + (psi[b] - shift) / vt
    logg -= logg.max()
    g = np.exp(logg)
    fa, fb = idx[a], idx[b]
    u_c = np.exp(-(phi_c - shift) / vt)
    rows, cols, data = [], [], []
    rhs = np.zeros(nf)
    for p, q_, pf, qf in ((a, b, fa, fb), (b, a, fb, fa)):
        mp = pf >= 0
        rows.append(pf[mp]); cols.append(pf[mp]); data.append(-g[mp])
        mq = mp & (qf >= 0)
        rows.append(pf[mq]); cols.append(qf[mq]); data.append(g[mq])
        md = mp & (qf < 0)
        np.add.at(rhs, pf[md], -g[md] * u_c[q_[md]])
    A = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nf, nf))
    scale = 1.0 / np.abs(A.diagonal())
    A = sp.diags(scale) @ A
    u = splu(A.tocsc()).solve(rhs * scale)
    lo, hi = min(u_c[m.contact_semi].min(), 1.0), max(u_c[m.contact_semi].max(), 1.0)
    u = np.clip(u, lo * (1 - 1e-12), hi)
    w = w.copy()
    w[cfree] = -vt * np.log(u) + shift - ref[cfree]
    w[m.contact_semi] = phi_c[m.contact_semi] - ref[m.contact_semi]

    # corrector: Newton on w with the cancellation-free flux form
    for _ in range(12):
        I, dIa, dIb = _edge_currents(m, psi, w, ref)
        F = np.zeros(len(psi))
        np.add.at(F, a, I)
        np.add.at(F, b, -I)
        rows, cols, data = [], [], []
        for p, q_, s, dp_, dq_ in ((a, b, 1.0, dIa, dIb), (b, a, -1.0, dIb, dIa)):
            pf, qf = idx[p], idx[q_]
            mp = pf >= 0
            rows.append(pf[mp]); cols.append(pf[mp]); data.append(s * dp_[mp])
            mq = mp & (qf >= 0)
            rows.append(pf[mq]); cols.append(qf[mq]); data.append(s * dq_[mq])
        J = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nf, nf))
        scale = 1.0 / np.abs(J.diagonal())
        delta = splu((sp.diags(scale) @ J).tocsc()).solve(-F[cfree] * scale)
        delta = np.clip(delta, -m.vt, m.vt)
        w[cfree] += delta
        if np.max(np.abs(delta)) < 1e-13 * vt:
            break
    return w


def _contact_currents(m: _Model, psi, w, ref):
    """Current (A) flowing from each contact into the device."""
    I, _, _ = _edge_currents(m, psi, w, ref)
    out = {}
    for name in ("source", "drain"):
        mask = np.zeros(len(psi), bool)
        mask[m.mesh.contacts[name]] = True
        in_a = mask[m.ta] & ~mask[m.tb]
        in_b = mask[m.tb] & ~mask[m.ta]
        out[name] = float((I[in_a].sum() - I[in_b].sum()) * m.width)
    out["gate"] = 0.0
    return out


def _imbalance(cur):
    big = max(abs(cur["source"]), abs(cur["drain"]))
    if big == 0:
        return 0.0
    return abs(cur["source"] + cur["drain"]) / big


# --- public solves ---------------------------------------------------------------

def _make_solution(m, psi, w, bias, converged, dpsi, cres, iters, currents):
    ref = m.reference(bias)
    phi = np.where(m.semi, w + ref, 0.0)
    return FieldSolution(psi=psi, n=m.electron_density(psi, phi), phi_n=phi,
                         converged=converged, poisson_residual=dpsi,
                         continuity_residual=cres, iterations=iters, bias=bias,
                         spec=m.spec, n_nodes=m.mesh.n_nodes, currents=currents)


def _equilibrium(m: _Model, bias: BiasPoint, settings, psi0=None):
    ref = m.reference(bias)
    psi = m.initial_psi(bias) if psi0 is None else psi0.copy()
    psi[m.dirichlet] = m.dirichlet_values(bias)[m.dirichlet]
    phi = np.full(len(psi), float(bias.V_s))
    psi = _poisson(m, psi, phi, bias.V_g, settings)
    w = phi - ref
    cur = {"source": 0.0, "drain": 0.0, "gate": 0.0}
    return _make_solution(m, psi, w, bias, True, 0.0, 0.0, 1, cur)


def _dlogb(t):
    """d ln B / dt."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    small = np.abs(t) < 1e-4
    out[small] = -0.5 + t[small] / 6
    tl = t[~small]
    with np.errstate(over="ignore"):
        out[~small] = 1 / tl - 1 - 1 / np.expm1(tl)
    return out


def _coupled_newton(m: _Model, bias: BiasPoint, settings, psi, w, ref):
    """Fully coupled Newton on (psi, w).  Returns ``(psi, w, last_step, iters)``."""
    free, cfree = m.free, m.cfree
    nP, nC = len(free), len(cfree)
    pidx = -np.ones(len(psi), np.int64)
    pidx[free] = np.arange(nP)
    cidx = m.cindex
    a, b = m.ta, m.tb
    vt = m.vt
    psi, w = psi.copy(), w.copy()
    trace = []
    for it in range(1, settings.max_newton_iterations + 1):
        phi = np.where(m.semi, w + ref, 0.0)
        n = m.electron_density(psi, phi)
        rho = m.vs * (m.ds - n)
        dq = m.vs * n / vt
        if m.poly.any():
            p_el = m.ni * np.exp((psi - bias.V_g) / vt)
            p_ho = m.ni * np.exp((bias.V_g - psi) / vt)
            rho = rho + m.vp * (m.dp - p_el + p_ho)
            dq = dq + m.vp * (p_el + p_ho) / vt
        FP = (m.lap @ psi + Q * rho)[free]

        I, dIa, dIb = _edge_currents(m, psi, w, ref)
        FCn = np.zeros(len(psi))
        np.add.at(FCn, a, I)
        np.add.at(FCn, b, -I)
        FC = FCn[cfree]
        t = (psi[b] - psi[a]) / vt
        em = np.expm1(((w[b] - w[a]) + (ref[b] - ref[a])) / vt)
        G = -I / np.where(em == 0, 1.0, em)
        G = np.where(em == 0, m.tcoef * bernoulli(t) * m.ni * np.exp((psi[b] - phi[b]) / vt), G)
        dl = _dlogb(t)
        dIpa = em * G * dl / vt
        dIpb = -em * G * (dl + 1) / vt

        rows, cols, data = [], [], []
        # Poisson block
        lap = m.lap_ff.tocoo()
        rows.append(lap.row); cols.append(lap.col); data.append(lap.data)
        rows.append(np.arange(nP)); cols.append(np.arange(nP)); data.append(-Q * dq[free])
        both = (pidx >= 0) & (cidx >= 0)
        nodes = np.nonzero(both)[0]
        rows.append(pidx[nodes]); cols.append(nP + cidx[nodes])
        data.append(Q * m.vs[nodes] * n[nodes] / vt)
        # continuity block
        for p_, q_, sgn, dwp, dwq, dpp, dpq in ((a, b, 1.0, dIa, dIb, dIpa, dIpb),
                                                (b, a, -1.0, dIb, dIa, dIpb, dIpa)):
            r = cidx[p_]
            mr = r >= 0
            for target, dv in ((p_, dwp), (q_, dwq)):
                c = cidx[target]
                mk = mr & (c >= 0)
                rows.append(r[mk] + nP); cols.append(nP + c[mk]); data.append(sgn * dv[mk])
            for target, dv in ((p_, dpp), (q_, dpq)):
                c = pidx[target]
                mk = mr & (c >= 0)
                rows.append(r[mk] + nP); cols.append(c[mk]); data.append(sgn * dv[mk])
        R = np.concatenate(rows)
        C = np.concatenate(cols)
        D = np.concatenate(data)
        J = sp.csr_matrix((D, (R, C)), shape=(nP + nC, nP + nC))
        F = np.concatenate([FP, FC])
        rs = np.asarray(abs(J).max(axis=1).todense()).ravel()
        rs[rs == 0] = 1.0
        Dr = sp.diags(1 / rs)
        try:
            delta = splu((Dr @ J).tocsc()).solve(-F / rs)
        except RuntimeError as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", float("nan"), trace)
        step = float(np.max(np.abs(delta)))
        trace.append(step)
        if not np.isfinite(step):
            raise ConvergenceError("coupled Newton diverged", step, trace)
        delta = np.clip(delta, -settings.damping, settings.damping)
        psi[free] += delta[:nP]
        w[cfree] += delta[nP:]
        if step < settings.tol_psi * 1e-2:
            return psi, w, step, it
    raise ConvergenceError("coupled Newton did not converge", trace[-1], trace)


def _gummel(m: _Model, bias: BiasPoint, settings, psi0, phi0):
    ref = m.reference(bias)
    psi = psi0.copy()
    psi[m.dirichlet] = m.dirichlet_values(bias)[m.dirichlet]
    w = np.where(m.semi, phi0 - ref, 0.0)
    w[m.contact_semi] = 0.0
    prev_I = None
    trace = []
    newton_tried = False
    for it in range(1, settings.max_gummel_iterations + 1):
        phi = np.where(m.semi, w + ref, 0.0)
        psi_new = _poisson(m, psi, phi, bias.V_g, settings)
        dpsi = float(np.max(np.abs(psi_new - psi)))
        psi = psi_new
        w = _continuity(m, psi, w, ref, bias)
        cur = _contact_currents(m, psi, w, ref)
        I = cur["drain"]
        dI = abs(I - prev_I) / max(abs(I), 1e-30) if prev_I is not None else 1.0
        prev_I = I
        cres = max(_imbalance(cur), dI if it > 1 else 0.0)
        trace.append((dpsi, cres))
        if not np.isfinite(dpsi):
            break
        if dpsi <= settings.tol_psi and cres <= settings.tol_I and it > 1:
            return _make_solution(m, psi, w, bias, True, dpsi, cres, it, cur)
        if not newton_tried and it > 1 and dpsi < settings.newton_switch:
            newton_tried = True
            try:
                psi_n, w_n, step, k = _coupled_newton(m, bias, settings, psi, w, ref)
            except ConvergenceError:
                log.debug("coupled Newton failed at %s; continuing Gummel", bias)
                continue
            # one Gummel pass confirms self-consistency and polishes the currents
            phi = np.where(m.semi, w_n + ref, 0.0)
            psi = _poisson(m, psi_n, phi, bias.V_g, settings)
            dpsi = float(np.max(np.abs(psi - psi_n)))
            w = _continuity(m, psi, w_n, ref, bias)
            cur = _contact_currents(m, psi, w, ref)
            cres = _imbalance(cur)
            it += k
            if dpsi <= settings.tol_psi and cres <= settings.tol_I:
                return _make_solution(m, psi, w, bias, True, dpsi, cres, it, cur)
            prev_I = cur["drain"]
    last = trace[-1][0] if trace else float("nan")
    raise ConvergenceError(f"Gummel loop did not converge at {bias}", last, trace)


def _check_guess(mesh, guess):
    if guess is not None and guess.n_nodes != mesh.n_nodes:
        raise ValueError("initial guess was computed on a different mesh")


def solve_equilibrium(mesh: StructuredMesh, spec: DeviceSpec,
                      settings: SolverSettings = SolverSettings(), V_g: float = 0.0) -> FieldSolution:
    """Zero-current state at gate bias ``V_g`` (0 by default) and V_d = V_s = 0."""
    return _equilibrium(_model(mesh, spec), BiasPoint(V_g=V_g), settings)


def solve_bias(mesh: StructuredMesh, spec: DeviceSpec, bias: BiasPoint,
               settings: SolverSettings = SolverSettings(),
               initial_guess: Optional[FieldSolution] = None,
               max_step: float = 0.1) -> FieldSolution:
    """Self-consistent solution at ``bias``.

    Without ``initial_guess`` the drain is ramped from V_s in steps of at most
    ``max_step`` volts; failed steps are halved down to 1 mV.
    """
    _check_guess(mesh, initial_guess)
    m = _model(mesh, spec)
    if bias.V_d == bias.V_s:
        psi0 = None if initial_guess is None else initial_guess.psi
        return _equilibrium(m, bias, settings, psi0)

    if initial_guess is not None:
        try:
            return _gummel(m, bias, settings, initial_guess.psi, initial_guess.phi_n)
        except ConvergenceError:
            log.debug("direct solve from guess failed at %s; ramping", bias)
        start = initial_guess
    else:
        start = _equilibrium(m, BiasPoint(bias.V_g, bias.V_s, bias.V_s), settings)
    if start.bias.V_g != bias.V_g:
        start = _ramp(m, start, BiasPoint(bias.V_g, start.bias.V_d, bias.V_s), settings, max_step)
    return _ramp(m, start, bias, settings, max_step)


def _ramp(m, start: FieldSolution, target: BiasPoint, settings, max_step):
    sol = start
    a = np.array([sol.bias.V_g, sol.bias.V_d])
    b = np.array([target.V_g, target.V_d])
    frac, step = 0.0, 1.0
    span = float(np.max(np.abs(b - a)))
    if span > 0:
        step = min(1.0, max_step / span)
    while frac < 1.0:
        nxt = min(1.0, frac + step)
        vg, vd = a + nxt * (b - a)
        bias = BiasPoint(float(vg), float(vd), target.V_s)
        try:
            if vd == target.V_s:
                sol = _equilibrium(m, bias, settings, sol.psi)
            else:
                sol = _gummel(m, bias, settings, sol.psi, sol.phi_n)
            frac = nxt
            step = min(step * 1.5, 1.0 if span == 0 else min(1.0, max_step / span))
        except ConvergenceError:
            step /= 2
            if span * step < 1e-3:
                raise
    return sol


def terminal_current(solution: FieldSolution, mesh: StructuredMesh, contact: str) -> float:
    """Current (A) entering the device through ``contact``; the gate draws none."""
    if contact in ("gate", "gate_top", "gate_bottom"):
        return 0.0
    if contact not in ("source", "drain"):
        raise KeyError(f"unknown contact {contact!r}")
    _check_guess(mesh, solution)
    m = _model(mesh, solution.spec)
    ref = m.reference(solution.bias)
    w = np.where(m.semi, solution.phi_n - ref, 0.0)
    return _contact_currents(m, solution.psi, w, ref)[contact]


# --- diagnostics -----------------------------------------------------------------

REGIMES = ("fully_depleted", "subthreshold_channel", "partial_accumulation",
           "flat_band_or_accumulated")


def channel_ratio(solution: FieldSolution, mesh: StructuredMesh) -> float:
    """min(n / N_d) over the silicon cross-section at mid-channel."""
    m = _model(mesh, solution.spec)
    col = m.mid_column
    return float(np.min(solution.n[col] / np.abs(m.ds[col])))


def classify_regime(solution: FieldSolution, spec: DeviceSpec, mesh: StructuredMesh) -> str:
    r = channel_ratio(solution, mesh)
    if r < 1e-3:
        return "fully_depleted"
    if r < 0.5:
        return "subthreshold_channel"
    if r < 0.95:
        return "partial_accumulation"
    return "flat_band_or_accumulated"


def gauss_check(solution: FieldSolution, mesh: StructuredMesh, i_range, j_range):
    """Outward displacement flux and enclosed charge (C/cm) for the node box
    ``i_range x j_range`` (inclusive bounds, no Dirichlet nodes inside).

    Returns ``(flux, charge)``; Gauss's law requires ``flux == charge``.
    """
    m = _model(mesh, solution.spec)
    i0, i1 = i_range
    j0, j1 = j_range
    ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    inside = np.zeros(mesh.n_nodes, bool)
    inside[mesh.index(ii, jj).ravel()] = True
    if (inside & m.dirichlet).any():
        raise ValueError("box contains Dirichlet nodes")
    a, b, _, c, _ = mesh.edges
    psi = solution.psi
    out_a = inside[a] & ~inside[b]
    out_b = inside[b] & ~inside[a]
    # D . n_out = -eps dpsi/dn
    flux = -(np.sum(c[out_a] * (psi[b[out_a]] - psi[a[out_a]]))
             + np.sum(c[out_b] * (psi[a[out_b]] - psi[b[out_b]])))
    rho = m.vs * (m.ds - solution.n)
    if m.poly.any():
        V_g = solution.bias.V_g
        rho = rho + m.vp * (m.dp - m.ni * np.exp((psi - V_g) / m.vt)
                            + m.ni * np.exp((V_g - psi) / m.vt))
    return float(flux), float(Q * np.sum(rho[inside]))


def semiconductor_charge(solution: FieldSolution, mesh: StructuredMesh) -> float:
    """Integral of q (n - N_d) over the transport silicon, scaled to the device
    width (C)."""
    m = _model(mesh, solution.spec)
    return float(Q * np.sum(m.vs * (solution.n - m.ds)) * m.width)


# --- sweeps ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    vary: str  # "Vg" or "Vd"
    fixed: BiasPoint
    points: Sequence[float]


def iv_sweep(spec: DeviceSpec, settings: SolverSettings, sweep: SweepSpec,
             mesh: Optional[StructuredMesh] = None, resolution="default") -> IVCurve:
    """Continuation sweep of the drain current; failures after the first point
    are kept as non-converged entries."""
    from .mesh import build_mesh

    if sweep.vary not in ("Vg", "Vd"):
        raise ValueError(f"vary must be 'Vg' or 'Vd', got {sweep.vary!r}")
    pts = np.asarray(sweep.points, dtype=float)
    d = np.diff(pts)
    if len(pts) == 0 or not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("sweep points must be strictly monotone")
    mesh = mesh if mesh is not None else build_mesh(spec, resolution)

    def bias_at(v):
        f = sweep.fixed
        if sweep.vary == "Vg":
            return BiasPoint(V_g=float(v), V_d=f.V_d, V_s=f.V_s)
        return BiasPoint(V_g=f.V_g, V_d=float(v), V_s=f.V_s)

    currents, flags = [], []
    guess = None
    for k, v in enumerate(pts):
        try:
            sol = solve_bias(mesh, spec, bias_at(v), settings, initial_guess=guess)
        except ConvergenceError:
            if k == 0:
                raise
            currents.append(float("nan"))
            flags.append(False)
            continue
        guess = sol
        currents.append(sol.currents["drain"])
        flags.append(sol.converged)
    kind = "transfer" if sweep.vary == "Vg" else "output"
    return IVCurve(kind=kind, fixed_bias=sweep.fixed, sweep_v=pts,
                   current=np.array(currents), converged=np.array(flags, bool),
                   spec_fingerprint=spec.fingerprint())
