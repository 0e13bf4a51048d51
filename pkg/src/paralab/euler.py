"""Pseudo-spectral 2D Euler in vorticity form with flow-map tracking.

omega_t + u . grad omega = 0,  u = perp-grad inverse-Laplacian omega.

Vorticity is kept inside the dealias band, so every quadratic product is
exact before truncation and the Galerkin system conserves energy and
enstrophy up to the RK4 error. The forward map Phi is carried as node
displacements and moved with the off-grid velocity; the inverse map
phi = Phi^-1 obeys its own transport equation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from . import trig
from .flows import FlowMap, InverseFlow
from .spectral import Field


class CFLViolation(ValueError):
    pass


class ResolutionLost(RuntimeError):
    pass


def _band_zero_mean(omega: Field, check=True) -> Field:
    if omega.shape != ():
        raise ValueError("vorticity must be scalar")
    if check:
        sp._require_zero_mean(omega, "Euler evolution", tol=1e-10)
    c = np.where(omega.grid.band, omega.coeffs, 0)
    c[0, 0] = 0
    return Field(omega.grid, c)


@dataclass
class EulerState:
    t: float
    omega: Field
    cfl: float = 0.5

    @classmethod
    def initial(cls, omega: Field, cfl=0.5, t=0.0):
        return cls(t, _band_zero_mean(omega), cfl)

    @property
    def grid(self):
        return self.omega.grid

    @property
    def u(self) -> Field:
        return sp.biot_savart(self.omega)

    @property
    def psi(self) -> Field:
        return sp.inverse_laplacian(self.omega, check=False)

    def max_speed(self):
        return max_speed(self.omega)

    def dt_limit(self):
        v = self.max_speed()
        return np.inf if v == 0 else self.cfl * self.grid.h / v


def max_speed(omega: Field) -> float:
    u = np.real(sp.inverse(sp.biot_savart(omega)))
    return float(np.max(np.hypot(u[0], u[1])))


def biot_savart(omega: Field) -> Field:
    sp._require_zero_mean(omega, "Biot-Savart")
    return sp.biot_savart(omega)


def vorticity_rhs(omega: Field) -> Field:
    u = sp.biot_savart(omega)
    return -sp.product(u, sp.grad(omega), "j,j->")


def _check_cfl(state, dt):
    lim = state.dt_limit()
    if abs(dt) > lim * (1 + 1e-12):
        raise CFLViolation(f"|dt| = {abs(dt):.3e} exceeds CFL limit {lim:.3e}")


def step(state: EulerState, dt: float, check_cfl=True) -> EulerState:
    """One RK4 step of the vorticity equation."""
    if check_cfl:
        _check_cfl(state, dt)
    w = state.omega
    k1 = vorticity_rhs(w)
    k2 = vorticity_rhs(w + k1 * (dt / 2))
    k3 = vorticity_rhs(w + k2 * (dt / 2))
    k4 = vorticity_rhs(w + k3 * dt)
    w = w + (k1 + 2 * k2 + 2 * k3 + k4) * (dt / 6)
    return EulerState(state.t + dt, w, state.cfl)


# coupled stepping ---------------------------------------------------------------

def _flow_rhs(u: Field, disp_vals, grid):
    x1, x2 = grid.X
    return trig.evaluate(u, x1 + disp_vals[0], x2 + disp_vals[1], real=True)


def _inverse_rhs(u: Field, zeta: Field):
    return -u - sp.product(sp.jacobian(zeta), u, "ij,j->i")


def coupled_step(state: EulerState, dt: float, flow_vals=None, zeta: Field | None = None,
                 check_cfl=True):
    """RK4 for (omega, Phi node displacement, inverse displacement) together."""
    if check_cfl:
        _check_cfl(state, dt)
    g = state.grid
    w0 = state.omega
    ks_w, ks_f, ks_z = [], [], []
    w, f, z = w0, flow_vals, zeta
    for c in (0.0, 0.5, 0.5, 1.0):
        if c > 0:
            w = w0 + ks_w[-1] * (c * dt)
            if flow_vals is not None:
                f = flow_vals + ks_f[-1] * (c * dt)
            if zeta is not None:
                z = zeta + ks_z[-1] * (c * dt)
        u = sp.biot_savart(w)
        ks_w.append(-sp.product(u, sp.grad(w), "j,j->"))
        if flow_vals is not None:
            ks_f.append(_flow_rhs(u, f, g))
        if zeta is not None:
            ks_z.append(_inverse_rhs(u, z))

    def comb(y0, ks):
        return y0 + (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3]) * (dt / 6)

    new_state = EulerState(state.t + dt, comb(w0, ks_w), state.cfl)
    new_flow = comb(flow_vals, ks_f) if flow_vals is not None else None
    new_zeta = comb(zeta, ks_z) if zeta is not None else None
    return new_state, new_flow, new_zeta


def _flag_period(flow: FlowMap):
    if flow.max_displacement() > flow.grid.length:
        raise ResolutionLost("displacement exceeds one period")


def advance_flow(state: EulerState, flow: FlowMap, dt: float):
    """Advance the forward map one RK4 step alongside the vorticity.

    Returns (new_state, new_flow).
    """
    vals = flow.displacement_values()
    st, f, _ = coupled_step(state, dt, flow_vals=vals)
    out = FlowMap(sp.transform(f, state.grid), flow.t + dt)
    _flag_period(out)
    return st, out


def advance_inverse_flow(state: EulerState, inv: InverseFlow, dt: float):
    """Advance phi by phi_t + u . grad phi = 0. Returns (new_state, new_inverse)."""
    st, _, z = coupled_step(state, dt, zeta=inv.displacement)
    out = InverseFlow(z, inv.t + dt)
    _flag_period(out)
    return st, out


def compose_with_inverse(f: Field, inv: InverseFlow) -> Field:
    """f o phi by trigonometric evaluation."""
    if inv.is_identity():
        return f.copy()
    return trig.compose(f, inv.points())


def lipschitz_norm(flow: FlowMap) -> float:
    return flow.lipschitz()


def newton_inverse(flow: FlowMap, y1, y2, iters=20, tol=1e-13):
    """Solve Phi(x) = y pointwise by Newton's method; returns (x1, x2)."""
    y1 = np.asarray(y1, float)
    y2 = np.asarray(y2, float)
    d = flow.displacement
    Dd = sp.jacobian(d)
    x1 = y1 - trig.evaluate(d[0], y1, y2, real=True)
    x2 = y2 - trig.evaluate(d[1], y1, y2, real=True)
    for _ in range(iters):
        dv = trig.evaluate(d, x1, x2, real=True)
        r1 = x1 + dv[0] - y1
        r2 = x2 + dv[1] - y2
        if max(np.max(np.abs(r1)), np.max(np.abs(r2))) < tol:
            break
        A = trig.evaluate(Dd, x1, x2, real=True)
        a, b, c, e = 1 + A[0, 0], A[0, 1], A[1, 0], 1 + A[1, 1]
        det = a * e - b * c
        x1 = x1 - (e * r1 - b * r2) / det
        x2 = x2 - (-c * r1 + a * r2) / det
    return x1, x2


def roundtrip_error(flow: FlowMap, inv: InverseFlow) -> float:
    """max |Phi(phi(y)) - y| over the nodes."""
    p = inv.points()
    dv = trig.evaluate(flow.displacement, p[0], p[1], real=True)
    x1, x2 = flow.grid.X
    return float(max(np.max(np.abs(p[0] + dv[0] - x1)), np.max(np.abs(p[1] + dv[1] - x2))))


# diagnostics ----------------------------------------------------------------------

def sup_norm(f: Field, refine: int = 4) -> float:
    """Max of |f| on a grid refined ``refine`` times by zero padding."""
    g = f.grid
    M = refine * g.n
    vals = sp._padded_values(f.coeffs, M)
    return float(np.max(np.abs(vals)))


def edge_fraction(omega: Field, width: int = 2) -> float:
    """Share of enstrophy in the outer ``width`` shells of the dealias band."""
    g = omega.grid
    k1, k2 = g.K
    kinf = np.maximum(np.abs(k1), np.abs(k2))
    a2 = np.abs(omega.coeffs) ** 2 * g.band
    tot = a2.sum()
    if tot == 0:
        return 0.0
    return float(a2[kinf > g.cutoff - width].sum() / tot)


def energy(omega: Field) -> float:
    """(1/2) ||u||_L2^2."""
    return 0.5 * sp.l2_norm(sp.biot_savart(omega)) ** 2


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    flows: list = field(default_factory=list)
    inverses: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    dt: float = 0.0

    def at(self, t, tol=1e-9):
        for i, s in enumerate(self.times):
            if abs(s - t) < tol:
                return i
        raise KeyError(t)

    def write_csv(self, path):
        cols = ["t", "l2_omega", "linf_omega", "energy", "det_err", "lip_fwd", "lip_inv"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r.get(c, float("nan"))) for c in cols])


def _fmt(x):
    return f"{x:.12e}"


def diagnostics(state, flow=None, inv=None):
    row = {"t": state.t,
           "l2_omega": sp.l2_norm(state.omega),
           "linf_omega": sup_norm(state.omega),
           "energy": energy(state.omega)}
    if flow is not None:
        row["det_err"] = flow.det_error()
        row["lip_fwd"] = flow.lipschitz()
    if inv is not None:
        row["lip_inv"] = inv.lipschitz()
        if flow is None:
            row["det_err"] = inv.det_error()
    return row


def simulate(omega0: Field, T: float, dt: float | None = None, cfl: float = 0.5,
             track_flow=False, track_inverse=False, save_times=None,
             guard=True, guard_tol=1e-8, diag_every: int | None = None):
    """Integrate to time T (negative T runs backwards) with a fixed step.

    The step is the smaller of ``dt`` and 0.9 of the CFL limit at t = 0,
    shortened so that T and every save time are hit exactly.
    """
    state = EulerState.initial(omega0, cfl)
    g = state.grid
    sign = 1.0 if T >= 0 else -1.0
    lim = 0.9 * state.dt_limit()
    h = lim if dt is None else min(abs(dt), lim)
    marks = sorted({0.0, abs(T)} | {abs(t) for t in (save_times or [])})
    flow_vals = np.zeros((2, g.n, g.n)) if track_flow else None
    zeta = Field.zeros(g, (2,)) if track_inverse else None
    traj = Trajectory()

    def maps(st, fv, z):
        fl = FlowMap(sp.transform(fv, g), st.t) if fv is not None else None
        iv = InverseFlow(z, st.t) if z is not None else None
        return fl, iv

    def snapshot(st, fv, z):
        fl, iv = maps(st, fv, z)
        traj.times.append(st.t)
        traj.states.append(st)
        traj.flows.append(fl)
        traj.inverses.append(iv)
        traj.rows.append(diagnostics(st, fl, iv))

    snapshot(state, flow_vals, zeta)
    count = 0
    for a, b in zip(marks[:-1], marks[1:]):
        nsteps = max(1, int(np.ceil((b - a) / h - 1e-9)))
        hh = (b - a) / nsteps
        traj.dt = hh
        for i in range(nsteps):
            state, flow_vals, zeta = coupled_step(state, sign * hh, flow_vals, zeta,
                                                  check_cfl=False)
            count += 1
            if guard and count % 10 == 0 and edge_fraction(state.omega) > guard_tol:
                raise ResolutionLost(f"vorticity reached the dealias edge at t = {state.t:.4f}")
            if i == nsteps - 1:
                state = EulerState(sign * b, state.omega, state.cfl)
                snapshot(state, flow_vals, zeta)
            elif diag_every and count % diag_every == 0:
                traj.rows.append(diagnostics(state, *maps(state, flow_vals, zeta)))
    return traj
