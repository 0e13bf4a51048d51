"""Shnirelman's field X, the paradifferential Laplacian and its parametrix.

X = T_{(D Phi)^-1} Phi~ with the convention that the identity part of Phi
drops out of every paraproduct. The inverse Jacobian is taken as the
cofactor matrix, which coincides with the inverse when det D Phi = 1.

The parametrix inverts the principal symbol of
Delta_para v = div(T_M grad v),  M = (D Phi)^-1 (D Phi)^-T,
one angular Fourier mode at a time:

    Q f = sum_{|k| <= K} T_{m_k} B^k Delta^-1 f,

where m_k(x) are the coefficients of 1 / p~(x, theta) in exp(2 i k theta)
and B is the Beurling transform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from . import paradiff as pd
from .flows import FlowMap
from .spectral import Field


DET_TOL = 1e-4


# Shnirelman field ------------------------------------------------------------------

@dataclass
class ShnirelmanField:
    X: Field
    curl_part: Field
    div_part: Field

    def reassemble(self) -> Field:
        return sp.perp_grad(self.curl_part) + sp.grad(self.div_part)


def _check_det(flow: FlowMap, tol=DET_TOL):
    if not flow.is_identity():
        err = flow.det_error()
        if err > tol:
            raise ValueError(f"map is not measure preserving: max|det - 1| = {err:.3e}")


def compute_X(flow: FlowMap, check_det=True) -> ShnirelmanField:
    if check_det:
        _check_det(flow)
    g = flow.grid
    if flow.is_identity():
        z = Field.zeros(g, (2,))
        return ShnirelmanField(z, Field.zeros(g), Field.zeros(g))
    X = pd.paraproduct(flow.inverse_jacobian, flow.displacement, "ij,j->i")
    curl_part = sp.inverse_laplacian(sp.curl(X), check=False)
    div_part = sp.inverse_laplacian(sp.div(X), check=False)
    return ShnirelmanField(X, curl_part, div_part)


def compute_X_literal(flow: FlowMap) -> Field:
    """Same field from scalar paraproducts summed block by block."""
    A = flow.inverse_jacobian
    d = flow.displacement
    comps = []
    for i in range(2):
        acc = Field.zeros(flow.grid)
        for j in range(2):
            acc = acc + pd.paraproduct_literal(A[i, j], d[j])
        comps.append(acc)
    return Field.stack(comps)


# metric and parametrix --------------------------------------------------------

def metric(flow: FlowMap) -> Field:
    """M = (D Phi)^-1 (D Phi)^-T as a band-limited matrix field."""
    A = flow.inverse_jacobian
    return sp.product(A, A, "ij,kj->ik")


def angular_profile(Mvals):
    """(p_-1, p_0, p_1) from matrix samples (2, 2, ...)."""
    M11, M12, M22 = Mvals[0, 0], 0.5 * (Mvals[0, 1] + Mvals[1, 0]), Mvals[1, 1]
    p0 = 0.5 * (M11 + M22)
    a = 0.5 * (M11 - M22)
    p1 = 0.5 * (a - 1j * M12)
    return np.conj(p1), p0 + 0j, p1


def angular_coefficients(p, n_theta=256):
    """m_k for k = -n_theta/2 .. n_theta/2 - 1 by the trapezoid rule.

    p = (p_-1, p_0, p_1) arrays. Returns (coeffs, min of p~) with coeffs of
    shape (n_theta,) + p0.shape in FFT order along the first axis.
    """
    pm, p0, pp = (np.asarray(x) for x in p)
    th = np.pi * np.arange(n_theta) / n_theta
    e = np.exp(2j * th).reshape((-1,) + (1,) * p0.ndim)
    ptil = (p0[None] + pp[None] * e + pm[None] * np.conj(e)).real
    mvals = 1.0 / ptil
    coeffs = np.fft.fft(mvals, axis=0) / n_theta
    return coeffs, float(ptil.min())


def closed_form_coefficients(p, ks):
    """1/(p0 + r cos(2 theta - b)) = sum_k (-rho)^|k| e^{-ikb} e^{2ik theta} / sqrt(p0^2 - r^2)."""
    pm, p0, pp = (np.asarray(x) for x in p)
    p0 = p0.real
    z = 2 * np.conj(pp)                 # a + i b = r e^{i beta}
    r = np.abs(z)
    root = np.sqrt(p0 ** 2 - r ** 2)
    rho = r / (p0 + root)
    eib = np.where(r > 0, z / np.where(r > 0, r, 1.0), 1.0)
    out = []
    for k in ks:
        ph = np.conj(eib) ** k if k >= 0 else eib ** (-k)
        out.append((-rho) ** abs(k) * ph / root)
    return np.array(out)


@dataclass
class Parametrix:
    grid: sp.Grid
    K: int
    m: Field                      # shape (2K+1,), index k + K
    M: Field
    p: tuple                      # (p_-1, p_0, p_1) node values
    m_values: np.ndarray          # (2K+1, n, n) node values from quadrature
    sup_mk: np.ndarray            # sup_x |m_k| for k = 0..n_theta/2-1
    hs_mk: np.ndarray
    ellipticity: float
    M0: np.ndarray
    n_theta: int = 256
    extra: dict = field(default_factory=dict)

    def m_k(self, k: int) -> Field:
        if abs(k) > self.K:
            return Field.zeros(self.grid)
        return self.m[k + self.K]

    def frozen_symbol(self, grid=None):
        """a(0, xi) = |xi|^2 / (xi . M(0) xi) on the grid's frequencies."""
        g = self.grid if grid is None else grid
        x1, x2 = g.xi
        q = self.M0[0, 0] * x1 ** 2 + 2 * self.M0[0, 1] * x1 * x2 + self.M0[1, 1] * x2 ** 2
        r2 = x1 ** 2 + x2 ** 2
        return np.where(r2 > 0, r2 / np.where(q > 0, q, 1.0), 1.0)

    def convolution_defect(self):
        """max over |n| <= K-1 of |sum_j m_{n-j} p_j - delta_{n0}|."""
        pm, p0, pp = self.p
        worst = 0.0
        K = self.K
        mv = self.m_values
        for nn in range(-(K - 1), K):
            acc = mv[nn + K] * p0
            if nn - 1 >= -K:
                acc = acc + mv[nn - 1 + K] * pp
            if nn + 1 <= K:
                acc = acc + mv[nn + 1 + K] * pm
            worst = max(worst, float(np.max(np.abs(acc - (1.0 if nn == 0 else 0.0)))))
        if K == 0:
            worst = float(np.max(np.abs(mv[0] * p0 - 1.0)))
        return worst

    def decay_fit(self, kmin=1):
        """Exponential rate of sup|m_k|: slope of log sup|m_k| against k."""
        ks = np.arange(kmin, self.K + 1)
        if ks.size < 3:
            return float("nan"), float("nan")
        y = np.log(self.sup_mk[ks])
        A = np.vstack([ks, np.ones_like(ks)]).T
        (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
        pred = A @ np.array([slope, icpt])
        r2 = 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
        return float(-slope), float(r2)

    def write_decay_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "sup_mk", "hs_mk"])
            for k in range(len(self.sup_mk)):
                w.writerow([k, f"{self.sup_mk[k]:.12e}", f"{self.hs_mk[k]:.12e}"])


def build_parametrix(flow: FlowMap, n_theta: int = 256, tol: float = 1e-12,
                     hs: float = 2.0, Mfield: Field | None = None) -> Parametrix:
    """Angular coefficients of 1/p~ and their paraproduct fields.

    ``Mfield`` replaces the metric of ``flow`` (constant-coefficient checks).
    """
    g = flow.grid
    M = metric(flow) if Mfield is None else Mfield
    Mvals = np.real(sp.inverse(M))
    p = angular_profile(Mvals)
    coeffs, pmin = angular_coefficients(p, n_theta)
    if pmin <= 0:
        raise ValueError(f"ellipticity fails: min p~ = {pmin:.3e}")
    half = n_theta // 2
    sup = np.array([np.max(np.abs(coeffs[k])) for k in range(half)])
    big = np.nonzero(sup >= tol)[0]
    K = int(big.max()) if big.size else 0
    K = min(K, half - 1)
    ks = np.arange(-K, K + 1)
    mvals = coeffs[ks % n_theta]
    mfield = sp.transform(mvals, g).band_limited()
    hs_mk = np.array([sp.sobolev_norm(sp.transform(coeffs[k], g), hs) for k in range(half)])
    c = g.n // 2
    return Parametrix(g, K, mfield, M, p, mvals, sup, hs_mk, pmin, Mvals[:, :, c, c].copy(), n_theta)


def apply_Q(par: Parametrix, f: Field, check=True) -> Field:
    """Q f = sum_k T_{m_k} B^k Delta^-1 f; f may carry one leading batch axis."""
    g = par.grid
    if check:
        sp._require_zero_mean(f, "parametrix")
    w = sp.inverse_laplacian(f, check=False)
    K = par.K
    ks = list(range(-K, K + 1))
    batch = len(f.shape) == 1
    chunk = max(1, 24 // (f.shape[0] if batch else 1))
    out = None
    for s in range(0, len(ks), chunk):
        sub = ks[s:s + chunk]
        Bw = Field.stack([sp.beurling(w, k) for k in sub])
        mk = Field(g, par.m.coeffs[[k + K for k in sub]])
        term = pd.paraproduct(mk, Bw, "k,kf->f" if batch else "k,k->")
        out = term if out is None else out + term
    return out


def para_laplacian(M: Field, v: Field) -> Field:
    return sp.div(pd.paraproduct(M, sp.grad(v), "ij,j->i"))


def apply_para_laplacian(flow: FlowMap, v: Field, M: Field | None = None) -> Field:
    """Delta_para v = div(T_M grad v)."""
    sp._require_zero_mean(v, "paradifferential Laplacian")
    return para_laplacian(metric(flow) if M is None else M, v)


def residual_operator(par: Parametrix):
    """v -> Q Delta_para v - v."""
    def op(v):
        return apply_Q(par, para_laplacian(par.M, v), check=False) - v
    return op


# evolution identities -------------------------------------------------------

@dataclass
class Snapshots:
    """Simulation data at t - dt, t, t + dt."""
    dt: float
    omega0: Field
    omega: Field
    flows: tuple                 # (Phi(t-dt), Phi(t), Phi(t+dt))

    @property
    def flow(self):
        return self.flows[1]

    @property
    def t(self):
        return self.flows[1].t


def snapshots_from_run(omega0: Field, t: float, dt: float, substeps: int = 4, cfl=0.5):
    """Run the solver and keep Phi at t - dt, t, t + dt (t - dt may be negative)."""
    from . import euler
    g = omega0.grid
    sub = dt / substeps
    w0 = sp.Field(g, np.where(g.band, omega0.coeffs, 0))
    state = euler.EulerState.initial(w0, cfl)
    vals = np.zeros((2, g.n, g.n))
    start = t - dt
    if abs(start) > 0:
        big = min(0.9 * state.dt_limit(), 0.05)
        n0 = max(1, int(np.ceil(abs(start) / big - 1e-9)))
        h = start / n0
        for _ in range(n0):
            state, vals, _ = euler.coupled_step(state, h, vals, check_cfl=False)
    state = euler.EulerState(start, state.omega, cfl)
    flows = [FlowMap(sp.transform(vals, g), start)]
    omega_mid = None
    for i in range(2):
        for _ in range(substeps):
            state, vals, _ = euler.coupled_step(state, sub, vals, check_cfl=False)
        state = euler.EulerState(start + (i + 1) * dt, state.omega, cfl)
        flows.append(FlowMap(sp.transform(vals, g), state.t))
        if i == 0:
            omega_mid = state.omega
    return Snapshots(dt, w0, omega_mid, tuple(flows))


def _rel(num: Field, den: Field):
    d = sp.l2_norm(den)
    n = sp.l2_norm(num)
    return n / d if d > 0 else n


@dataclass
class DXDtResult:
    dXdt: Field
    rhs: Field
    residual: float
    relative: float


def dxdt_residual(snap: Snapshots) -> DXDtResult:
    """d_t X = perp-grad(Phi^* psi) - R_B((D Phi)^-1, u o Phi)."""
    if len(snap.flows) != 3:
        raise ValueError("need snapshots at t - dt, t, t + dt")
    Xm = compute_X(snap.flows[0]).X
    Xp = compute_X(snap.flows[2]).X
    dX = (Xp - Xm) / (2 * snap.dt)
    flow = snap.flow
    psi = sp.inverse_laplacian(snap.omega, check=False)
    u = sp.biot_savart(snap.omega)
    pull = pd.paracompose(flow, psi)
    uc = pd.compose(u, flow)
    rhs = sp.perp_grad(pull) - pd.bony_remainder(flow.inverse_jacobian, uc, "ij,j->i")
    diff = dX - rhs
    return DXDtResult(dX, rhs, sp.l2_norm(diff), _rel(diff, dX))


@dataclass
class XEvolutionResult:
    lhs: Field
    rhs: Field
    defect: float
    pieces: dict
    pullback_defect: float
    dxdt: DXDtResult
    s2_norm: float
    parametrix: Parametrix


def pullback_remainder(omega0: Field, flow: FlowMap) -> Field:
    """sum_ij (T_{d_i w0} T_{A_ij} - T_{d_i w0 A_ij}) Phi~^j, A = (D Phi)^-1."""
    gw = sp.grad(omega0)
    A = flow.inverse_jacobian
    d = flow.displacement
    inner = pd.paraproduct(A, d, "ij,j->i")
    first = pd.paraproduct(gw, inner, "i,i->")
    prod = sp.product(gw, A, "i,ij->j")
    second = pd.paraproduct(prod, d, "j,j->")
    return first - second


def x_evolution_residual(snap: Snapshots, par: Parametrix | None = None) -> XEvolutionResult:
    """All terms of d_t X + perp-grad Q T_{grad w0}.X = perp-grad Q w0 - R."""
    flow = snap.flow
    dxdt = dxdt_residual(snap)
    par = build_parametrix(flow) if par is None else par
    w0 = snap.omega0
    X = compute_X(flow).X
    psi = sp.inverse_laplacian(snap.omega, check=False)
    u = sp.biot_savart(snap.omega)
    pull_psi = pd.paracompose(flow, psi)
    pull_omega = pd.paracompose(flow, snap.omega)
    TX = pd.paraproduct(sp.grad(w0), X, "j,j->")
    Rn = pullback_remainder(w0, flow)
    Lpull = para_laplacian(par.M, pull_psi)
    R_delta = pull_omega - Lpull
    # zero modes of the Q arguments are dropped: Q acts on zero-mean fields
    def zm(f):
        c = f.coeffs.copy()
        c[..., 0, 0] = 0
        return Field(f.grid, c)
    batch = Field.stack([zm(TX), zm(w0), zm(R_delta), zm(Rn), zm(Lpull)])
    Qb = apply_Q(par, batch, check=False)
    QTX, Qw0, QRd, QRn, QL = (Qb[i] for i in range(5))
    S_pull = QL - zm(pull_psi)
    RB = pd.bony_remainder(flow.inverse_jacobian, pd.compose(u, flow), "ij,j->i")
    pieces = {
        "smoothing": sp.perp_grad(S_pull),
        "laplace_defect": sp.perp_grad(QRd),
        "bony": RB,
        "algebraic": -sp.perp_grad(QRn),
    }
    R = pieces["smoothing"] + pieces["laplace_defect"] + pieces["bony"] + pieces["algebraic"]
    lhs = dxdt.dXdt + sp.perp_grad(QTX)
    rhs = sp.perp_grad(Qw0) - R
    pull_def = pull_omega - (w0 - TX + Rn)
    pull_rel = _rel(zm(pull_def), pull_omega)
    S2 = apply_Q(par, para_laplacian(par.M, zm(S_pull)), check=False) - zm(S_pull)
    return XEvolutionResult(lhs, rhs, _rel(lhs - rhs, lhs),
                        {k: sp.l2_norm(v) for k, v in pieces.items()},
                        pull_rel, dxdt, sp.l2_norm(S2), par)


# probe functional -------------------------------------------------------------

@dataclass
class ProbeSeries:
    times: list
    y: list
    driving: list
    transport: list
    eps: float
    alpha: float

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "y", "driving_term", "transport_term", "eps", "alpha"])
            for row in zip(self.times, self.y, self.driving, self.transport):
                w.writerow([f"{x:.12e}" for x in row] + [f"{self.eps:.12e}", f"{self.alpha:.12e}"])


def driving_term(par: Parametrix, omega0: Field, V: Field, eps: float) -> float:
    """<Delta Q omega0, P_eps V>."""
    DQ = sp.laplacian(apply_Q(par, omega0))
    return float(np.real(sp.inner(DQ, sp.high_pass(V, eps))))


def transport_term(par: Parametrix, omega0: Field, X: Field, V: Field, eps: float) -> float:
    """<T_{grad omega0} . perp-grad Delta Q Delta^-1 curl X, P_eps V>."""
    c = sp.curl(X)
    if not np.any(c.coeffs):
        return 0.0
    sigma = sp.laplacian(apply_Q(par, sp.inverse_laplacian(c, check=False), check=False))
    T = pd.paraproduct(sp.grad(omega0), sp.perp_grad(sigma), "j,j->")
    return float(np.real(sp.inner(T, sp.high_pass(V, eps))))


def probe_series(flows, omega0: Field, V: Field, eps: float, alpha: float,
                 frozen_parametrix: Parametrix | None = None) -> ProbeSeries:
    """y(t) = <curl X(t), P_eps V> along stored maps."""
    PV = sp.high_pass(V, eps)
    times, ys, drv, trn = [], [], [], []
    for fl in flows:
        sh = compute_X(fl)
        par = frozen_parametrix if frozen_parametrix is not None else build_parametrix(fl)
        times.append(fl.t)
        ys.append(float(np.real(sp.inner(sp.curl(sh.X), PV))))
        drv.append(driving_term(par, omega0, V, eps))
        trn.append(transport_term(par, omega0, sh.X, V, eps))
    return ProbeSeries(times, ys, drv, trn, eps, alpha)


def identity_flow_driving_oracle(omega0: Field, V: Field, eps: float) -> float:
    """Direct Fourier sum of |xi|^2 (1 - S_2)(xi) Delta^-1 ... for Phi = Id.

    With Q = T_1 Delta^-1 the driving term is sum (1 - S_2) w0_hat conj(PV_hat).
    """
    g = omega0.grid
    w = np.where(g.xi_abs > 0, 1.0, 0.0) * (1.0 - sp.partial_symbol(g, 2))
    pv = V.coeffs * (1.0 - sp.theta(eps * g.xi_abs))
    band = g.band
    return float(np.real(g.length ** 2 * np.sum((omega0.coeffs * w * np.conj(pv))[band])))
