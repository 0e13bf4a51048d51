"""Localized perturbations: the linear cusp packet zeta and the Koch packet eta.

zeta(y) = delta rho^(s-2) theta((y - y0)/rho) v.(y - y0) has coefficients

    zeta_hat(k) = i delta rho^(s+1) (2 pi)^-2 e^{-ik.y0} (v.k) Psi'(rho|k|) / |k|

where Psi(|xi|) is the Fourier transform of the radial cut-off theta. The
Koch packet eta(x) = (r/5) delta^(s-1) theta((x - x0)/delta) sin(mu (x - x0).e / delta)
has H^nu norm of order delta^(s - nu).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from . import spectral as sp
from .flows import operator_norms
from .paradiff import loglog_fit
from .spectral import Field, Grid


# radial transform of the cut-off --------------------------------------------------

def _theta1(t):
    return float(sp.theta(np.array(t)))


@lru_cache(maxsize=None)
def _psi_prime_scalar(r: float) -> float:
    if r == 0.0:
        return 0.0
    # theta = 1 on [0, 1/2]: int_0^a t^2 J1(rt) dt = a^2 J2(ra)/r
    inner = 0.25 * special.jv(2, 0.5 * r) / r
    val, _ = integrate.quad(lambda t: _theta1(t) * special.jv(1, r * t) * t * t,
                            0.5, 1.0, epsabs=1e-15, epsrel=1e-13, limit=400)
    return -2 * np.pi * (inner + val)


@lru_cache(maxsize=None)
def _psi_scalar(r: float) -> float:
    inner = 0.5 * special.jv(1, 0.5 * r) / r if r > 0 else 0.125
    val, _ = integrate.quad(lambda t: _theta1(t) * special.jv(0, r * t) * t,
                            0.5, 1.0, epsabs=1e-15, epsrel=1e-13, limit=400)
    return 2 * np.pi * (inner + val)


def _vectorize(fn, r):
    r = np.asarray(r, float)
    flat = np.round(r.ravel(), 14)
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.array([fn(float(x)) for x in uniq])
    return vals[inv].reshape(r.shape)


def psi(r):
    """Psi(|xi|) = integral of theta(z) e^{-i xi.z} dz."""
    return _vectorize(_psi_scalar, r)


def psi_prime(r):
    return _vectorize(_psi_prime_scalar, r)


def psi_prime_zeros(rmax: float, step: float = 0.05):
    """Zeros of Psi' on (0, rmax] by bracketing and Brent's method."""
    xs = np.arange(step, rmax + step, step)
    vals = psi_prime(xs)
    out = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if fa == 0:
            out.append(a)
        elif fa * fb < 0:
            out.append(optimize.brentq(_psi_prime_scalar, a, b, xtol=1e-14))
    return np.array(out)


# zeta --------------------------------------------------------------------------

def _wrap(d, length=2 * np.pi):
    return (d + 0.5 * length) % length - 0.5 * length


def _unit(v):
    v = np.asarray(v, float)
    n = np.linalg.norm(v)
    if not np.isclose(n, 1.0, atol=1e-12):
        raise ValueError("direction must be a unit vector")
    return v


@dataclass
class ZetaPacket:
    y0: tuple
    v: tuple
    rho: float
    delta: float = 1.0
    s: float = 3.0

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("scale rho must lie in (0, 1)")
        self.v = tuple(_unit(self.v))

    def values(self, x1, x2):
        d1 = _wrap(x1 - self.y0[0])
        d2 = _wrap(x2 - self.y0[1])
        prof = sp.theta(np.hypot(d1, d2) / self.rho)
        return self.delta * self.rho ** (self.s - 2) * prof * (self.v[0] * d1 + self.v[1] * d2)


def _sample_fine(fn, grid: Grid, up: int) -> Field:
    if up == 1:
        return sp.from_function(grid, fn)
    fine = Grid(grid.n * up, grid.dealias_fraction, grid.length)
    F = sp.from_function(fine, fn)
    k = np.fft.fftfreq(grid.n, 1.0 / grid.n).astype(int)
    return Field(grid, F.coeffs[np.ix_(k % fine.n, k % fine.n)])


def zeta_field(packet: ZetaPacket, grid: Grid, up: int = 4) -> Field:
    return _sample_fine(packet.values, grid, up).real_part()


def zeta_fourier_closed_form(packet: ZetaPacket, k1, k2):
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    kk = np.hypot(k1, k2)
    vk = packet.v[0] * k1 + packet.v[1] * k2
    vk = np.where(np.abs(vk) <= 1e-13 * kk, 0.0, vk)   # v.k = 0 up to round-off
    pp = psi_prime(packet.rho * kk)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(kk > 0, vk * pp / np.where(kk > 0, kk, 1.0), 0.0)
    pref = 1j * packet.delta * packet.rho ** (packet.s + 1) / (2 * np.pi) ** 2
    return pref * np.exp(-1j * (k1 * packet.y0[0] + k2 * packet.y0[1])) * ratio


def zeta_closed_form_field(packet: ZetaPacket, grid: Grid) -> Field:
    k1, k2 = grid.K
    c = zeta_fourier_closed_form(packet, k1, k2)
    return Field(grid, np.where(grid.band, c, 0))


def zeta_agreement(packet: ZetaPacket, grid: Grid, up: int = 4, floor: float = 1e-3):
    """Max relative error between FFT and closed form on |k| <= n/3.

    Modes whose closed-form value is below ``floor`` times the largest one
    (zeros of v.k or of Psi') are compared in absolute terms against that floor.
    """
    F = zeta_field(packet, grid, up)
    k1, k2 = grid.K
    sel = np.hypot(k1, k2) <= grid.n / 3
    cf = zeta_fourier_closed_form(packet, k1[sel], k2[sel])
    fv = F.coeffs[sel]
    scale = np.maximum(np.abs(cf), floor * np.abs(cf).max())
    return float(np.max(np.abs(fv - cf) / scale))


def interaction_formula(alpha: float, packet: ZetaPacket) -> float:
    """alpha A(rho) v^1 sin(y0^1), A(rho) = 2^s (2 pi)^-2 rho^(s+1) Psi'(rho)."""
    A = 2 ** packet.s * packet.rho ** (packet.s + 1) * psi_prime(packet.rho) / (2 * np.pi) ** 2
    return float(alpha * A * packet.v[0] * np.sin(packet.y0[0]))


def interaction_J(u: Field, packet: ZetaPacket, up: int = 8) -> float:
    """<u, zeta_{1, rho}>_{H^s} by direct Parseval pairing."""
    unit = ZetaPacket(packet.y0, packet.v, packet.rho, 1.0, packet.s)
    z = zeta_field(unit, u.grid, up)
    return float(np.real(sp.sobolev_inner(u, z, packet.s)))


def bad_scale_check(packet: ZetaPacket, kmax: float, tol: float = 1e-10, ks=None):
    """Scales rho in (0, 1) where Psi'(rho |k|) = 0 for a lattice k with v.k != 0.

    Returns (bad scales sorted, whether packet.rho is flagged).
    """
    if ks is None:
        r = int(np.ceil(kmax))
        a = np.arange(-r, r + 1)
        K1, K2 = np.meshgrid(a, a, indexing="ij")
        sel = (np.hypot(K1, K2) <= kmax) & (np.hypot(K1, K2) > 0)
        ks = np.stack([K1[sel], K2[sel]], axis=1)
    ks = np.asarray(ks, float).reshape(-1, 2)
    vk = ks @ np.asarray(packet.v)
    ks = ks[np.abs(vk) > 1e-12]
    if ks.size == 0:
        return [], False
    norms = np.unique(np.round(np.hypot(ks[:, 0], ks[:, 1]), 12))
    zeros = psi_prime_zeros(float(norms.max()))
    bad = sorted({float(z / m) for m in norms for z in zeros if z / m < 1})
    flagged = bool(np.any(np.abs(psi_prime(packet.rho * norms)) < tol))
    return bad, flagged


def geometric_lower_ratio(packet: ZetaPacket, A, grid: Grid, s=None, up: int = 2):
    """||zeta o phi_lin||_{H^s} / (delta rho^(s-2) ||v.phi_lin||_{H^s(B)}) for a linear map.

    phi_lin(y) = y0 + A (y - y0); v.phi_lin is linear, so its homogeneous H^s
    seminorm on a ball vanishes for s > 1. The ratio is therefore taken against
    the H^1 seminorm of v.phi_lin on B(y0, rho / (2|A^-1|)), which is
    |A^T v| |B|^(1/2).
    """
    s = packet.s if s is None else s
    A = np.asarray(A, float)
    y0 = np.asarray(packet.y0, float)

    def comp(x1, x2):
        d1 = _wrap(x1 - y0[0])
        d2 = _wrap(x2 - y0[1])
        return packet.values(y0[0] + A[0, 0] * d1 + A[0, 1] * d2, y0[1] + A[1, 0] * d1 + A[1, 1] * d2)

    f = _sample_fine(comp, grid, up).real_part()
    rad = packet.rho / (2 * np.linalg.norm(np.linalg.inv(A), 2))
    ref = packet.delta * packet.rho ** (packet.s - 2) * np.linalg.norm(A.T @ np.asarray(packet.v)) \
        * np.sqrt(np.pi) * rad
    return sp.homogeneous_norm(f, 1.0) * grid.length / ref


# Koch packet ------------------------------------------------------------------

@dataclass
class KochPacket:
    x0: tuple
    e: tuple
    delta: float
    mu: float
    r: float = 1.0
    s: float = 2.5

    def __post_init__(self):
        self.e = tuple(_unit(self.e))
        if not 0 < self.delta < 1:
            raise ValueError("scale delta must lie in (0, 1)")

    @property
    def frequency(self):
        return self.mu / self.delta

    def values(self, x1, x2):
        d1 = _wrap(x1 - self.x0[0])
        d2 = _wrap(x2 - self.x0[1])
        prof = sp.theta(np.hypot(d1, d2) / self.delta)
        ph = self.mu * (d1 * self.e[0] + d2 * self.e[1]) / self.delta
        return self.r / 5 * self.delta ** (self.s - 1) * prof * np.sin(ph)


def check_resolvable(packet: KochPacket, grid: Grid, gain: float = 1.0):
    if packet.frequency * gain > grid.cutoff / 4:
        raise ValueError(f"packet frequency {packet.frequency * gain:.1f} exceeds a quarter of the "
                         f"dealias cutoff {grid.cutoff}")


def koch_packet(packet: KochPacket, grid: Grid, up: int = 2, check=True) -> Field:
    if check:
        check_resolvable(packet, grid)
    f = _sample_fine(packet.values, grid, up).real_part()
    f.coeffs[0, 0] = 0.0  # odd about x0: the mean is round-off
    return f


@dataclass
class ScalingFit:
    nu: float
    slope: float
    r2: float
    deltas: list
    norms: list


def koch_scaling_fit(grid: Grid, s: float, deltas, nus=(0.0, 1.0), mu=None, x0=(0.0, 0.0),
                     e=(1.0, 0.0), r=1.0, up: int = 2):
    """Slopes of log ||eta||_{H^nu} against log delta; expected s - nu."""
    mu = 2.5 if mu is None else mu
    fields = [koch_packet(KochPacket(x0, e, d, mu, r, s), grid, up) for d in deltas]
    out = []
    for nu in nus:
        norms = [sp.sobolev_norm(f, nu) * grid.length for f in fields]
        slope, _, r2 = loglog_fit(deltas, norms)
        out.append(ScalingFit(nu, slope, r2, list(deltas), norms))
    hs = [sp.sobolev_norm(f, s) * grid.length for f in fields]
    return out, hs


def sideband_fraction(packet: KochPacket, grid: Grid, up: int = 2) -> float:
    """Share of H^s energy in modes with |k.e| < |k|/2."""
    f = koch_packet(packet, grid, up, check=False)
    k1, k2 = grid.K
    kk = np.hypot(k1, k2)
    ke = np.abs(k1 * packet.e[0] + k2 * packet.e[1])
    w = (1 + grid.xi_abs ** 2) ** packet.s * np.abs(f.coeffs) ** 2 * grid.band
    return float(w[ke < 0.5 * kk].sum() / w.sum())


# stretching -------------------------------------------------------------------

@dataclass
class StretchResult:
    T: float
    x0: np.ndarray
    e: np.ndarray
    gain: float
    index: tuple
    exceeds: bool


def stretching_search(flows, s: float = 2.5, N: float = 1.0, r: float = 1.0) -> StretchResult:
    """max over snapshots, nodes and unit e of |(D Phi)^-T e|."""
    best = None
    for fl in flows:
        J = fl.jacobian_values()
        # (D Phi)^-T for det 1 is the cofactor transpose
        inv_t = np.stack([np.stack([J[1, 1], -J[1, 0]]), np.stack([-J[0, 1], J[0, 0]])])
        sig = operator_norms(inv_t)
        idx = np.unravel_index(np.argmax(sig), sig.shape)
        if best is None or sig[idx] > best[0]:
            M = inv_t[(slice(None), slice(None)) + idx]
            U, S, Vt = np.linalg.svd(M)
            best = (float(sig[idx]), fl, idx, Vt[0])
    gain, fl, idx, e = best
    x = np.array([fl.grid.x[idx[0]], fl.grid.x[idx[1]]])
    return StretchResult(fl.t, x, e, gain, idx, gain ** s > 1e3 * N / r)


# amplification -----------------------------------------------------------------

def linear_map_amplification(packet: KochPacket, A, grid: Grid, up: int = 2):
    """||eta o phi_lin||_{H^s} against |A^T e|^s ||eta||_{H^s}, phi_lin(y) = x0 + A(y - x0)."""
    A = np.asarray(A, float)
    x0 = np.asarray(packet.x0, float)

    def comp(y1, y2):
        d1 = _wrap(y1 - x0[0])
        d2 = _wrap(y2 - x0[1])
        return packet.values(x0[0] + A[0, 0] * d1 + A[0, 1] * d2, x0[1] + A[1, 0] * d1 + A[1, 1] * d2)

    gain = float(np.linalg.norm(A.T @ np.asarray(packet.e)))
    check_resolvable(packet, grid, gain)
    eta = koch_packet(packet, grid, up)
    comp_f = _sample_fine(comp, grid, up).real_part()
    s = packet.s
    measured = sp.homogeneous_norm(comp_f, s)
    predicted = gain ** s * sp.homogeneous_norm(eta, s)
    return measured, predicted, gain


@dataclass
class KochReport:
    delta: float
    mu: float
    T: float
    gain: float
    hs_eta: float
    hs_eta_pullback: float
    terms: tuple
    ratio: float
    extra: dict = field(default_factory=dict)

    def row(self):
        return [self.delta, self.mu, self.T, self.gain, self.hs_eta, self.hs_eta_pullback,
                *self.terms, self.ratio]


KOCH_COLUMNS = ["delta", "mu", "T", "gain", "hs_eta", "hs_eta_pullback",
                "term1", "term2", "term3", "term4", "ratio"]


def write_koch_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(KOCH_COLUMNS)
        for rep in reports:
            w.writerow([f"{x:.12e}" for x in rep.row()])


def koch_amplification_experiment(omega0: Field, packet: KochPacket, T: float,
                                  gain: float = float("nan"), dt=None, cfl=0.5,
                                  mollify=True) -> KochReport:
    """Run omega0^delta and omega0^delta + eta side by side and decompose omega'(T).

    terms: (1) w^d o phi^d, (2) w^d o phi' - w^d o phi^d, (3) eta o phi' - eta o phi,
    (4) eta o phi, with phi the inverse flow of omega0 itself.
    """
    from . import euler
    g = omega0.grid
    s = packet.s
    wd = sp.mollify(omega0, packet.delta) if mollify else omega0.copy()
    eta = koch_packet(packet, g)
    wp = wd + eta
    kw = dict(dt=dt, cfl=cfl, track_inverse=True)
    run_d = euler.simulate(wd, T, **kw)
    run_p = euler.simulate(wp, T, **kw)
    run_0 = euler.simulate(omega0, T, **kw)
    phi_d, phi_p, phi_0 = run_d.inverses[-1], run_p.inverses[-1], run_0.inverses[-1]
    t1 = euler.compose_with_inverse(wd, phi_d)
    t2 = euler.compose_with_inverse(wd, phi_p) - t1
    t4 = euler.compose_with_inverse(eta, phi_0)
    t3 = euler.compose_with_inverse(eta, phi_p) - t4

    def hs(f):
        return sp.sobolev_norm(f, s)

    hs_eta = hs(eta)
    diff = run_p.states[-1].omega - run_d.states[-1].omega
    ratio = hs(diff) / hs_eta if hs_eta > 0 else 0.0
    return KochReport(packet.delta, packet.mu, T, gain, hs_eta, hs(t4),
                      (hs(t1), hs(t2), hs(t3), hs(t4)), ratio,
                      {"hs_omega_d": hs(run_d.states[-1].omega),
                       "hs_omega_p": hs(run_p.states[-1].omega)})
