"""Heavy-tail data, Hoelder cusps and their Fourier tails.

A heavy-tail datum g has weighted real Fourier parts bounded below by
c / (|n| ln(1+|n|)) for |n| >= N0, a unique non-degenerate minimum at the
origin and zero mean. Near the minimum (g - m)^alpha looks like the cusp
H = chi q^alpha with q = x.D^2g(0)x / 2, whose coefficients behave like

    H_hat(n) = C_alpha / sqrt(l1 l2) * (n1^2/l1 + n2^2/l2)^-(1+alpha),
    C_alpha = 4^alpha Gamma(1+alpha) / (pi Gamma(-alpha))

in the eigenbasis of q = l1 y1^2 + l2 y2^2 (C_alpha < 0 for 0 < alpha < 1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from . import spectral as sp
from . import trig
from .paradiff import loglog_fit, paraproduct
from .spectral import Field, Grid


# slowly decaying sequence ------------------------------------------------------

def _radius(grid):
    k1, k2 = grid.K
    return np.sqrt(k1 ** 2 + k2 ** 2)


def log_floor(grid):
    """1/(|n| ln(1+|n|)) on the band, 0 at n = 0 and outside."""
    r = _radius(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, 1.0 / (r * np.log1p(r)), 0.0)
    return out * grid.band


def slow_sequence(f: Field, s: float):
    """l_n = a_n / R_|n|^(1/4) + 1/(|n| ln(1+|n|)), a_n = (1+|n|^2)^(s/2)|f_hat(n)|.

    R_N = sum_{|j| >= N} a_j^2 over the band. Returns an (n, n) array in FFT
    order, zero at n = 0 and outside the band.
    """
    g = f.grid
    w = (1.0 + g.xi_abs ** 2) ** (s / 2)
    a = w * np.abs(f.coeffs) * g.band
    a[0, 0] = 0.0
    r = _radius(g)
    flat_r = r.ravel()
    order = np.argsort(-flat_r, kind="stable")
    a2 = (a.ravel() ** 2)[order]
    csum = np.cumsum(a2)
    # tail sum over |j| >= |n|: include every entry with the same radius
    rs = flat_r[order]
    last = np.searchsorted(-rs, -rs, side="right") - 1
    R = np.empty_like(flat_r)
    R[order] = csum[last]
    R = R.reshape(r.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(a > 0, a / np.where(R > 0, R, 1.0) ** 0.25, 0.0)
    return (first + log_floor(g)) * g.band, R


def tail_field(grid: Grid, l, s: float) -> Field:
    """l_f with coefficients l_n (1+|n|^2)^(-s/2)."""
    c = l * (1.0 + grid.xi_abs ** 2) ** (-s / 2)
    c = np.where(grid.band, c, 0.0).astype(complex)
    c[0, 0] = 0.0
    return Field(grid, c)


def weighted_tail_ratio(g: Field, s: float):
    """(1+|n|^2)^(s/2) Re g_hat(n) * |n| ln(1+|n|) on the band (nan elsewhere)."""
    gr = g.grid
    r = _radius(gr)
    w = (1.0 + gr.xi_abs ** 2) ** (s / 2)
    with np.errstate(invalid="ignore"):
        out = w * np.real(g.coeffs) * r * np.log1p(r)
    return np.where(gr.band & (r > 0), out, np.nan)


def tail_onset(g: Field, s: float, c: float, rmax=None):
    """Smallest N0 with the weighted bound >= c for every band mode N0 <= |n| <= rmax."""
    gr = g.grid
    r = _radius(gr)
    rmax = gr.cutoff if rmax is None else rmax
    ratio = weighted_tail_ratio(g, s)
    sel = gr.band & (r > 0) & (r <= rmax)
    bad = sel & ~(ratio >= c)
    if not np.any(bad):
        return 1
    return int(np.floor(r[bad].max())) + 1


# minima and Hessians -------------------------------------------------------

def origin_index(grid):
    return grid.n // 2


def hessian_at(f: Field, x):
    """Spectral Hessian of f at the point x (2,)."""
    H = sp.jacobian(sp.grad(f))
    v = trig.evaluate(H, np.array([x[0]]), np.array([x[1]]), real=True)
    return v[..., 0]


def refine_minimum(f: Field, iters=30):
    """Grid argmin followed by Newton steps on the spectral gradient."""
    vals = np.real(sp.inverse(f))
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    x = np.array([f.grid.x[i], f.grid.x[j]])
    G = sp.grad(f)
    H = sp.jacobian(G)
    for _ in range(iters):
        gv = trig.evaluate(G, x[:1], x[1:], real=True)[:, 0]
        Hv = trig.evaluate(H, x[:1], x[1:], real=True)[..., 0]
        try:
            dx = np.linalg.solve(Hv, gv)
        except np.linalg.LinAlgError:
            break
        if np.linalg.norm(dx) > f.grid.h:
            break
        x = x - dx
        if np.linalg.norm(dx) < 1e-14:
            break
    return x


def translate(f: Field, x0) -> Field:
    """f(. + x0) exactly in Fourier space."""
    g = f.grid
    k1, k2 = g.K
    return Field(g, f.coeffs * np.exp(1j * (k1 * x0[0] + k2 * x0[1]) * g.scale))


def unique_grid_minimum(f: Field, where=None, rtol=1e-12):
    """True when the grid argmin sits at node ``where`` and no other node ties it."""
    vals = np.real(sp.inverse(f))
    g = f.grid
    c = origin_index(g)
    where = (c, c) if where is None else where
    flat = np.sort(vals.ravel())
    ok_loc = np.unravel_index(np.argmin(vals), vals.shape) == tuple(where)
    gap = flat[1] - flat[0]
    return bool(ok_loc and gap > rtol * max(1.0, np.abs(flat).max())), float(gap)


def periodic_bump(grid, sigma=1.0) -> Field:
    """exp((cos x1 + cos x2 - 2)/sigma^2): smooth, max 1 at 0, positive coefficients."""
    return sp.from_function(grid, lambda x1, x2: np.exp((np.cos(x1) + np.cos(x2) - 2) / sigma ** 2))


@dataclass
class HeavyTailDatum:
    g: Field
    s: float
    c: float
    N0: int
    x_min: np.ndarray
    hessian: np.ndarray
    eigenvalues: np.ndarray
    eta: float
    eps: float
    distance: float
    shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    checks: dict = field(default_factory=dict)

    @property
    def minimum(self):
        return float(np.real(sp.inverse(self.g))[origin_index(self.g.grid), origin_index(self.g.grid)])


class HeavyTailError(RuntimeError):
    pass


def verify_heavy_tail(g: Field, s: float, c: float, N0_max=None):
    """Check the four defining properties on the grid; returns a dict."""
    gr = g.grid
    N0 = tail_onset(g, s, c)
    N0_max = gr.cutoff // 2 if N0_max is None else N0_max
    uniq, gap = unique_grid_minimum(g)
    H = hessian_at(g, np.zeros(2))
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    grad0 = trig.evaluate(sp.grad(g), np.zeros(1), np.zeros(1), real=True)[:, 0]
    return {
        "tail": N0 <= N0_max, "N0": N0,
        "unique_min": uniq, "gap": gap,
        "hessian_pd": bool(ev.min() > 0), "eigenvalues": ev,
        "critical": float(np.abs(grad0).max()),
        "zero_mean": abs(g.coeffs[0, 0]) < 1e-14,
    }


def make_heavy_tail(f: Field, r: float, s: float, eta=None, eps=None,
                    sigma: float = 1.0, tries: int = 16) -> HeavyTailDatum:
    """Perturb f inside the H^s ball of radius r into a heavy-tail datum.

    f is first translated so that its minimum sits at the origin; the added
    tail is even, so the origin stays critical. eta and eps start at r/100;
    both are halved when the tail bound or the ball condition fails; eps is
    raised by half while the Hessian stays below eps/2 and eta while the
    minimum ties.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    gr = f.grid
    if abs(f.coeffs[0, 0]) > 1e-12:
        raise ValueError("f must have zero mean")
    f = f.band_limited().real_part()
    shift = np.zeros(2) if not np.any(f.coeffs) else refine_minimum(f)
    ft = translate(f, shift)
    l, _ = slow_sequence(ft, s)
    lf = tail_field(gr, l, s)
    nl = sp.sobolev_norm(lf, s)
    c = r / (2 * nl)
    g0 = ft + lf * c
    psi = periodic_bump(gr, sigma)
    psi_c = psi - float(np.real(psi.coeffs[0, 0]))
    cosf = sp.from_function(gr, lambda x1, x2: np.cos(x1) + np.cos(x2))
    eta = r / 100 if eta is None else eta
    eps = r / 100 if eps is None else eps
    last = None
    for _ in range(tries):
        g = (g0 - psi_c * eta - cosf * eps).band_limited().real_part()
        g.coeffs[0, 0] = 0.0
        chk = verify_heavy_tail(g, s, 0.5 * c)
        dist = sp.sobolev_norm(g - ft, s)
        chk["ball"] = dist < r
        chk["hessian_pd"] = chk["hessian_pd"] and chk["eigenvalues"].min() >= eps / 2
        last = chk
        landscape = chk["unique_min"] and chk["hessian_pd"]
        spectral_ok = chk["tail"] and chk["ball"]
        if landscape and spectral_ok:
            H = hessian_at(g, np.zeros(2))
            return HeavyTailDatum(g, s, 0.5 * c, chk["N0"], np.zeros(2), H, chk["eigenvalues"],
                                  eta, eps, dist, shift, chk)
        if not spectral_ok:
            if not landscape:
                break
            eta, eps = eta / 2, eps / 2
        elif not chk["hessian_pd"]:
            eps = 1.5 * eps
        else:
            eta = 1.5 * eta
    raise HeavyTailError(f"heavy-tail verification failed: {last}")


# cusp profiles ---------------------------------------------------------------

def check_alpha(alpha: float, s: float | None = None):
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if abs(2 * alpha - round(2 * alpha)) < 1e-12:
        raise ValueError(f"2 alpha = {2 * alpha:g} is an integer; the cusp expansion needs 2 alpha not in N")
    if s is not None and not 2 * alpha < s - 4:
        raise ValueError(f"need 2 alpha < s - 4 (alpha = {alpha:g}, s = {s:g})")


def cusp_constant(alpha: float) -> float:
    """C_alpha with H_hat = C_alpha |n|^(-2-2 alpha) for chi |x|^(2 alpha)."""
    return float(4 ** alpha * gamma(1 + alpha) / (np.pi * gamma(-alpha)))


@dataclass
class CuspProfile:
    """H = chi q^alpha, q = sum_j l_j (R^T sigma(x))_j^2.

    By default q is the periodic analytic form
    4 Q11 sin^2(x1/2) + 4 Q22 sin^2(x2/2) + 2 Q12 sin x1 sin x2, which agrees
    with x.Qx to fourth order and vanishes only at the origin, so chi = 1 and
    the tail of H carries no cut-off contribution. ``rho_chi`` switches to the
    compact cut-off chi = theta(|x| / rho_chi) with the Euclidean form.
    """
    alpha: float
    lambdas: tuple = (1.0, 1.0)
    rho_chi: float | None = None
    rotation: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        check_alpha(self.alpha)
        if self.rho_chi is not None and not 0 < self.rho_chi < np.pi:
            raise ValueError("cut-off must sit inside the fundamental cell")
        if min(self.lambdas) <= 0:
            raise ValueError("quadratic form must be positive definite")

    def form(self):
        R = self.rotation
        return R @ np.diag(self.lambdas) @ R.T

    def q(self, x1, x2):
        Q = self.form()
        if self.rho_chi is None:
            # 4 sin^2(x/2) and sin x1 sin x2 keep q periodic and positive off 0
            return (4 * Q[0, 0] * np.sin(x1 / 2) ** 2 + 4 * Q[1, 1] * np.sin(x2 / 2) ** 2
                    + 2 * Q[0, 1] * np.sin(x1) * np.sin(x2))
        return Q[0, 0] * x1 ** 2 + Q[1, 1] * x2 ** 2 + 2 * Q[0, 1] * x1 * x2

    def chi(self, x1, x2):
        if self.rho_chi is None:
            return np.ones(np.broadcast(x1, x2).shape)
        return sp.theta(np.hypot(x1, x2) / self.rho_chi)

    def values(self, x1, x2):
        return self.chi(x1, x2) * self.q(x1, x2) ** self.alpha

    def model(self, k1, k2):
        """Leading term of H_hat(n) in the original frame."""
        R = self.rotation
        m1 = R[0, 0] * k1 + R[1, 0] * k2
        m2 = R[0, 1] * k1 + R[1, 1] * k2
        l1, l2 = self.lambdas
        with np.errstate(divide="ignore"):
            base = (m1 ** 2 / l1 + m2 ** 2 / l2) ** (-(1 + self.alpha))
        return cusp_constant(self.alpha) / np.sqrt(l1 * l2) * base


def _sample_truncate(fn, grid: Grid, up: int = 1) -> Field:
    """Transform samples of fn on an up-times finer grid and keep the coarse spectrum."""
    if up == 1:
        return sp.from_function(grid, fn)
    fine = Grid(grid.n * up, grid.dealias_fraction, grid.length)
    F = sp.from_function(fine, fn)
    n, N = grid.n, fine.n
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    c = F.coeffs[np.ix_(k % N, k % N)]
    return Field(grid, c)


def cusp_field(profile: CuspProfile, grid: Grid, up: int = 1) -> Field:
    return _sample_truncate(profile.values, grid, up).real_part()


def shell_average(f: Field, kmin, kmax, axis=None):
    """Mean |f_hat| on integer shells |n| in [kmin, kmax]; along one axis if given."""
    g = f.grid
    ks = np.arange(kmin, kmax + 1)
    if axis is not None:
        e = np.zeros(2, int)
        e[axis] = 1
        vals = np.abs(f.coeffs[(ks * e[0]) % g.n, (ks * e[1]) % g.n])
        return ks, vals
    r = np.rint(_radius(g)).astype(int)
    a = np.abs(f.coeffs)
    sums = np.bincount(r.ravel(), weights=a.ravel())
    cnt = np.bincount(r.ravel())
    return ks, sums[ks] / np.maximum(cnt[ks], 1)


def default_window(grid: Grid):
    return 16, grid.n // 8


@dataclass
class TailFit:
    slope: float
    r2: float
    window: tuple
    extra: dict = field(default_factory=dict)


def tail_slope(f: Field, window=None, axis=None) -> TailFit:
    window = default_window(f.grid) if window is None else window
    ks, vals = shell_average(f, window[0], window[1], axis)
    keep = vals > 0
    slope, _, r2 = loglog_fit(ks[keep], vals[keep])
    return TailFit(slope, r2, tuple(window))


def cusp_tail_fit(profile: CuspProfile, grid: Grid, window=None, up: int = 2) -> TailFit:
    """Axis log-log slope of |H_hat|, plus the flatness of H_hat / model."""
    H = cusp_field(profile, grid, up)
    window = default_window(grid) if window is None else window
    f1 = tail_slope(H, window, axis=0)
    f2 = tail_slope(H, window, axis=1)
    ks = np.arange(window[0], window[1] + 1)
    g = grid
    h1 = np.real(H.coeffs[ks % g.n, 0])
    h2 = np.real(H.coeffs[0, ks % g.n])
    ratio = h1 / h2
    target = float(np.real(profile.model(1.0, 0.0) / profile.model(0.0, 1.0)))
    k1, k2 = g.K
    r = _radius(g)
    sel = (r >= window[0]) & (r <= window[1])
    norm = np.real(H.coeffs[sel]) / np.real(profile.model(k1[sel] * 1.0, k2[sel] * 1.0))
    slope = 0.5 * (f1.slope + f2.slope)
    return TailFit(slope, min(f1.r2, f2.r2), tuple(window), {
        "slope_e1": f1.slope, "slope_e2": f2.slope,
        "anisotropy": float(np.median(ratio)), "anisotropy_model": target,
        "normalized_mean": float(np.mean(norm)), "normalized_spread": float(np.std(norm)),
    })


# decomposition ----------------------------------------------------------------

def cusp_power(datum: HeavyTailDatum, alpha: float, grid_up: int = 1) -> Field:
    """(g - m)^alpha, sampled on a finer grid and truncated."""
    g = datum.g
    gr = g.grid
    m = datum.minimum
    if grid_up == 1:
        vals = np.maximum(np.real(sp.inverse(g)) - m, 0.0)
        return sp.transform(vals ** alpha, gr).real_part()
    fine = Grid(gr.n * grid_up, gr.dealias_fraction, gr.length)
    N = fine.n
    c = np.zeros((N, N), complex)
    k = np.fft.fftfreq(gr.n, 1.0 / gr.n).astype(int)
    c[np.ix_(k % N, k % N)] = np.where(gr.band, g.coeffs, 0)
    vals = np.real(sp.inverse(Field(fine, c)))
    vals = np.maximum(vals - m, 0.0) ** alpha
    F = sp.transform(vals, fine)
    return Field(gr, F.coeffs[np.ix_(k % N, k % N)]).real_part()


def profile_from_datum(datum: HeavyTailDatum, alpha: float, rho_chi=None) -> CuspProfile:
    """q = x.D^2g(0)x / 2 in its eigenbasis."""
    H = 0.5 * (datum.hessian + datum.hessian.T)
    ev, vec = np.linalg.eigh(H)
    if ev.min() <= 0:
        raise ValueError("degenerate Hessian at the minimum")
    return CuspProfile(alpha, (0.5 * ev[0], 0.5 * ev[1]), rho_chi, vec)


@dataclass
class CuspDecomposition:
    V: Field
    H: Field
    R: Field
    profile: CuspProfile
    fit_H: TailFit
    fit_R: TailFit

    @property
    def slope_gap(self):
        return self.fit_H.slope - self.fit_R.slope


def cusp_decompose(datum: HeavyTailDatum, alpha: float, rho_chi=None, up: int = 2,
                   window=None, check_guard=True) -> CuspDecomposition:
    if check_guard:
        check_alpha(alpha, datum.s)
    else:
        check_alpha(alpha)
    prof = profile_from_datum(datum, alpha, rho_chi)
    gr = datum.g.grid
    V = cusp_power(datum, alpha, up)
    H = cusp_field(prof, gr, up)
    R = V - H
    return CuspDecomposition(V, H, R, prof, tail_slope(H, window), tail_slope(R, window))


def sobolev_membership(f: Field, window=None):
    """t such that shell energy ~ |n|^(-2t-1): the H^t borderline exponent."""
    g = f.grid
    window = default_window(g) if window is None else window
    r = np.rint(_radius(g)).astype(int)
    e = np.bincount(r.ravel(), weights=(np.abs(f.coeffs) ** 2).ravel())
    ks = np.arange(window[0], window[1] + 1)
    slope, _, r2 = loglog_fit(ks, e[ks])
    return (-slope - 1) / 2, r2


def holder_blocks(f: Field, alpha: float):
    """2^(2 alpha j) ||Delta_j f||_inf for j = 0..J."""
    out = []
    for j in range(f.grid.J + 1):
        v = np.abs(sp.inverse(sp.dyadic_block(f, j)))
        out.append(2 ** (2 * alpha * j) * float(v.max()))
    return np.array(out)


# symbol freezing ------------------------------------------------------------

def symbol_freezing_residual(par, H: Field, window=None):
    """Tail slopes of (Delta Q) H - a(0, D) H and of H."""
    from .shnirelman import apply_Q
    Hz = H - float(np.real(H.coeffs[0, 0]))
    DQ = sp.laplacian(apply_Q(par, Hz))
    a0 = sp.fourier_multiplier(Hz, par.frozen_symbol())
    Rf = DQ - a0
    fitH = tail_slope(Hz, window)
    ks, vals = shell_average(Rf, *(fitH.window))
    keep = vals > 0
    if keep.sum() >= 4:
        slope, _, r2 = loglog_fit(ks[keep], vals[keep])
    else:
        slope, r2 = -np.inf, 1.0
    return {"residual": Rf, "slope_H": fitH.slope, "slope_R": float(slope), "r2": float(r2),
            "gap": float(fitH.slope - slope), "tail_max": float(vals.max()) if vals.size else 0.0}


# tail sweep ---------------------------------------------------------------------

@dataclass
class SweepTerm:
    name: str
    eps: list
    pairing: list
    exponent: float
    r2: float

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "pairing", "fitted_exponent_window", "r2"])
            for e, p in zip(self.eps, self.pairing):
                w.writerow([f"{e:.12e}", f"{p:.12e}", f"{self.exponent:.12e}", f"{self.r2:.12e}"])


@dataclass
class SweepReport:
    s: float
    alpha: float
    alpha_prime: float
    beta: float
    terms: dict
    oracle_error: float
    checks: dict

    @property
    def passed(self):
        return all(self.checks.values())


def fit_exponent(eps, values):
    v = np.abs(np.asarray(values, float))
    slope, _, r2 = loglog_fit(eps, v)
    return slope, r2


def driving_oracle(g: Field, V: Field, eps: float) -> float:
    """sum over the band of (1 - S_2)(n) g_hat conj((1 - theta(eps n)) V_hat), scaled."""
    gr = g.grid
    w = np.where(gr.xi_abs > 0, 1.0, 0.0) * (1.0 - sp.partial_symbol(gr, 2))
    pv = V.coeffs * (1.0 - sp.theta(eps * gr.xi_abs))
    return float(np.real(gr.length ** 2 * np.sum((g.coeffs * w * np.conj(pv))[gr.band])))


def tail_bounds_sweep(datum: HeavyTailDatum, alpha: float, eps_list, alpha_prime: float,
                      beta: float, par=None, V: Field | None = None, up: int = 2,
                      sigma: Field | None = None) -> SweepReport:
    """Pairings <f, P_eps (g - m)^alpha> for f = g, Delta Q g and T_{perp-grad g}.grad sigma."""
    if not alpha_prime < alpha < beta:
        raise ValueError("need alpha' < alpha < beta")
    check_alpha(alpha, datum.s)
    from .shnirelman import apply_Q
    g = datum.g
    s = datum.s
    V = cusp_power(datum, alpha, up) if V is None else V
    if par is None:
        DQg = g - sp.partial_sum(g, 2)
    else:
        DQg = sp.laplacian(apply_Q(par, g))
    sig = sp.inverse_laplacian(g) if sigma is None else sigma
    trans = paraproduct(sp.perp_grad(g), sp.grad(sig), "j,j->")
    eps_list = [float(e) for e in eps_list]
    fields = {"g": g, "driving": DQg, "transport": trans}
    terms = {}
    for name, f in fields.items():
        vals = [float(np.real(sp.inner(f, sp.high_pass(V, e)))) for e in eps_list]
        ex, r2 = fit_exponent(eps_list, vals)
        terms[name] = SweepTerm(name, eps_list, vals, ex, r2)
    oracle = 0.0
    if par is None:
        for e, v in zip(eps_list, terms["driving"].pairing):
            o = driving_oracle(g, V, e)
            oracle = max(oracle, abs(o - v) / max(abs(o), 1e-300))
    d = terms["driving"].exponent
    checks = {
        "upper": d >= s + 1 + 2 * alpha_prime - 0.3,
        "lower": d <= s + 1 + 2 * beta + 0.3,
        "bracket": (s + 1 + 2 * alpha - 0.3) <= d <= (s + 1 + 2 * alpha_prime + 0.3),
        "cancellation": terms["transport"].exponent >= d + 0.5,
    }
    return SweepReport(s, alpha, alpha_prime, beta, terms, oracle, checks)
