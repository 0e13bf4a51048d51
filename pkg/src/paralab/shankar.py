"""Whole-plane experiments on a large periodic box.

The plane is replaced by the torus [-L, L]^2 with localized, zero-mass
vorticity. Weights x and (x . grad) use the box-centred coordinate and are only
meaningful while the vorticity stays well inside |x| <= L/2; a support guard
enforces this at every saved time.

The scaling functional G(t) = int dPhi/dt . (Phi - (x.grad)Phi) dx is evaluated
after the change of variables y = Phi(x), which only needs the Eulerian
velocity and the back-to-labels map phi = y + zeta(y):

    G = int u(y) . [y - adj(D phi)(y + zeta)] dy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import euler
from . import spectral as sp
from . import trig
from .flows import operator_norms
from .paradiff import loglog_fit
from .spectral import Field, Grid


class SupportBreach(RuntimeError):
    pass


def box_grid(n: int, L: float) -> Grid:
    return Grid(n, length=2.0 * L)


def node_integral(grid: Grid, vals) -> float:
    return float(grid.cell_area * np.sum(vals))


def support_radius(omega: Field, tol: float = 1e-6) -> float:
    """Largest |y| at a node where |omega| exceeds tol * max|omega|."""
    v = np.real(sp.inverse(omega))
    big = np.max(np.abs(v))
    if big == 0:
        return 0.0
    x1, x2 = omega.grid.X
    r = np.hypot(x1, x2)
    return float(np.max(r[np.abs(v) > tol * big]))


def l2_velocity_sq(omega: Field) -> float:
    return sp.l2_norm(sp.biot_savart(omega)) ** 2


def gaussian_dipole(grid: Grid, sigma=0.5, amp=1.0, center=(0.0, 0.0), angle=0.0) -> Field:
    """amp * (e . grad) of a Gaussian; zero total mass by construction."""
    e = np.array([np.cos(angle), np.sin(angle)])

    def fn(x1, x2):
        d1, d2 = x1 - center[0], x2 - center[1]
        gau = np.exp(-(d1 * d1 + d2 * d2) / sigma ** 2)
        return -amp * 2 * (e[0] * d1 + e[1] * d2) / sigma ** 2 * gau

    f = sp.from_function(grid, fn)
    f.coeffs[0, 0] = 0.0
    return f


def gaussian_shielded_vortex(grid: Grid, sigma=0.5, amp=1.0) -> Field:
    """amp * Laplacian of exp(-r^2/sigma^2): radial, steady, zero mass."""
    def fn(x1, x2):
        r2 = (x1 * x1 + x2 * x2) / sigma ** 2
        return amp * 4 / sigma ** 2 * (r2 - 1) * np.exp(-r2)

    f = sp.from_function(grid, fn)
    f.coeffs[0, 0] = 0.0
    return f


def shielded_vortex_shear(sigma=0.5, amp=1.0, r=None):
    """max over r of r |Omega'(r)| for the vortex above.

    Stream function amp * exp(-r^2/sigma^2), so the angular velocity is
    Omega = -2 amp / sigma^2 * exp(-r^2/sigma^2).
    """
    if r is None:
        r = np.linspace(1e-4, 6 * sigma, 20001)
    dOm = 4 * amp * r / sigma ** 4 * np.exp(-r * r / sigma ** 2)
    return float(np.max(r * np.abs(dOm)))


# runs --------------------------------------------------------------------------

@dataclass
class BoxRun:
    L: float
    omega0: Field
    T: float
    times: list = field(default_factory=list)
    omegas: list = field(default_factory=list)
    inverses: list = field(default_factory=list)
    radii: list = field(default_factory=list)
    E0: float = 0.0
    support_tol: float = 1e-6

    @property
    def grid(self):
        return self.omega0.grid

    def index(self, t, tol=1e-9):
        for i, s in enumerate(self.times):
            if abs(s - t) < tol:
                return i
        raise KeyError(t)


def check_box_data(omega0: Field, L: float, tol: float = 1e-6, mass_tol: float = 1e-10):
    g = omega0.grid
    if abs(g.length - 2 * L) > 1e-12 * L:
        raise ValueError("grid length must be 2L")
    v = np.real(sp.inverse(omega0))
    l1 = node_integral(g, np.abs(v))
    if abs(node_integral(g, v)) > mass_tol * max(l1, 1e-300):
        raise ValueError("total vorticity must vanish")
    R = support_radius(omega0, tol)
    if R > L / 4:
        raise SupportBreach(f"initial support radius {R:.3f} exceeds L/4 = {L / 4:.3f}")
    return R


def safe_horizon(omega0: Field, L: float, tol: float = 1e-6) -> float:
    """First time R0 + |u0|_inf t reaches L/2."""
    R0 = support_radius(omega0, tol)
    v = euler.max_speed(omega0)
    return np.inf if v == 0 else (L / 2 - R0) / v


def run_box(omega0: Field, L: float, T: float, save_every: float = 0.1, dt=None, cfl=0.5,
            support_tol: float = 1e-6, guard=True) -> BoxRun:
    check_box_data(omega0, L, support_tol)
    k = max(1, int(round(T / save_every)))
    saves = [T * (i + 1) / k for i in range(k)]
    tr = euler.simulate(omega0, T, dt=dt, cfl=cfl, track_inverse=True, save_times=saves,
                        guard=guard)
    run = BoxRun(L, tr.states[0].omega, T, E0=l2_velocity_sq(tr.states[0].omega),
                 support_tol=support_tol)
    for t, st, iv in zip(tr.times, tr.states, tr.inverses):
        R = support_radius(st.omega, support_tol)
        if R > L / 2:
            raise SupportBreach(f"support radius {R:.3f} passed L/2 at t = {t:.3f}")
        run.times.append(t)
        run.omegas.append(st.omega)
        run.inverses.append(iv)
        run.radii.append(R)
    return run


def _label_terms(grid: Grid, inv):
    """y + zeta and adj(D phi) at the nodes."""
    x1, x2 = grid.X
    z = inv.displacement_values()
    p = np.stack([x1 + z[0], x2 + z[1]])
    A = inv.jacobian_values()
    adj = np.stack([np.stack([A[1, 1], -A[0, 1]]), np.stack([-A[1, 0], A[0, 0]])])
    return np.stack([x1, x2]), p, adj


def shankar_G(run: BoxRun, t: float) -> float:
    i = run.index(t)
    g = run.grid
    y, p, adj = _label_terms(g, run.inverses[i])
    u = np.real(sp.inverse(sp.biot_savart(run.omegas[i])))
    Y = y - np.einsum("ij...,j...->i...", adj, p)
    return node_integral(g, np.sum(u * Y, axis=0))


def displacement_bound(run: BoxRun, t: float):
    """(int |(x.grad) xi|^2 dx, |u0|^2 t^2) with xi = Phi - Id."""
    i = run.index(t)
    g = run.grid
    y, p, adj = _label_terms(g, run.inverses[i])
    adj = adj - np.eye(2)[:, :, None, None]
    w = np.einsum("ij...,j...->i...", adj, p)
    return node_integral(g, np.sum(w * w, axis=0)), run.E0 * t * t


def lipschitz_series(run: BoxRun):
    """sup |D Phi_t| = sup |(D phi_t)^-1| over the nodes."""
    out = []
    for iv in run.inverses:
        A = iv.jacobian_values()
        adj = np.stack([np.stack([A[1, 1], -A[0, 1]]), np.stack([-A[1, 0], A[0, 0]])])
        out.append(float(np.max(operator_norms(adj))))
    return np.array(out)


def lipschitz_growth_watch(run: BoxRun):
    """(times, sup |D Phi_t|); observational only."""
    return np.array(run.times), lipschitz_series(run)


@dataclass
class ShankarReport:
    times: np.ndarray
    G: np.ndarray
    predicted: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    lip: np.ndarray
    radii: np.ndarray
    E0: float
    rate: float
    checks: dict = field(default_factory=dict)

    def max_relative_error(self, tmin=0.0):
        m = self.times > max(tmin, 0.0)
        return float(np.max(np.abs(self.G[m] - self.predicted[m]) / np.abs(self.predicted[m])))

    def write_csv(self, path):
        cols = ["t", "G", "2E0t", "lhs_bound", "rhs_bound", "lip", "support_radius"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for row in zip(self.times, self.G, self.predicted, self.lhs, self.rhs, self.lip,
                           self.radii):
                w.writerow([f"{x:.12e}" for x in row])


def shankar_report(run: BoxRun, tol: float = 0.02, margin: float = 0.95) -> ShankarReport:
    t = np.array(run.times)
    G = np.array([shankar_G(run, s) for s in t])
    pred = 2 * run.E0 * t
    lr = np.array([displacement_bound(run, s) for s in t])
    rate = float(np.polyfit(t, G, 1)[0])
    rep = ShankarReport(t, G, pred, lr[:, 0], lr[:, 1], lipschitz_series(run),
                        np.array(run.radii), run.E0, rate)
    pos = t > 0
    rep.checks = {
        "G0": abs(G[0]) == 0.0,
        "identity": bool(np.all(np.abs(G[pos] - pred[pos]) <= tol * pred[pos])),
        "rate": abs(rate - 2 * run.E0) <= tol * 2 * run.E0,
        "lower_bound": bool(np.all(lr[:, 0] >= margin * lr[:, 1])),
    }
    return rep


def box_doubling(omega_fn, n: int, L: float, T: float, save_every=0.1, **kw):
    """Relative change of G when both L and n double (same spacing)."""
    runs = []
    for m in (1, 2):
        g = box_grid(n * m, L * m)
        runs.append(run_box(omega_fn(g), L * m, T, save_every, **kw))
    G1 = np.array([shankar_G(runs[0], t) for t in runs[0].times])
    G2 = np.array([shankar_G(runs[1], t) for t in runs[1].times])
    pos = np.array(runs[0].times) > 0
    change = float(np.max(np.abs(G2[pos] - G1[pos]) / np.abs(G1[pos])))
    return change, runs


# far field ---------------------------------------------------------------------

@dataclass
class FarFieldReport:
    radii: np.ndarray
    u_mean: np.ndarray
    du_mean: np.ndarray
    slope_u: float
    slope_du: float
    r2_u: float
    r2_du: float
    mass: float
    checks: dict = field(default_factory=dict)


def circle_means(f: Field, radii, n_theta=256):
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    out = []
    for r in radii:
        v = trig.evaluate(f, r * np.cos(th), r * np.sin(th), real=True)
        v = v.reshape(-1, n_theta)
        out.append(float(np.mean(np.sqrt(np.sum(v * v, axis=0)))))
    return np.array(out)


def farfield_decay(omega: Field, radii, check=True, support_tol=1e-6, mass_tol=1e-10):
    """Circle-averaged |u| and |Du| against radius, with log-log slopes.

    ``check=False`` accepts data with nonzero mass (control experiment): the
    torus then solves with the mass spread as a uniform background.
    """
    g = omega.grid
    radii = np.asarray(radii, float)
    v = np.real(sp.inverse(omega))
    mass = node_integral(g, v)
    l1 = node_integral(g, np.abs(v))
    if check and abs(mass) > mass_tol * l1:
        raise ValueError("far-field decay needs zero total vorticity")
    R = support_radius(omega, support_tol)
    if radii.min() < 2 * R:
        raise ValueError(f"radii must be at least twice the support radius {R:.3f}")
    if radii.max() > g.length / 4:
        raise ValueError("radii must stay within L/2 of the box centre")
    w = omega.copy()
    w.coeffs[0, 0] = 0.0
    u = sp.biot_savart(w)
    du = sp.jacobian(u)
    um = circle_means(u, radii)
    dm = circle_means(du, radii)
    su, _, r2u = loglog_fit(radii, um)
    sd, _, r2d = loglog_fit(radii, dm)
    rep = FarFieldReport(radii, um, dm, su, sd, r2u, r2d, mass)
    rep.checks = {"u_slope": abs(su + 2) <= 0.2, "du_slope": abs(sd + 3) <= 0.3}
    return rep


def interpolation_constant(omega: Field, refine: int = 2) -> float:
    """|u|_inf / (|omega|_L1 |omega|_inf)^(1/2)."""
    g = omega.grid
    v = np.real(sp.inverse(omega))
    l1 = node_integral(g, np.abs(v))
    uv = np.real(sp._padded_values(sp.biot_savart(omega).coeffs, refine * g.n))
    umax = float(np.max(np.sqrt(np.sum(uv * uv, axis=0))))
    return umax / np.sqrt(l1 * euler.sup_norm(omega, refine))


def random_box_datum(grid: Grid, rng, count=3, sigma=(0.3, 0.8), spread=None) -> Field:
    """Sum of randomly placed and oriented Gaussian dipoles."""
    spread = grid.length / 16 if spread is None else spread
    f = Field.zeros(grid)
    for _ in range(count):
        c = rng.uniform(-spread, spread, 2)
        f = f + gaussian_dipole(grid, rng.uniform(*sigma), rng.uniform(0.5, 2.0), tuple(c),
                                rng.uniform(0, 2 * np.pi))
    return f
