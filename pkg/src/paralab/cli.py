"""Experiment runner.

    paralab <experiment> [--config FILE] [--out DIR] [--seed N] [--set key=value ...]

Every experiment writes its CSVs plus ``manifest.json`` (configuration echo,
library versions, asserted checks) into the output directory. The exit code
is 0 exactly when every asserted check passes. Output is a function of the
configuration and the seed only.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import cusps as cu
from . import euler
from . import paradiff as pd
from . import perturbation as pt
from . import shankar as shk
from . import shnirelman as sh
from . import spectral as sp
from . import trig
from .flows import FlowMap

EXPERIMENTS = ("solve", "identities", "parametrix", "cusp-spectrum", "tail-sweep", "probe",
               "koch", "shankar")

COMMON = {"seed": 0, "cfl": 0.5}

# every constant the experiments use lives here and is echoed in the manifest
DEFAULTS = {
    "solve": {"n": 128, "T": 10.0, "data": "cellular", "kmax": 4, "s": 3.0,
              "amplitude": 0.5, "save_every": 1.0, "track": True},
    "identities": {"ns": [128, 256], "shear": 3.0, "kmax": 16, "t": 0.25, "dt": 1e-3,
                   "substeps": 4, "evolution": True},
    "parametrix": {"n": 256, "shear": 0.5, "n_theta": 256, "kmax": 16},
    "cusp-spectrum": {"n": 1024, "alpha": 0.3, "lambdas": [1.0, 1.0], "up": 2,
                      "window": None},
    "tail-sweep": {"n": 1024, "s": 5.5, "alpha": 0.3, "alpha_prime": 0.29, "beta": 0.35,
                   "r": 1.0, "kmax": 6, "amplitude": 0.3, "data_s": 3.0,
                   "eps": [1 / 32, 1 / 48, 1 / 64, 1 / 96, 1 / 128, 1 / 192, 1 / 256]},
    "probe": {"n": 128, "T": 1.0, "save_every": 0.25, "eps": 1 / 16, "alpha": 0.3,
              "kmax": 4, "amplitude": 0.5, "s": 3.0},
    "koch": {"n": 256, "s": 2.5, "mu": 2.0, "delta": 0.25, "r": 1.0, "N": 1.0, "T": 1.5,
             "scaling_n": 2048, "scaling_s": [1.5, 2.5, 3.5], "deltas": [1 / 8, 1 / 16, 1 / 32, 1 / 64],
             "scaling_mu": 2.5},
    "shankar": {"n": 256, "L": 16.0, "sigma": 0.9, "amp": 1.0, "T": 2.5, "save_every": 0.25,
                "doubling": False, "farfield_n": 1024, "farfield_L": 32.0,
                "farfield_sigma": 0.25, "radii": [2.5, 10.0, 8]},
}


class ConfigError(ValueError):
    pass


def _f(x):
    return f"{float(x):.12e}"


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_f(x) if isinstance(x, (float, np.floating)) else x for x in r])


def _plain(x):
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    return x


# configuration --------------------------------------------------------------------

def build_config(name, path=None, seed=None, overrides=None):
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[name])
    user = {}
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict) or any(isinstance(v, dict) for v in user.values()):
            raise ConfigError("config must be a flat JSON object")
    user.update(overrides or {})
    unknown = set(user) - set(cfg)
    if unknown:
        raise ConfigError(f"unknown keys for {name}: {sorted(unknown)}")
    cfg.update(user)
    if seed is not None:
        cfg["seed"] = int(seed)
    validate(name, cfg)
    return cfg


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def validate(name, cfg):
    for key in ("n", "farfield_n", "scaling_n"):
        if key in cfg:
            n = cfg[key]
            _need(isinstance(n, int) and n >= 32 and n & (n - 1) == 0,
                  f"{key} must be a power of two >= 32")
    if name == "identities":
        _need(len(cfg["ns"]) >= 1 and all(isinstance(n, int) and n >= 32 and n & (n - 1) == 0
                                           for n in cfg["ns"]), "ns must list powers of two")
        _need(cfg["dt"] > 0 and cfg["t"] > cfg["dt"], "need 0 < dt < t")
    if name == "parametrix":
        _need(cfg["n"] >= 256, "residual-order fits need n >= 256 for four dyadic probes")
    if name == "cusp-spectrum":
        try:
            cu.check_alpha(cfg["alpha"])
        except ValueError as e:
            raise ConfigError(f"cusp exponent: {e}") from None
        _need(min(cfg["lambdas"]) > 0, "cusp form must be positive definite")
        lo, hi = cfg["window"] if cfg["window"] else cu.default_window(sp.Grid(cfg["n"]))
        _need(hi - lo >= 3, f"fit window [{lo}, {hi}] holds fewer than four shells; raise n")
    if name == "tail-sweep":
        try:
            cu.check_alpha(cfg["alpha"], cfg["s"])
        except ValueError as e:
            raise ConfigError(f"cusp exponent: {e}") from None
        _need(cfg["alpha_prime"] < cfg["alpha"] < cfg["beta"], "need alpha' < alpha < beta")
        _need(all(0 < e < 1 for e in cfg["eps"]) and len(cfg["eps"]) >= 3,
              "eps list needs at least three values in (0, 1)")
        cut = sp.Grid(cfg["n"]).cutoff
        _need(1 / min(cfg["eps"]) <= cut,
              f"smallest eps filters above the dealias cutoff {cut}; raise n or eps")
        _need(cfg["r"] > 0, "ball radius r must be positive")
    if name == "koch":
        _need(0 < cfg["delta"] < 1, "delta must lie in (0, 1)")
        _need(all(0 < d < 1 for d in cfg["deltas"]), "deltas must lie in (0, 1)")
    if name == "shankar":
        _need(cfg["L"] > 0 and cfg["T"] > 0, "L and T must be positive")
    if name in ("solve", "probe"):
        _need(cfg.get("T", 1) > 0, "T must be positive")
        if name == "solve":
            _need(cfg["data"] in ("cellular", "random"), "data must be 'cellular' or 'random'")


# experiments ------------------------------------------------------------------------

def _random_vorticity(cfg, n):
    g = sp.Grid(n)
    rng = np.random.default_rng(cfg["seed"])
    return sp.random_field(g, rng, s=cfg["s"], kmax=cfg["kmax"], amplitude=cfg["amplitude"])


def run_solve(cfg, out):
    n, T = cfg["n"], cfg["T"]
    g = sp.Grid(n)
    if cfg["data"] == "cellular":
        w0 = sp.from_function(g, lambda a, b: np.cos(a) + np.cos(b))
    else:
        w0 = _random_vorticity(cfg, n)
    k = max(1, int(round(T / cfg["save_every"])))
    saves = [T * (i + 1) / k for i in range(k)]
    track = bool(cfg["track"])
    tr = euler.simulate(w0, T, cfl=cfg["cfl"], track_flow=track, track_inverse=track,
                        save_times=saves)
    tr.write_csv(out / "trajectory.csv")
    r0 = tr.rows[0]
    metrics = {"dt": tr.dt}
    checks = {}
    if cfg["data"] == "cellular":
        dev = sp.l2_norm(tr.states[-1].omega - tr.states[0].omega)
        metrics["stationarity"] = dev
        checks["stationarity"] = dev <= 1e-6
    else:
        for key, tol in (("l2_omega", 1e-6), ("linf_omega", 1e-3), ("energy", 1e-6)):
            drift = max(abs(r[key] - r0[key]) / r0[key] for r in tr.rows)
            metrics[f"{key}_drift"] = drift
            checks[f"{key}_drift"] = drift <= tol
    if track:
        t2 = min(2.0, T)
        if t2 not in saves:
            saves_note = f"volume check taken at T = {T}"
            metrics["volume_note"] = saves_note
            t2 = T
        det = tr.rows[tr.at(t2)]["det_err"]
        metrics["det_err"] = det
        checks["volume"] = det <= 1e-4
        i = tr.at(min(1.0, T))
        lag = sp.l2_norm(euler.compose_with_inverse(tr.states[0].omega, tr.inverses[i])
                         - tr.states[i].omega) / sp.l2_norm(tr.states[0].omega)
        metrics["lagrangian"] = lag
        checks["lagrangian"] = lag <= 1e-3
    return checks, metrics


def shear_datum(n, amp, kmax, seed):
    g = sp.Grid(n)
    f = sp.random_field(g, np.random.default_rng(seed), kmax=kmax, s=1.0)
    chi = FlowMap.from_function(g, lambda x1, x2: (0 * x1, amp * np.sin(x1)))
    return chi, f


def evolution_datum(n):
    g = sp.Grid(n)
    return sp.from_function(g, lambda a, b: np.sin(b) + 0.3 * np.cos(a + 2 * b)
                            + 0.05 * np.cos(23 * a - 7 * b) + 0.05 * np.sin(27 * a + 4 * b)
                            + 0.02 * np.cos(25 * b + 11 * a))


def run_identities(cfg, out):
    rows = []
    for n in cfg["ns"]:
        chi, f = shear_datum(n, cfg["shear"], cfg["kmax"], cfg["seed"])
        r1 = pd.gradient_identity_residual(chi, f).defect
        r2 = pd.perp_gradient_identity_residual(chi, f).defect
        dxdt = xev = pull_def = float("nan")
        if cfg["evolution"]:
            snap = sh.snapshots_from_run(evolution_datum(n), cfg["t"], cfg["dt"], cfg["substeps"],
                                         cfg["cfl"])
            res = sh.x_evolution_residual(snap)
            dxdt, xev, pull_def = res.dxdt.relative, res.defect, res.pullback_defect
        rows.append([n, r1, r2, dxdt, xev, pull_def])
    write_rows(out / "identities.csv",
               ["n", "grad", "perp_grad", "dX_dt", "X_evolution", "pullback"], rows)
    arr = np.array([r[1:] for r in rows], float)
    checks = {}
    for j, name in enumerate(["grad", "perp_grad", "dX_dt", "X_evolution"]):
        col = arr[:, j]
        if np.all(np.isnan(col)):
            continue
        checks[f"{name}_small"] = bool(col[-1] <= 5e-3)
        if len(col) > 1:
            checks[f"{name}_decreasing"] = bool(np.all(np.diff(col) < 0))
    return checks, {"table": rows}


def run_parametrix(cfg, out):
    n = cfg["n"]
    g = sp.Grid(n)
    rng = np.random.default_rng(cfg["seed"])
    par0 = sh.build_parametrix(FlowMap.identity(g), cfg["n_theta"])
    f = sp.random_field(g, rng, kmax=cfg["kmax"])
    idq = sp.l2_norm(sh.apply_Q(par0, sp.laplacian(f)) - (f - sp.partial_sum(f, 2)))
    fl = FlowMap.from_function(g, lambda x1, x2: (cfg["shear"] * np.sin(x2), 0 * x2))
    par = sh.build_parametrix(fl, cfg["n_theta"])
    par.write_decay_csv(out / "parametrix_decay.csv")
    rate, r2 = par.decay_fit()
    defect = par.convolution_defect()
    orders = []
    for d in ((1, 0), (1, 1)):
        est = pd.estimate_order(sh.residual_operator(par), g, direction=d)
        orders.append([d[0], d[1], est.fitted_order, est.residual])
    write_rows(out / "parametrix_order.csv", ["d1", "d2", "fitted_order", "fit_residual"], orders)
    worst = max(o[2] for o in orders)
    checks = {"identity_flow": idq <= 1e-10, "convolution": defect <= 1e-8,
              "decay_r2": r2 >= 0.99, "residual_order": worst <= -0.7}
    return checks, {"identity_flow": idq, "convolution": defect, "decay_rate": rate,
                    "decay_r2": r2, "K": par.K, "residual_order": worst}


def run_cusp_spectrum(cfg, out):
    g = sp.Grid(cfg["n"])
    prof = cu.CuspProfile(cfg["alpha"], tuple(cfg["lambdas"]))
    window = tuple(cfg["window"]) if cfg["window"] else cu.default_window(g)
    fit = cu.cusp_tail_fit(prof, g, window, cfg["up"])
    H = cu.cusp_field(prof, g, cfg["up"])
    ks, vals = cu.shell_average(H, window[0], window[1])
    write_rows(out / "cusp_spectrum.csv", ["k", "shell_mean_abs"],
               [[int(k), float(v)] for k, v in zip(ks, vals)])
    target = -2 - 2 * cfg["alpha"]
    ex = fit.extra
    aniso = abs(ex["anisotropy"] / ex["anisotropy_model"] - 1)
    checks = {"slope": abs(fit.slope - target) <= 0.1, "anisotropy": aniso <= 0.1}
    return checks, {"slope": fit.slope, "target": target, "r2": fit.r2, **ex}


def heavy_tail_from_cfg(cfg):
    g = sp.Grid(cfg["n"])
    rng = np.random.default_rng(cfg["seed"])
    f = sp.random_field(g, rng, s=cfg["data_s"], kmax=cfg["kmax"], amplitude=cfg["amplitude"])
    return cu.make_heavy_tail(f, cfg["r"], cfg["s"])


def run_tail_sweep(cfg, out):
    d = heavy_tail_from_cfg(cfg)
    rep = cu.tail_bounds_sweep(d, cfg["alpha"], cfg["eps"], cfg["alpha_prime"], cfg["beta"])
    for name, term in rep.terms.items():
        term.write_csv(out / f"tail_sweep_{name}.csv")
    checks = dict(rep.checks)
    checks["oracle"] = rep.oracle_error <= 1e-10
    chk = d.checks
    checks["heavy_tail"] = bool(chk["tail"] and chk["unique_min"] and chk["hessian_pd"])
    metrics = {k: v.exponent for k, v in rep.terms.items()}
    metrics.update(oracle=rep.oracle_error, N0=d.N0, eta=d.eta, eps=d.eps,
                   target=cfg["s"] + 1 + 2 * cfg["alpha"])
    return checks, metrics


def run_probe(cfg, out):
    w0 = _random_vorticity(cfg, cfg["n"])
    T = cfg["T"]
    k = max(1, int(round(T / cfg["save_every"])))
    tr = euler.simulate(w0, T, cfl=cfg["cfl"], track_flow=True,
                        save_times=[T * (i + 1) / k for i in range(k)])
    V = w0
    ser = sh.probe_series(tr.flows, tr.states[0].omega, V, cfg["eps"], cfg["alpha"])
    ser.write_csv(out / "probe.csv")
    oracle = sh.identity_flow_driving_oracle(tr.states[0].omega, V, cfg["eps"])
    err = abs(ser.driving[0] - oracle) / max(abs(oracle), 1e-300)
    checks = {"identity_oracle": err <= 1e-10, "y0_zero": abs(ser.y[0]) <= 1e-12}
    return checks, {"oracle_error": err}


def run_koch(cfg, out):
    s = cfg["s"]
    rows = []
    checks = {}
    gs = sp.Grid(cfg["scaling_n"])
    for sv in cfg["scaling_s"]:
        fits, hs = pt.koch_scaling_fit(gs, sv, cfg["deltas"], mu=cfg["scaling_mu"])
        for fit in fits:
            rows.append([sv, fit.nu, fit.slope, fit.r2])
            checks[f"slope_s{sv}_nu{fit.nu:g}"] = abs(fit.slope - (sv - fit.nu)) <= 0.05
    write_rows(out / "koch_scaling.csv", ["s", "nu", "slope", "r2"], rows)
    g = sp.Grid(cfg["n"])
    w0 = sp.from_function(g, lambda a, b: np.cos(b))
    tr = euler.simulate(w0, cfg["T"], cfl=cfg["cfl"], track_flow=True,
                        save_times=[cfg["T"] / 3, 2 * cfg["T"] / 3])
    st = pt.stretching_search(tr.flows, s, cfg["N"], cfg["r"])
    pk = pt.KochPacket(tuple(st.x0), tuple(st.e), cfg["delta"], cfg["mu"], cfg["r"], s)
    rep = pt.koch_amplification_experiment(w0, pk, cfg["T"], st.gain, cfl=cfg["cfl"])
    pt.write_koch_csv(out / "koch.csv", [rep])
    # frozen linear map with the measured gain, along its stretching direction
    A = np.array([[1.0, 0.0], [st.gain - 1.0 / st.gain, 1.0]])
    e = np.linalg.svd(A.T)[2][0]
    lin = pt.KochPacket((0.0, 0.0), tuple(e), cfg["delta"], cfg["mu"], cfg["r"], s)
    m, p, gain = pt.linear_map_amplification(lin, A, sp.Grid(2 * cfg["n"]))
    checks["linear_factor2"] = 0.5 <= m / p <= 2.0
    checks["dynamic_ratio"] = rep.ratio >= 1.5
    return checks, {"gain": st.gain, "ratio": rep.ratio, "linear_ratio": m / p,
                    "linear_gain": gain}


def run_shankar(cfg, out):
    L, n = cfg["L"], cfg["n"]

    def datum(g):
        return shk.gaussian_dipole(g, cfg["sigma"], cfg["amp"])

    g = shk.box_grid(n, L)
    w0 = datum(g)
    run = shk.run_box(w0, L, cfg["T"], cfg["save_every"], cfl=cfg["cfl"])
    rep = shk.shankar_report(run)
    rep.write_csv(out / "shankar.csv")
    checks = dict(rep.checks)
    metrics = {"E0": rep.E0, "rate": rep.rate, "max_rel_error": rep.max_relative_error(),
               "safe_horizon": shk.safe_horizon(w0, L)}
    if cfg["doubling"]:
        change, _ = shk.box_doubling(datum, n, L, cfg["T"], cfg["save_every"], cfl=cfg["cfl"])
        metrics["doubling_change"] = change
        checks["doubling"] = change <= 0.01
    gf = shk.box_grid(cfg["farfield_n"], cfg["farfield_L"])
    lo, hi, cnt = cfg["radii"]
    ff = shk.farfield_decay(shk.gaussian_dipole(gf, cfg["farfield_sigma"], 1.0, angle=0.4),
                            np.geomspace(lo, hi, int(cnt)))
    write_rows(out / "farfield.csv", ["r", "u_mean", "du_mean"],
               [[float(a), float(b), float(c)] for a, b, c in zip(ff.radii, ff.u_mean, ff.du_mean)])
    checks.update(ff.checks)
    metrics.update(slope_u=ff.slope_u, slope_du=ff.slope_du)
    return checks, metrics


RUNNERS = {"solve": run_solve, "identities": run_identities, "parametrix": run_parametrix,
           "cusp-spectrum": run_cusp_spectrum, "tail-sweep": run_tail_sweep, "probe": run_probe,
           "koch": run_koch, "shankar": run_shankar}


def run(name, cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    checks, metrics = RUNNERS[name](cfg, out)
    checks = {k: bool(v) for k, v in checks.items()}
    manifest = {
        "experiment": name,
        "config": cfg,
        "versions": {"paralab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version(), "backend": trig.BACKEND},
        "checks": checks,
        "metrics": metrics,
        "passed": all(checks.values()),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(_plain(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _parse_set(items):
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ConfigError(f"--set expects key=value, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def make_parser():
    p = argparse.ArgumentParser(prog="paralab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        q = sub.add_parser(name)
        q.add_argument("--config", help="flat JSON file overriding the defaults")
        q.add_argument("--out", default=f"runs/{name}", help="output directory")
        q.add_argument("--seed", type=int)
        q.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one setting (JSON value)")
        q.add_argument("--show-config", action="store_true",
                       help="print the resolved configuration and exit")
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args.experiment, args.config, args.seed, _parse_set(args.set))
    except ConfigError as e:
        print(f"paralab: config error: {e}", file=sys.stderr)
        return 2
    if args.show_config:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return 0
    man = run(args.experiment, cfg, args.out)
    for k, v in man["checks"].items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    return 0 if man["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
