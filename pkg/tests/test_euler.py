import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paralab import euler
from paralab import spectral as sp


def rand(g, seed, **kw):
    return sp.random_field(g, np.random.default_rng(seed), **kw)


def test_rejects_nonzero_mean():
    g = sp.Grid(32)
    w = sp.Field.constant(g, 1.0)
    with pytest.raises(ValueError):
        euler.EulerState.initial(w)


def test_cfl_violation():
    g = sp.Grid(32)
    st0 = euler.EulerState.initial(rand(g, 0, kmax=4))
    with pytest.raises(euler.CFLViolation):
        euler.step(st0, 10 * st0.dt_limit())


def test_shear_is_steady():
    g = sp.Grid(64)
    w = sp.from_function(g, lambda a, b: np.sin(3 * b))
    tr = euler.simulate(w, 1.0)
    assert sp.l2_norm(tr.states[-1].omega - tr.states[0].omega) < 1e-12


@settings(max_examples=5)
@given(st.integers(0, 1000))
def test_invariants_short_run(seed):
    g = sp.Grid(64)
    w = rand(g, seed, kmax=4, amplitude=0.5)
    tr = euler.simulate(w, 0.5, save_times=[0.25])
    r0, r1 = tr.rows[0], tr.rows[-1]
    assert abs(r1["l2_omega"] / r0["l2_omega"] - 1) < 1e-8
    assert abs(r1["energy"] / r0["energy"] - 1) < 1e-8
    assert abs(tr.states[-1].omega.coeffs[0, 0]) < 1e-14


def test_time_reversal():
    g = sp.Grid(64)
    w = rand(g, 3, kmax=4, amplitude=0.5)
    fwd = euler.simulate(w, 0.5)
    back = euler.simulate(fwd.states[-1].omega, -0.5)
    assert back.states[-1].t == -0.5
    # RK4 is not symmetric: the round trip carries its truncation error
    assert sp.l2_norm(back.states[-1].omega - fwd.states[0].omega) < 1e-6 * sp.l2_norm(w)


def test_flow_maps_and_lagrangian_identity():
    g = sp.Grid(64)
    w = rand(g, 1, kmax=4, amplitude=0.5)
    tr = euler.simulate(w, 1.0, track_flow=True, track_inverse=True, save_times=[0.5])
    fl, inv = tr.flows[-1], tr.inverses[-1]
    assert fl.det_error() < 1e-6
    assert inv.det_error() < 1e-6
    assert euler.roundtrip_error(fl, inv) < 1e-6
    lag = euler.compose_with_inverse(tr.states[0].omega, inv) - tr.states[-1].omega
    assert sp.l2_norm(lag) < 1e-6 * sp.l2_norm(w)
    x1, x2 = euler.newton_inverse(fl, *fl.points())
    X1, X2 = g.X
    assert np.max(np.abs(x1 - X1)) < 1e-10 and np.max(np.abs(x2 - X2)) < 1e-10


def test_resolution_guard():
    g = sp.Grid(32)
    w = rand(g, 2, kmax=6, amplitude=3.0)
    with pytest.raises(euler.ResolutionLost):
        euler.simulate(w, 5.0)


def test_sup_norm_refines():
    g = sp.Grid(32)
    x1, x2 = g.X
    w = sp.transform(np.cos(x1 + 0.5) * np.cos(x2 + 0.5), g)
    assert np.isclose(euler.sup_norm(w, 8), 1.0, atol=2e-3)


def test_trajectory_csv(tmp_path):
    g = sp.Grid(32)
    tr = euler.simulate(rand(g, 4, kmax=3, amplitude=0.3), 0.2, track_flow=True, save_times=[0.1])
    p = tmp_path / "t.csv"
    tr.write_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "l2_omega", "linf_omega", "energy", "det_err", "lip_fwd", "lip_inv"]
    assert len(rows) == 4
    assert tr.at(0.1) == 1
    with pytest.raises(KeyError):
        tr.at(0.15)
