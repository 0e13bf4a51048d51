import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paralab import shnirelman as sh
from paralab import spectral as sp
from paralab.flows import FlowMap


def rand(g, seed, **kw):
    return sp.random_field(g, np.random.default_rng(seed), **kw)


def constant_metric(g, M):
    vals = np.broadcast_to(np.asarray(M, float)[:, :, None, None], (2, 2, g.n, g.n))
    return sp.transform(np.array(vals), g)


def test_constant_diagonal_metric_coefficients():
    # 1 / (2.125 + 1.875 cos 2theta) has coefficients (-0.6)^|k|
    g = sp.Grid(32)
    par = sh.build_parametrix(FlowMap.identity(g), Mfield=constant_metric(g, np.diag([4.0, 0.25])))
    for k, want in [(0, 1.0), (1, -0.6), (2, 0.36), (-2, 0.36)]:
        assert np.allclose(par.m_k(k).values(), want, atol=1e-12)
    assert par.convolution_defect() < 1e-12
    assert np.isclose(par.ellipticity, 0.25)


@settings(max_examples=20)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-0.9, 0.9))
def test_quadrature_matches_closed_form(l1, l2, c):
    off = c * np.sqrt(l1 * l2)
    M = np.array([[l1, off], [off, l2]])
    p = sh.angular_profile(M)
    coeffs, pmin = sh.angular_coefficients(p, 512)
    ks = [-3, -1, 0, 1, 2, 5]
    closed = sh.closed_form_coefficients(p, ks)
    quad = np.array([coeffs[k % 512] for k in ks])
    assert pmin > 0
    assert np.allclose(quad, closed, atol=1e-10)


def test_parametrix_of_identity_is_high_pass_inverse():
    g = sp.Grid(128)
    par = sh.build_parametrix(FlowMap.identity(g))
    assert par.K == 0
    f = rand(g, 1, kmax=16)
    out = sh.apply_Q(par, sp.laplacian(f))
    assert sp.l2_norm(out - (f - sp.partial_sum(f, 2))) < 1e-10


def test_parametrix_on_shear():
    g = sp.Grid(64)
    fl = FlowMap.from_function(g, lambda x1, x2: (0.5 * np.sin(x2), 0 * x2))
    par = sh.build_parametrix(fl)
    assert par.K > 1
    assert par.convolution_defect() < 1e-8
    rate, r2 = par.decay_fit()
    assert rate > 0 and r2 > 0.99


def test_ellipticity_failure():
    g = sp.Grid(32)
    with pytest.raises(ValueError):
        sh.build_parametrix(FlowMap.identity(g), Mfield=constant_metric(g, np.diag([1.0, -1.0])))


def test_apply_Q_needs_zero_mean():
    g = sp.Grid(32)
    par = sh.build_parametrix(FlowMap.identity(g))
    with pytest.raises(ValueError):
        sh.apply_Q(par, sp.Field.constant(g, 1.0))


def test_X_vanishes_for_identity_and_matches_literal():
    g = sp.Grid(64)
    sx = sh.compute_X(FlowMap.identity(g))
    assert not np.any(sx.X.coeffs)
    fl = FlowMap.from_function(g, lambda x1, x2: (0.4 * np.sin(x2), 0 * x2))
    sx = sh.compute_X(fl)
    assert sp.l2_norm(sx.X - sh.compute_X_literal(fl)) < 1e-12
    assert sp.l2_norm(sx.reassemble() - sx.X) < 1e-10 * max(1.0, sp.l2_norm(sx.X))


def test_X_rejects_compressible_map():
    g = sp.Grid(32)
    fl = FlowMap.from_function(g, lambda x1, x2: (0.3 * np.sin(x1), 0 * x2))
    with pytest.raises(ValueError):
        sh.compute_X(fl)


def test_probe_identity_oracle():
    g = sp.Grid(64)
    w0 = rand(g, 3, kmax=8, amplitude=0.5)
    V = rand(g, 4, kmax=20)
    ser = sh.probe_series([FlowMap.identity(g)], w0, V, 1 / 8, 0.3)
    oracle = sh.identity_flow_driving_oracle(w0, V, 1 / 8)
    assert abs(ser.driving[0] - oracle) <= 1e-10 * abs(oracle)
    assert ser.y[0] == 0.0 and ser.transport[0] == 0.0
