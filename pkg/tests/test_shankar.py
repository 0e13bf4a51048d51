import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paralab import shankar as sk
from paralab import spectral as sp


@pytest.fixture(scope="module")
def dipole_run():
    g = sk.box_grid(256, 16.0)
    return sk.run_box(sk.gaussian_dipole(g, 0.9, 1.0), 16.0, 1.0, 0.5)


def test_box_grid_spacing():
    g = sk.box_grid(128, 10.0)
    assert g.length == 20.0 and np.isclose(g.h, 20.0 / 128)


@settings(max_examples=10)
@given(st.floats(0, 2 * np.pi), st.floats(0.3, 1.0))
def test_dipole_has_zero_mass(angle, sigma):
    g = sk.box_grid(128, 16.0)
    w = sk.gaussian_dipole(g, sigma, 1.0, angle=angle)
    v = np.real(sp.inverse(w))
    assert abs(sk.node_integral(g, v)) <= 1e-12 * sk.node_integral(g, np.abs(v))


def test_G_identity_on_dipole(dipole_run):
    rep = sk.shankar_report(dipole_run)
    assert rep.G[0] == 0.0
    assert all(rep.checks.values())
    assert rep.max_relative_error() < 0.01


def test_zero_data_gives_zero_G():
    g = sk.box_grid(128, 16.0)
    run = sk.run_box(sp.Field.zeros(g), 16.0, 0.5, 0.25)
    rep = sk.shankar_report(run)
    assert np.all(rep.G == 0.0) and np.all(rep.lhs == 0.0)
    assert np.allclose(rep.lip, 1.0)
    assert run.radii == [0.0, 0.0, 0.0]


def test_box_data_checks():
    g = sk.box_grid(128, 16.0)
    with pytest.raises(ValueError):
        sk.check_box_data(sk.gaussian_dipole(g), 8.0)
    vortex = sp.from_function(g, lambda a, b: np.exp(-(a * a + b * b)))
    with pytest.raises(ValueError):
        sk.check_box_data(vortex, 16.0)
    wide = sk.gaussian_dipole(g, 2.0)
    with pytest.raises(sk.SupportBreach):
        sk.check_box_data(wide, 16.0)


def test_support_breach_during_run():
    # under-resolved box: round-off spreads past L/2 at the 1e-6 threshold
    g = sk.box_grid(128, 10.0)
    with pytest.raises(sk.SupportBreach):
        sk.run_box(sk.gaussian_dipole(g, 0.6, 0.5), 10.0, 1.0, 0.25)


def test_farfield_dipole_and_control():
    g = sk.box_grid(512, 16.0)
    w = sk.gaussian_dipole(g, 0.25, 1.0, angle=0.4)
    rep = sk.farfield_decay(w, np.geomspace(2.0, 4.0, 6))
    assert rep.checks["u_slope"] and rep.checks["du_slope"]
    mono = sp.from_function(g, lambda a, b: np.exp(-(a * a + b * b) / 0.0625))
    with pytest.raises(ValueError):
        sk.farfield_decay(mono, np.geomspace(2.0, 4.0, 6))
    ctrl = sk.farfield_decay(mono, np.geomspace(2.0, 4.0, 6), check=False)
    assert not ctrl.checks["u_slope"]
    with pytest.raises(ValueError):
        sk.farfield_decay(w, [0.5, 1.0, 2.0])


def test_interpolation_constant_positive():
    g = sk.box_grid(256, 16.0)
    rng = np.random.default_rng(0)
    C = sk.interpolation_constant(sk.random_box_datum(g, rng))
    assert 0.05 < C < 1.0


def test_shielded_vortex_is_massless():
    g = sk.box_grid(256, 16.0)
    w = sk.gaussian_shielded_vortex(g, 0.8, 1.0)
    v = np.real(sp.inverse(w))
    assert abs(sk.node_integral(g, v)) <= 1e-10 * sk.node_integral(g, np.abs(v))
    assert sk.shielded_vortex_shear(0.8, 1.0) > 0
