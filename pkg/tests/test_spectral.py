import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paralab import spectral as sp

seeds = st.integers(0, 2 ** 32 - 1)


def rand(g, seed, **kw):
    return sp.random_field(g, np.random.default_rng(seed), **kw)


def test_grid_guards():
    with pytest.raises(ValueError):
        sp.Grid(48)
    with pytest.raises(ValueError):
        sp.Grid(16)
    with pytest.raises(ValueError):
        sp.Grid(64, dealias_fraction=0)
    with pytest.raises(ValueError):
        sp.Grid(64, length=-1.0)


def test_origin_node_and_cutoff():
    g = sp.Grid(64)
    assert g.x[32] == 0.0
    assert g.cutoff == 21
    g2 = sp.Grid(64, length=10.0)
    assert np.isclose(g2.scale, 2 * np.pi / 10)


def test_single_mode_coefficients():
    g = sp.Grid(64)
    x1, x2 = g.X
    f = sp.transform(np.cos(3 * x1 - 2 * x2), g)
    big = np.argwhere(np.abs(f.coeffs) > 1e-12)
    assert {tuple(k) for k in big} == {(3, 62), (61, 2)}
    assert np.isclose(f.coeffs[3, -2], 0.5)


@given(seeds)
def test_roundtrip(seed):
    g = sp.Grid(32)
    v = np.random.default_rng(seed).standard_normal((32, 32))
    f = sp.transform(v, g)
    assert np.allclose(np.real(sp.inverse(f)), v, atol=1e-12)


@given(seeds)
def test_product_is_exact_inside_band(seed):
    g = sp.Grid(64)
    a = rand(g, seed, kmax=10)
    b = rand(g, seed + 1, kmax=10)
    ab = a * b
    assert np.allclose(ab.values(), a.values() * b.values(), atol=1e-12)


@given(seeds)
def test_biot_savart_divergence_free_and_curl(seed):
    g = sp.Grid(64)
    w = rand(g, seed, kmax=12)
    u = sp.biot_savart(w)
    assert sp.l2_norm(sp.div(u)) < 1e-12
    assert sp.l2_norm(sp.curl(u) - w) < 1e-12 * max(1.0, sp.l2_norm(w))


def test_inverse_laplacian_needs_zero_mean():
    g = sp.Grid(32)
    f = sp.Field.constant(g, 1.0)
    with pytest.raises(ValueError):
        sp.inverse_laplacian(f)


@given(seeds)
def test_parseval(seed):
    g = sp.Grid(32, length=5.0)
    f = rand(g, seed)
    h = rand(g, seed + 7)
    direct = g.cell_area * np.sum(f.values() * h.values())
    assert np.isclose(sp.inner(f, h).real, direct, rtol=1e-10, atol=1e-12)


@given(seeds)
def test_littlewood_paley_blocks_sum_to_identity(seed):
    g = sp.Grid(64)
    f = rand(g, seed, s=0.5)
    total = sp.Field.zeros(g)
    for j in range(g.J + 1):
        total = total + sp.dyadic_block(f, j)
    assert sp.l2_norm(total - f.band_limited()) < 1e-12
    assert sp.l2_norm(sp.partial_sum(f, g.J) - f.band_limited()) < 1e-12
    with pytest.raises(ValueError):
        sp.partial_sum(f, g.J + 1)


@given(st.floats(-3, 3))
def test_smooth_step_range(x):
    v = float(sp.smooth_step(x))
    assert 0.0 <= v <= 1.0
    assert float(sp.smooth_step(x + 0.1)) >= v


def test_cutoff_profiles():
    r = np.linspace(0, 3, 301)
    th = sp.theta(r)
    assert np.all(th[r <= 0.5] == 1.0)
    assert np.all(th[r >= 1.0] == 0.0)
    assert np.all(np.diff(th) <= 0)


@given(seeds, st.integers(1, 3))
def test_beurling_isometry(seed, k):
    g = sp.Grid(32)
    f = rand(g, seed)
    assert np.isclose(sp.l2_norm(sp.beurling(f, k)), sp.l2_norm(f), rtol=1e-12)


def test_mollifier_and_high_pass_split():
    g = sp.Grid(64)
    f = rand(g, 3)
    eps = 0.2
    assert sp.l2_norm(sp.mollify(f, eps) + sp.high_pass(f, eps) - f) < 1e-13
    with pytest.raises(ValueError):
        sp.mollify(f, 0.0)


def test_sobolev_norms():
    g = sp.Grid(32)
    x1, x2 = g.X
    f = sp.transform(np.cos(3 * x1), g)
    assert np.isclose(sp.sobolev_norm(f, 0), np.sqrt(0.5))
    assert np.isclose(sp.sobolev_norm(f, 1), np.sqrt(0.5 * 10))
    assert np.isclose(sp.homogeneous_norm(f, 1), np.sqrt(0.5 * 9))
    assert np.isclose(sp.l2_norm(f), np.sqrt(2) * np.pi)


def test_snapshot_roundtrip(tmp_path):
    g = sp.Grid(32)
    f = rand(g, 5)
    for spectral in (False, True):
        p = tmp_path / f"snap_{spectral}.bin"
        sp.write_snapshot(p, f, spectral)
        h = sp.read_snapshot(p, g)
        assert sp.l2_norm(h - f) < 1e-13
    p.write_bytes(b"XXXX" + p.read_bytes()[4:])
    with pytest.raises(ValueError):
        sp.read_snapshot(p)
