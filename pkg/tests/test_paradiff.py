import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paralab import paradiff as pd
from paralab import spectral as sp
from paralab import trig
from paralab.flows import FlowMap, adjugate, identity_matrix, operator_norms

seeds = st.integers(0, 2 ** 32 - 1)


def rand(g, seed, **kw):
    return sp.random_field(g, np.random.default_rng(seed), **kw)


def shear(g, amp):
    return FlowMap.from_function(g, lambda x1, x2: (0 * x1, amp * np.sin(x1)))


# off-grid evaluation ------------------------------------------------------------

@given(seeds)
def test_backends_agree(seed):
    g = sp.Grid(32)
    f = rand(g, seed)
    rng = np.random.default_rng(seed)
    x1, x2 = rng.uniform(-4, 4, (2, 200))
    tab = sp.centered_table(f.coeffs[None], sp.extent(f.coeffs))
    outs = [fn(tab, g.scale, x1, x2) for fn in trig.backends().values()]
    direct = np.array([np.sum(f.coeffs * np.exp(1j * (g.xi[0] * a + g.xi[1] * b)))
                       for a, b in zip(x1[:20], x2[:20])])
    for o in outs:
        assert np.allclose(o[0, :20], direct, atol=1e-12)
        assert np.allclose(o, outs[0], atol=1e-12)


def test_evaluate_at_nodes_matches_values():
    g = sp.Grid(64, length=7.0)
    f = rand(g, 1)
    x1, x2 = g.X
    assert np.allclose(trig.evaluate(f, x1, x2), f.values(), atol=1e-12)


def test_evaluate_is_periodic():
    g = sp.Grid(32)
    f = rand(g, 2)
    x = np.array([0.3, -1.2])
    assert np.allclose(trig.evaluate(f, x, x), trig.evaluate(f, x + 2 * np.pi, x - 2 * np.pi))


# maps -------------------------------------------------------------------------

def test_shear_is_volume_preserving():
    g = sp.Grid(64)
    chi = shear(g, 1.3)
    assert chi.det_error() < 1e-12
    A = chi.jacobian
    inv = adjugate(A)
    assert sp.l2_norm(sp.product(A, inv, "ij,jk->ik") - identity_matrix(g)) < 1e-10


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_operator_norm_of_shear_matrix(a, b):
    A = np.array([[1.0, a], [0.0, 1.0]])[:, :, None]
    assert np.isclose(operator_norms(A)[0], np.linalg.norm(A[:, :, 0], 2))
    B = np.array([[a, b], [-b, a]])[:, :, None]
    assert np.isclose(operator_norms(B)[0], np.hypot(a, b))


def test_flowmap_requires_vector():
    g = sp.Grid(32)
    with pytest.raises(ValueError):
        FlowMap(sp.Field.zeros(g))


# paraproducts ---------------------------------------------------------------------

@given(seeds)
def test_bony_decomposition_exact(seed):
    g = sp.Grid(64)
    a = rand(g, seed, kmax=20)
    u = rand(g, seed + 1, kmax=20)
    rb = pd.bony_remainder(a, u)
    lhs = a * u
    rhs = pd.paraproduct(a, u) + pd.paraproduct(u, a) + rb
    assert sp.l2_norm(lhs - rhs) < 1e-12


@given(seeds)
def test_paraproduct_by_one(seed):
    g = sp.Grid(64)
    u = rand(g, seed)
    one = sp.Field.constant(g, 1.0)
    assert sp.l2_norm(pd.paraproduct(one, u) - (u - sp.partial_sum(u, 2))) < 1e-13


def test_paraproduct_matches_literal_sum():
    g = sp.Grid(64)
    a = rand(g, 4, kmax=20)
    u = rand(g, 5, kmax=20)
    assert sp.l2_norm(pd.paraproduct(a, u) - pd.paraproduct_literal(a, u)) < 1e-12


def test_paraproduct_spectral_localization():
    # T_a u for a of low frequency keeps u's block location
    g = sp.Grid(128)
    a = sp.from_function(g, lambda x1, x2: np.cos(x1))
    u = pd.single_mode(g, 32, 0)
    t = pd.paraproduct(a, u)
    big = np.argwhere(np.abs(t.coeffs) > 1e-12)
    assert set(big[:, 0]) <= {31, 32, 33}


def test_paracompose_identity_flow():
    g = sp.Grid(64)
    f = rand(g, 6)
    out = pd.paracompose(FlowMap.identity(g), f)
    assert sp.l2_norm(out - f) < 1e-13


def test_paracompose_rejects_non_volume_preserving():
    g = sp.Grid(32)
    chi = FlowMap.from_function(g, lambda x1, x2: (0.3 * np.sin(x1), 0 * x2))
    with pytest.raises(ValueError):
        pd.paracompose(chi, rand(g, 0))


@pytest.mark.parametrize("n", [64, 128])
def test_gradient_identities_on_shear(n):
    g = sp.Grid(n)
    f = rand(g, 2, kmax=8, s=1.0)
    chi = shear(g, 0.8)
    assert pd.gradient_identity_residual(chi, f).defect < 1e-10
    assert pd.perp_gradient_identity_residual(chi, f).defect < 1e-10


# order harness ------------------------------------------------------------------

def test_order_of_derivative_and_smoothing():
    g = sp.Grid(256)
    est = pd.estimate_order(lambda p: sp.partial(p, 0), g)
    assert abs(est.fitted_order - 1) < 1e-6
    est = pd.estimate_order(lambda p: sp.inverse_laplacian(p, check=False), g)
    assert abs(est.fitted_order + 2) < 1e-6
    with pytest.raises(ValueError):
        pd.estimate_order(lambda p: p, g, js=[3, 4, 5])


def test_smooth_commutator_has_negative_order():
    g = sp.Grid(256)
    a = sp.from_function(g, lambda x1, x2: np.cos(x1) + 0.5 * np.sin(x2))
    est = pd.estimate_order(lambda p: pd.multiplier_commutator(a, sp.beurling_symbol(g, 1), p), g)
    assert est.fitted_order < -0.7


def test_holder_field_blocks():
    g = sp.Grid(256)
    r = 0.5
    a = pd.holder_field(g, np.random.default_rng(0), r)
    assert np.isclose(np.max(np.abs(a.values())), 1.0)
    blocks = [2 ** (r * j) * np.max(np.abs(sp.dyadic_block(a, j).values())) for j in range(1, g.J + 1)]
    assert max(blocks) < 10 * min(blocks[:3]) + 1.0


def test_loglog_fit_recovers_power():
    x = np.geomspace(1, 100, 10)
    slope, icpt, r2 = pd.loglog_fit(x, 3 * x ** -2.5)
    assert np.isclose(slope, -2.5) and np.isclose(np.exp(icpt), 3) and np.isclose(r2, 1)
