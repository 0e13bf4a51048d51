"""Bony paraproducts, remainders and paracomposition.

T_a u = sum_{j>=3} S_{j-3}a * Delta_j u. Blocks j < 3 of u are dropped, so
T_1 u = u - S_2 u and T_a of a constant is 0. Products are exact for the
trigonometric polynomials involved and truncated to the dealias band.

Component patterns are einsum strings over component axes: ``"ij,j->i"``
is a matrix symbol acting on a vector, ``"j,j->"`` a row vector paired with
a vector, ``None`` broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from . import trig
from .flows import FlowMap, adjugate
from .spectral import Field


def _swap(subscripts):
    if subscripts is None:
        return None
    lhs, out = subscripts.split("->")
    a, b = lhs.split(",")
    return f"{b},{a}->{out}"


def paraproduct(a: Field, u: Field, subscripts: str | None = None) -> Field:
    sp._check(a.grid, u)
    g = a.grid
    M = sp.pad_size(g, sp.extent(a.coeffs), sp.extent(u.coeffs))
    spec = sp._einsum_spec(subscripts, len(a.shape), len(u.shape))
    blocks = sp.lp_symbols(g)
    partial = sp.partial_symbols(g)
    acc = None
    for j in range(3, g.J + 1):
        uj = u.coeffs * blocks[j]
        if not np.any(uj):
            continue
        aj = a.coeffs * partial[j - 3]
        va = sp._padded_values(aj, M)
        vu = sp._padded_values(uj, M)
        term = va * vu if spec is None else np.einsum(spec, va, vu)
        acc = term if acc is None else acc + term
    if acc is None:
        shape = np.broadcast_shapes(a.shape, u.shape) if spec is None else \
            np.einsum(spec, np.zeros(a.shape + (1, 1)), np.zeros(u.shape + (1, 1))).shape[:-2]
        return Field.zeros(g, shape)
    return Field(g, sp._truncate(acc, g))


def paraproduct_literal(a: Field, u: Field) -> Field:
    """Scalar T_a u block by block, one dealiased product per block."""
    out = Field.zeros(a.grid)
    for j in range(3, a.grid.J + 1):
        out = out + sp.partial_sum(a, j - 3) * sp.dyadic_block(u, j)
    return out


def paraproduct_adjoint(a: Field, u: Field) -> Field:
    """(T_a)^* u = sum_j Delta_j (conj(S_{j-3} a) u)."""
    g = a.grid
    ac = a.conj()
    out = Field.zeros(g)
    for j in range(3, g.J + 1):
        out = out + sp.dyadic_block(sp.partial_sum(ac, j - 3) * u, j)
    return out


def bony_remainder(a: Field, u: Field, subscripts: str | None = None) -> Field:
    """a u - T_a u - T_u a."""
    return (sp.product(a, u, subscripts) - paraproduct(a, u, subscripts)
            - paraproduct(u, a, _swap(subscripts)))


def composition_remainder(a: Field, b: Field, u: Field, kind: str = "scalar") -> Field:
    """R_alg(a, b) u = T_a T_b u - T_{ab} u.

    kind ``"scalar"``: all scalar. ``"matrix"``: a, b matrices, u a vector.
    """
    if kind == "scalar":
        return paraproduct(a, paraproduct(b, u)) - paraproduct(a * b, u)
    mv = "ij,j->i"
    return (paraproduct(a, paraproduct(b, u, mv), mv)
            - paraproduct(sp.product(a, b, "ij,jk->ik"), u, mv))


def multiplier_commutator(a: Field, symbol, u: Field) -> Field:
    """[T_a, m(D)] u = T_a(m(D) u) - m(D)(T_a u)."""
    return (paraproduct(a, sp.fourier_multiplier(u, symbol))
            - sp.fourier_multiplier(paraproduct(a, u), symbol))


# paracomposition -------------------------------------------------------------

DET_TOL = 1e-4


def _check_map(chi: FlowMap, f: Field, check_det: bool):
    sp._check(chi.grid, f)
    if sp.extent(f.coeffs) > f.grid.cutoff:
        raise ValueError("field is not resolvable: spectrum exceeds the dealias band")
    if check_det and not chi.is_identity():
        err = chi.det_error()
        if err > DET_TOL:
            raise ValueError(f"map is not measure preserving: max|det - 1| = {err:.3e}")


def compose(f: Field, chi: FlowMap) -> Field:
    """f o chi from the trigonometric series of f at the displaced nodes."""
    if chi.is_identity():
        return f.copy()
    return trig.compose(f, chi.points())


def paracompose(chi: FlowMap, f: Field, check_det: bool = True) -> Field:
    """chi^* f = f o chi - T_{(grad f) o chi} . chi~  (any component shape)."""
    _check_map(chi, f, check_det)
    if chi.is_identity():
        return f.copy()
    fc = compose(f, chi)
    gc = compose(sp.grad(f), chi)
    lead = "abcd"[:len(f.shape)]
    sub = f"{lead}j,j->{lead}"
    return fc - paraproduct(gc, chi.displacement, sub)


@dataclass
class IdentityResidual:
    lhs: Field
    rhs: Field
    main: Field
    R1: Field
    R2: Field
    defect: float
    extra: dict = field(default_factory=dict)


def _relative(lhs: Field, rhs: Field) -> float:
    den = sp.l2_norm(lhs)
    num = sp.l2_norm(lhs - rhs)
    return num / den if den > 0 else num


def _identity_terms(chi, f, A, g_field, check_det):
    """Shared assembly for the two gradient identities.

    A is the matrix in front ((D chi)^T or its cofactor), g_field is grad f or
    perp-grad f.
    """
    mv = "ij,j->i"
    gc = compose(g_field, chi)
    Hc = compose(sp.jacobian(g_field), chi)
    pull = gc - paraproduct(Hc, chi.displacement, mv)
    main = paraproduct(A, pull, mv)
    R1 = bony_remainder(A, gc, mv)
    R2 = (paraproduct(A, paraproduct(Hc, chi.displacement, mv), mv)
          - paraproduct(sp.product(A, Hc, "ij,jk->ik"), chi.displacement, mv))
    return main, R1, R2


def gradient_identity_residual(chi: FlowMap, f: Field, check_det: bool = True) -> IdentityResidual:
    """grad(chi^* f) = T_{(D chi)^T}(chi^* grad f) + R1 + R2."""
    _check_map(chi, f, check_det)
    lhs = sp.grad(paracompose(chi, f, check_det=False))
    A = chi.jacobian.T
    main, R1, R2 = _identity_terms(chi, f, A, sp.grad(f), check_det)
    rhs = main + R1 + R2
    return IdentityResidual(lhs, rhs, main, R1, R2, _relative(lhs, rhs))


def perp_gradient_identity_residual(chi: FlowMap, f: Field, check_det: bool = True) -> IdentityResidual:
    """perp-grad(chi^* f) = T_{(D chi)^-1}(chi^* perp-grad f) + R1' + R2'."""
    _check_map(chi, f, check_det)
    lhs = sp.perp_grad(paracompose(chi, f, check_det=False))
    B = adjugate(chi.jacobian)
    main, R1, R2 = _identity_terms(chi, f, B, sp.perp_grad(f), check_det)
    rhs = main + R1 + R2
    return IdentityResidual(lhs, rhs, main, R1, R2, _relative(lhs, rhs))


# operator order harness ---------------------------------------------------------

@dataclass
class OperatorOrderEstimate:
    probe_frequencies: list
    fitted_order: float
    residual: float
    quotients: list

    def __post_init__(self):
        if len(self.probe_frequencies) < 4:
            raise ValueError("order fits need at least four probes")


def single_mode(grid, k1: int, k2: int = 0) -> Field:
    c = np.zeros((grid.n, grid.n), complex)
    c[k1 % grid.n, k2 % grid.n] = 1.0
    return Field(grid, c)


def loglog_fit(x, y):
    """Least-squares slope, intercept and R^2 of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum((ly - pred) ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), float(r2)


def estimate_order(op, grid, js=None, direction=(1, 0), s: float = 0.0) -> OperatorOrderEstimate:
    """Fit the order of ``op`` from probes exp(i 2^j e.x)."""
    js = list(range(3, grid.J)) if js is None else list(js)
    freqs, quot = [], []
    for j in js:
        N = 2 ** j
        probe = single_mode(grid, N * direction[0], N * direction[1])
        out = op(probe)
        freqs.append(N)
        quot.append(sp.sobolev_norm(out, s) / sp.sobolev_norm(probe, s))
    q = np.maximum(np.asarray(quot), 1e-300)
    slope, _, r2 = loglog_fit(freqs, q)
    return OperatorOrderEstimate(freqs, slope, r2, list(quot))


def holder_field(grid, rng, r: float, kmax=None) -> Field:
    """Random real field in C^r, normalized in sup norm.

    |a_hat(k)| ~ |k|^-(2.5+r): the extra half power keeps every dyadic block
    below 2^(-j r) in sup norm, not just on average.
    """
    k1, k2 = grid.K
    kk = np.sqrt(k1 ** 2 + k2 ** 2)
    w = np.where(kk > 0, np.maximum(kk, 1.0) ** (-(2.5 + r)), 0.0) * grid.band
    if kmax is not None:
        w = w * (kk <= kmax)
    ph = np.exp(2j * np.pi * rng.random((grid.n, grid.n)))
    f = Field(grid, w * ph).real_part()
    return f / np.max(np.abs(f.values()))
