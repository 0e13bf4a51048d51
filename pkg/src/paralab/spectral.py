"""Fourier representation of periodic fields on a square torus.

Coefficients follow the normalization

    u_hat(xi) = (2 pi)^-2 * integral of u(x) exp(-i xi.x) dx,

so on an n x n grid with nodes x_j = -L/2 + j h the DFT gives
u_hat = (-1)^(k1+k2) * fft2(u) / n^2. The sign comes from the grid starting
at -L/2 instead of 0.

A ``Field`` holds a stack of coefficient arrays with shape
``components + (n, n)``. Scalars have ``components == ()``, vectors ``(2,)``
and matrices ``(2, 2)`` with row = target index, column = source index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Square periodic grid of side ``length`` centred at the origin."""

    n: int
    dealias_fraction: float = 2.0 / 3.0
    length: float = TWO_PI

    def __post_init__(self):
        n = int(self.n)
        if n < 32 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 32, got {self.n}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        if self.length <= 0:
            raise ValueError("length must be positive")
        object.__setattr__(self, "n", n)

    @property
    def h(self):
        return self.length / self.n

    @property
    def scale(self):
        """Physical wavenumber per integer mode."""
        return TWO_PI / self.length

    @property
    def cutoff(self):
        return int(np.floor(self.dealias_fraction * self.n / 2 + 1e-9))

    @property
    def J(self):
        """Largest dyadic block index."""
        return int(np.ceil(np.log2(self.n / 2)))

    @cached_property
    def k(self):
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(np.int64)

    @cached_property
    def K(self):
        k1, k2 = np.meshgrid(self.k, self.k, indexing="ij")
        return k1, k2

    @cached_property
    def xi(self):
        k1, k2 = self.K
        return self.scale * k1, self.scale * k2

    @cached_property
    def xi_abs(self):
        x1, x2 = self.xi
        return np.hypot(x1, x2)

    @cached_property
    def band(self):
        k1, k2 = self.K
        c, half = self.cutoff, self.n // 2
        return (np.abs(k1) <= c) & (np.abs(k2) <= c) & (k1 != -half) & (k2 != -half)

    @cached_property
    def phase(self):
        k1, k2 = self.K
        return np.where((k1 + k2) % 2 == 0, 1.0, -1.0)

    @cached_property
    def x(self):
        return -0.5 * self.length + self.h * np.arange(self.n)

    @cached_property
    def X(self):
        x1, x2 = np.meshgrid(self.x, self.x, indexing="ij")
        return x1, x2

    @property
    def cell_area(self):
        return self.h * self.h


class Field:
    """Spectral coefficients of a (stack of) periodic functions."""

    __array_priority__ = 100

    def __init__(self, grid: Grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape[-2:] != (grid.n, grid.n):
            raise ValueError("coefficient array does not match grid")
        self.grid = grid
        self.coeffs = coeffs

    # construction -------------------------------------------------------
    @classmethod
    def from_samples(cls, grid: Grid, samples):
        return transform(samples, grid)

    @classmethod
    def zeros(cls, grid: Grid, shape=()):
        return cls(grid, np.zeros(tuple(shape) + (grid.n, grid.n), complex))

    @classmethod
    def constant(cls, grid: Grid, value):
        c = np.zeros((grid.n, grid.n), complex)
        c[0, 0] = value
        return cls(grid, c)

    @classmethod
    def stack(cls, fields, axis=0):
        fields = list(fields)
        grid = fields[0].grid
        for f in fields[1:]:
            _check(grid, f)
        ax = axis if axis >= 0 else axis - 2
        return cls(grid, np.stack([f.coeffs for f in fields], axis=ax))

    # shape ----------------------------------------------------------------
    @property
    def shape(self):
        return self.coeffs.shape[:-2]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if len(idx) > len(self.shape):
            raise IndexError("too many component indices")
        return Field(self.grid, self.coeffs[idx])

    @property
    def T(self):
        if len(self.shape) != 2:
            raise ValueError("transpose needs a matrix field")
        return Field(self.grid, np.swapaxes(self.coeffs, 0, 1))

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Field):
            _check(self.grid, other)
            return other.coeffs
        return None

    def __add__(self, other):
        c = self._coerce(other)
        if c is None:
            out = self.coeffs.copy()
            out[..., 0, 0] += other
            return Field(self.grid, out)
        return Field(self.grid, self.coeffs + c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return Field(self.grid, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Field):
            return product(self, other)
        return Field(self.grid, self.coeffs * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.coeffs / other)

    def __matmul__(self, other):
        sub = "ij,j->i" if len(other.shape) == 1 else "ij,jk->ik"
        return product(self, other, sub)

    def conj(self):
        """Complex conjugate in physical space."""
        c = np.conj(self.coeffs)
        idx = (-self.grid.k) % self.grid.n
        return Field(self.grid, c[..., idx[:, None], idx[None, :]])

    def real_part(self):
        return (self + self.conj()) / 2.0

    # views ----------------------------------------------------------------
    def values(self):
        """Physical samples; real when the field is real to round-off."""
        v = inverse(self)
        scale = np.max(np.abs(v)) if v.size else 0.0
        if np.max(np.abs(v.imag), initial=0.0) <= 1e-11 * max(scale, 1e-300):
            return v.real
        return v

    @property
    def mean(self):
        return self.coeffs[..., 0, 0]

    def band_limited(self):
        return Field(self.grid, np.where(self.grid.band, self.coeffs, 0))

    def copy(self):
        return Field(self.grid, self.coeffs.copy())

    def __repr__(self):
        return f"Field(n={self.grid.n}, shape={self.shape})"


ScalarField = VectorField = MatrixField = Field


def _check(grid, f):
    if f.grid != grid:
        raise ValueError("fields live on different grids")


# transforms -----------------------------------------------------------------

def transform(samples, grid: Grid | None = None) -> Field:
    """Physical samples -> coefficients with the normalization above."""
    samples = np.asarray(samples)
    n = samples.shape[-1]
    if samples.shape[-2] != n:
        raise ValueError("samples must be square")
    if grid is None:
        grid = Grid(n)
    elif grid.n != n:
        raise ValueError("samples do not match grid")
    c = sfft.fft2(samples, norm="forward") * grid.phase
    return Field(grid, c)


def inverse(f: Field):
    """Coefficients -> complex physical samples."""
    return sfft.ifft2(f.coeffs * f.grid.phase, norm="forward")


# extended (Nyquist-split) coefficient tables ---------------------------------

def extent(coeffs) -> int:
    """Largest |k| (per axis) carrying a nonzero coefficient."""
    n = coeffs.shape[-1]
    mask = np.any(coeffs != 0, axis=tuple(range(coeffs.ndim - 2)))
    if not mask.any():
        return 0
    k = np.abs(np.rint(np.fft.fftfreq(n) * n).astype(int))
    rows = k[np.any(mask, axis=1)].max()
    cols = k[np.any(mask, axis=0)].max()
    return int(max(rows, cols))


def centered_table(coeffs, m: int):
    """Coefficients for modes -m..m on each axis, Nyquist split symmetrically.

    Returns an array of shape ``components + (2m+1, 2m+1)`` with entry
    ``[a+m, b+m]`` holding the coefficient of exp(i(a x1 + b x2)).
    """
    n = coeffs.shape[-1]
    half = n // 2
    lead = coeffs.shape[:-2]
    ext = np.zeros(lead + (n + 1, n + 1), complex)
    ext[..., :n, :n] = np.fft.fftshift(coeffs, axes=(-2, -1))
    ext[..., n, :] = 0.5 * ext[..., 0, :]
    ext[..., 0, :] *= 0.5
    ext[..., :, n] = 0.5 * ext[..., :, 0]
    ext[..., :, 0] *= 0.5
    m = min(m, half)
    return ext[..., half - m:half + m + 1, half - m:half + m + 1]


def _padded_values(coeffs, M):
    """Values of the trigonometric polynomial on an M x M grid starting at 0."""
    n = coeffs.shape[-1]
    if M == n:
        return sfft.ifft2(coeffs, norm="forward")
    m = extent(coeffs)
    tab = centered_table(coeffs, m)
    idx = np.arange(-m, m + 1) % M
    buf = np.zeros(coeffs.shape[:-2] + (M, M), complex)
    buf[..., idx[:, None], idx[None, :]] = tab
    return sfft.ifft2(buf, norm="forward")


def _truncate(vals, grid: Grid):
    M = vals.shape[-1]
    c = sfft.fft2(vals, norm="forward")
    out = np.zeros(vals.shape[:-2] + (grid.n, grid.n), complex)
    idx = grid.k % M
    out[...] = c[..., idx[:, None], idx[None, :]]
    out[..., ~grid.band] = 0
    return out


def pad_size(grid: Grid, ka: int, kb: int) -> int:
    need = max(grid.n, ka + kb + grid.cutoff + 1, 2 * max(ka, kb) + 1)
    return need if need == grid.n else sfft.next_fast_len(need)


def _einsum_spec(subscripts, na, nb):
    if subscripts is None:
        return None
    lhs, out = subscripts.split("->")
    a, b = lhs.split(",")
    if len(a) != na or len(b) != nb:
        raise ValueError("subscripts do not match component ranks")
    return f"{a}XY,{b}XY->{out}XY"


def product(a: Field, b: Field, subscripts: str | None = None) -> Field:
    """Exact product of the trigonometric polynomials, truncated to the band.

    ``subscripts`` is an einsum pattern over component axes, e.g. ``"ij,j->i"``
    for a matrix acting on a vector. Without it the product broadcasts.
    """
    _check(a.grid, b)
    grid = a.grid
    M = pad_size(grid, extent(a.coeffs), extent(b.coeffs))
    va = _padded_values(a.coeffs, M)
    vb = _padded_values(b.coeffs, M)
    spec = _einsum_spec(subscripts, len(a.shape), len(b.shape))
    prod = va * vb if spec is None else np.einsum(spec, va, vb)
    return Field(grid, _truncate(prod, grid))


# norms ----------------------------------------------------------------------

def sobolev_norm(f: Field, s: float = 0.0) -> float:
    """(sum over the band of (1+|xi|^2)^s |u_hat|^2)^(1/2), summed over components."""
    g = f.grid
    w = (1.0 + g.xi_abs ** 2) ** s
    a2 = np.abs(f.coeffs) ** 2
    return float(np.sqrt(np.sum(a2 * np.where(g.band, w, 0.0))))


def homogeneous_norm(f: Field, s: float = 0.0) -> float:
    """Same as ``sobolev_norm`` with weight |xi|^(2s)."""
    g = f.grid
    with np.errstate(divide="ignore"):
        w = np.where(g.xi_abs > 0, g.xi_abs, 1.0) ** (2 * s)
    w = np.where(g.band & (g.xi_abs > 0), w, 0.0)
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2 * w)))


def l2_norm(f: Field, band: bool = True) -> float:
    """Physical L2 norm, length * (sum |u_hat|^2)^(1/2)."""
    a2 = np.abs(f.coeffs) ** 2
    if band:
        a2 = a2 * f.grid.band
    return float(f.grid.length * np.sqrt(a2.sum()))


def inner(f: Field, g: Field, band: bool = False) -> complex:
    """Physical L2 pairing  integral f * conj(g)  via Parseval."""
    _check(f.grid, g)
    p = f.coeffs * np.conj(g.coeffs)
    if band:
        p = p * f.grid.band
    return complex(f.grid.length ** 2 * p.sum())


def sobolev_inner(f: Field, g: Field, s: float) -> complex:
    _check(f.grid, g)
    w = (1.0 + f.grid.xi_abs ** 2) ** s * f.grid.band
    return complex(np.sum(w * f.coeffs * np.conj(g.coeffs)))


# cutoff profiles ------------------------------------------------------------

def _h(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    a = _h(x)
    b = _h(1.0 - np.asarray(x, float))
    return a / (a + b)


def theta(r):
    """Radial low-pass profile: 1 on |r| <= 1/2, 0 on |r| >= 1."""
    return smooth_step(2.0 - 2.0 * np.abs(r))


def phi(r):
    """Annular profile theta(r/2) - theta(r), supported in 1/2 <= |r| <= 2."""
    r = np.abs(r)
    return theta(0.5 * r) - theta(r)


# Littlewood-Paley -----------------------------------------------------------

def lp_symbols(grid: Grid):
    """Array of shape (J+1, n, n): symbols of Delta_0 .. Delta_J."""
    cache = grid.__dict__.setdefault("_lp_cache", {})
    if "blocks" not in cache:
        r = grid.xi_abs
        J = grid.J
        blocks = np.empty((J + 1,) + r.shape)
        for j in range(1, J + 1):
            blocks[j] = phi(r / 2.0 ** j)
        blocks[0] = 1.0 - blocks[1:].sum(axis=0)
        cache["blocks"] = blocks
        cache["partial"] = np.cumsum(blocks, axis=0)
    return cache["blocks"]


def partial_symbols(grid: Grid):
    lp_symbols(grid)
    return grid.__dict__["_lp_cache"]["partial"]


def block_symbol(grid: Grid, j: int):
    if not 0 <= j <= grid.J:
        raise ValueError(f"block index {j} outside 0..{grid.J}")
    return lp_symbols(grid)[j]


def partial_symbol(grid: Grid, j: int):
    """Symbol of S_j; S_j = 0 for j < 0 and S_j = S_J for j > J."""
    if j < 0:
        return np.zeros((grid.n, grid.n))
    return partial_symbols(grid)[min(j, grid.J)]


def dyadic_block(f: Field, j: int) -> Field:
    return Field(f.grid, f.coeffs * block_symbol(f.grid, j))


def partial_sum(f: Field, j: int) -> Field:
    if j > f.grid.J:
        raise ValueError(f"block index {j} outside 0..{f.grid.J}")
    return Field(f.grid, f.coeffs * partial_symbol(f.grid, j))


# mollifiers -----------------------------------------------------------------

WIDENING = 8.0


def _check_eps(eps):
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"mollifier scale must lie in (0, 1], got {eps}")


def mollify(f: Field, eps: float) -> Field:
    """J_eps f = theta(eps D) f."""
    _check_eps(eps)
    return Field(f.grid, f.coeffs * theta(eps * f.grid.xi_abs))


def high_pass(f: Field, eps: float) -> Field:
    """P_eps f = f - J_eps f."""
    _check_eps(eps)
    return Field(f.grid, f.coeffs * (1.0 - theta(eps * f.grid.xi_abs)))


def widened_high_pass(f: Field, eps: float) -> Field:
    """P_{lambda eps} with lambda = WIDENING; eps may exceed 1/lambda freely."""
    return Field(f.grid, f.coeffs * (1.0 - theta(WIDENING * eps * f.grid.xi_abs)))


# Fourier multipliers ----------------------------------------------------------

def fourier_multiplier(f: Field, symbol) -> Field:
    return Field(f.grid, f.coeffs * symbol)


def _dsym(grid: Grid, axis: int):
    x = grid.xi[axis]
    k = grid.K[axis]
    return np.where(k == -grid.n // 2, 0.0, 1j * x)


def partial(f: Field, axis: int) -> Field:
    return Field(f.grid, f.coeffs * _dsym(f.grid, axis))


def grad(f: Field) -> Field:
    """Appends a trailing component axis: grad(u)[..., j] = d_j u.

    For a vector u this is the Jacobian (Du)^i_j = d_j u^i.
    """
    g = f.grid
    c = np.stack([f.coeffs * _dsym(g, 0), f.coeffs * _dsym(g, 1)], axis=-3)
    return Field(g, c)


jacobian = grad


def perp_grad(f: Field) -> Field:
    """(-d_2 f, d_1 f)."""
    g = f.grid
    c = np.stack([-f.coeffs * _dsym(g, 1), f.coeffs * _dsym(g, 0)], axis=-3)
    return Field(g, c)


def div(u: Field) -> Field:
    """Contracts the trailing component axis."""
    g = u.grid
    c = u.coeffs[..., 0, :, :] * _dsym(g, 0) + u.coeffs[..., 1, :, :] * _dsym(g, 1)
    return Field(g, c)


def curl(u: Field) -> Field:
    g = u.grid
    c = u.coeffs[..., 1, :, :] * _dsym(g, 0) - u.coeffs[..., 0, :, :] * _dsym(g, 1)
    return Field(g, c)


def laplacian(f: Field) -> Field:
    return Field(f.grid, -f.coeffs * f.grid.xi_abs ** 2)


def _require_zero_mean(f: Field, what: str, tol: float = 1e-10):
    scale = np.max(np.abs(f.coeffs), initial=0.0)
    if np.max(np.abs(f.coeffs[..., 0, 0]), initial=0.0) > tol * max(scale, 1.0):
        raise ValueError(f"{what} requires a zero-mean field")


def inverse_laplacian(f: Field, check: bool = True) -> Field:
    if check:
        _require_zero_mean(f, "inverse Laplacian")
    r2 = f.grid.xi_abs ** 2
    inv = np.where(r2 > 0, -1.0 / np.where(r2 > 0, r2, 1.0), 0.0)
    return Field(f.grid, f.coeffs * inv)


def riesz(f: Field, axis: int) -> Field:
    """R_j with symbol i xi_j / |xi|."""
    g = f.grid
    r = g.xi_abs
    sym = np.where(r > 0, 1j * g.xi[axis] / np.where(r > 0, r, 1.0), 0.0)
    return Field(g, f.coeffs * sym)


def beurling_symbol(grid: Grid, k: int = 1):
    """((xi_1 + i xi_2)/|xi|)^(2k); equal to 1 at xi = 0."""
    x1, x2 = grid.xi
    r = grid.xi_abs
    z = np.where(r > 0, (x1 + 1j * x2) / np.where(r > 0, r, 1.0), 1.0)
    return z ** (2 * k) if k >= 0 else np.conj(z) ** (-2 * k)


def beurling(f: Field, k: int = 1) -> Field:
    return Field(f.grid, f.coeffs * beurling_symbol(f.grid, k))


def biot_savart(omega: Field) -> Field:
    """u = perp_grad(inverse_laplacian(omega)); symbol -i k_perp / |k|^2."""
    return perp_grad(inverse_laplacian(omega))


def stream_function(omega: Field) -> Field:
    return inverse_laplacian(omega)


# construction helpers ---------------------------------------------------------

def random_field(grid: Grid, rng, s: float = 3.0, kmax: int | None = None,
                 amplitude: float = 1.0, zero_mean: bool = True) -> Field:
    """Real random field with |u_hat| ~ (1+|k|^2)^(-s/2 - 1/2)."""
    kmax = grid.cutoff if kmax is None else kmax
    k1, k2 = grid.K
    mask = (np.abs(k1) <= kmax) & (np.abs(k2) <= kmax) & grid.band
    w = (1.0 + (k1 ** 2 + k2 ** 2)) ** (-0.5 * s - 0.5)
    c = (rng.standard_normal((grid.n, grid.n)) + 1j * rng.standard_normal((grid.n, grid.n))) * w * mask
    f = Field(grid, c).real_part()
    if zero_mean:
        f.coeffs[0, 0] = 0.0
    nrm = l2_norm(f) / grid.length
    return f * (amplitude / nrm) if nrm > 0 else f


def from_function(grid: Grid, fn) -> Field:
    x1, x2 = grid.X
    return transform(fn(x1, x2), grid)


# snapshots ------------------------------------------------------------------

MAGIC = b"PSHF"
VERSION = 1


def write_snapshot(path, f: Field, spectral: bool = False):
    if f.shape != ():
        raise ValueError("snapshots hold scalar fields")
    n = f.grid.n
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, n))
        if spectral:
            data = np.empty((n, n, 2), "<f8")
            data[..., 0] = f.coeffs.real
            data[..., 1] = f.coeffs.imag
        else:
            data = np.ascontiguousarray(np.real(inverse(f)), dtype="<f8")
        fh.write(data.tobytes(order="C"))


def read_snapshot(path, grid: Grid | None = None) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError("not a PSHF snapshot")
    version, n = struct.unpack("<IQ", raw[4:16])
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    body = np.frombuffer(raw[16:], dtype="<f8")
    grid = Grid(n) if grid is None else grid
    if grid.n != n:
        raise ValueError("snapshot size does not match grid")
    if body.size == n * n:
        return transform(body.reshape(n, n), grid)
    if body.size == 2 * n * n:
        d = body.reshape(n, n, 2)
        return Field(grid, d[..., 0] + 1j * d[..., 1])
    raise ValueError("truncated snapshot")
