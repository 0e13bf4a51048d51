"""Off-grid evaluation of band-limited fields (composition f o chi).

The compiled kernel is used when the extension is importable, otherwise the
numpy implementation. ``BACKEND`` names the active choice.
"""

import os

import numpy as np

from . import _trig_py
from .spectral import Field, centered_table, extent

try:
    if os.environ.get("PARALAB_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from ._kernels import eval_trig as _eval_compiled
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build
    _eval_compiled = None
    BACKEND = "numpy"


def backends():
    out = {"numpy": _trig_py.eval_trig}
    if _eval_compiled is not None:
        out["compiled"] = _eval_compiled
    return out


def eval_trig(table, scale, x1, x2):
    if _eval_compiled is not None:
        return _eval_compiled(table, scale, x1, x2)
    return _trig_py.eval_trig(table, scale, x1, x2)


def effective_extent(coeffs, tol=1e-16):
    """Largest |k| whose coefficient exceeds tol * max|coefficient|."""
    big = np.max(np.abs(coeffs), initial=0.0)
    if big == 0.0:
        return 0
    return extent(np.where(np.abs(coeffs) > tol * big, coeffs, 0))


def evaluate(f: Field, x1, x2, real=None, tol=1e-16):
    """Values of ``f`` at arbitrary points (x1, x2) by direct trig summation.

    Modes below ``tol`` times the largest coefficient are skipped when they
    sit outside the kept square. Output shape is ``f.shape + x1.shape``. With
    ``real=None`` the imaginary part is dropped when it is round-off.
    """
    x1 = np.asarray(x1, float)
    x2 = np.asarray(x2, float)
    m = effective_extent(f.coeffs, tol)
    tab = centered_table(f.coeffs, m)
    lead = f.shape
    tab = tab.reshape((-1,) + tab.shape[-2:])
    vals = eval_trig(tab, f.grid.scale, x1.ravel(), x2.ravel())
    vals = vals.reshape(lead + x1.shape)
    if real is None:
        scale = np.max(np.abs(vals), initial=0.0)
        real = np.max(np.abs(vals.imag), initial=0.0) <= 1e-10 * max(scale, 1e-300)
    return vals.real if real else vals


def compose(f: Field, chi_values) -> Field:
    """Transform of the samples of f o chi, chi given by its node values (2, n, n)."""
    from .spectral import transform
    vals = evaluate(f, chi_values[0], chi_values[1])
    return transform(vals, f.grid)
