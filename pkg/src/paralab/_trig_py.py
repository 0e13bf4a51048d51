"""Pure numpy evaluation of 2D trigonometric polynomials at scattered points."""

import numpy as np

CHUNK = 4096


def eval_trig(table, scale, x1, x2):
    """Evaluate sum_{a,b} table[c, a+m, b+m] exp(i scale (a x1 + b x2)).

    table: complex array (C, 2m+1, 2m+1); x1, x2: float arrays (P,).
    Returns a complex array (C, P).
    """
    table = np.ascontiguousarray(table, dtype=complex)
    x1 = np.ascontiguousarray(x1, dtype=float).ravel()
    x2 = np.ascontiguousarray(x2, dtype=float).ravel()
    C, L, _ = table.shape
    m = (L - 1) // 2
    a = scale * np.arange(-m, m + 1)
    P = x1.size
    out = np.empty((C, P), complex)
    tT = np.ascontiguousarray(np.swapaxes(table, 1, 2))
    for s in range(0, P, CHUNK):
        e = min(P, s + CHUNK)
        e1 = np.exp(1j * np.outer(x1[s:e], a))
        e2 = np.exp(1j * np.outer(x2[s:e], a))
        for c in range(C):
            w = e2 @ tT[c]
            out[c, s:e] = np.einsum("pa,pa->p", e1, w)
    return out
