"""Maps of the torus written as identity plus a periodic displacement."""

from __future__ import annotations

import numpy as np

from . import spectral as sp
from .spectral import Field


def identity_matrix(grid) -> Field:
    c = np.zeros((2, 2, grid.n, grid.n), complex)
    c[0, 0, 0, 0] = c[1, 1, 0, 0] = 1.0
    return Field(grid, c)


def adjugate(A: Field) -> Field:
    """[[d, -b], [-c, a]]; equals the inverse when det A = 1."""
    c = A.coeffs
    return Field(A.grid, np.stack([np.stack([c[1, 1], -c[0, 1]]),
                                   np.stack([-c[1, 0], c[0, 0]])]))


def operator_norms(A):
    """Largest singular value of 2x2 matrices given as arrays (2, 2, ...)."""
    a, b, c, d = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
    fro2 = a * a + b * b + c * c + d * d
    det = a * d - b * c
    return np.sqrt(0.5 * (fro2 + np.sqrt(np.maximum(fro2 * fro2 - 4 * det * det, 0.0))))


class FlowMap:
    """chi(x) = x + displacement(x), displacement periodic."""

    def __init__(self, displacement: Field, t: float = 0.0):
        if displacement.shape != (2,):
            raise ValueError("displacement must be a vector field")
        self.displacement = displacement
        self.t = float(t)

    @classmethod
    def identity(cls, grid, t=0.0):
        return cls(Field.zeros(grid, (2,)), t)

    @classmethod
    def from_function(cls, grid, fn, t=0.0):
        """fn(x1, x2) -> (d1, d2) periodic displacement samples."""
        x1, x2 = grid.X
        d1, d2 = fn(x1, x2)
        d1 = np.broadcast_to(d1, x1.shape)
        d2 = np.broadcast_to(d2, x1.shape)
        return cls(sp.transform(np.stack([d1, d2]), grid), t)

    @property
    def grid(self):
        return self.displacement.grid

    def displacement_values(self):
        return np.real(sp.inverse(self.displacement))

    def points(self):
        """Node images, shape (2, n, n)."""
        x1, x2 = self.grid.X
        d = self.displacement_values()
        return np.stack([x1 + d[0], x2 + d[1]])

    @property
    def jacobian(self) -> Field:
        """(D chi)^i_j = delta_ij + d_j chi~^i."""
        return identity_matrix(self.grid) + sp.jacobian(self.displacement)

    @property
    def inverse_jacobian(self) -> Field:
        return adjugate(self.jacobian)

    def jacobian_values(self):
        return np.real(sp.inverse(self.jacobian))

    def det_values(self):
        A = self.jacobian_values()
        return A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]

    def det_error(self):
        return float(np.max(np.abs(self.det_values() - 1.0)))

    def lipschitz(self):
        return float(np.max(operator_norms(self.jacobian_values())))

    def mean_displacement(self):
        return np.real(self.displacement.coeffs[:, 0, 0])

    def max_displacement(self):
        return float(np.max(np.abs(self.displacement_values())))

    def is_identity(self):
        return not np.any(self.displacement.coeffs)


class InverseFlow(FlowMap):
    """Back-to-labels map phi = Phi^-1, same representation."""
