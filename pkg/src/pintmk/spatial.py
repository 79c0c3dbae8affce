"""Spatial discretization of the heat operator.

Second-order finite differences on the unit interval/square with homogeneous
Dirichlet boundaries.  Gridpoints are interior only; boundary values are
eliminated, which keeps the operator square, symmetric and negative definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(eq=False)
class SpatialOperator:
    """Discrete diffusion operator with its grid metadata.

    ``matrix`` is tau/dx^2 times the (1, -2, 1) stencil in 1D or the
    five-point stencil in 2D, on n = n_x * n_y interior points.
    """

    dim: int
    n_x: int
    n_y: int
    delta_x: float
    tau: float
    matrix: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.n_x * self.n_y


def build_laplacian(dim: int, n_x: int, n_y: int = 1, tau: float = 1.0,
                    domain_length: float = 1.0) -> SpatialOperator:
    """Assemble the interior-point Laplacian scaled by the diffusivity.

    The spacing is domain_length / (n_x + 1); in 2D the second direction
    uses the same spacing (n_y = n_x recovers the unit square).
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if n_x < 1 or (dim == 2 and n_y < 1):
        raise ValueError("gridpoint counts must be at least 1")
    if tau <= 0:
        raise ValueError("diffusivity tau must be positive")
    if domain_length <= 0:
        raise ValueError("domain_length must be positive")

    dx = domain_length / (n_x + 1)
    scale = tau / dx**2
    stencil_1d = sp.diags(
        [np.ones(n_x - 1), -2.0 * np.ones(n_x), np.ones(n_x - 1)],
        offsets=[-1, 0, 1], format="csr",
    )
    if dim == 1:
        matrix = (scale * stencil_1d).tocsr()
        n_y = 1
    else:
        stencil_y = sp.diags(
            [np.ones(n_y - 1), -2.0 * np.ones(n_y), np.ones(n_y - 1)],
            offsets=[-1, 0, 1], format="csr",
        )
        matrix = scale * (
            sp.kron(sp.identity(n_y), stencil_1d) + sp.kron(stencil_y, sp.identity(n_x))
        )
        matrix = matrix.tocsr()
    return SpatialOperator(dim=dim, n_x=n_x, n_y=n_y, delta_x=dx, tau=tau,
                           matrix=matrix)


def courant_number(op: SpatialOperator, delta_t: float) -> float:
    """Courant number 2*tau*dt/dx^2 in 1D, 3*tau*dt/dx^2 in 2D."""
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    factor = 2.0 if op.dim == 1 else 3.0
    return factor * op.tau * delta_t / op.delta_x**2


def delta_t_for_courant(op: SpatialOperator, courant: float) -> float:
    """Time step realizing a prescribed Courant number on this grid."""
    if courant <= 0:
        raise ValueError("courant must be positive")
    factor = 2.0 if op.dim == 1 else 3.0
    return courant * op.delta_x**2 / (factor * op.tau)


def max_eigenvalue_magnitude(op: SpatialOperator) -> float:
    """|lambda_max| of the pristine operator, from the closed-form spectrum."""

    def s(m: int) -> float:
        return math.sin(m * math.pi / (2 * (m + 1))) ** 2

    val = s(op.n_x) + (s(op.n_y) if op.dim == 2 else 0.0)
    return 4.0 * op.tau / op.delta_x**2 * val


def gershgorin_bound(matrix: sp.spmatrix) -> float:
    """Row-sum bound on |lambda_max|; exact up to O(1/n^2) for our stencils."""
    return float(np.abs(matrix).sum(axis=1).max())


def initial_bump(op: SpatialOperator) -> np.ndarray:
    """Default initial state: product of half-period sines over the domain."""
    x = np.arange(1, op.n_x + 1) * op.delta_x
    u = np.sin(np.pi * x / (op.delta_x * (op.n_x + 1)))
    if op.dim == 1:
        return u
    y = np.arange(1, op.n_y + 1) * op.delta_x
    v = np.sin(np.pi * y / (op.delta_x * (op.n_y + 1)))
    return np.outer(v, u).ravel()
