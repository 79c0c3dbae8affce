"""Shared direct-solver plumbing.

Wraps a reusable factorization of a sparse matrix, picking the tridiagonal
Thomas kernel when the matrix is tridiagonal and SuperLU otherwise.  The
same object also exposes the bands needed by the compiled chain kernel.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import chain


def _extract_tridiag(matrix: sp.spmatrix):
    coo = matrix.tocoo()
    n = matrix.shape[0]
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    off = coo.col - coo.row
    for band, dest in ((-1, lower), (0, diag), (1, upper)):
        mask = off == band
        dest[coo.row[mask]] = coo.data[mask]
    return lower, diag, upper


def is_tridiagonal(matrix: sp.spmatrix) -> bool:
    coo = matrix.tocoo()
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


class Factorized:
    """Reusable direct factorization with single- and multi-RHS solves."""

    def __init__(self, matrix: sp.spmatrix):
        self.shape = matrix.shape
        n = matrix.shape[0]
        if n != matrix.shape[1]:
            raise ValueError("matrix must be square")
        self.tridiagonal = is_tridiagonal(matrix)
        if self.tridiagonal:
            self.bands = _extract_tridiag(matrix)
            lo, di, up = self.bands
            self.chain_factors = chain.factor_tridiag(lo, di, up)
            ab = np.zeros((3, n))
            ab[0, 1:] = up[:-1]
            ab[1, :] = di
            ab[2, :-1] = lo[1:]
            self._ab = ab
            self._lu = None
        else:
            try:
                self._lu = spla.splu(matrix.tocsc())
            except RuntimeError as exc:
                raise np.linalg.LinAlgError(f"factorization failed: {exc}") from exc
            self.bands = None
            self.chain_factors = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve for one vector or, column-wise, for a 2-D block of vectors."""
        if self.tridiagonal:
            from scipy.linalg import solve_banded

            return solve_banded((1, 1), self._ab, rhs, check_finite=False)
        return self._lu.solve(rhs)
