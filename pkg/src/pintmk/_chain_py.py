"""Pure-Python fallback for the time-chain kernel.

Same contract as the compiled ``_chain`` module; per-step work goes through
LAPACK's banded solver, so only the Python-level stepping overhead differs.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def factor_tridiag(lower, diag, upper):
    # The fallback re-solves from the bands each step; pack them once here.
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return ab, None


def march_chain(ab, _pivot, upper, b_lower, b_diag, b_upper, u0, forcing, n_steps):
    n = u0.shape[0]
    out = np.empty((n_steps + 1, n))
    out[0] = u0
    for k in range(n_steps):
        rhs = b_diag * out[k]
        rhs[1:] += b_lower[1:] * out[k, :-1]
        rhs[:-1] += b_upper[:-1] * out[k, 1:]
        if forcing is not None:
            rhs += forcing[k]
        out[k + 1] = solve_banded((1, 1), ab, rhs, check_finite=False)
    return out
