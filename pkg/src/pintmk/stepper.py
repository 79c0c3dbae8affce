"""Theta-scheme time integration and the all-at-once fine system.

One implicit/explicit operator pair (psi, phi) defines both the sequential
marching oracle and the block lower bidiagonal space-time system.  The same
block-bidiagonal container is reused for every coarse level, where the
blocks come from Galerkin or rediscretized constructions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .linalg import Factorized
from .spatial import SpatialOperator


@dataclass
class ThetaSchemeConfig:
    """Scheme parameter, step size and step count of the time integration."""

    theta: float
    delta_t: float
    n_t: int

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.n_t < 1:
            raise ValueError("n_t must be at least 1")

    @property
    def final_time(self) -> float:
        return self.n_t * self.delta_t


@dataclass(eq=False)
class StepOperators:
    """Single-step operators: psi u_k = phi u_{k-1} + dt * forcing."""

    phi: sp.csr_matrix
    psi: sp.csr_matrix
    psi_factorization: Factorized
    spatial: SpatialOperator
    config: ThetaSchemeConfig

    @property
    def n(self) -> int:
        return self.phi.shape[0]


def build_step_operators(op: SpatialOperator, cfg: ThetaSchemeConfig) -> StepOperators:
    """phi = I + (1-theta) dt A, psi = I - theta dt A, psi prefactored."""
    n = op.n
    eye = sp.identity(n, format="csr")
    phi = (eye + (1.0 - cfg.theta) * cfg.delta_t * op.matrix).tocsr()
    psi = (eye - cfg.theta * cfg.delta_t * op.matrix).tocsr()
    return StepOperators(phi=phi, psi=psi, psi_factorization=Factorized(psi),
                         spatial=op, config=cfg)


class BlockBidiagonalSystem:
    """Block lower bidiagonal matrix [I; -B, D; ...; -B, D] with constant blocks.

    D (``diag``) is the implicit-side block, B (``sub``) the coupling block.
    Vectors are stacked as (n_steps + 1, n) arrays or flat 1-D views of the
    same layout.
    """

    def __init__(self, diag: sp.csr_matrix, sub: sp.csr_matrix, n_steps: int,
                 dropped: tuple[int, ...] = ()):
        self.diag = diag.tocsr()
        self.sub = sub.tocsr()
        self.n_steps = n_steps
        self.n = diag.shape[0]
        self.dropped = tuple(sorted(dropped))
        self._fact: Factorized | None = None

    @property
    def total_dim(self) -> int:
        return (self.n_steps + 1) * self.n

    @property
    def diag_factorization(self) -> Factorized:
        if self._fact is None:
            self._fact = Factorized(self.diag)
        return self._fact

    def _blocks(self, v: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(v).reshape(self.n_steps + 1, self.n)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Apply the block matrix; preserves the input's (flat or 2-D) shape."""
        blocks = self._blocks(v)
        out = np.empty_like(blocks)
        out[0] = blocks[0]
        # diag and sub are symmetric, so row-block form maps to right-products
        out[1:] = blocks[1:] @ self.diag - blocks[:-1] @ self.sub
        for k in self.dropped:
            out[k] += blocks[k - 1] @ self.sub
        return out.reshape(np.shape(v))

    def segment_rows(self) -> list[tuple[int, int]]:
        """Half-open row ranges [a, b) of independently solvable chains."""
        cuts = [c for c in self.dropped if c > 1]
        starts = [1] + cuts
        ends = cuts + [self.n_steps + 1]
        return list(zip(starts, ends))

    def forward_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Direct solve by block forward substitution (honors dropped blocks)."""
        blocks = self._blocks(rhs)
        out = np.empty_like(blocks)
        out[0] = blocks[0]
        fact = self.diag_factorization
        dropped = set(self.dropped)
        if fact.tridiagonal:
            from . import chain

            mult_or_ab, pivot = fact.chain_factors
            _, _, up = fact.bands
            bl, bd, bu = _tridiag_bands(self.sub)
            for a, b in self.segment_rows():
                if a in dropped:
                    out[a] = fact.solve(blocks[a])
                    first = a + 1
                else:
                    first = a
                steps = b - first
                if steps > 0:
                    traj = chain.march_chain(
                        mult_or_ab, pivot, up, bl, bd, bu,
                        np.ascontiguousarray(out[first - 1]),
                        np.ascontiguousarray(blocks[first:b]), steps)
                    out[first:b] = traj[1:]
        else:
            for k in range(1, self.n_steps + 1):
                b = blocks[k].copy()
                if k not in dropped:
                    b += out[k - 1] @ self.sub
                out[k] = fact.solve(b)
        return out.reshape(np.shape(rhs))

    def to_dense(self) -> np.ndarray:
        """Desk-scale dense assembly (tests and spectral work only)."""
        n, m = self.n, self.n_steps
        out = np.zeros(((m + 1) * n, (m + 1) * n))
        out[:n, :n] = np.eye(n)
        dd = self.diag.toarray()
        ss = self.sub.toarray()
        for k in range(1, m + 1):
            out[k * n:(k + 1) * n, k * n:(k + 1) * n] = dd
            if k not in self.dropped:
                out[k * n:(k + 1) * n, (k - 1) * n:k * n] = -ss
        return out


def _tridiag_bands(matrix: sp.spmatrix):
    from .linalg import _extract_tridiag

    return _extract_tridiag(matrix)


class FineSystem(BlockBidiagonalSystem):
    """All-at-once system for the fine theta-scheme, with its right-hand side."""

    def __init__(self, ops: StepOperators, u0: np.ndarray,
                 forcing: np.ndarray | None = None):
        if u0.shape != (ops.n,):
            raise ValueError(f"u0 must have shape ({ops.n},)")
        if forcing is not None and forcing.shape != (ops.config.n_t, ops.n):
            raise ValueError("forcing must have shape (n_t, n)")
        super().__init__(diag=ops.psi, sub=ops.phi, n_steps=ops.config.n_t)
        self.ops = ops
        self.u0 = u0
        self.forcing = forcing
        rhs = np.zeros((ops.config.n_t + 1, ops.n))
        rhs[0] = u0
        if forcing is not None:
            rhs[1:] = ops.config.delta_t * forcing
        self.rhs = rhs

    @property
    def n_t(self) -> int:
        return self.n_steps

    def relative_residual(self, u: np.ndarray) -> float:
        r = self.rhs - self._blocks(self.matvec(u))
        return float(np.linalg.norm(r.ravel()) / np.linalg.norm(self.rhs.ravel()))


def assemble_fine_system(ops: StepOperators, u0: np.ndarray,
                         forcing: np.ndarray | None = None) -> FineSystem:
    return FineSystem(ops, u0, forcing)


def sequential_solve(ops: StepOperators, u0: np.ndarray,
                     forcing: np.ndarray | None = None) -> np.ndarray:
    """Time-march the scheme; the convergence oracle for every iterative solver."""
    if u0.shape != (ops.n,):
        raise ValueError(f"u0 must have shape ({ops.n},)")
    n_t = ops.config.n_t
    dt = ops.config.delta_t
    fact = ops.psi_factorization
    if fact.tridiagonal:
        from . import chain

        mult_or_ab, pivot = fact.chain_factors
        lo, di, up = fact.bands
        bl, bd, bu = _tridiag_bands(ops.phi)
        f = None if forcing is None else np.ascontiguousarray(dt * forcing)
        return chain.march_chain(mult_or_ab, pivot, up, bl, bd, bu,
                                 np.ascontiguousarray(u0), f, n_t)
    out = np.empty((n_t + 1, ops.n))
    out[0] = u0
    for k in range(1, n_t + 1):
        b = out[k - 1] @ ops.phi
        if forcing is not None:
            b = b + dt * forcing[k - 1]
        out[k] = fact.solve(b)
    return out


def relative_residual(system: FineSystem, u: np.ndarray) -> float:
    return system.relative_residual(u)


@dataclass(eq=False)
class PartitionedSystem:
    """The fine system re-blocked into nu-step time slabs.

    Block row 0 is the initial-condition identity; block row k >= 1 couples
    slab k to slab k-1 through a single phi entry in its top-right corner.
    """

    fine: FineSystem
    nu: int
    n_T: int = field(init=False)

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be at least 1")
        if self.fine.n_t % self.nu != 0:
            raise ValueError(f"nu={self.nu} does not divide n_t={self.fine.n_t}")
        self.n_T = self.fine.n_t // self.nu

    @property
    def n(self) -> int:
        return self.fine.n

    def fine_index(self, k: int, offset: int) -> int:
        """Map slab index and in-slab offset to the fine block row."""
        if k == 0:
            return 0
        return self.nu * (k - 1) + 1 + offset

    def diag_block(self, k: int) -> sp.csr_matrix:
        """Assembled slab-diagonal block (desk scale)."""
        if k == 0:
            return sp.identity(self.n, format="csr")
        nu, psi, phi = self.nu, self.fine.diag, self.fine.sub
        rows = []
        for i in range(nu):
            row = [None] * nu
            row[i] = psi
            if i > 0:
                row[i - 1] = -phi
            rows.append(row)
        return sp.bmat(rows, format="csr")

    def sub_block(self, k: int) -> sp.csr_matrix:
        """Assembled coupling block from slab k-1 to slab k (desk scale)."""
        if not 1 <= k <= self.n_T:
            raise ValueError("sub blocks exist for 1 <= k <= n_T")
        nu, phi = self.nu, self.fine.sub
        prev_cols = self.n if k == 1 else nu * self.n
        block = sp.lil_matrix((nu * self.n, prev_cols))
        block[:self.n, prev_cols - self.n:] = -phi
        return block.tocsr()

    def flatten_to_dense(self) -> np.ndarray:
        """Reassemble the partition into one dense matrix (round-trip tests)."""
        sizes = [self.n] + [self.nu * self.n] * self.n_T
        offsets = np.concatenate(([0], np.cumsum(sizes)))
        total = offsets[-1]
        out = np.zeros((total, total))
        for k in range(self.n_T + 1):
            sl = slice(offsets[k], offsets[k + 1])
            out[sl, sl] = self.diag_block(k).toarray()
            if k >= 1:
                out[sl, offsets[k - 1]:offsets[k]] = self.sub_block(k).toarray()
        return out


def partition_system(system: FineSystem, nu: int) -> PartitionedSystem:
    return PartitionedSystem(fine=system, nu=nu)
