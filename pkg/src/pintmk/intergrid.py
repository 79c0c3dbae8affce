"""Intergrid (deflation) pairs and coarse time-grid systems.

Three families:

* time coarsening: identity stacks over nu-step slabs, Y = Z;
* time-space coarsening: identity stacks composed with piecewise-constant
  spatial agglomeration (Z) and agglomerate averaging (Y), so Y^T Z = I;
* reduction-style operators: coarse-point injection with ideal
  interpolation, whose Galerkin product is the Schur complement.

Coarse systems are block lower bidiagonal with constant blocks; for the
time family the Galerkin product collapses to a closed form that is again a
one-step integrator with a larger step and modified weights.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .stepper import BlockBidiagonalSystem, PartitionedSystem, StepOperators


class CoarseSystem(BlockBidiagonalSystem):
    """Block bidiagonal coarse matrix tagged with how it was built."""

    def __init__(self, diag, sub, n_steps, provenance: str,
                 dropped: tuple[int, ...] = ()):
        super().__init__(diag, sub, n_steps, dropped=dropped)
        self.provenance = provenance


def _stack_blocks(v: np.ndarray, n_rows: int) -> np.ndarray:
    return np.ascontiguousarray(v).reshape(n_rows, -1)


class TimePair:
    """Pure time coarsening: nu-fold identity stacks, Y = Z."""

    kind = "T"

    def __init__(self, n: int, nu: int, n_T: int):
        if nu < 1:
            raise ValueError("nu must be positive")
        self.n = n
        self.m = n
        self.nu = nu
        self.n_T = n_T
        self.fine_rows = nu * n_T + 1

    def restrict(self, v: np.ndarray) -> np.ndarray:
        blocks = _stack_blocks(v, self.fine_rows)
        out = np.empty((self.n_T + 1, self.n))
        out[0] = blocks[0]
        out[1:] = blocks[1:].reshape(self.n_T, self.nu, self.n).sum(axis=1)
        return out.reshape(-1) if v.ndim == 1 else out

    def interpolate(self, w: np.ndarray) -> np.ndarray:
        blocks = _stack_blocks(w, self.n_T + 1)
        out = np.empty((self.fine_rows, self.n))
        out[0] = blocks[0]
        out[1:] = np.repeat(blocks[1:], self.nu, axis=0)
        return out.reshape(-1) if w.ndim == 1 else out

    def block_matrices(self, k: int):
        """(Y_k, Z_k) for one slab; identical here."""
        if k == 0:
            z = sp.identity(self.n, format="csr")
        else:
            z = sp.vstack([sp.identity(self.n)] * self.nu, format="csr")
        return z, z

    def materialize(self):
        blocks = [self.block_matrices(k)[1] for k in range(self.n_T + 1)]
        z = sp.block_diag(blocks, format="csr")
        return z, z


class TimeSpacePair:
    """Simultaneous time and space coarsening (nu = 1 gives pure space)."""

    kind = "TS"

    def __init__(self, nu: int, n_T: int, partition: list[np.ndarray], n: int):
        if nu < 1:
            raise ValueError("nu must be positive")
        sizes = np.array([len(g) for g in partition])
        if sizes.min() == 0:
            raise ValueError("empty agglomerate")
        flat = np.concatenate(partition)
        if len(np.unique(flat)) != n or len(flat) != n:
            raise ValueError("partition must cover all indices exactly once")
        self.nu = nu
        self.n_T = n_T
        self.n = n
        self.m = len(partition)
        self.partition = partition
        self.fine_rows = nu * n_T + 1
        rows = flat
        cols = np.repeat(np.arange(self.m), sizes)
        data = np.ones(n)
        self.z_space = sp.csr_matrix((data, (rows, cols)), shape=(n, self.m))
        self.y_space = sp.csr_matrix((np.repeat(1.0 / sizes, sizes), (rows, cols)),
                                     shape=(n, self.m))

    def restrict(self, v: np.ndarray) -> np.ndarray:
        blocks = _stack_blocks(v, self.fine_rows)
        out = np.empty((self.n_T + 1, self.m))
        out[0] = blocks[0] @ self.y_space
        summed = blocks[1:].reshape(self.n_T, self.nu, self.n).sum(axis=1)
        out[1:] = summed @ self.y_space
        return out.reshape(-1) if v.ndim == 1 else out

    def interpolate(self, w: np.ndarray) -> np.ndarray:
        blocks = _stack_blocks(w, self.n_T + 1)
        fine = blocks @ self.z_space.T
        out = np.empty((self.fine_rows, self.n))
        out[0] = fine[0]
        out[1:] = np.repeat(fine[1:], self.nu, axis=0)
        return out.reshape(-1) if w.ndim == 1 else out

    def block_matrices(self, k: int):
        if k == 0:
            return self.y_space, self.z_space
        y = sp.vstack([self.y_space] * self.nu, format="csr")
        z = sp.vstack([self.z_space] * self.nu, format="csr")
        return y, z

    def materialize(self):
        ys, zs = zip(*(self.block_matrices(k) for k in range(self.n_T + 1)))
        return sp.block_diag(ys, format="csr"), sp.block_diag(zs, format="csr")


class MgritPair:
    """Coarse-point injection with ideal interpolation.

    Interpolation fills each slab by propagating the left coarse value
    through the fine steps with zero forcing, so its action needs one
    implicit solve per fine point; that cost is the family's hallmark.
    """

    kind = "MGRIT"

    def __init__(self, ops: StepOperators, nu: int, n_T: int):
        self.ops = ops
        self.n = ops.n
        self.m = ops.n
        self.nu = nu
        self.n_T = n_T
        self.fine_rows = nu * n_T + 1

    def restrict(self, v: np.ndarray) -> np.ndarray:
        blocks = _stack_blocks(v, self.fine_rows)
        out = blocks[::self.nu].copy()
        return out.reshape(-1) if v.ndim == 1 else out

    def interpolate(self, w: np.ndarray) -> np.ndarray:
        blocks = _stack_blocks(w, self.n_T + 1)
        out = np.zeros((self.fine_rows, self.n))
        out[::self.nu] = blocks
        fact = self.ops.psi_factorization
        current = blocks[:-1]
        for j in range(1, self.nu):
            rhs = (current @ self.ops.phi).T
            current = np.ascontiguousarray(fact.solve(rhs).T)
            out[j::self.nu] = current
        return out.reshape(-1) if w.ndim == 1 else out

    def materialize_dense(self, part: PartitionedSystem):
        """Dense (Y, Z) in the unpermuted ordering (desk scale only)."""
        n, nu, n_T = self.n, self.nu, self.n_T
        rows = self.fine_rows * n
        cols = (n_T + 1) * n
        y = np.zeros((rows, cols))
        z = np.zeros((rows, cols))
        eye = np.eye(n)
        for k in range(n_T + 1):
            y[k * nu * n:(k * nu + 1) * n, k * n:(k + 1) * n] = eye
        z[:] = y
        prop = np.linalg.solve(self.ops.psi.toarray(), self.ops.phi.toarray())
        for k in range(n_T):
            block = eye
            for j in range(1, nu):
                block = prop @ block
                r0 = (k * nu + j) * n
                z[r0:r0 + n, k * n:(k + 1) * n] = block
        return y, z


def build_t_pair(n: int, nu: int, n_T: int) -> TimePair:
    return TimePair(n, nu, n_T)


def build_ts_pair(n: int, nu: int, n_T: int, partition) -> TimeSpacePair:
    return TimeSpacePair(nu=nu, n_T=n_T, partition=list(partition), n=n)


def build_mgrit_pair(part: PartitionedSystem) -> MgritPair:
    return MgritPair(ops=part.fine.ops, nu=part.nu, n_T=part.n_T)


def agglomerate_partition(n_x: int, n_y: int = 1):
    """Factor-2 agglomeration per direction; leftovers join the last group.

    Returns (groups, (m_x, m_y)) with groups listing fine indices per coarse
    point in row-major coarse order.
    """
    def ranges(count: int):
        m = count // 2
        if m == 0:
            raise ValueError("grid too small to agglomerate")
        edges = [(2 * i, 2 * i + 2) for i in range(m)]
        lo, _ = edges[-1]
        edges[-1] = (lo, count)
        return edges

    x_edges = ranges(n_x)
    if n_y == 1:
        groups = [np.arange(a, b) for a, b in x_edges]
        return groups, (len(x_edges), 1)
    y_edges = ranges(n_y)
    groups = []
    for ya, yb in y_edges:
        for xa, xb in x_edges:
            idx = [iy * n_x + ix for iy in range(ya, yb) for ix in range(xa, xb)]
            groups.append(np.array(idx))
    return groups, (len(x_edges), len(y_edges))


def galerkin_coarse(pair, part: PartitionedSystem) -> CoarseSystem:
    """Generic sandwich product Y_k^T A_kk Z_k on the slab blocks (desk scale)."""
    y1, z1 = pair.block_matrices(1)
    diag = (y1.T @ part.diag_block(1) @ z1).tocsr()
    y0, z0 = pair.block_matrices(0)
    sub_block = (y1.T @ part.sub_block(1) @ z0).tocsr()
    eye_check = (y0.T @ part.diag_block(0) @ z0).toarray()
    if not np.allclose(eye_check, np.eye(pair.m), atol=1e-12):
        raise ValueError("leading coarse block is not the identity")
    return CoarseSystem(diag=diag, sub=(-sub_block).tocsr(), n_steps=part.n_T,
                        provenance="galerkin")


def closed_form_t_coarse(ops: StepOperators, nu: int, n_T: int) -> CoarseSystem:
    """Time-coarsened Galerkin system in closed form.

    The slab sums give nu*psi - (nu-1)*phi = I - (nu-1+theta)*dt*A on the
    diagonal and the unchanged -phi below it: a one-step scheme with step
    nu*dt whose explicit weight is (1-theta)/nu.
    """
    cfg = ops.config
    n = ops.n
    eye = sp.identity(n, format="csr")
    diag = (eye - (nu - 1 + cfg.theta) * cfg.delta_t * ops.spatial.matrix).tocsr()
    sub = (eye + (1 - cfg.theta) * cfg.delta_t * ops.spatial.matrix).tocsr()
    return CoarseSystem(diag=diag, sub=sub, n_steps=n_T, provenance="closed_form")


def closed_form_ts_coarse(ops: StepOperators, pair: TimeSpacePair) -> CoarseSystem:
    """Time-space Galerkin system via the agglomerated spatial operator."""
    cfg = ops.config
    nu = pair.nu
    a_c = (pair.y_space.T @ ops.spatial.matrix @ pair.z_space).tocsr()
    eye = sp.identity(pair.m, format="csr")
    diag = (eye - (nu - 1 + cfg.theta) * cfg.delta_t * a_c).tocsr()
    sub = (eye + (1 - cfg.theta) * cfg.delta_t * a_c).tocsr()
    return CoarseSystem(diag=diag, sub=sub, n_steps=pair.n_T,
                        provenance="closed_form")


def rediscretized_coarse(ops: StepOperators, nu: int, n_T: int) -> CoarseSystem:
    """Coarse matrix from re-discretizing with step nu*dt at the same theta
    (the parareal coarse propagator, also used with the reduction pair)."""
    cfg = ops.config
    big_dt = nu * cfg.delta_t
    n = ops.n
    eye = sp.identity(n, format="csr")
    diag = (eye - cfg.theta * big_dt * ops.spatial.matrix).tocsr()
    sub = (eye + (1 - cfg.theta) * big_dt * ops.spatial.matrix).tocsr()
    return CoarseSystem(diag=diag, sub=sub, n_steps=n_T,
                        provenance="rediscretized")


def mgrit_galerkin_dense(part: PartitionedSystem) -> np.ndarray:
    """Schur complement Y^T A Z for the reduction pair (dense desk oracle)."""
    nu = part.nu
    n = part.n
    a = part.fine.to_dense()
    idx = np.arange(part.fine.n_steps + 1)
    c_rows = idx % nu == 0
    c_idx = np.repeat(c_rows, n)
    f_idx = ~c_idx
    a_ff = a[np.ix_(f_idx, f_idx)]
    a_fc = a[np.ix_(f_idx, c_idx)]
    a_cf = a[np.ix_(c_idx, f_idx)]
    a_cc = a[np.ix_(c_idx, c_idx)]
    return a_cc - a_cf @ np.linalg.solve(a_ff, a_fc)


def perturb_decouple(cs: CoarseSystem, n_cgs: int) -> CoarseSystem:
    """Zero the couplings at balanced chunk boundaries, decoupling the chain.

    Dropping n_cgs couplings (always including the one into the first step
    row) yields n_cgs equal chunks plus the trivial initial-value row; with
    n_cgs >= n_T the system becomes fully block diagonal.
    """
    if not 1 <= n_cgs <= cs.n_steps + 1:
        raise ValueError(f"n_cgs must be in [1, {cs.n_steps + 1}]")
    chunks = np.array_split(np.arange(1, cs.n_steps + 1), min(n_cgs, cs.n_steps))
    dropped = tuple(int(c[0]) for c in chunks if len(c))
    return CoarseSystem(diag=cs.diag, sub=cs.sub, n_steps=cs.n_steps,
                        provenance="perturbed", dropped=dropped)
