"""Parareal iteration and its two-grid reformulation.

The two formulations produce identical iterands: the fine sweep over the
time slabs is the slab-local forward solve hidden in the modified block
Jacobi smoother, and the sequential coarse correction is the coarse-grid
solve.  The restriction blocks used here are Psi * psi^{-1} at the slab
endpoints, which is what makes the coarse correction reproduce the parareal
update exactly (verified against dense assembly in the tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intergrid import CoarseSystem, rediscretized_coarse
from .reports import SolveReport
from .stepper import FineSystem, StepOperators, build_step_operators, ThetaSchemeConfig
from .spatial import SpatialOperator


def build_coarse_propagator(ops: StepOperators, nu: int) -> StepOperators:
    """Step operators rediscretized with the slab-sized step nu*dt."""
    cfg = ops.config
    coarse_cfg = ThetaSchemeConfig(theta=cfg.theta, delta_t=nu * cfg.delta_t,
                                   n_t=cfg.n_t // nu)
    return build_step_operators(ops.spatial, coarse_cfg)


def _propagate_slabs(ops: StepOperators, starts: np.ndarray, nu: int,
                     forcing: np.ndarray | None):
    """March nu fine steps from every slab start at once.

    Returns the (n_T, nu, n) in-slab trajectories; forcing uses the fine
    index nu*(k-1)+j for step j of slab k.
    """
    n_T, n = starts.shape
    dt = ops.config.delta_t
    fact = ops.psi_factorization
    out = np.empty((n_T, nu, n))
    current = starts
    for j in range(1, nu + 1):
        rhs = current @ ops.phi
        if forcing is not None:
            rhs = rhs + dt * forcing[j - 1::nu][:n_T]
        current = np.ascontiguousarray(fact.solve(rhs.T).T)
        out[:, j - 1, :] = current
    return out


def exact_coarse_step(ops: StepOperators, nu: int, states: np.ndarray,
                      forcing: np.ndarray | None = None) -> np.ndarray:
    """Slab propagator: the composition of nu fine steps (with forcing
    accumulated the same way), applied to a batch of states."""
    states = np.atleast_2d(states)
    return _propagate_slabs(ops, states, nu, forcing)[:, -1, :]


def parareal_solve(fine: StepOperators, coarse: StepOperators, nu: int,
                   u0: np.ndarray, forcing: np.ndarray | None = None,
                   max_sweeps: int = 50, tol: float = 1e-6,
                   coarse_forcing: np.ndarray | None = None):
    """Parareal iteration; returns (trajectory, report) with one recorded
    iterand per sweep.

    Sweep structure: slab-parallel fine propagation from the current coarse
    values, then the sequential coarse correction
    U_k = fine_end_k + Psi^{-1} Phi (U_{k-1}^new - U_{k-1}^old),
    whose result is written back into the fine trajectory at slab endpoints.
    """
    cfg = fine.config
    if cfg.n_t % nu != 0:
        raise ValueError(f"nu={nu} does not divide n_t={cfg.n_t}")
    n_T = cfg.n_t // nu
    n = fine.n
    system = FineSystem(fine, u0, forcing)

    # coarse seed sweep
    big_u = np.empty((n_T + 1, n))
    big_u[0] = u0
    cfact = coarse.psi_factorization
    for k in range(1, n_T + 1):
        rhs = big_u[k - 1] @ coarse.phi
        if coarse_forcing is not None:
            rhs = rhs + coarse.config.delta_t * coarse_forcing[k - 1]
        big_u[k] = cfact.solve(rhs)

    u = np.zeros((cfg.n_t + 1, n))
    u[::nu] = big_u

    report = SolveReport(method="parareal", tol=tol)
    iterands = []
    for sweep in range(1, max_sweeps + 1):
        slabs = _propagate_slabs(fine, big_u[:-1], nu, forcing)
        u[1:] = slabs.reshape(n_T * nu, n)
        fine_ends = slabs[:, -1, :]
        new_u = np.empty_like(big_u)
        new_u[0] = u0
        for k in range(1, n_T + 1):
            delta = new_u[k - 1] - big_u[k - 1]
            new_u[k] = fine_ends[k - 1] + cfact.solve(delta @ coarse.phi)
        big_u = new_u
        u[::nu] = big_u
        iterands.append(u.copy())
        res = system.relative_residual(u)
        report.residual_history.append(res)
        report.outer_iterations = sweep
        if res <= tol:
            report.converged = True
            break
    report.metadata["iterands"] = iterands
    return u, report


@dataclass(eq=False)
class TwoGridComponents:
    """Prolongation, restriction and slab smoother of the two-grid form."""

    ops: StepOperators
    nu: int
    n_T: int

    @property
    def n(self) -> int:
        return self.ops.n

    @property
    def fine_rows(self) -> int:
        return self.nu * self.n_T + 1

    def _blocks(self, v):
        return np.ascontiguousarray(v).reshape(-1, self.n)

    def apply_prolongation(self, w: np.ndarray) -> np.ndarray:
        blocks = self._blocks(w)
        out = np.zeros((self.fine_rows, self.n))
        out[::self.nu] = blocks
        return out.reshape(-1) if w.ndim == 1 else out

    def apply_restriction(self, r: np.ndarray, coarse: StepOperators) -> np.ndarray:
        """Slab-endpoint restriction weighted by Psi psi^{-1}."""
        blocks = self._blocks(r)
        endpoint = blocks[::self.nu]
        tmp = self.ops.psi_factorization.solve(endpoint.T).T
        out = np.ascontiguousarray(tmp @ coarse.psi)
        return out.reshape(-1) if r.ndim == 1 else out

    def apply_smoother(self, r: np.ndarray) -> np.ndarray:
        """I_J M_J^{-1} r: slab-local forward solves, zeroed at slab endpoints."""
        blocks = self._blocks(r)
        n_T, nu, n = self.n_T, self.nu, self.n
        fact = self.ops.psi_factorization
        out = np.zeros_like(blocks)
        prev = np.zeros((n_T, n))
        prev[0] = blocks[0]
        for j in range(1, nu + 1):
            rhs = prev @ self.ops.phi + blocks[j::nu][:n_T]
            prev = np.ascontiguousarray(fact.solve(rhs.T).T)
            if j < nu:
                out[j::nu] = prev
        return out.reshape(-1) if r.ndim == 1 else out

    def materialize_dense(self, coarse: StepOperators):
        """Dense (P, R, M_J, I_J) for the error-operator oracle (desk scale)."""
        n, nu, n_T = self.n, self.nu, self.n_T
        rows = self.fine_rows * n
        cols = (n_T + 1) * n
        eye = np.eye(n)
        p = np.zeros((rows, cols))
        r = np.zeros((cols, rows))
        r_block = coarse.psi.toarray() @ np.linalg.inv(self.ops.psi.toarray())
        for k in range(n_T + 1):
            p[k * nu * n:(k * nu + 1) * n, k * n:(k + 1) * n] = eye
            r[k * n:(k + 1) * n, k * nu * n:(k * nu + 1) * n] = r_block
        m_j = np.zeros((rows, rows))
        psi = self.ops.psi.toarray()
        phi = self.ops.phi.toarray()
        m_j[:n, :n] = eye
        for i in range(1, self.fine_rows):
            sl = slice(i * n, (i + 1) * n)
            m_j[sl, sl] = psi
            # slab-leading rows (first row after each slab endpoint, beyond
            # the first slab) drop the coupling into the previous slab
            slab_leader = i > nu and (i - 1) % nu == 0
            if not slab_leader:
                m_j[sl, (i - 1) * n:i * n] = -phi
        i_j = np.eye(rows)
        for k in range(n_T + 1):
            sl = slice(k * nu * n, (k * nu + 1) * n)
            i_j[sl, sl] = 0.0
        return p, r, m_j, i_j


def build_two_grid_components(ops: StepOperators, nu: int) -> TwoGridComponents:
    if ops.config.n_t % nu != 0:
        raise ValueError(f"nu={nu} does not divide n_t={ops.config.n_t}")
    return TwoGridComponents(ops=ops, nu=nu, n_T=ops.config.n_t // nu)


def two_grid_solve(system: FineSystem, comps: TwoGridComponents,
                   coarse_system: CoarseSystem, coarse: StepOperators,
                   max_cycles: int = 50, tol: float = 1e-6,
                   coarse_forcing: np.ndarray | None = None):
    """Two-grid cycle: slab smoothing, endpoint restriction, coarse solve,
    prolongated correction.  Produces the parareal iterand sequence."""
    n = system.n
    n_T = comps.n_T
    f_h = system.rhs
    f_coarse = np.zeros((n_T + 1, n))
    f_coarse[0] = system.u0
    if coarse_forcing is not None:
        f_coarse[1:] = coarse.config.delta_t * coarse_forcing
    u = comps.apply_prolongation(coarse_system.forward_solve(f_coarse))

    report = SolveReport(method="two_grid", tol=tol)
    iterands = []
    for cycle in range(1, max_cycles + 1):
        resid = f_h - system._blocks(system.matvec(u))
        u_tilde = u + comps.apply_smoother(resid)
        resid = f_h - system._blocks(system.matvec(u_tilde))
        d = coarse_system.forward_solve(comps.apply_restriction(resid, coarse))
        u = u_tilde + comps.apply_prolongation(d)
        iterands.append(u.copy())
        res = system.relative_residual(u)
        report.residual_history.append(res)
        report.outer_iterations = cycle
        if res <= tol:
            report.converged = True
            break
    report.metadata["iterands"] = iterands
    return u, report


def apply_error_operator(comps: TwoGridComponents, system: FineSystem,
                         coarse_system: CoarseSystem, coarse: StepOperators,
                         e: np.ndarray) -> np.ndarray:
    """One application of the two-grid error propagator, matrix-free."""
    shape = np.shape(e)
    eb = system._blocks(e)
    smoothed = eb - comps.apply_smoother(system._blocks(system.matvec(eb)))
    corr = coarse_system.forward_solve(
        comps.apply_restriction(system._blocks(system.matvec(smoothed)), coarse))
    out = smoothed - comps.apply_prolongation(corr)
    return out.reshape(shape)
