"""FGMRES-based two-level and multilevel Krylov solves.

The preconditioner shifts the coarse-space part of the spectrum to mu by
one coarse-grid solve per application.  On two levels that solve is an
exact block forward substitution; with more levels it is a fixed small
number of FGMRES iterations one level down, recursively, with a decoupled
direct solve at the coarsest level.  Flexibility matters: the inner solves
are nonlinear in their right-hand side, so the outer iteration stores the
preconditioned vectors.

Vectors at benchmark scale get large (hundreds of MB); the Krylov basis
spills to disk-backed storage beyond a configurable footprint, which keeps
the arithmetic identical while letting the page cache manage residency.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .intergrid import (CoarseSystem, MgritPair, TimePair, TimeSpacePair,
                        agglomerate_partition, build_mgrit_pair,
                        closed_form_t_coarse, closed_form_ts_coarse,
                        perturb_decouple, rediscretized_coarse)
from .parcost import CostLedger, CostModel
from .reports import SolveReport
from .spatial import gershgorin_bound
from .stepper import (BlockBidiagonalSystem, FineSystem, StepOperators,
                      partition_system)


@dataclass
class SolverConfig:
    """Knobs of the Krylov solves.

    ``inner_iters`` may be None (2 per intermediate level, 1 on the level
    before the coarsest), an int (uniform budget), or an explicit list for
    the intermediate levels.  ``coarsest_n_cgs`` = 0 keeps the coarsest
    solve exact; >= 1 decouples it into that many chunks.
    """

    mu: float = 1.0
    tol: float = 1e-6
    max_outer: int = 200
    inner_iters: int | list[int] | None = None
    coarsest_n_cgs: int = 0
    basis_memory_limit: int = 2 * 1024**3
    basis_dir: str | None = None

    def __post_init__(self):
        if self.mu == 0:
            raise ValueError("mu must be nonzero")


@dataclass(eq=False)
class Level:
    """One rung of the hierarchy: its system plus scheme bookkeeping."""

    system: BlockBidiagonalSystem
    spatial_matrix: sp.csr_matrix
    dt: float
    implicit_weight: float
    n_steps: int
    grid: tuple[int, int]
    dim: int
    kind: str
    pair: object | None = None
    budget: int = 0

    @property
    def state_dim(self) -> int:
        return self.spatial_matrix.shape[0]

    @property
    def total_dim(self) -> int:
        return (self.n_steps + 1) * self.state_dim


@dataclass(eq=False)
class LevelHierarchy:
    levels: list[Level]
    fine: FineSystem
    config: SolverConfig

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def describe(self) -> list[dict]:
        out = []
        for lvl in self.levels:
            out.append({
                "kind": lvl.kind, "n_steps": lvl.n_steps, "grid": lvl.grid,
                "dt": lvl.dt, "implicit_weight": lvl.implicit_weight,
                "budget": lvl.budget,
            })
        return out


def _coarse_system_from(spatial_matrix, implicit_weight, dt, n_steps) -> CoarseSystem:
    m = spatial_matrix.shape[0]
    eye = sp.identity(m, format="csr")
    diag = (eye - implicit_weight * dt * spatial_matrix).tocsr()
    sub = (eye + (1.0 - implicit_weight) * dt * spatial_matrix).tocsr()
    return CoarseSystem(diag=diag, sub=sub, n_steps=n_steps, provenance="closed_form")


def _time_move(level: Level, nu: int) -> Level:
    if level.n_steps % nu != 0:
        raise ValueError(f"time move needs nu | n_steps, got {level.n_steps} / {nu}")
    pair = TimePair(level.state_dim, nu, level.n_steps // nu)
    level.pair = pair
    a = 1.0 - (1.0 - level.implicit_weight) / nu
    dt = nu * level.dt
    n_steps = level.n_steps // nu
    system = _coarse_system_from(level.spatial_matrix, a, dt, n_steps)
    return Level(system=system, spatial_matrix=level.spatial_matrix, dt=dt,
                 implicit_weight=a, n_steps=n_steps, grid=level.grid,
                 dim=level.dim, kind="time")


def _space_move(level: Level, time_nu: int = 1) -> Level:
    gx, gy = level.grid
    groups, (mx, my) = agglomerate_partition(gx, gy if level.dim == 2 else 1)
    n_steps = level.n_steps // time_nu
    if level.n_steps % time_nu != 0:
        raise ValueError("time factor must divide n_steps")
    pair = TimeSpacePair(nu=time_nu, n_T=n_steps, partition=groups,
                         n=level.state_dim)
    level.pair = pair
    coarse_a = (pair.y_space.T @ level.spatial_matrix @ pair.z_space).tocsr()
    a = 1.0 - (1.0 - level.implicit_weight) / time_nu
    dt = time_nu * level.dt
    system = _coarse_system_from(coarse_a, a, dt, n_steps)
    kind = "space" if time_nu == 1 else "time_space"
    return Level(system=system, spatial_matrix=coarse_a, dt=dt,
                 implicit_weight=a, n_steps=n_steps, grid=(mx, my),
                 dim=level.dim, kind=kind)


def _fine_level(fine: FineSystem) -> Level:
    ops = fine.ops
    return Level(system=fine, spatial_matrix=ops.spatial.matrix,
                 dt=ops.config.delta_t, implicit_weight=ops.config.theta,
                 n_steps=fine.n_t, grid=(ops.spatial.n_x, ops.spatial.n_y),
                 dim=ops.spatial.dim, kind="fine")


def time_move_is_stable(level: Level, nu: int = 2) -> bool:
    """Stability screen for a prospective time-coarsened level.

    Treats the coarse system as a scheme with explicit weight
    (1 - a) / nu and applies the classical absolute-stability bound with a
    per-direction Gershgorin estimate of the spatial spectrum.
    """
    explicit = (1.0 - level.implicit_weight) / nu
    lam = gershgorin_bound(level.spatial_matrix) / level.dim
    return (1.0 - 2.0 * explicit) * (nu * level.dt) * lam <= 2.0


def auto_moves_step(level: Level, alternating: bool, next_is_space: bool,
                    nu: int = 2):
    """Decide the next coarsening move; returns (move, alternating, next_is_space)."""
    if not alternating:
        if level.n_steps % nu == 0 and time_move_is_stable(level, nu):
            return "time", False, False
        alternating = True
        next_is_space = True
    move = "space" if next_is_space else "time"
    return move, True, not next_is_space


def build_hierarchy(fine: FineSystem, n_levels: int,
                    schedule: str | list[str] = "auto",
                    cfg: SolverConfig | None = None, nu: int = 2) -> LevelHierarchy:
    """Construct the level stack by repeated time/space coarsening.

    ``schedule`` is 'auto' (time moves while stable, then space and time
    alternately) or an explicit move list; nu applies to every time move.
    The coarsest system is decoupled per cfg.coarsest_n_cgs and prefactored.
    """
    cfg = cfg or SolverConfig()
    if n_levels < 2:
        raise ValueError("need at least two levels")
    levels = [_fine_level(fine)]
    moves: list[str] = []
    alternating = False
    next_is_space = False
    for i in range(n_levels - 1):
        cur = levels[-1]
        if schedule == "auto":
            move, alternating, next_is_space = auto_moves_step(
                cur, alternating, next_is_space, nu)
        else:
            move = schedule[i]
        if move == "time":
            levels.append(_time_move(cur, nu))
        elif move == "space":
            levels.append(_space_move(cur))
        else:
            raise ValueError(f"unknown move {move!r}")
        moves.append(move)

    _assign_budgets(levels, cfg.inner_iters)
    if cfg.coarsest_n_cgs >= 1:
        coarsest = levels[-1]
        coarsest.system = perturb_decouple(coarsest.system, cfg.coarsest_n_cgs)
    levels[-1].system.diag_factorization  # prefactor
    hier = LevelHierarchy(levels=levels, fine=fine, config=cfg)
    hier.moves = moves
    return hier


def _assign_budgets(levels: list[Level], inner_iters) -> None:
    inter = levels[1:-1]
    if not inter:
        return
    if inner_iters is None:
        budgets = [2] * len(inter)
        budgets[-1] = 1 if len(budgets) > 1 else budgets[-1]
    elif isinstance(inner_iters, int):
        budgets = [inner_iters] * len(inter)
    else:
        budgets = list(inner_iters)
        if len(budgets) != len(inter):
            raise ValueError("need one inner budget per intermediate level")
    for lvl, b in zip(inter, budgets):
        if b < 1:
            raise ValueError("budgets must be >= 1")
        lvl.budget = b


def build_two_level(fine: FineSystem, family: str, nu: int,
                    cfg: SolverConfig | None = None) -> LevelHierarchy:
    """Two-level hierarchy for one of the intergrid families T, TS, MGRIT."""
    cfg = cfg or SolverConfig()
    ops = fine.ops
    top = _fine_level(fine)
    if family == "T":
        coarse = _time_move(top, nu)
    elif family == "TS":
        coarse = _space_move(top, time_nu=nu)
    elif family == "MGRIT":
        if fine.n_t % nu != 0:
            raise ValueError("nu must divide n_t")
        n_T = fine.n_t // nu
        top.pair = build_mgrit_pair(partition_system(fine, nu))
        system = rediscretized_coarse(ops, nu, n_T)
        coarse = Level(system=system, spatial_matrix=ops.spatial.matrix,
                       dt=nu * ops.config.delta_t,
                       implicit_weight=ops.config.theta, n_steps=n_T,
                       grid=top.grid, dim=top.dim, kind="mgrit")
    else:
        raise ValueError(f"unknown family {family!r}")
    if cfg.coarsest_n_cgs >= 1:
        coarse.system = perturb_decouple(coarse.system, cfg.coarsest_n_cgs)
    coarse.system.diag_factorization
    hier = LevelHierarchy(levels=[top, coarse], fine=fine, config=cfg)
    hier.moves = [family]
    return hier


class _VectorStore:
    """Krylov vectors in RAM or in an unlinked temp file, chosen by footprint."""

    def __init__(self, dim: int, capacity: int, use_disk: bool, directory=None):
        self._use_disk = use_disk
        if use_disk:
            self._file = tempfile.TemporaryFile(dir=directory)
            self._mm = np.memmap(self._file, dtype=np.float64, mode="w+",
                                 shape=(capacity, dim))
            self._count = 0
        else:
            self._vecs: list[np.ndarray] = []

    def append(self, vec: np.ndarray) -> None:
        if self._use_disk:
            self._mm[self._count] = vec
            self._count += 1
        else:
            self._vecs.append(np.array(vec, copy=True))

    def __getitem__(self, j: int) -> np.ndarray:
        if self._use_disk:
            return self._mm[j]
        return self._vecs[j]

    def close(self) -> None:
        if self._use_disk:
            del self._mm
            self._file.close()
        else:
            self._vecs.clear()


def _charge_blocks(ledger, model, phase, cost_each, n_tasks, level):
    if ledger is None or cost_each == 0:
        return
    ledger.charge(phase, [cost_each] * n_tasks, parallel=True, level=level)


def _charge_matvec(ledger, model, level_idx, level: Level):
    if ledger is None:
        return
    cost = model.mv_cost(level.state_dim)
    _charge_blocks(ledger, model, "matvec", cost, level.n_steps + 1, level_idx)


def _charge_coarse_solve(ledger, model, level_idx, level: Level):
    if ledger is None:
        return
    step_cost = model.inv_cost(level.state_dim, level.dim)
    segments = level.system.segment_rows()
    costs = [(b - a) * step_cost for a, b in segments]
    ledger.charge("coarse_solve", costs, parallel=True, level=max(level_idx, 1))


def apply_preconditioner(hier: LevelHierarchy, level_idx: int, v: np.ndarray,
                         ledger: CostLedger | None = None,
                         model: CostModel | None = None) -> np.ndarray:
    """Shift-preconditioner application at one level.

    Computes v - Z A_H^{-1} Y^T (A v - mu v), with A_H^{-1} exact (direct,
    possibly decoupled) on the coarsest level and a fixed budget of FGMRES
    iterations one level down otherwise.
    """
    cfg = hier.config
    model = model or CostModel()
    lvl = hier.levels[level_idx]
    nxt = hier.levels[level_idx + 1]
    s = lvl.system.matvec(v)
    _charge_matvec(ledger, model, level_idx, lvl)
    s -= cfg.mu * v
    vh = lvl.pair.restrict(s)
    _charge_blocks(ledger, model, "restriction",
                   model.restriction_cost(lvl.state_dim), lvl.n_steps + 1,
                   level_idx)
    if level_idx + 2 == hier.n_levels:
        vt = nxt.system.forward_solve(vh)
        _charge_coarse_solve(ledger, model, level_idx + 1, nxt)
    else:
        vt, _ = fgmres(hier, level_idx + 1, vh, tol=None,
                       max_iter=nxt.budget, ledger=ledger, model=model)
    t = lvl.pair.interpolate(vt)
    if isinstance(lvl.pair, MgritPair) and ledger is not None:
        # ideal interpolation pays one implicit solve per interior fine point
        inv = model.inv_cost(lvl.state_dim, lvl.dim)
        ledger.charge("interpolation", [(lvl.pair.nu - 1) * inv] * lvl.pair.n_T,
                      parallel=True, level=level_idx)
    else:
        _charge_blocks(ledger, model, "interpolation",
                       model.interpolation_cost(lvl.state_dim),
                       lvl.n_steps + 1, level_idx)
    return v - t


def fgmres(hier: LevelHierarchy, level_idx: int, rhs: np.ndarray,
           tol: float | None, max_iter: int,
           ledger: CostLedger | None = None, model: CostModel | None = None,
           keep_basis: bool = False):
    """Right-preconditioned FGMRES with modified Gram-Schmidt and Givens
    rotations; zero initial guess, no restarts.

    With ``tol`` None it runs exactly ``max_iter`` iterations (inner solves);
    otherwise it stops when the relative residual estimate reaches ``tol``.
    A vanishing new basis vector is treated as convergence at that step.
    """
    cfg = hier.config
    model = model or CostModel()
    lvl = hier.levels[level_idx]
    system = lvl.system
    b = np.asarray(rhs, dtype=np.float64).ravel()
    dim = b.shape[0]
    report = SolveReport(method=f"fgmres[level {level_idx}]",
                         tol=tol if tol is not None else 0.0)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return np.zeros_like(b), report

    footprint = (2 * max_iter + 1) * dim * 8
    use_disk = footprint > cfg.basis_memory_limit
    basis = _VectorStore(dim, max_iter + 1, use_disk, cfg.basis_dir)
    precond = _VectorStore(dim, max_iter, use_disk, cfg.basis_dir)
    h = np.zeros((max_iter + 1, max_iter))
    h_raw = np.zeros_like(h) if keep_basis else None
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = beta
    basis.append(b / beta)

    n_iter = 0
    breakdown = False
    try:
        for j in range(max_iter):
            xj = apply_preconditioner(hier, level_idx, basis[j], ledger, model)
            precond.append(xj)
            w = system.matvec(xj)
            _charge_matvec(ledger, model, level_idx, lvl)
            for l in range(j + 1):
                vl = basis[l]
                h[l, j] = float(np.dot(w, vl))
                w -= h[l, j] * vl
            _charge_blocks(ledger, model, "orthogonalization",
                           model.orthogonalization_cost(lvl.state_dim),
                           (lvl.n_steps + 1) * 2 * (j + 1), level_idx)
            h[j + 1, j] = float(np.linalg.norm(w))
            if h_raw is not None:
                h_raw[:, j] = h[:, j]
            n_iter = j + 1
            col_norm = float(np.linalg.norm(h[:j + 2, j]))
            if h[j + 1, j] <= 1e-14 * max(col_norm, 1e-300):
                breakdown = True
            else:
                basis.append(w / h[j + 1, j])
            # progressive Givens rotations keep the residual norm current
            for l in range(j):
                tmp = cs[l] * h[l, j] + sn[l] * h[l + 1, j]
                h[l + 1, j] = -sn[l] * h[l, j] + cs[l] * h[l + 1, j]
                h[l, j] = tmp
            denom = math.hypot(h[j, j], h[j + 1, j])
            cs[j] = h[j, j] / denom
            sn[j] = h[j + 1, j] / denom
            h[j, j] = denom
            h[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            rel = abs(g[j + 1]) / beta
            report.residual_history.append(rel)
            if breakdown:
                report.converged = True
                break
            if tol is not None and rel <= tol:
                report.converged = True
                break
        report.outer_iterations = n_iter
        y = np.zeros(n_iter)
        for i in range(n_iter - 1, -1, -1):
            y[i] = (g[i] - h[i, i + 1:n_iter] @ y[i + 1:n_iter]) / h[i, i]
        x = np.zeros(dim)
        for i in range(n_iter):
            x += y[i] * precond[i]
        if keep_basis:
            n_basis = n_iter if breakdown else n_iter + 1
            report.metadata["basis"] = [np.array(basis[i]) for i in range(n_basis)]
            report.metadata["preconditioned"] = [np.array(precond[i]) for i in range(n_iter)]
            report.metadata["hessenberg"] = h_raw[:n_iter + 1, :n_iter].copy()
    finally:
        basis.close()
        precond.close()
    return x, report


def _solve(hier: LevelHierarchy, ledger: CostLedger | None,
           model: CostModel | None, method_name: str):
    cfg = hier.config
    rhs = hier.fine.rhs.ravel()
    t0 = time.perf_counter()
    x, report = fgmres(hier, 0, rhs, tol=cfg.tol, max_iter=cfg.max_outer,
                       ledger=ledger, model=model)
    report.method = method_name
    report.wall_time = time.perf_counter() - t0
    report.tol = cfg.tol
    true_res = hier.fine.relative_residual(x)
    report.metadata["true_relative_residual"] = true_res
    report.converged = true_res <= cfg.tol
    if ledger is not None:
        _charge_matvec(ledger, model or CostModel(), 0, hier.levels[0])
        report.simulated_elapsed = ledger.elapsed
    report.level_stats = {"levels": hier.describe(), "moves": hier.moves}
    return x, report


def two_level_solve(hier: LevelHierarchy, ledger: CostLedger | None = None,
                    model: CostModel | None = None):
    if hier.n_levels != 2:
        raise ValueError("two_level_solve expects a 2-level hierarchy")
    return _solve(hier, ledger, model, "two_level")


def multilevel_solve(hier: LevelHierarchy, ledger: CostLedger | None = None,
                     model: CostModel | None = None):
    return _solve(hier, ledger, model, f"multilevel[{hier.n_levels}]")
