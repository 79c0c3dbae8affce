"""Simulated-parallel cost accounting and closed-form work estimates.

Costs are abstract integer units, not seconds.  The default model charges
one unit per vector entry for matrix-vector work and a dense-solve n^2 per
2-D inversion application, mirroring the convention of the closed-form work
estimates; ``CostModel.sparse_direct()`` instead charges factored
sparse/banded solve costs plus a per-step dispatch overhead, which is what
an implementation built on reusable factorizations actually pays.
Restriction, interpolation and orthogonalization carry zero weight by
default (the work estimates count only matvecs and inversions); their
weights are knobs.

Simulated elapsed time: independent tasks are assigned round-robin to
virtual processors and each charge event advances the clock by the maximum
per-processor load of that event.  Communication is free; a per-step
overhead hook exists on the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CostModel:
    """Unit charges per primitive operation."""

    matvec_weight: int = 1
    restriction_weight: int = 0
    interpolation_weight: int = 0
    orthogonalization_weight: int = 0
    dense_inversion: bool = True
    inv_step_overhead_2d: int = 0

    @classmethod
    def sparse_direct(cls, inv_step_overhead_2d: int = 20_000) -> "CostModel":
        """Charges for reusable banded/sparse-LU solves instead of dense ones."""
        return cls(dense_inversion=False, inv_step_overhead_2d=inv_step_overhead_2d)

    def mv_cost(self, length: int) -> int:
        return self.matvec_weight * int(length)

    def restriction_cost(self, length: int) -> int:
        return self.restriction_weight * int(length)

    def interpolation_cost(self, length: int) -> int:
        return self.interpolation_weight * int(length)

    def orthogonalization_cost(self, length: int) -> int:
        return self.orthogonalization_weight * int(length)

    def inv_cost(self, m: int, dim: int) -> int:
        """One implicit-solve application on an m-point spatial grid."""
        m = int(m)
        if dim == 1:
            return m
        if self.dense_inversion:
            return m * m
        return m * math.isqrt(m) + self.inv_step_overhead_2d


class CostLedger:
    """Per-virtual-processor work totals and simulated elapsed time."""

    PHASES = ("matvec", "restriction", "interpolation", "coarse_solve",
              "orthogonalization", "theta_scheme")

    def __init__(self, n_proc: int = 1, n_cgs: int = 1):
        if n_proc < 1 or n_cgs < 1:
            raise ValueError("processor counts must be positive")
        self.n_proc = n_proc
        self.n_cgs = n_cgs
        self.proc_work: dict[str, list[int]] = {}
        self.phase_elapsed: dict[str, int] = {}
        self.elapsed = 0

    def _procs_for(self, phase: str) -> int:
        return self.n_cgs if phase == "coarse_solve" else self.n_proc

    def charge(self, phase: str, task_costs, parallel: bool = True,
               level: int = 0) -> None:
        """Charge one event of independent tasks; updates the simulated clock.

        Charges from coarse levels (level >= 1) are attributed to the
        coarse-grid-solve phase, which is what the recursion looks like from
        the finest level.
        """
        costs = [int(c) for c in task_costs]
        if not costs:
            return
        if any(c < 0 for c in costs):
            raise ValueError("task costs must be nonnegative")
        eff_phase = "coarse_solve" if level >= 1 else phase
        procs = self._procs_for(eff_phase) if parallel else 1
        loads = [0] * procs
        for i, c in enumerate(costs):
            loads[i % procs] += c
        work = self.proc_work.setdefault(eff_phase, [0] * procs)
        if len(work) < procs:
            work.extend([0] * (procs - len(work)))
        for p, load in enumerate(loads):
            work[p] += load
        event_elapsed = max(loads)
        self.phase_elapsed[eff_phase] = self.phase_elapsed.get(eff_phase, 0) + event_elapsed
        self.elapsed += event_elapsed

    def total_work(self, phase: str | None = None) -> int:
        if phase is not None:
            return sum(self.proc_work.get(phase, ()))
        return sum(sum(v) for v in self.proc_work.values())

    def cgs_fraction(self) -> float:
        if self.elapsed == 0:
            return 0.0
        return self.phase_elapsed.get("coarse_solve", 0) / self.elapsed

    def rows(self):
        """(phase, processor, cost) triples for CSV dumps."""
        for phase in sorted(self.proc_work):
            for p, c in enumerate(self.proc_work[phase]):
                yield phase, p, c


def charge(ledger: CostLedger, phase: str, task_costs, parallel: bool = True,
           level: int = 0) -> CostLedger:
    ledger.charge(phase, task_costs, parallel=parallel, level=level)
    return ledger


def report_relative(ledger: CostLedger, theta_ledger: CostLedger) -> dict[str, float]:
    """Total time relative to the sequential stepper, and the CGS share."""
    if theta_ledger.elapsed == 0:
        raise ValueError("reference ledger is empty")
    return {
        "relative_total": ledger.elapsed / theta_ledger.elapsed,
        "cgs_fraction": ledger.cgs_fraction(),
    }


def theta_scheme_ledger(n_t: int, n_x: int, n_y: int, model: CostModel) -> CostLedger:
    """Reference ledger of the sequential scheme: one inversion and one
    matvec per time step on a single processor."""
    dim = 2 if n_y > 1 else 1
    n = n_x * n_y
    ledger = CostLedger(n_proc=1, n_cgs=1)
    step = model.inv_cost(n, dim) + model.mv_cost(n)
    ledger.charge("theta_scheme", [step] * n_t, parallel=False)
    return ledger


def work_theta(n_t: int, n_x: int, n_y: int, model: CostModel) -> int:
    """Closed-form total work of the sequential scheme."""
    dim = 2 if n_y > 1 else 1
    n = n_x * n_y
    return n_t * (model.mv_cost(n) + model.inv_cost(n, dim))


def work_two_level(n_iter1: int, nu: int, n_t: int, n_x: int, n_y: int,
                   n_proc: int, n_cgs: int, model: CostModel) -> float:
    """Closed-form two-level work: matvec term over n_proc processors plus
    the coarse chain-solve term over n_cgs processors."""
    dim = 2 if n_y > 1 else 1
    n = n_x * n_y
    matvec = 2 * n_iter1 * n_t * model.mv_cost(n) / n_proc
    coarse = n_iter1 * (n_t // nu) * model.inv_cost(n, dim) / n_cgs
    return matvec + coarse


def work_multilevel(inner_iters, n_levels: int, nu: int, n_t: int, n_x: int,
                    n_y: int, n_iter1: int, n_proc: int, n_cgs: int,
                    model: CostModel) -> float:
    """Closed-form work of the L-level method under pure time coarsening.

    ``inner_iters`` holds the per-level budgets for the intermediate levels
    (length L - 2).  The coarsest-level term counts, per outer iteration,
    prod(budgets) direct solves of n_t / nu^(L-1) steps each; with L = 2 it
    reduces exactly to ``work_two_level``.
    """
    inner = list(inner_iters)
    if len(inner) != n_levels - 2:
        raise ValueError("need one budget per intermediate level")
    dim = 2 if n_y > 1 else 1
    n = n_x * n_y
    vec_sum = 1.0
    prod = 1.0
    for depth, budget in enumerate(inner, start=2):
        prod *= budget
        vec_sum += prod / nu ** (depth - 1)
    matvec = 2 * n_iter1 * vec_sum * n_t * model.mv_cost(n) / n_proc
    coarse_solves = 1.0
    for budget in inner:
        coarse_solves *= budget
    coarse = (n_iter1 * coarse_solves * (n_t // nu ** (n_levels - 1))
              * model.inv_cost(n, dim) / n_cgs)
    return matvec + coarse


@dataclass
class SerialExecutor:
    """Runs task callables in order; the ledger does the parallel accounting."""

    def map(self, fn, tasks):
        return [fn(t) for t in tasks]


@dataclass
class ThreadExecutor:
    """Thread-pool execution with results reduced in submission order."""

    max_workers: int = 2
    _pool: object = field(default=None, repr=False)

    def map(self, fn, tasks):
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            return list(pool.map(fn, tasks))
