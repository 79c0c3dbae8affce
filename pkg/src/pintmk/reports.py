"""Result records shared by the iterative solvers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class SolveReport:
    """Outcome of one iterative solve."""

    method: str
    outer_iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False
    tol: float = 0.0
    error_vs_oracle: float | None = None
    wall_time: float | None = None
    simulated_elapsed: int | None = None
    level_stats: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("inf")
