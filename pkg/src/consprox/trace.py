"""Per-iteration convergence records with delimited-text export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DivergenceError(RuntimeError):
    """Objective grew past the divergence guard."""


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    objective: float
    fidelity: float
    regularizer: float
    step: float
    rho: float
    time_ms: float


class ConvergenceTrace:
    """Ordered per-iteration records of one solver run.

    Columns: iteration index, objective, fidelity term, regularizer term,
    step size, penalty parameter, wall-clock milliseconds. Step and penalty
    are ``nan`` for solvers that have no such quantity. In deterministic
    exports the timing column is zeroed so repeated runs serialize to
    identical bytes.
    """

    columns = ("iteration", "objective", "fidelity", "regularizer",
               "step", "rho", "time_ms")

    def __init__(self):
        self.rows: list[TraceRow] = []

    def append(self, iteration: int, objective: float, fidelity: float,
               regularizer: float, step: float = float("nan"),
               rho: float = float("nan"), time_ms: float = 0.0) -> None:
        objective = float(objective)
        if not np.isfinite(objective):
            raise DivergenceError(
                f"non-finite objective {objective} at iteration {iteration}")
        self.rows.append(TraceRow(int(iteration), objective, float(fidelity),
                                  float(regularizer), float(step), float(rho),
                                  float(time_ms)))

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final_objective(self) -> float:
        if not self.rows:
            raise ValueError("empty trace")
        return self.rows[-1].objective

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise KeyError(name)
        return np.array([getattr(r, name) for r in self.rows])

    def to_text(self, deterministic_time: bool = False) -> str:
        lines = [",".join(self.columns)]
        for r in self.rows:
            t = 0.0 if deterministic_time else r.time_ms
            lines.append(",".join([
                str(r.iteration), repr(r.objective), repr(r.fidelity),
                repr(r.regularizer), repr(r.step), repr(r.rho), repr(t),
            ]))
        return "\n".join(lines) + "\n"

    def save(self, path, deterministic_time: bool = False) -> None:
        Path(path).write_text(self.to_text(deterministic_time))
