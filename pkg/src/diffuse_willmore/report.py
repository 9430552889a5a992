from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple


class IterationRecord(NamedTuple):
    iter: int
    gamma: float
    energy: float
    grad_norm: float
    step: float


@dataclass
class SolverReport:
    """Iteration trace of a descent run."""

    rows: list[IterationRecord] = field(default_factory=list)
    termination: str = "not started"
    notes: list[str] = field(default_factory=list)

    columns = IterationRecord._fields

    def record(self, it: int, gamma: float, energy: float, grad_norm: float, step: float) -> None:
        self.rows.append(IterationRecord(it, float(gamma), float(energy), float(grad_norm), float(step)))

    def extend(self, other: "SolverReport") -> None:
        self.rows.extend(other.rows)
        self.notes.extend(other.notes)

    @property
    def iterations(self) -> int:
        return len(self.rows)


class SolverError(RuntimeError):
    """A descent run failed; ``report`` holds the trace up to the failure."""

    def __init__(self, message: str, report: SolverReport | None = None):
        super().__init__(message)
        self.report = report
