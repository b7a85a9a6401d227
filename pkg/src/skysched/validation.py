"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

from typing import Sequence

from .calibration import CalibrationTable
from .traces import Budget, QuestionInstance


def as_instances(X) -> tuple[QuestionInstance, ...]:
    """Coerce X to a tuple of QuestionInstance, rejecting anything else."""
    if isinstance(X, QuestionInstance):
        raise TypeError("expected a sequence of QuestionInstance, got a "
                        "single instance; wrap it in a list")
    instances = tuple(X)
    for item in instances:
        if not isinstance(item, QuestionInstance):
            raise TypeError(f"expected QuestionInstance entries, got "
                            f"{type(item).__name__}")
    return instances


def common_layer_count(instances: Sequence[QuestionInstance]) -> int:
    counts = {q.n_layers for q in instances}
    if len(counts) != 1:
        raise ValueError(f"instances disagree on layer count: {sorted(counts)}")
    return counts.pop()


def resolve_calibration(calibration: CalibrationTable | None,
                        n_layers: int) -> CalibrationTable:
    """Default to the identity table (all temperatures 1) when none is given."""
    if calibration is None:
        return CalibrationTable.identity(n_layers)
    if calibration.n_layers != n_layers:
        raise ValueError(f"calibration covers {calibration.n_layers} layers "
                         f"but instances have {n_layers}")
    return calibration


def as_budget(budget: int | Budget) -> Budget:
    if isinstance(budget, Budget):
        return budget
    return Budget(int(budget))
