"""Per-layer temperature fitting for confidence logits.

Raw per-layer logits are turned into probabilities with a fitted divisor T
per layer: probability = sigmoid(logit / T). Temperatures are chosen on a
dev corpus by grid search over the binary negative log-likelihood against
the passage-level answer labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .traces import QuestionInstance

GRID_MIN = 0.25
GRID_MAX = 8.0
GRID_POINTS = 32


def sigmoid(x):
    """Numerically stable logistic function, scalar or array."""
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out


def apply_calibration(logit: float, temperature: float) -> float:
    """Calibrated probability sigmoid(logit / T); requires T > 0."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return sigmoid(logit / temperature)


def default_grid() -> tuple[float, ...]:
    """Log-spaced search grid, with the neutral temperature 1.0 included
    so fitting can never increase dev NLL over the uncalibrated logits."""
    grid = list(np.geomspace(GRID_MIN, GRID_MAX, GRID_POINTS))
    if 1.0 not in grid:
        grid.append(1.0)
    return tuple(sorted(grid))


@dataclass(frozen=True)
class CalibrationTable:
    """One fitted temperature per layer."""

    temperatures: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "temperatures",
                           tuple(float(t) for t in self.temperatures))
        if not self.temperatures:
            raise ValueError("at least one temperature required")
        for t in self.temperatures:
            if not np.isfinite(t) or t <= 0:
                raise ValueError("temperatures must be finite and positive")

    @property
    def n_layers(self) -> int:
        return len(self.temperatures)

    @classmethod
    def identity(cls, n_layers: int) -> "CalibrationTable":
        return cls(temperatures=(1.0,) * n_layers)

    def probability(self, logit: float, layer: int) -> float:
        """Calibrated probability for a raw logit at a 0-based layer index."""
        return apply_calibration(logit, self.temperatures[layer])

    def to_json(self) -> str:
        return json.dumps({"temperatures": list(self.temperatures)})

    @classmethod
    def from_json(cls, text: str) -> "CalibrationTable":
        obj = json.loads(text)
        if set(obj) != {"temperatures"}:
            raise ValueError("calibration JSON must hold exactly 'temperatures'")
        return cls(temperatures=tuple(obj["temperatures"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationTable":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _stack_dev(dev: Sequence[QuestionInstance]) -> tuple[np.ndarray, np.ndarray]:
    counts = {q.n_layers for q in dev}
    if len(counts) != 1:
        raise ValueError(f"dev instances disagree on layer count: {sorted(counts)}")
    logits = np.array([p.logits for q in dev for p in q.passages], dtype=float)
    labels = np.array([p.has_answer for q in dev for p in q.passages], dtype=float)
    return logits, labels


def _binary_nll(scaled_logits: np.ndarray, labels: np.ndarray) -> float:
    # loss = y*softplus(-z) + (1-y)*softplus(z), summed; avoids log(0)
    loss = labels * np.logaddexp(0.0, -scaled_logits) \
        + (1.0 - labels) * np.logaddexp(0.0, scaled_logits)
    return float(loss.sum())


def calibrate(dev: Sequence[QuestionInstance],
              grid: Sequence[float] | None = None) -> CalibrationTable:
    """Fit one temperature per layer by grid search on binary NLL.

    For each layer, every dev passage contributes (logit at that layer,
    has_answer) as one sample. Ties are broken toward the smallest
    temperature.
    """
    if not dev:
        raise ValueError("dev corpus must be nonempty")
    if grid is None:
        grid = default_grid()
    grid_values = tuple(sorted(float(t) for t in grid))
    if not grid_values:
        raise ValueError("grid must be nonempty")
    if grid_values[0] <= 0:
        raise ValueError("grid temperatures must be positive")

    logits, labels = _stack_dev(dev)
    chosen = []
    for layer in range(logits.shape[1]):
        col = logits[:, layer]
        nlls = [_binary_nll(col / t, labels) for t in grid_values]
        chosen.append(grid_values[int(np.argmin(nlls))])
    return CalibrationTable(temperatures=tuple(chosen))


class TemperatureScaler(TransformerMixin, BaseEstimator):
    """Estimator wrapper: fit temperatures on instances, transform logit arrays.

    ``fit`` expects a sequence of QuestionInstance; ``transform`` maps an
    array of raw logits with trailing dimension L to calibrated probabilities.
    """

    def __init__(self, grid: Sequence[float] | None = None):
        self.grid = grid

    def fit(self, X: Sequence[QuestionInstance], y=None) -> "TemperatureScaler":
        self.table_ = calibrate(X, self.grid)
        self.temperatures_ = np.asarray(self.table_.temperatures)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "table_")
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.temperatures_):
            raise ValueError(
                f"expected trailing dimension {len(self.temperatures_)}, "
                f"got {X.shape[-1]}")
        return sigmoid(X / self.temperatures_)
