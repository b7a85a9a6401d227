"""Estimator-style wrappers around the scheduling strategies.

Every scheduler is a BaseEstimator: hyperparameters live in the
constructor, get_params/set_params work, predict maps a sequence of
questions to their prediction-correct flags and score gives accuracy, so
the strategies drop into sklearn-style pipelines and grid searches. The
learned scheduler is additionally fit/predict shaped.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .calibration import CalibrationTable
from .policy import PolicyParams, init_policy_params
from .schedulers import (run_greedy_skyline, run_policy_skyline, run_static,
                         run_tower_builder, run_uniform_random)
from .traces import QuestionInstance, ScheduleLog
from .training import TrainConfig, train
from .validation import as_budget, as_instances, resolve_calibration


class BaseScheduler(BaseEstimator):
    """Shared surface: schedule one question, or predict/score a corpus."""

    def schedule(self, question: QuestionInstance,
                 question_index: int = 0) -> ScheduleLog:
        raise NotImplementedError

    def schedule_all(self, X) -> list[ScheduleLog]:
        return [self.schedule(q, question_index=i)
                for i, q in enumerate(as_instances(X))]

    def predict(self, X) -> np.ndarray:
        return np.array([log.prediction_correct
                         for log in self.schedule_all(X)], dtype=bool)

    def score(self, X, y=None) -> float:
        """Fraction of questions answered correctly."""
        flags = self.predict(X)
        return float(flags.mean())

    def _table(self, question: QuestionInstance) -> CalibrationTable:
        return resolve_calibration(self.calibration, question.n_layers)


class TowerBuilder(BaseScheduler):
    """Local early exit: each tower stops on its own no-answer probability."""

    def __init__(self, tau: float = 0.5, m: int = 1,
                 output_mode: str = "last_layer",
                 calibration: CalibrationTable | None = None):
        self.tau = tau
        self.m = m
        self.output_mode = output_mode
        self.calibration = calibration

    def schedule(self, question, question_index=0):
        return run_tower_builder(question, self.tau, self.m,
                                 self.output_mode, self._table(question))


class GreedySkylineBuilder(BaseScheduler):
    """Global greedy scheduling by current calibrated confidence."""

    def __init__(self, budget: int = 60, m: int = 1,
                 output_mode: str = "last_layer",
                 calibration: CalibrationTable | None = None,
                 init_rule: str = "rank_order"):
        self.budget = budget
        self.m = m
        self.output_mode = output_mode
        self.calibration = calibration
        self.init_rule = init_rule

    def schedule(self, question, question_index=0):
        return run_greedy_skyline(question, as_budget(self.budget), self.m,
                                  self.output_mode, self._table(question),
                                  self.init_rule)


class RandomScheduler(BaseScheduler):
    """Uniform-random tower expansion; the floor any policy should beat."""

    def __init__(self, budget: int = 60, m: int = 1,
                 output_mode: str = "last_layer",
                 calibration: CalibrationTable | None = None, seed: int = 0):
        self.budget = budget
        self.m = m
        self.output_mode = output_mode
        self.calibration = calibration
        self.seed = seed

    def schedule(self, question, question_index=0):
        rng = np.random.default_rng((self.seed, question_index))
        return run_uniform_random(question, as_budget(self.budget), self.m,
                                  self.output_mode, self._table(question), rng)


class PolicySkylineBuilder(BaseScheduler):
    """Learned global scheduler: fit trains the softmax policy with
    policy gradients, predict schedules deterministically with it."""

    def __init__(self, budget: int = 60, m: int = 1,
                 output_mode: str = "last_layer",
                 calibration: CalibrationTable | None = None,
                 d: int = 8, n_max: int = 30,
                 init_priority_mode: str = "learnable",
                 init_priority_value: float = 0.0,
                 action_mode: str = "greedy", seed: int = 0,
                 train_config: TrainConfig | None = None,
                 params: PolicyParams | None = None):
        self.budget = budget
        self.m = m
        self.output_mode = output_mode
        self.calibration = calibration
        self.d = d
        self.n_max = n_max
        self.init_priority_mode = init_priority_mode
        self.init_priority_value = init_priority_value
        self.action_mode = action_mode
        self.seed = seed
        self.train_config = train_config
        self.params = params

    def fit(self, X, y=None, dev: Sequence[QuestionInstance] | None = None):
        X = as_instances(X)
        if not X:
            raise ValueError("training corpus must be nonempty")
        calib = resolve_calibration(self.calibration, X[0].n_layers)
        init = self.params if self.params is not None else init_policy_params(
            d=self.d, n_layers=X[0].n_layers, n_max=self.n_max,
            seed=self.seed, init_priority_mode=self.init_priority_mode,
            init_priority_value=self.init_priority_value)
        cfg = self.train_config or TrainConfig(seed=self.seed)
        self.params_, self.history_ = train(X, init, cfg, calib, dev=dev)
        return self

    def _active_params(self) -> PolicyParams:
        if hasattr(self, "params_"):
            return self.params_
        if self.params is not None:
            return self.params
        raise NotFittedError(
            "PolicySkylineBuilder needs fit() or explicit params")

    def schedule(self, question, question_index=0):
        rng = None
        if self.action_mode == "sample":
            rng = np.random.default_rng((self.seed, question_index))
        return run_policy_skyline(question, as_budget(self.budget), self.m,
                                  self.output_mode, self._table(question),
                                  self._active_params(), self.action_mode, rng)


class StandardBaseline(BaseScheduler):
    """Every passage to full height, answer at the final layer."""

    def __init__(self, m: int = 1,
                 calibration: CalibrationTable | None = None):
        self.m = m
        self.calibration = calibration

    def schedule(self, question, question_index=0):
        return run_static(question, "standard", self.m, self._table(question))


class EfficientBaseline(BaseScheduler):
    """Every passage to a fixed intermediate layer, answered there."""

    def __init__(self, k_layers: int = 6, m: int = 1,
                 calibration: CalibrationTable | None = None):
        self.k_layers = k_layers
        self.m = m
        self.calibration = calibration

    def schedule(self, question, question_index=0):
        return run_static(question, "efficient", self.m,
                          self._table(question), k=self.k_layers)


class TopKBaseline(BaseScheduler):
    """Only the k best-ranked passages, each to full height."""

    def __init__(self, k_passages: int = 18, m: int = 1,
                 calibration: CalibrationTable | None = None):
        self.k_passages = k_passages
        self.m = m
        self.calibration = calibration

    def schedule(self, question, question_index=0):
        return run_static(question, "top_k", self.m,
                          self._table(question), k=self.k_passages)
