"""Policy-gradient training of the scheduling policy.

Each episode is one question rolled out with the sampled policy under the
training step budget. Rewards are +1 minus a step cost for expanding a
tower whose passage holds an answer, minus the step cost otherwise, with
geometric discounting. Gradients are summed over the timesteps of an
episode, averaged over the batch, and applied with plain SGD ascent.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibration import CalibrationTable
from .policy import PolicyGradient, PolicyParams, log_prob_gradient
from .schedulers import _policy_rollout
from .traces import Budget, QuestionInstance


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite gradient shows up during training."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 16
    max_steps: int = 240
    step_cost: float = 0.1
    gamma: float = 0.9
    seed: int = 0
    use_baseline: bool = False
    baseline_momentum: float = 0.9
    holdout_fraction: float = 0.1
    eval_limit: int = 200
    record_rewards: bool = False

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1 or self.epochs < 0 or self.max_steps < 1:
            raise ValueError("batch_size, epochs and max_steps out of range")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in [0, 1)")


def step_reward(action: int, q: QuestionInstance,
                step_cost: float = 0.1) -> float:
    """Per-step reward: 1 - cost if the chosen passage holds an answer,
    otherwise -cost."""
    base = 1.0 if q.passages[action].has_answer else 0.0
    return base - step_cost


def discounted_returns(rewards: Sequence[float], gamma: float) -> list[float]:
    """Backward recurrence R_t = r_t + gamma * R_{t+1}, with R_last = r_last."""
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


@dataclass
class EpochStats:
    epoch: int
    mean_return: float
    held_out_hap: float
    wall_time_ms: float


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    # per-epoch, per-episode reward sequences; only kept when
    # TrainConfig.record_rewards is set
    episode_rewards: list[list[tuple[float, ...]]] | None = None

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_return", "held_out_hap",
                             "wall_time_ms"])
            for row in self.epochs:
                writer.writerow([row.epoch, row.mean_return,
                                 row.held_out_hap, row.wall_time_ms])


def _apply_update(params: PolicyParams, grad: PolicyGradient,
                  lr: float) -> None:
    params.alpha += lr * grad.alpha
    params.w1 += lr * grad.w1
    params.b1 += lr * grad.b1
    params.w2 += lr * grad.w2
    params.b2 += lr * grad.b2
    params.height_emb += lr * grad.height_emb
    params.index_emb += lr * grad.index_emb
    if params.init_priority_learnable:
        params.init_priority += lr * grad.init_priority


def _episode_budget(cfg: TrainConfig, q: QuestionInstance) -> Budget:
    return Budget(min(cfg.max_steps, q.n_passages * q.n_layers))


def _holdout_hap(questions: Sequence[QuestionInstance], params: PolicyParams,
                 cfg: TrainConfig, calib: CalibrationTable) -> float:
    """Fraction of greedy-mode actions that land on answer passages."""
    hits = total = 0
    for q in questions:
        log, _ = _policy_rollout(q, _episode_budget(cfg, q), 1, "any_layer",
                                 calib, params, "greedy", None)
        for a in log.actions:
            hits += int(q.passages[a].has_answer)
            total += 1
    return hits / total if total else 0.0


def train(corpus: Sequence[QuestionInstance], init: PolicyParams,
          cfg: TrainConfig, calib: CalibrationTable,
          dev: Sequence[QuestionInstance] | None = None,
          ) -> tuple[PolicyParams, TrainingHistory]:
    """REINFORCE over the corpus; returns trained parameters and history.

    When no dev split is given, the trailing holdout_fraction of the corpus
    is set aside for the per-epoch precision diagnostic and not trained on.
    Fully deterministic for fixed (corpus, init, cfg): every episode draws
    from a substream keyed by (seed, epoch, episode index).
    """
    if not corpus:
        raise ValueError("training corpus must be nonempty")
    if dev is None:
        n_hold = int(len(corpus) * cfg.holdout_fraction)
        train_set = list(corpus[:len(corpus) - n_hold]) if n_hold else list(corpus)
        dev = list(corpus[len(corpus) - n_hold:]) if n_hold else []
    else:
        train_set = list(corpus)
        dev = list(dev)
    if not train_set:
        raise ValueError("holdout fraction leaves no training questions")
    dev = dev[:cfg.eval_limit]

    params = init.copy()
    history = TrainingHistory(
        episode_rewards=[] if cfg.record_rewards else None)
    baseline = 0.0
    baseline_primed = False
    episode_counter = 0

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order_rng = np.random.default_rng((cfg.seed, 1, epoch))
        order = order_rng.permutation(len(train_set))
        epoch_returns: list[float] = []
        epoch_rewards: list[tuple[float, ...]] = []

        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grad = PolicyGradient.zeros(params)
            for qi in batch:
                q = train_set[int(qi)]
                rng = np.random.default_rng((cfg.seed, 2, epoch,
                                             episode_counter))
                episode_counter += 1
                log, states = _policy_rollout(
                    q, _episode_budget(cfg, q), 1, "any_layer", calib,
                    params, "sample", rng, collect_states=True)
                rewards = [step_reward(a, q, cfg.step_cost)
                           for a in log.actions]
                returns = discounted_returns(rewards, cfg.gamma)
                episode_return = returns[0] if returns else 0.0
                epoch_returns.append(episode_return)
                if cfg.record_rewards:
                    epoch_rewards.append(tuple(rewards))
                offset = baseline if (cfg.use_baseline and baseline_primed) else 0.0
                for state, action, ret in zip(states, log.actions, returns):
                    step_grad = log_prob_gradient(state, action, params)
                    grad.add_scaled(step_grad, ret - offset)
                if cfg.use_baseline:
                    if baseline_primed:
                        baseline = (cfg.baseline_momentum * baseline
                                    + (1 - cfg.baseline_momentum) * episode_return)
                    else:
                        baseline = episode_return
                        baseline_primed = True
            grad.scale(1.0 / len(batch))
            if not grad.is_finite():
                raise TrainingDivergedError(
                    f"non-finite gradient at epoch {epoch}, "
                    f"batch starting at {start}")
            _apply_update(params, grad, cfg.lr)
            try:
                params.validate()
            except ValueError as exc:
                raise TrainingDivergedError(
                    f"non-finite parameters after update at epoch {epoch}, "
                    f"batch starting at {start}: {exc}") from exc

        hap = _holdout_hap(dev, params, cfg, calib)
        mean_return = float(np.mean(epoch_returns)) if epoch_returns else 0.0
        history.epochs.append(EpochStats(
            epoch=epoch, mean_return=mean_return, held_out_hap=hap,
            wall_time_ms=(time.perf_counter() - t0) * 1000.0))
        if cfg.record_rewards:
            history.episode_rewards.append(epoch_rewards)

    return params, history
