"""Seeded synthetic trace corpora.

Corpora mimic the empirical structure of retrieved-passage reading:
top-ranked passages are more likely to contain an answer, and per-layer
confidence logits drift apart with depth so that deep layers separate
answer from non-answer passages while shallow layers stay noisy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .traces import PassageTrace, QuestionInstance, canonical_real


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic reader.

    answer_rate_by_rank is a decay triple (a, b, c) giving
    P(has_answer | rank) = a * exp(-b * (rank - 1)) + c.
    """

    n_passages: int = 30
    n_layers: int = 24
    seed: int = 0
    answer_rate_by_rank: tuple[float, float, float] = (0.30, 0.25, 0.01)
    drift: float = 0.3
    noise_sd: float = 1.0
    extraction_reliability: float = 0.9

    def __post_init__(self):
        a, b, c = self.answer_rate_by_rank
        if self.n_passages < 1 or self.n_layers < 1:
            raise ValueError("n_passages and n_layers must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if a < 0 or b < 0 or c < 0 or a + c > 1:
            raise ValueError("decay triple requires a,b,c >= 0 and a + c <= 1")
        if self.drift <= 0 or self.noise_sd <= 0:
            raise ValueError("drift and noise_sd must be positive")
        if not 0 <= self.extraction_reliability <= 1:
            raise ValueError("extraction_reliability must lie in [0, 1]")

    def answer_rate(self, rank: int) -> float:
        a, b, c = self.answer_rate_by_rank
        return a * math.exp(-b * (rank - 1)) + c


def _generate_question(config: GeneratorConfig, index: int) -> QuestionInstance:
    rng = np.random.default_rng((config.seed, index))
    layers = np.arange(1, config.n_layers + 1, dtype=float)
    passages = []
    for rank in range(1, config.n_passages + 1):
        has_answer = bool(rng.random() < config.answer_rate(rank))
        direction = 1.0 if has_answer else -1.0
        logits = direction * config.drift * layers \
            + rng.normal(0.0, config.noise_sd, config.n_layers)
        logits = tuple(canonical_real(x) for x in logits)
        if has_answer:
            draws = rng.random(config.n_layers)
            correct = tuple(bool(x > 0.0 and u < config.extraction_reliability)
                            for x, u in zip(logits, draws))
        else:
            correct = (False,) * config.n_layers
        passages.append(PassageTrace(rank=rank, has_answer=has_answer,
                                     logits=logits, answer_correct=correct))
    return QuestionInstance(question_id=f"q{index:06d}",
                            passages=tuple(passages))


def generate(config: GeneratorConfig, count: int) -> list[QuestionInstance]:
    """Produce ``count`` questions, deterministic in (config, count).

    Every question owns an RNG substream derived from (seed, question index),
    so generation order does not matter and corpora can be produced in
    parallel without changing the output. Logits are quantized to storage
    precision at creation, making a generated corpus an exact fixed point
    of a save/load cycle.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    return [_generate_question(config, i) for i in range(count)]
