"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from skysched import (CalibrationTable, PassageTrace, QuestionInstance,
                      Skyline, init_policy_params)


def make_passage(rank, has_answer, logits, answer_correct=None):
    if answer_correct is None:
        answer_correct = [has_answer and x > 0 for x in logits]
    return PassageTrace(rank=rank, has_answer=has_answer,
                        logits=tuple(logits),
                        answer_correct=tuple(answer_correct))


def make_question(qid, passage_specs):
    """passage_specs: list of (has_answer, logits[, answer_correct])."""
    passages = []
    for i, spec in enumerate(passage_specs):
        passages.append(make_passage(i + 1, *spec))
    return QuestionInstance(question_id=qid, passages=tuple(passages))


def random_instance(rng, n=None, n_layers=None, max_n=4, max_layers=4):
    """Random valid instance with logits in a moderate range."""
    n = n or int(rng.integers(1, max_n + 1))
    n_layers = n_layers or int(rng.integers(1, max_layers + 1))
    specs = []
    for _ in range(n):
        has = bool(rng.random() < 0.4)
        logits = rng.normal(0.0, 2.0, n_layers)
        if has:
            correct = [bool(rng.random() < 0.7) for _ in range(n_layers)]
        else:
            correct = [False] * n_layers
        specs.append((has, logits, correct))
    return make_question(f"r{rng.integers(1 << 30)}", specs)


def random_calibration(rng, n_layers):
    return CalibrationTable(
        temperatures=tuple(float(t) for t in rng.uniform(0.5, 4.0, n_layers)))


def random_skyline(rng, params, n_towers, require_expandable=True):
    """Random state consistent with the height/summary invariant."""
    while True:
        heights = [int(rng.integers(0, params.n_layers + 1))
                   for _ in range(n_towers)]
        if not require_expandable or any(h < params.n_layers for h in heights):
            break
    summaries = [float(rng.uniform(0.01, 0.99)) if h > 0 else None
                 for h in heights]
    return Skyline(heights=heights, summaries=summaries,
                   cost_spent=sum(heights))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_params():
    return init_policy_params(d=4, n_layers=4, n_max=5, seed=11)
