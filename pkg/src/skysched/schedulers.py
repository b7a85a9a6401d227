"""Skyline-building strategies and the shared output phase.

One action = one transformer layer executed on one passage. Local early
exit processes towers in isolation; the global strategies (confidence-
greedy, learned policy, uniform random) spend a shared layer budget one
action at a time. All strategies end with the same output phase that picks
the tallest towers and reads a prediction from them.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace

import numpy as np

from .calibration import CalibrationTable
from .policy import PolicyParams, policy_distribution, select_action
from .traces import Budget, QuestionInstance, ScheduleLog, Skyline

OUTPUT_MODES = ("last_layer", "any_layer")
INIT_RULES = ("rank_order", "constant")
CONSTANT_EMPTY_PRIORITY = 0.5


def expand(skyline: Skyline, q: QuestionInstance, i: int,
           calib: CalibrationTable) -> float:
    """Execute one layer on tower i; returns the new calibrated confidence."""
    h = skyline.heights[i]
    if h >= q.n_layers:
        raise ValueError(f"tower {i} is already at full height")
    prob = calib.probability(q.passages[i].logits[h], h)
    skyline.heights[i] = h + 1
    skyline.summaries[i] = prob
    skyline.cost_spent += 1
    return prob


def empty_tower_priority(rank: int, n: int, init_rule: str) -> float:
    """Priority of a never-expanded tower under the confidence-greedy scheduler.

    rank_order places empty towers in the band (0.5, 1.0), decreasing with
    rank, so unexplored top-ranked passages outrank any tower whose current
    confidence says it likely has no answer. constant puts them all at 0.5.
    """
    if init_rule == "rank_order":
        return 0.5 + 0.5 * (n - rank) / n
    if init_rule == "constant":
        return CONSTANT_EMPTY_PRIORITY
    raise ValueError(f"unknown init rule {init_rule!r}")


def output_phase(skyline: Skyline, q: QuestionInstance, m: int, mode: str,
                 calib: CalibrationTable) -> tuple[tuple[int, ...], bool, int]:
    """Select up to m towers and read a prediction from them.

    Selection is by height, ties broken by higher top-layer confidence then
    lower index, restricted to towers that received any computation. In
    last_layer mode every selected tower is unrolled to full height (the
    added layers are the returned extra cost) and read at the final layer;
    any_layer reads at the current height for free. The prediction comes
    from the selected tower with the highest confidence at its reading
    layer. With an all-empty skyline the first m towers are selected and
    the prediction is declared incorrect.
    """
    if mode not in OUTPUT_MODES:
        raise ValueError(f"unknown output mode {mode!r}")
    if m < 1:
        raise ValueError("m must be >= 1")
    n, L = q.n_passages, q.n_layers
    candidates = [i for i in range(n) if skyline.heights[i] > 0]
    if not candidates:
        return tuple(range(min(m, n))), False, 0

    candidates.sort(key=lambda i: (-skyline.heights[i], -skyline.summaries[i], i))
    selected = candidates[:m]

    extra = 0
    readings = []  # (confidence at reading layer, tower, correct flag)
    for i in selected:
        if mode == "last_layer":
            extra += L - skyline.heights[i]
            while skyline.heights[i] < L:
                expand(skyline, q, i, calib)
        h = skyline.heights[i]
        readings.append((skyline.summaries[i], i,
                         q.passages[i].answer_correct[h - 1]))
    readings.sort(key=lambda r: (-r[0], r[1]))
    return tuple(selected), bool(readings[0][2]), extra


def run_tower_builder(q: QuestionInstance, tau: float, m: int, mode: str,
                      calib: CalibrationTable) -> ScheduleLog:
    """Local early exit: grow each tower in isolation until the probability
    of having no answer reaches tau, then run the output phase."""
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    n, L = q.n_passages, q.n_layers
    skyline = Skyline.empty(n)
    actions: list[int] = []
    for i in range(n):
        while skyline.heights[i] < L:
            prob = expand(skyline, q, i, calib)
            actions.append(i)
            if 1.0 - prob >= tau:
                break
    selected, correct, _ = output_phase(skyline, q, m, mode, calib)
    return ScheduleLog(actions=tuple(actions), rewards=(),
                       final_skyline=skyline, selected_towers=selected,
                       prediction_correct=correct)


def _check_budget(budget: Budget, q: QuestionInstance) -> int:
    if budget.total_layers > q.n_passages * q.n_layers:
        raise ValueError("budget exceeds the total layers available")
    return budget.total_layers


def run_greedy_skyline(q: QuestionInstance, budget: Budget, m: int, mode: str,
                       calib: CalibrationTable,
                       init_rule: str = "rank_order") -> ScheduleLog:
    """Global greedy scheduling: always expand the tower with the highest
    current calibrated confidence, via a priority queue.

    Only the expanded tower's priority changes per step, so each expandable
    tower keeps exactly one queue entry. Ties break toward the lower index.
    """
    limit = _check_budget(budget, q)
    n, L = q.n_passages, q.n_layers
    skyline = Skyline.empty(n)
    heap = [(-empty_tower_priority(q.passages[i].rank, n, init_rule), i)
            for i in range(n)]
    heapq.heapify(heap)
    actions: list[int] = []
    while len(actions) < limit and heap:
        _, i = heapq.heappop(heap)
        prob = expand(skyline, q, i, calib)
        actions.append(i)
        if skyline.heights[i] < L:
            heapq.heappush(heap, (-prob, i))
    selected, correct, _ = output_phase(skyline, q, m, mode, calib)
    return ScheduleLog(actions=tuple(actions), rewards=(),
                       final_skyline=skyline, selected_towers=selected,
                       prediction_correct=correct)


def _policy_rollout(q: QuestionInstance, budget: Budget, m: int, mode: str,
                    calib: CalibrationTable, params: PolicyParams,
                    action_mode: str, rng: np.random.Generator | None,
                    collect_states: bool = False):
    """Shared rollout loop for the learned policy; optionally snapshots the
    pre-action state of every step for gradient computation."""
    if q.n_passages > params.n_max:
        raise ValueError(f"instance has {q.n_passages} passages but the "
                         f"policy supports at most {params.n_max}")
    if q.n_layers != params.n_layers:
        raise ValueError(f"instance has {q.n_layers} layers but the policy "
                         f"was built for {params.n_layers}")
    if action_mode == "sample" and rng is None:
        raise ValueError("sample mode requires an rng")
    limit = _check_budget(budget, q)
    n, L = q.n_passages, q.n_layers
    skyline = Skyline.empty(n)
    actions: list[int] = []
    states: list[Skyline] = []
    while len(actions) < limit and any(h < L for h in skyline.heights):
        mask = [i for i in range(n) if skyline.heights[i] < L]
        dist = policy_distribution(skyline, params, mask)
        action = select_action(dist, action_mode, rng)
        if collect_states:
            states.append(skyline.copy())
        expand(skyline, q, action, calib)
        actions.append(action)
    selected, correct, _ = output_phase(skyline, q, m, mode, calib)
    log = ScheduleLog(actions=tuple(actions), rewards=(),
                      final_skyline=skyline, selected_towers=selected,
                      prediction_correct=correct)
    return log, states


def run_policy_skyline(q: QuestionInstance, budget: Budget, m: int, mode: str,
                       calib: CalibrationTable, params: PolicyParams,
                       action_mode: str = "greedy",
                       rng: np.random.Generator | None = None) -> ScheduleLog:
    """Global scheduling driven by the learned softmax policy."""
    log, _ = _policy_rollout(q, budget, m, mode, calib, params, action_mode, rng)
    return log


def run_uniform_random(q: QuestionInstance, budget: Budget, m: int, mode: str,
                       calib: CalibrationTable,
                       rng: np.random.Generator) -> ScheduleLog:
    """Reference scheduler: expand a uniformly random expandable tower."""
    limit = _check_budget(budget, q)
    n, L = q.n_passages, q.n_layers
    skyline = Skyline.empty(n)
    actions: list[int] = []
    while len(actions) < limit and any(h < L for h in skyline.heights):
        mask = [i for i in range(n) if skyline.heights[i] < L]
        action = mask[int(rng.integers(len(mask)))]
        expand(skyline, q, action, calib)
        actions.append(action)
    selected, correct, _ = output_phase(skyline, q, m, mode, calib)
    return ScheduleLog(actions=tuple(actions), rewards=(),
                       final_skyline=skyline, selected_towers=selected,
                       prediction_correct=correct)


def run_static(q: QuestionInstance, strategy: str, m: int,
               calib: CalibrationTable, k: int | None = None) -> ScheduleLog:
    """Static baselines.

    standard reads every passage to full height and answers at the final
    layer. efficient reads every passage to layer k and answers there
    (any_layer forced). top_k reads only the k best-ranked passages, to
    full height.
    """
    n, L = q.n_passages, q.n_layers
    skyline = Skyline.empty(n)
    actions: list[int] = []

    if strategy == "standard":
        towers, depth, mode = range(n), L, "last_layer"
    elif strategy == "efficient":
        if k is None or not 1 <= k <= L:
            raise ValueError("efficient requires k in [1, n_layers]")
        towers, depth, mode = range(n), k, "any_layer"
    elif strategy == "top_k":
        if k is None or not 1 <= k <= n:
            raise ValueError("top_k requires k in [1, n_passages]")
        towers, depth, mode = range(k), L, "last_layer"
    else:
        raise ValueError(f"unknown static strategy {strategy!r}")

    for i in towers:
        for _ in range(depth):
            expand(skyline, q, i, calib)
            actions.append(i)
    selected, correct, _ = output_phase(skyline, q, m, mode, calib)
    return ScheduleLog(actions=tuple(actions), rewards=(),
                       final_skyline=skyline, selected_towers=selected,
                       prediction_correct=correct)


GLOBAL_STRATEGIES = ("greedy_skyline", "policy_skyline", "random")
STATIC_STRATEGIES = ("standard", "efficient", "top_k")
ALL_STRATEGIES = ("tower_builder",) + GLOBAL_STRATEGIES + STATIC_STRATEGIES


@dataclass(frozen=True)
class SchedulerConfig:
    """One scheduler run fully described: strategy plus its parameters."""

    strategy: str
    m: int = 1
    output_mode: str = "last_layer"
    tau: float | None = None
    budget: Budget | None = None
    k_layers: int | None = None
    k_passages: int | None = None
    init_rule: str = "rank_order"
    action_mode: str = "greedy"
    seed: int = 0
    params: PolicyParams | None = None

    def __post_init__(self):
        if self.strategy not in ALL_STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"unknown output mode {self.output_mode!r}")
        if self.strategy == "tower_builder" and self.tau is None:
            raise ValueError("tower_builder requires tau")
        if self.strategy in GLOBAL_STRATEGIES and self.budget is None:
            raise ValueError(f"{self.strategy} requires a budget")
        if self.strategy == "policy_skyline" and self.params is None:
            raise ValueError("policy_skyline requires params")
        if self.strategy == "efficient" and self.k_layers is None:
            raise ValueError("efficient requires k_layers")
        if self.strategy == "top_k" and self.k_passages is None:
            raise ValueError("top_k requires k_passages")
        if self.init_rule not in INIT_RULES:
            raise ValueError(f"unknown init rule {self.init_rule!r}")

    def replace_value(self, value: float) -> "SchedulerConfig":
        """Copy of this config with the strategy's swept parameter changed."""
        if self.strategy == "tower_builder":
            return replace(self, tau=float(value))
        if self.strategy in GLOBAL_STRATEGIES:
            return replace(self, budget=Budget(int(value)))
        if self.strategy == "efficient":
            return replace(self, k_layers=int(value))
        if self.strategy == "top_k":
            return replace(self, k_passages=int(value))
        raise ValueError(f"{self.strategy} has no swept parameter")

    def swept_value(self) -> float:
        if self.strategy == "tower_builder":
            return float(self.tau)
        if self.strategy in GLOBAL_STRATEGIES:
            return float(self.budget.total_layers)
        if self.strategy == "efficient":
            return float(self.k_layers)
        if self.strategy == "top_k":
            return float(self.k_passages)
        return 0.0


def run_scheduler(q: QuestionInstance, config: SchedulerConfig,
                  calib: CalibrationTable,
                  question_index: int = 0) -> ScheduleLog:
    """Dispatch one question to the configured strategy.

    Stochastic strategies derive their random stream from
    (config.seed, question_index) so corpus runs are order-independent.
    """
    s = config.strategy
    if s == "tower_builder":
        return run_tower_builder(q, config.tau, config.m, config.output_mode,
                                 calib)
    if s == "greedy_skyline":
        return run_greedy_skyline(q, config.budget, config.m,
                                  config.output_mode, calib, config.init_rule)
    if s == "policy_skyline":
        rng = None
        if config.action_mode == "sample":
            rng = np.random.default_rng((config.seed, question_index))
        return run_policy_skyline(q, config.budget, config.m,
                                  config.output_mode, calib, config.params,
                                  config.action_mode, rng)
    if s == "random":
        rng = np.random.default_rng((config.seed, question_index))
        return run_uniform_random(q, config.budget, config.m,
                                  config.output_mode, calib, rng)
    if s == "standard":
        return run_static(q, "standard", config.m, calib)
    if s == "efficient":
        return run_static(q, "efficient", config.m, calib, k=config.k_layers)
    if s == "top_k":
        return run_static(q, "top_k", config.m, calib, k=config.k_passages)
    raise ValueError(f"unknown strategy {s!r}")
