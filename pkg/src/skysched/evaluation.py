"""Budget sweeps, accuracy curves, and scheduling diagnostics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .calibration import CalibrationTable
from .schedulers import GLOBAL_STRATEGIES, SchedulerConfig, run_scheduler
from .traces import QuestionInstance, ScheduleLog


@dataclass(frozen=True)
class Diagnostics:
    """Scheduling-behaviour metrics aggregated over a corpus of runs.

    var_h: population variance of final tower heights, averaged over
        questions.
    avg_rank: mean retrieval rank (1-based) of the chosen tower over all
        actions.
    flips: mean per-question count of consecutive actions that switch
        towers; None in reports for strategies that process towers in
        isolation or statically.
    h_plus_minus: mean over questions of (mean final height of answer
        towers - mean final height of non-answer towers); questions lacking
        one of the groups are skipped.
    hap: fraction of all actions that expand a tower whose passage holds an
        answer.
    """

    var_h: float
    avg_rank: float
    flips: float | None
    h_plus_minus: float
    hap: float


def compute_diagnostics(logs: Sequence[ScheduleLog],
                        corpus: Sequence[QuestionInstance]) -> Diagnostics:
    """Recompute all five metrics from raw logs; logs align with corpus."""
    if len(logs) != len(corpus):
        raise ValueError("logs and corpus must align one-to-one")
    if not logs:
        raise ValueError("at least one log required")

    var_sum = 0.0
    flip_sum = 0.0
    rank_sum = 0.0
    action_count = 0
    hit_count = 0
    gap_sum = 0.0
    gap_questions = 0

    for log, q in zip(logs, corpus):
        heights = log.final_skyline.heights
        mean_h = sum(heights) / len(heights)
        var_sum += sum((h - mean_h) ** 2 for h in heights) / len(heights)

        flips = sum(1 for t in range(1, len(log.actions))
                    if log.actions[t] != log.actions[t - 1])
        flip_sum += flips

        for a in log.actions:
            rank_sum += q.passages[a].rank
            hit_count += int(q.passages[a].has_answer)
            action_count += 1

        plus = [h for h, p in zip(heights, q.passages) if p.has_answer]
        minus = [h for h, p in zip(heights, q.passages) if not p.has_answer]
        if plus and minus:
            gap_sum += sum(plus) / len(plus) - sum(minus) / len(minus)
            gap_questions += 1

    return Diagnostics(
        var_h=var_sum / len(logs),
        avg_rank=rank_sum / action_count if action_count else 0.0,
        flips=flip_sum / len(logs),
        h_plus_minus=gap_sum / gap_questions if gap_questions else 0.0,
        hap=hit_count / action_count if action_count else 0.0)


@dataclass(frozen=True)
class EvalPoint:
    """One accuracy/cost measurement of a scheduler configuration."""

    budget_param: float
    avg_layers: float
    accuracy: float
    scheduler_layers: float
    unroll_layers: float
    diagnostics: Diagnostics


@dataclass(frozen=True)
class EvalReport:
    """Accuracy-vs-cost curve with per-point diagnostics and cost breakdown."""

    n_layers: int
    n_passages: int
    curve: tuple[EvalPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "curve", tuple(self.curve))
        layers = [p.avg_layers for p in self.curve]
        if layers != sorted(layers):
            raise ValueError("curve must be sorted by avg_layers ascending")

    def to_json(self) -> str:
        payload = {
            "n_layers": self.n_layers,
            "n_passages": self.n_passages,
            "curve": [
                {
                    "budget_param": p.budget_param,
                    "avg_layers": p.avg_layers,
                    "accuracy": p.accuracy,
                    "scheduler_layers": p.scheduler_layers,
                    "unroll_layers": p.unroll_layers,
                    "diagnostics": {
                        "var_h": p.diagnostics.var_h,
                        "avg_rank": p.diagnostics.avg_rank,
                        "flips": p.diagnostics.flips,
                        "h_plus_minus": p.diagnostics.h_plus_minus,
                        "hap": p.diagnostics.hap,
                    },
                }
                for p in self.curve
            ],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        curve = tuple(
            EvalPoint(
                budget_param=p["budget_param"],
                avg_layers=p["avg_layers"],
                accuracy=p["accuracy"],
                scheduler_layers=p["scheduler_layers"],
                unroll_layers=p["unroll_layers"],
                diagnostics=Diagnostics(**p["diagnostics"]))
            for p in obj["curve"])
        return cls(n_layers=obj["n_layers"], n_passages=obj["n_passages"],
                   curve=curve)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["budget_param", "avg_layers", "accuracy",
                         "scheduler_layers", "unroll_layers"])
        for p in self.curve:
            writer.writerow([p.budget_param, p.avg_layers, p.accuracy,
                             p.scheduler_layers, p.unroll_layers])
        writer.writerow([])
        writer.writerow(["# diagnostics"])
        writer.writerow(["budget_param", "var_h", "avg_rank", "flips",
                         "h_plus_minus", "hap"])
        for p in self.curve:
            d = p.diagnostics
            writer.writerow([p.budget_param, d.var_h, d.avg_rank,
                             "" if d.flips is None else d.flips,
                             d.h_plus_minus, d.hap])
        return buf.getvalue()

    def save(self, json_path: str | Path | None = None,
             csv_path: str | Path | None = None) -> None:
        if json_path is not None:
            Path(json_path).write_text(self.to_json() + "\n", encoding="utf-8")
        if csv_path is not None:
            Path(csv_path).write_text(self.to_csv(), encoding="utf-8")


def run_all(corpus: Sequence[QuestionInstance], config: SchedulerConfig,
            calib: CalibrationTable) -> list[ScheduleLog]:
    """Run the configured scheduler on every question, in corpus order."""
    return [run_scheduler(q, config, calib, question_index=i)
            for i, q in enumerate(corpus)]


def evaluate(corpus: Sequence[QuestionInstance], config: SchedulerConfig,
             calib: CalibrationTable) -> EvalPoint:
    """One curve point: accuracy and per-passage layer cost over the corpus.

    avg_layers counts everything, including output-phase unrolling. The
    flips diagnostic is reported only for global scheduling strategies.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    logs = run_all(corpus, config, calib)
    diag = compute_diagnostics(logs, corpus)
    if config.strategy not in GLOBAL_STRATEGIES:
        diag = Diagnostics(var_h=diag.var_h, avg_rank=diag.avg_rank,
                           flips=None, h_plus_minus=diag.h_plus_minus,
                           hap=diag.hap)
    total_cost = sum(log.final_skyline.cost_spent for log in logs)
    total_sched = sum(log.scheduler_layers for log in logs)
    total_unroll = sum(log.unroll_layers for log in logs)
    passages = sum(q.n_passages for q in corpus)
    accuracy = sum(log.prediction_correct for log in logs) / len(logs)
    return EvalPoint(
        budget_param=config.swept_value(),
        avg_layers=total_cost / passages,
        accuracy=accuracy,
        scheduler_layers=total_sched / len(logs),
        unroll_layers=total_unroll / len(logs),
        diagnostics=diag)


def sweep(corpus: Sequence[QuestionInstance], config: SchedulerConfig,
          values: Sequence[float],
          calib: CalibrationTable) -> EvalReport:
    """Evaluate the strategy once per swept value and assemble the curve.

    The swept parameter is tau for local early exit, the layer budget for
    global schedulers, the exit layer for the efficient baseline and the
    passage count for the top-k baseline.
    """
    if not values:
        raise ValueError("at least one swept value required")
    points = [evaluate(corpus, config.replace_value(v), calib)
              for v in values]
    points.sort(key=lambda p: p.avg_layers)
    return EvalReport(n_layers=corpus[0].n_layers,
                      n_passages=corpus[0].n_passages,
                      curve=tuple(points))


@dataclass(frozen=True)
class ReductionResult:
    """Outcome of the cost-at-target-accuracy query."""

    reachable: bool
    target_accuracy: float
    avg_layers: float | None
    factor: float | None


def reduction_factor(report: EvalReport,
                     target_fraction: float) -> ReductionResult:
    """Smallest average layer cost on the curve reaching the target fraction
    of full-cost accuracy, with linear interpolation between points.

    The curve must contain the full-cost point (avg_layers equal to the
    layer count); an unreachable target is reported, not raised.
    """
    full = [p for p in report.curve
            if abs(p.avg_layers - report.n_layers) < 1e-9]
    if not full:
        raise ValueError("curve lacks the full-cost point")
    target = target_fraction * full[0].accuracy

    prev = None
    for point in report.curve:
        if point.accuracy >= target:
            if prev is None:
                layers = point.avg_layers
            else:
                # prev is below target here, so the segment crosses it
                frac = (target - prev.accuracy) / (point.accuracy
                                                   - prev.accuracy)
                layers = prev.avg_layers + frac * (point.avg_layers
                                                   - prev.avg_layers)
            return ReductionResult(reachable=True, target_accuracy=target,
                                   avg_layers=layers,
                                   factor=report.n_layers / layers)
        prev = point
    return ReductionResult(reachable=False, target_accuracy=target,
                           avg_layers=None, factor=None)
