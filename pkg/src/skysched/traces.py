"""Core domain types and line-oriented trace file I/O.

A trace corpus stands in for an anytime multi-passage reader: for every
retrieved passage it records the raw per-layer confidence logits and the
per-layer answer-correctness flags that a real reader would produce.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable


class TraceFormatError(ValueError):
    """A trace file line could not be parsed or has a malformed schema."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TraceInvariantError(ValueError):
    """A domain invariant is violated; names the offending field."""

    def __init__(self, message: str, question_id: str | None = None,
                 field_name: str | None = None):
        self.question_id = question_id
        self.field_name = field_name
        self.raw_message = message
        parts = []
        if question_id is not None:
            parts.append(f"question {question_id!r}")
        if field_name is not None:
            parts.append(f"field {field_name!r}")
        if parts:
            message = f"{', '.join(parts)}: {message}"
        super().__init__(message)


def canonical_real(x: float) -> float:
    """Project a real onto the storage precision.

    Storage keeps 9 significant decimal digits and canonicalizes
    negative zero to zero, so a value that went through one
    save/load cycle is a fixed point of this function.
    """
    x = float(x)
    if x == 0.0:
        return 0.0
    return float(format(x, ".9g"))


@dataclass(frozen=True)
class PassageTrace:
    """Frozen per-passage reader output: one logit and one correctness flag per layer."""

    rank: int
    has_answer: bool
    logits: tuple[float, ...]
    answer_correct: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "logits", tuple(float(x) for x in self.logits))
        object.__setattr__(self, "answer_correct",
                           tuple(bool(b) for b in self.answer_correct))
        if not isinstance(self.rank, int) or self.rank < 1:
            raise TraceInvariantError("rank must be an integer >= 1",
                                      field_name="rank")
        if len(self.logits) < 1:
            raise TraceInvariantError("at least one layer required",
                                      field_name="logits")
        if len(self.answer_correct) != len(self.logits):
            raise TraceInvariantError(
                "logits and answer_correct must have equal length",
                field_name="answer_correct")
        for x in self.logits:
            if x != x or x in (float("inf"), float("-inf")):
                raise TraceInvariantError("logits must be finite",
                                          field_name="logits")
        if not self.has_answer and any(self.answer_correct):
            raise TraceInvariantError(
                "has_answer is false but answer_correct contains true entries",
                field_name="answer_correct")

    @property
    def n_layers(self) -> int:
        return len(self.logits)


@dataclass(frozen=True)
class QuestionInstance:
    """One question with its ranked passage traces (ranks exactly 1..n)."""

    question_id: str
    passages: tuple[PassageTrace, ...]

    def __post_init__(self):
        object.__setattr__(self, "passages", tuple(self.passages))
        if not self.passages:
            raise TraceInvariantError("at least one passage required",
                                      question_id=self.question_id,
                                      field_name="passages")
        for i, p in enumerate(self.passages):
            if p.rank != i + 1:
                raise TraceInvariantError(
                    f"ranks must be exactly 1..n in order, got {p.rank} at position {i}",
                    question_id=self.question_id, field_name="rank")
        layer_counts = {p.n_layers for p in self.passages}
        if len(layer_counts) != 1:
            raise TraceInvariantError(
                f"all passages must share one layer count, got {sorted(layer_counts)}",
                question_id=self.question_id, field_name="logits")

    @property
    def n_passages(self) -> int:
        return len(self.passages)

    @property
    def n_layers(self) -> int:
        return self.passages[0].n_layers


@dataclass
class Skyline:
    """Mutable joint state of all towers for one question: heights plus the
    latest calibrated confidence observed at each tower's top layer.

    Owned by exactly one scheduler run; never shared across runs.
    """

    heights: list[int]
    summaries: list[float | None]
    cost_spent: int = 0

    @classmethod
    def empty(cls, n_towers: int) -> "Skyline":
        return cls(heights=[0] * n_towers, summaries=[None] * n_towers,
                   cost_spent=0)

    @property
    def n_towers(self) -> int:
        return len(self.heights)

    def check(self) -> None:
        """Raise if the height/summary pairing invariant is broken."""
        if len(self.summaries) != len(self.heights):
            raise TraceInvariantError("heights and summaries length mismatch",
                                      field_name="summaries")
        for i, (h, s) in enumerate(zip(self.heights, self.summaries)):
            if h < 0:
                raise TraceInvariantError(f"negative height at tower {i}",
                                          field_name="heights")
            if (s is None) != (h == 0):
                raise TraceInvariantError(
                    f"tower {i}: summary must be present iff height > 0",
                    field_name="summaries")

    def copy(self) -> "Skyline":
        return Skyline(heights=list(self.heights),
                       summaries=list(self.summaries),
                       cost_spent=self.cost_spent)


@dataclass(frozen=True)
class Budget:
    """Total number of layer executions allowed across all towers of one question.

    Zero is permitted as the degenerate no-computation case.
    """

    total_layers: int

    def __post_init__(self):
        if not isinstance(self.total_layers, int) or self.total_layers < 0:
            raise ValueError("budget must be a non-negative integer")


@dataclass(frozen=True)
class ScheduleLog:
    """Record of one scheduler run: every action taken, the final skyline,
    and the outcome of the output phase.

    ``actions`` counts only the scheduler's own layer executions; unrolling
    performed by the output phase shows up in ``final_skyline.cost_spent``.
    """

    actions: tuple[int, ...]
    rewards: tuple[float, ...]
    final_skyline: Skyline
    selected_towers: tuple[int, ...]
    prediction_correct: bool

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        object.__setattr__(self, "selected_towers", tuple(self.selected_towers))
        if self.rewards and len(self.rewards) != len(self.actions):
            raise TraceInvariantError(
                "rewards must be empty or match actions in length",
                field_name="rewards")

    @property
    def scheduler_layers(self) -> int:
        return len(self.actions)

    @property
    def unroll_layers(self) -> int:
        return self.final_skyline.cost_spent - len(self.actions)

    def to_json(self) -> str:
        return json.dumps({
            "actions": list(self.actions),
            "rewards": list(self.rewards),
            "final_skyline": {
                "heights": list(self.final_skyline.heights),
                "summaries": list(self.final_skyline.summaries),
                "cost_spent": self.final_skyline.cost_spent,
            },
            "selected_towers": list(self.selected_towers),
            "prediction_correct": self.prediction_correct,
        })

    @classmethod
    def from_json(cls, text: str) -> "ScheduleLog":
        obj = json.loads(text)
        sky = obj["final_skyline"]
        return cls(actions=tuple(obj["actions"]),
                   rewards=tuple(obj["rewards"]),
                   final_skyline=Skyline(heights=list(sky["heights"]),
                                         summaries=list(sky["summaries"]),
                                         cost_spent=sky["cost_spent"]),
                   selected_towers=tuple(obj["selected_towers"]),
                   prediction_correct=obj["prediction_correct"])


_TOP_KEYS = ("question_id", "passages")
_PASSAGE_KEYS = ("rank", "has_answer", "logits", "answer_correct")


def _check_keys(obj: dict, expected: tuple[str, ...], what: str, line: int) -> None:
    unknown = sorted(set(obj) - set(expected))
    if unknown:
        raise TraceFormatError(f"unknown {what} keys {unknown}", line=line)
    missing = sorted(set(expected) - set(obj))
    if missing:
        raise TraceFormatError(f"missing {what} keys {missing}", line=line)


def _decode_passage(obj: dict, qid: str, line: int) -> PassageTrace:
    if not isinstance(obj, dict):
        raise TraceFormatError("passage entry must be an object", line=line)
    _check_keys(obj, _PASSAGE_KEYS, "passage", line)
    rank = obj["rank"]
    if isinstance(rank, bool) or not isinstance(rank, int):
        raise TraceFormatError("rank must be an integer", line=line)
    if not isinstance(obj["has_answer"], bool):
        raise TraceFormatError("has_answer must be a boolean", line=line)
    logits = obj["logits"]
    if not isinstance(logits, list) or any(
            isinstance(x, bool) or not isinstance(x, (int, float)) for x in logits):
        raise TraceFormatError("logits must be a list of numbers", line=line)
    flags = obj["answer_correct"]
    if not isinstance(flags, list) or any(not isinstance(b, bool) for b in flags):
        raise TraceFormatError("answer_correct must be a list of booleans", line=line)
    try:
        return PassageTrace(rank=rank, has_answer=obj["has_answer"],
                            logits=tuple(logits), answer_correct=tuple(flags))
    except TraceInvariantError as exc:
        raise TraceInvariantError(exc.raw_message, question_id=qid,
                                  field_name=exc.field_name) from exc


def _decode_instance(obj, line: int) -> QuestionInstance:
    if not isinstance(obj, dict):
        raise TraceFormatError("each line must hold a JSON object", line=line)
    _check_keys(obj, _TOP_KEYS, "question", line)
    qid = obj["question_id"]
    if not isinstance(qid, str):
        raise TraceFormatError("question_id must be a string", line=line)
    raw = obj["passages"]
    if not isinstance(raw, list):
        raise TraceFormatError("passages must be a list", line=line)
    passages = tuple(_decode_passage(p, qid, line) for p in raw)
    return QuestionInstance(question_id=qid, passages=passages)


def load_traces(path: str | Path) -> list[QuestionInstance]:
    """Read a JSONL trace file, validating schema and invariants.

    Raises TraceFormatError with the 1-based line number on malformed input
    and TraceInvariantError naming the question and field on bad values.
    """
    instances: list[QuestionInstance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"invalid JSON ({exc.msg})",
                                       line=lineno) from exc
            instances.append(_decode_instance(obj, lineno))
    return instances


def _encode_instance(inst: QuestionInstance) -> str:
    payload = {
        "question_id": inst.question_id,
        "passages": [
            {
                "rank": p.rank,
                "has_answer": p.has_answer,
                "logits": [canonical_real(x) for x in p.logits],
                "answer_correct": list(p.answer_correct),
            }
            for p in inst.passages
        ],
    }
    return json.dumps(payload, ensure_ascii=False)


def save_traces(instances: Iterable[QuestionInstance], path: str | Path) -> None:
    """Write instances as one JSON object per line, reals at storage precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(_encode_instance(inst))
            fh.write("\n")


def save_logs(logs: Iterable[ScheduleLog], path: str | Path) -> None:
    """Write scheduler run logs as JSONL for later replay."""
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(log.to_json())
            fh.write("\n")


def load_logs(path: str | Path) -> list[ScheduleLog]:
    with open(path, encoding="utf-8") as fh:
        return [ScheduleLog.from_json(line) for line in fh if line.strip()]
