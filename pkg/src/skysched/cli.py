"""Command-line entry point: corpus generation, splitting, calibration,
training, evaluation and sweeps.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

from .calibration import CalibrationTable, calibrate
from .evaluation import EvalReport, evaluate, run_all, sweep
from .policy import PolicyParams, init_policy_params
from .schedulers import (ALL_STRATEGIES, GLOBAL_STRATEGIES, Budget,
                         SchedulerConfig)
from .synthetic import GeneratorConfig, generate
from .traces import (QuestionInstance, TraceFormatError, TraceInvariantError,
                     load_traces, save_logs, save_traces)
from .training import TrainConfig, train
from .validation import common_layer_count

# dataset split fractions for train/dev0/dev1/test
DEFAULT_RATIOS = (0.803, 0.0446, 0.0446, 0.1078)
SPLIT_NAMES = ("train", "dev0", "dev1", "test")


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated values")
    return tuple(float(p) for p in parts)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def _split_bucket(question_id: str, ratios: tuple[float, ...]) -> int:
    digest = hashlib.sha256(question_id.encode("utf-8")).digest()
    u = int.from_bytes(digest[:8], "big") / 2 ** 64
    acc = 0.0
    for i, r in enumerate(ratios):
        acc += r
        if u < acc:
            return i
    return len(ratios) - 1


def cmd_gen_traces(args) -> int:
    config = GeneratorConfig(
        n_passages=args.n_passages, n_layers=args.n_layers, seed=args.seed,
        answer_rate_by_rank=args.answer_decay, drift=args.drift,
        noise_sd=args.noise_sd,
        extraction_reliability=args.extraction_reliability)
    instances = generate(config, args.count)
    save_traces(instances, args.out)
    print(f"wrote {len(instances)} questions "
          f"({config.n_passages} passages x {config.n_layers} layers) "
          f"to {args.out}")
    return 0


def cmd_split(args) -> int:
    ratios = args.ratios
    if len(ratios) != 4 or abs(sum(ratios) - 1.0) > 1e-6:
        raise ValueError("ratios must be four fractions summing to 1")
    instances = load_traces(args.traces)
    buckets: list[list[QuestionInstance]] = [[] for _ in SPLIT_NAMES]
    for inst in instances:
        buckets[_split_bucket(inst.question_id, ratios)].append(inst)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sizes = []
    for name, bucket in zip(SPLIT_NAMES, buckets):
        save_traces(bucket, out_dir / f"{name}.jsonl")
        sizes.append(f"{name}={len(bucket)}")
    print(f"split {len(instances)} questions: {', '.join(sizes)}")
    return 0


def cmd_calibrate(args) -> int:
    dev = load_traces(args.dev0)
    table = calibrate(dev, args.grid)
    table.save(args.out)
    temps = ", ".join(f"{t:.3g}" for t in table.temperatures)
    print(f"fitted {table.n_layers} temperatures on {len(dev)} questions: "
          f"[{temps}]")
    return 0


def cmd_train(args) -> int:
    corpus = load_traces(args.dev0)
    dev = load_traces(args.dev1) if args.dev1 else None
    calib = CalibrationTable.load(args.calibration)
    n_layers = common_layer_count(corpus)
    n_max = max(q.n_passages for q in corpus)
    init = init_policy_params(
        d=args.d, n_layers=n_layers, n_max=n_max, seed=args.seed,
        init_priority_mode=args.init_priority,
        init_priority_value=args.init_priority_value)
    cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                      epochs=args.epochs, max_steps=args.max_steps,
                      step_cost=args.step_cost, gamma=args.gamma,
                      seed=args.seed, use_baseline=args.use_baseline)
    params, history = train(corpus, init, cfg, calib, dev=dev)
    params.save(args.out)
    if args.history:
        history.write_csv(args.history)
    last = history.epochs[-1] if history.epochs else None
    summary = (f"mean_return={last.mean_return:.4f} "
               f"held_out_hap={last.held_out_hap:.4f}" if last else "no epochs")
    print(f"trained {cfg.epochs} epochs on {len(corpus)} questions; {summary}; "
          f"params written to {args.out}")
    return 0


def _scheduler_config(args) -> SchedulerConfig:
    params = None
    if args.strategy == "policy_skyline":
        if not args.params:
            raise ValueError("--params is required for the policy strategy")
        params = PolicyParams.load(args.params)
    budget = Budget(args.budget) if args.budget is not None else None
    return SchedulerConfig(
        strategy=args.strategy, m=args.m, output_mode=args.output_mode,
        tau=args.tau, budget=budget, k_layers=args.k_layers,
        k_passages=args.k_passages, init_rule=args.init_rule,
        action_mode=args.action_mode, seed=args.seed, params=params)


def _load_corpus_and_calib(args):
    corpus = load_traces(args.traces)
    if not corpus:
        raise ValueError(f"no questions in {args.traces}")
    calib = CalibrationTable.load(args.calibration)
    return corpus, calib


def cmd_evaluate(args) -> int:
    corpus, calib = _load_corpus_and_calib(args)
    config = _scheduler_config(args)
    point = evaluate(corpus, config, calib)
    report = EvalReport(n_layers=corpus[0].n_layers,
                        n_passages=corpus[0].n_passages, curve=(point,))
    report.save(json_path=args.out_json, csv_path=args.out_csv)
    if args.out_logs:
        save_logs(run_all(corpus, config, calib), args.out_logs)
    print(f"{config.strategy}: accuracy={point.accuracy:.4f} "
          f"avg_layers={point.avg_layers:.3f} hap={point.diagnostics.hap:.4f}")
    return 0


def cmd_sweep(args) -> int:
    corpus, calib = _load_corpus_and_calib(args)
    # seed the swept slot from the first value so the base config validates
    first = args.values[0]
    if args.strategy == "tower_builder" and args.tau is None:
        args.tau = float(first)
    elif args.strategy in GLOBAL_STRATEGIES and args.budget is None:
        args.budget = int(first)
    elif args.strategy == "efficient" and args.k_layers is None:
        args.k_layers = int(first)
    elif args.strategy == "top_k" and args.k_passages is None:
        args.k_passages = int(first)
    config = _scheduler_config(args)
    report = sweep(corpus, config, args.values, calib)
    report.save(json_path=args.out_json, csv_path=args.out_csv)
    xs = ", ".join(f"{p.avg_layers:.3f}" for p in report.curve)
    print(f"{config.strategy}: {len(report.curve)} points at avg layers [{xs}]")
    return 0


def _add_scheduler_flags(parser: argparse.ArgumentParser,
                         needs_values: bool) -> None:
    parser.add_argument("--traces", required=True)
    parser.add_argument("--calibration", required=True)
    parser.add_argument("--strategy", required=True, choices=ALL_STRATEGIES)
    parser.add_argument("--m", type=int, default=1)
    parser.add_argument("--output-mode", default="last_layer",
                        choices=("last_layer", "any_layer"))
    parser.add_argument("--tau", type=float)
    parser.add_argument("--budget", type=int)
    parser.add_argument("--k-layers", type=int)
    parser.add_argument("--k-passages", type=int)
    parser.add_argument("--init-rule", default="rank_order",
                        choices=("rank_order", "constant"))
    parser.add_argument("--action-mode", default="greedy",
                        choices=("greedy", "sample"))
    parser.add_argument("--params", help="policy parameters JSON")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-json")
    parser.add_argument("--out-csv")
    if not needs_values:
        parser.add_argument("--out-logs",
                            help="write per-question run logs as JSONL")
    if needs_values:
        group = parser.add_mutually_exclusive_group(required=True)
        group.add_argument("--values", type=_parse_floats, dest="values",
                           help="comma-separated swept values")
        group.add_argument("--budgets", type=_parse_floats, dest="values",
                           help="alias of --values for global schedulers")
        group.add_argument("--taus", type=_parse_floats, dest="values",
                           help="alias of --values for tower_builder")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skysched",
        description="Adaptive layer-budget scheduling over reader traces")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-traces", help="generate a synthetic corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--count", type=int, default=1000)
    gen.add_argument("--n-passages", type=int, default=30)
    gen.add_argument("--n-layers", type=int, default=24)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--answer-decay", type=_parse_triple,
                     default=GeneratorConfig.answer_rate_by_rank,
                     metavar="A,B,C")
    gen.add_argument("--drift", type=float, default=GeneratorConfig.drift)
    gen.add_argument("--noise-sd", type=float,
                     default=GeneratorConfig.noise_sd)
    gen.add_argument("--extraction-reliability", type=float,
                     default=GeneratorConfig.extraction_reliability)
    gen.set_defaults(func=cmd_gen_traces)

    split = sub.add_parser("split",
                           help="hash question ids into train/dev0/dev1/test")
    split.add_argument("--traces", required=True)
    split.add_argument("--out-dir", required=True)
    split.add_argument("--ratios", type=_parse_floats, default=DEFAULT_RATIOS)
    split.set_defaults(func=cmd_split)

    cal = sub.add_parser("calibrate", help="fit per-layer temperatures")
    cal.add_argument("--dev0", required=True)
    cal.add_argument("--grid", type=_parse_floats, default=None,
                     help="comma-separated temperatures; default log grid")
    cal.add_argument("--out", required=True)
    cal.set_defaults(func=cmd_calibrate)

    tr = sub.add_parser("train", help="train the scheduling policy")
    tr.add_argument("--dev0", required=True, help="training corpus")
    tr.add_argument("--dev1", help="held-out corpus for the history metric")
    tr.add_argument("--calibration", required=True)
    tr.add_argument("--out", required=True, help="trained parameters JSON")
    tr.add_argument("--history", help="optional per-epoch CSV")
    tr.add_argument("--seed", type=int, required=True)
    tr.add_argument("--lr", type=float, default=TrainConfig.lr)
    tr.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    tr.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    tr.add_argument("--max-steps", type=int, default=TrainConfig.max_steps)
    tr.add_argument("--step-cost", type=float, default=TrainConfig.step_cost)
    tr.add_argument("--gamma", type=float, default=TrainConfig.gamma)
    tr.add_argument("--use-baseline", action="store_true")
    tr.add_argument("--d", type=int, default=8)
    tr.add_argument("--init-priority", default="learnable",
                    choices=("learnable", "fixed"))
    tr.add_argument("--init-priority-value", type=float, default=0.0)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="one accuracy/cost point")
    _add_scheduler_flags(ev, needs_values=False)
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="accuracy/cost curve over swept values")
    _add_scheduler_flags(sw, needs_values=True)
    sw.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TraceFormatError, TraceInvariantError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
