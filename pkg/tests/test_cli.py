"""CLI subcommands: flags, exit codes, artifacts, determinism."""

import json

import pytest

from skysched import load_traces
from skysched.cli import main


def run(argv):
    return main(argv)


def test_gen_defaults_shape(tmp_path):
    out = tmp_path / "traces.jsonl"
    assert run(["gen-traces", "--out", str(out), "--count", "3",
                "--seed", "1"]) == 0
    corpus = load_traces(out)
    assert len(corpus) == 3
    assert corpus[0].n_passages == 30
    assert corpus[0].n_layers == 24


def test_gen_count_zero(tmp_path):
    out = tmp_path / "empty.jsonl"
    assert run(["gen-traces", "--out", str(out), "--count", "0",
                "--seed", "1"]) == 0
    assert load_traces(out) == []


def test_missing_out_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        run(["gen-traces", "--count", "3", "--seed", "1"])
    assert err.value.code == 2
    assert "--out" in capsys.readouterr().err


def test_help_exits_zero(capsys):
    for cmd in ("gen-traces", "split", "calibrate", "train", "evaluate",
                "sweep"):
        with pytest.raises(SystemExit) as err:
            run([cmd, "--help"])
        assert err.value.code == 0
        assert "--" in capsys.readouterr().out


def test_unreadable_traces_is_runtime_error(tmp_path, capsys):
    assert run(["calibrate", "--dev0", str(tmp_path / "missing.jsonl"),
                "--out", str(tmp_path / "c.json")]) == 1
    assert "error" in capsys.readouterr().err


def _small_gen(tmp_path, seed=5):
    traces = tmp_path / "traces.jsonl"
    run(["gen-traces", "--out", str(traces), "--count", "40",
         "--n-passages", "4", "--n-layers", "3", "--seed", str(seed),
         "--drift", "0.8"])
    return traces


def test_split_partitions_everything(tmp_path):
    traces = _small_gen(tmp_path)
    out_dir = tmp_path / "splits"
    assert run(["split", "--traces", str(traces),
                "--out-dir", str(out_dir)]) == 0
    total = 0
    ids = set()
    for name in ("train", "dev0", "dev1", "test"):
        part = load_traces(out_dir / f"{name}.jsonl")
        total += len(part)
        ids.update(q.question_id for q in part)
    assert total == 40
    assert len(ids) == 40


def test_calibrate_writes_table(tmp_path):
    traces = _small_gen(tmp_path)
    out = tmp_path / "calib.json"
    assert run(["calibrate", "--dev0", str(traces), "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert len(obj["temperatures"]) == 3
    assert all(t > 0 for t in obj["temperatures"])


def test_sweep_budget_to_avg_layer_arithmetic(tmp_path):
    # any_layer mode spends exactly the budget, so the curve x-values are
    # budget / n_passages
    traces = tmp_path / "traces.jsonl"
    run(["gen-traces", "--out", str(traces), "--count", "20",
         "--n-passages", "30", "--n-layers", "8", "--seed", "3"])
    calib = tmp_path / "calib.json"
    run(["calibrate", "--dev0", str(traces), "--out", str(calib)])
    out_json = tmp_path / "curve.json"
    assert run(["sweep", "--traces", str(traces), "--calibration", str(calib),
                "--strategy", "greedy_skyline", "--output-mode", "any_layer",
                "--budgets", "30,60,90,120,240",
                "--out-json", str(out_json)]) == 0
    obj = json.loads(out_json.read_text())
    assert [p["avg_layers"] for p in obj["curve"]] == [1.0, 2.0, 3.0, 4.0, 8.0]


def test_evaluate_head_to_head_pair(tmp_path):
    traces = _small_gen(tmp_path)
    calib = tmp_path / "calib.json"
    run(["calibrate", "--dev0", str(traces), "--out", str(calib)])
    eff = tmp_path / "efficient.json"
    grd = tmp_path / "greedy.json"
    assert run(["evaluate", "--traces", str(traces), "--calibration",
                str(calib), "--strategy", "efficient", "--k-layers", "2",
                "--out-json", str(eff)]) == 0
    assert run(["evaluate", "--traces", str(traces), "--calibration",
                str(calib), "--strategy", "greedy_skyline", "--budget", "8",
                "--output-mode", "any_layer", "--out-json", str(grd)]) == 0
    eff_point = json.loads(eff.read_text())["curve"][0]
    grd_point = json.loads(grd.read_text())["curve"][0]
    assert eff_point["avg_layers"] == grd_point["avg_layers"] == 2.0


def test_full_pipeline_byte_identical(tmp_path):
    outputs = {}
    for label in ("first", "second"):
        work = tmp_path / label
        work.mkdir()
        traces = work / "traces.jsonl"
        calib = work / "calib.json"
        params = work / "params.json"
        curve_json = work / "curve.json"
        curve_csv = work / "curve.csv"
        assert run(["gen-traces", "--out", str(traces), "--count", "30",
                    "--n-passages", "4", "--n-layers", "3",
                    "--seed", "11", "--drift", "0.8"]) == 0
        assert run(["calibrate", "--dev0", str(traces),
                    "--out", str(calib)]) == 0
        assert run(["train", "--dev0", str(traces), "--calibration",
                    str(calib), "--out", str(params), "--seed", "11",
                    "--epochs", "2", "--batch-size", "8",
                    "--max-steps", "5"]) == 0
        assert run(["sweep", "--traces", str(traces), "--calibration",
                    str(calib), "--strategy", "policy_skyline",
                    "--params", str(params), "--budgets", "4,8",
                    "--out-json", str(curve_json),
                    "--out-csv", str(curve_csv)]) == 0
        outputs[label] = tuple(p.read_bytes() for p in
                               (traces, calib, params, curve_json, curve_csv))
    assert outputs["first"] == outputs["second"]


def test_evaluate_writes_replay_logs(tmp_path):
    from skysched import load_logs
    traces = _small_gen(tmp_path)
    calib = tmp_path / "calib.json"
    run(["calibrate", "--dev0", str(traces), "--out", str(calib)])
    logs_path = tmp_path / "logs.jsonl"
    assert run(["evaluate", "--traces", str(traces), "--calibration",
                str(calib), "--strategy", "greedy_skyline", "--budget", "6",
                "--out-logs", str(logs_path)]) == 0
    logs = load_logs(logs_path)
    assert len(logs) == len(load_traces(traces))
    assert all(len(log.actions) <= 6 for log in logs)


def test_policy_evaluate_requires_params(tmp_path, capsys):
    traces = _small_gen(tmp_path)
    calib = tmp_path / "calib.json"
    run(["calibrate", "--dev0", str(traces), "--out", str(calib)])
    assert run(["evaluate", "--traces", str(traces), "--calibration",
                str(calib), "--strategy", "policy_skyline",
                "--budget", "4"]) == 1
    assert "--params" in capsys.readouterr().err
