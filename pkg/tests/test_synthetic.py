"""Synthetic corpus generator behaviour."""

import math

import pytest

from skysched import GeneratorConfig, generate, save_traces


def test_same_seed_identical_corpora(tmp_path):
    cfg = GeneratorConfig(n_passages=6, n_layers=5, seed=42)
    a = generate(cfg, 20)
    b = generate(cfg, 20)
    assert a == b
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_traces(a, pa)
    save_traces(b, pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_different_seeds_differ():
    a = generate(GeneratorConfig(n_passages=6, n_layers=5, seed=1), 10)
    b = generate(GeneratorConfig(n_passages=6, n_layers=5, seed=2), 10)
    assert a != b


def test_prefix_stability():
    # question substreams make shorter corpora prefixes of longer ones
    cfg = GeneratorConfig(n_passages=4, n_layers=3, seed=9)
    assert generate(cfg, 5) == generate(cfg, 10)[:5]


def test_rank_one_only_limit_case():
    cfg = GeneratorConfig(n_passages=5, n_layers=3, seed=3,
                          answer_rate_by_rank=(1.0, 50.0, 0.0))
    corpus = generate(cfg, 200)
    for q in corpus:
        assert q.passages[0].has_answer
        assert all(not p.has_answer for p in q.passages[1:])


def test_rank_one_rate_within_three_standard_errors():
    cfg = GeneratorConfig(n_passages=3, n_layers=4, seed=77)
    count = 10000
    corpus = generate(cfg, count)
    rate = sum(q.passages[0].has_answer for q in corpus) / count
    a, b, c = cfg.answer_rate_by_rank
    expected = a * math.exp(0.0) + c
    stderr = math.sqrt(expected * (1 - expected) / count)
    assert abs(rate - expected) <= 3 * stderr


def test_answer_rate_decays_with_rank():
    cfg = GeneratorConfig()
    rates = [cfg.answer_rate(r) for r in range(1, 31)]
    assert all(x > y for x, y in zip(rates, rates[1:]))
    assert all(0 <= r <= 1 for r in rates)


def test_instances_satisfy_invariants():
    corpus = generate(GeneratorConfig(n_passages=8, n_layers=6, seed=0), 50)
    for q in corpus:
        assert [p.rank for p in q.passages] == list(range(1, 9))
        for p in q.passages:
            assert len(p.logits) == len(p.answer_correct) == 6
            if not p.has_answer:
                assert not any(p.answer_correct)
            else:
                # correctness only where the reader is confident
                for x, flag in zip(p.logits, p.answer_correct):
                    if flag:
                        assert x > 0


def test_extraction_reliability_one_marks_all_confident_layers():
    cfg = GeneratorConfig(n_passages=4, n_layers=6, seed=5,
                          extraction_reliability=1.0)
    for q in generate(cfg, 30):
        for p in q.passages:
            if p.has_answer:
                assert all(flag == (x > 0)
                           for x, flag in zip(p.logits, p.answer_correct))


def test_count_zero_and_negative():
    cfg = GeneratorConfig(n_passages=2, n_layers=2, seed=0)
    assert generate(cfg, 0) == []
    with pytest.raises(ValueError):
        generate(cfg, -1)


def test_invalid_configs_rejected():
    with pytest.raises(ValueError):
        GeneratorConfig(answer_rate_by_rank=(0.9, 0.1, 0.2))  # a + c > 1
    with pytest.raises(ValueError):
        GeneratorConfig(drift=0.0)
    with pytest.raises(ValueError):
        GeneratorConfig(noise_sd=-1.0)
    with pytest.raises(ValueError):
        GeneratorConfig(extraction_reliability=1.5)
    with pytest.raises(ValueError):
        GeneratorConfig(n_passages=0)
