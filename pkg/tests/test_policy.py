"""Priority policy: features, distribution, action selection, gradients."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skysched import (PolicyParams, Skyline, count_parameters, features,
                      greedy_equivalent_params, init_policy_params,
                      log_policy_prob, log_prob_gradient, policy_distribution,
                      priority, select_action)

from .conftest import random_skyline


def test_features_are_table_lookups(small_params):
    sky = Skyline(heights=[3, 1, 0], summaries=[0.7, 0.4, None], cost_spent=4)
    f = features(sky, 0, small_params)
    assert np.array_equal(f.height_vec, small_params.height_emb[3])
    assert np.array_equal(f.index_vec, small_params.index_emb[0])
    assert f.has_answer_prob == 0.7
    assert len(f.concat()) == 2 * small_params.d + 1


def test_features_reject_empty_tower(small_params):
    sky = Skyline(heights=[0, 1], summaries=[None, 0.5], cost_spent=1)
    with pytest.raises(ValueError):
        features(sky, 0, small_params)


def test_expansion_changes_only_height_and_prob(small_params):
    before = Skyline(heights=[2, 1], summaries=[0.6, 0.3], cost_spent=3)
    after = Skyline(heights=[3, 1], summaries=[0.8, 0.3], cost_spent=4)
    fa, fb = features(before, 0, small_params), features(after, 0, small_params)
    assert np.array_equal(fa.index_vec, fb.index_vec)
    assert not np.array_equal(fa.height_vec, fb.height_vec)
    assert fa.has_answer_prob != fb.has_answer_prob
    # the untouched tower's features are unchanged
    ga, gb = features(before, 1, small_params), features(after, 1, small_params)
    assert np.array_equal(ga.concat(), gb.concat())


def test_equal_towers_differ_only_by_index(small_params):
    sky = Skyline(heights=[2, 2], summaries=[0.6, 0.6], cost_spent=4)
    fa = features(sky, 0, small_params)
    fb = features(sky, 1, small_params)
    assert np.array_equal(fa.height_vec, fb.height_vec)
    assert fa.has_answer_prob == fb.has_answer_prob
    assert not np.array_equal(fa.index_vec, fb.index_vec)


def test_priority_zero_mlp():
    params = greedy_equivalent_params(n_layers=4, n_max=3, d=4,
                                      empty_priority=0.0)
    sky = Skyline(heights=[2, 0], summaries=[0.7, None], cost_spent=2)
    assert priority(sky, 0, params) == pytest.approx(0.7)
    assert priority(sky, 1, params) == 0.0


def test_priority_alpha_half_mlp_quarter():
    # zero hidden path forces the MLP output to b2 = 0.25, so the priority
    # is 0.5 * 0.4 + 0.25 = 0.45
    params = greedy_equivalent_params(n_layers=3, n_max=2, d=2)
    params.alpha = 0.5
    params.b2 = 0.25
    sky = Skyline(heights=[1, 0], summaries=[0.4, None], cost_spent=1)
    assert priority(sky, 0, params) == pytest.approx(0.45, abs=1e-15)


def test_priority_hand_evaluated():
    # tiny fixed weights: d=1, all w1 rows 0.1, w2 all ones, zero biases.
    # feature vector [h_emb, i_emb, prob] = [0.5, 0.25, 0.4]
    # pre-activation per hidden unit: 0.1 * (0.5 + 0.25 + 0.4) = 0.115
    # mlp out = 32 * tanh(0.115); priority = 0.5*0.4 + that
    params = PolicyParams(
        d=1, n_layers=3, n_max=2, alpha=0.5,
        w1=np.full((3, 32), 0.1), b1=np.zeros(32), w2=np.ones(32), b2=0.0,
        height_emb=np.full((4, 1), 0.5), index_emb=np.full((2, 1), 0.25),
        init_priority=np.zeros(2))
    sky = Skyline(heights=[1, 0], summaries=[0.4, None], cost_spent=1)
    expected = 0.5 * 0.4 + 32 * math.tanh(0.115)
    assert priority(sky, 0, params) == pytest.approx(expected, rel=1e-12)


def test_distribution_uniform_over_equal_priorities():
    params = greedy_equivalent_params(n_layers=4, n_max=3, d=2,
                                      empty_priority=0.0)
    sky = Skyline.empty(3)
    dist = policy_distribution(sky, params)
    assert np.allclose(dist, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_distribution_two_towers_softmax():
    # priorities [1, 0] -> [e/(e+1), 1/(e+1)]
    params = greedy_equivalent_params(n_layers=4, n_max=2, d=2)
    sky = Skyline(heights=[1, 1], summaries=[1.0, 0.0], cost_spent=2)
    # summaries act as priorities with alpha=1 and zero MLP
    dist = policy_distribution(sky, params)
    e = math.e
    assert dist[0] == pytest.approx(e / (e + 1), abs=1e-12)
    assert dist[1] == pytest.approx(1 / (e + 1), abs=1e-12)
    assert dist[0] == pytest.approx(0.7311, abs=5e-5)
    assert dist[1] == pytest.approx(0.2689, abs=5e-5)


def test_distribution_masks_full_towers(small_params):
    L = small_params.n_layers
    sky = Skyline(heights=[L, 2, 1], summaries=[0.9, 0.5, 0.5], cost_spent=7)
    dist = policy_distribution(sky, small_params)
    assert dist[0] == 0.0
    assert dist[1] > 0 and dist[2] > 0
    assert dist.sum() == pytest.approx(1.0, abs=1e-12)


def test_distribution_empty_mask_rejected(small_params):
    L = small_params.n_layers
    sky = Skyline(heights=[L, L], summaries=[0.5, 0.5], cost_spent=2 * L)
    with pytest.raises(ValueError):
        policy_distribution(sky, small_params)


def test_select_action_modes(rng):
    assert select_action(np.array([0.0, 1.0, 0.0]), "sample", rng) == 1
    assert select_action(np.array([0.3, 0.4, 0.3]), "greedy") == 1
    assert select_action(np.array([0.5, 0.5]), "greedy") == 0
    with pytest.raises(ValueError):
        select_action(np.array([1.0]), "sample")
    with pytest.raises(ValueError):
        select_action(np.array([1.0]), "other")


def test_shift_invariance(small_params):
    rng = np.random.default_rng(8)
    sky = random_skyline(rng, small_params, 5)
    base = policy_distribution(sky, small_params)
    shifted = small_params.copy()
    shifted.b2 += 7.25  # constant added to every non-empty priority
    shifted.init_priority += 7.25
    moved = policy_distribution(sky, shifted)
    assert np.allclose(base, moved, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-30, max_value=30))
def test_shift_invariance_property(shift):
    params = greedy_equivalent_params(n_layers=3, n_max=4, d=2)
    sky = Skyline(heights=[1, 2, 0, 1], summaries=[0.2, 0.9, None, 0.5],
                  cost_spent=4)
    base = policy_distribution(sky, params)
    moved = params.copy()
    moved.b2 += shift
    moved.init_priority += shift
    assert np.allclose(base, policy_distribution(sky, moved), atol=1e-12)


def test_greedy_action_invariant_under_order_preserving_probs():
    params = greedy_equivalent_params(n_layers=6, n_max=4, d=2)
    sky = Skyline(heights=[1, 1, 1, 1], summaries=[0.2, 0.8, 0.5, 0.3],
                  cost_spent=4)
    before = select_action(policy_distribution(sky, params), "greedy")
    squashed = Skyline(heights=list(sky.heights),
                       summaries=[0.5 + (s - 0.5) / 10 for s in sky.summaries],
                       cost_spent=4)
    after = select_action(policy_distribution(squashed, params), "greedy")
    assert before == after == 1


def test_count_parameters_documented_formula():
    params = init_policy_params(d=8, n_layers=24, n_max=30)
    assert count_parameters(params) == 1080
    assert count_parameters(params) == (1 + (2 * 8 + 1) * 32 + 32 + 32 + 1
                                        + 25 * 8 + 30 * 8 + 30)
    tiny = init_policy_params(d=1, n_layers=1, n_max=1)
    assert count_parameters(tiny) == 1 + 3 * 32 + 32 + 32 + 1 + 2 + 1 + 1
    double = init_policy_params(d=8, n_layers=24, n_max=60)
    assert count_parameters(double) - count_parameters(params) == 30 * (8 + 1)


def test_single_expandable_tower_zero_gradient(small_params):
    L = small_params.n_layers
    sky = Skyline(heights=[L, 2, L], summaries=[0.5, 0.5, 0.5],
                  cost_spent=2 * L + 2)
    grad = log_prob_gradient(sky, 1, small_params)
    assert grad.alpha == 0.0
    assert not grad.w1.any() and not grad.w2.any()
    assert not grad.height_emb.any() and not grad.index_emb.any()
    assert not grad.init_priority.any()


def test_symmetric_towers_zero_alpha_gradient():
    # two towers identical in every feature except index, with zero index
    # embedding: identical priorities, so d log pi / d alpha cancels
    params = greedy_equivalent_params(n_layers=4, n_max=2, d=2)
    sky = Skyline(heights=[2, 2], summaries=[0.6, 0.6], cost_spent=4)
    grad = log_prob_gradient(sky, 0, params)
    assert grad.alpha == pytest.approx(0.0, abs=1e-15)


def _fd_check(params, sky, action, step=1e-5, rtol=1e-4):
    grad = log_prob_gradient(sky, action, params)
    mismatches = []
    for name in ("alpha", "b2"):
        plus, minus = params.copy(), params.copy()
        setattr(plus, name, getattr(plus, name) + step)
        setattr(minus, name, getattr(minus, name) - step)
        fd = (log_policy_prob(sky, action, plus)
              - log_policy_prob(sky, action, minus)) / (2 * step)
        an = getattr(grad, name)
        if abs(fd - an) > rtol * max(abs(fd), abs(an)) and abs(fd - an) > 1e-9:
            mismatches.append((name, fd, an))
    for name in ("w1", "b1", "w2", "height_emb", "index_emb",
                 "init_priority"):
        arr = getattr(params, name)
        an_arr = getattr(grad, name)
        for idx in np.ndindex(arr.shape):
            plus, minus = params.copy(), params.copy()
            getattr(plus, name)[idx] += step
            getattr(minus, name)[idx] -= step
            fd = (log_policy_prob(sky, action, plus)
                  - log_policy_prob(sky, action, minus)) / (2 * step)
            an = an_arr[idx]
            if abs(fd - an) > rtol * max(abs(fd), abs(an)) \
                    and abs(fd - an) > 1e-9:
                mismatches.append((f"{name}{idx}", fd, an))
    return mismatches


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(99)
    params = init_policy_params(d=2, n_layers=3, n_max=4, seed=21)
    for _ in range(5):
        sky = random_skyline(rng, params, 4)
        mask = [i for i in range(4) if sky.heights[i] < params.n_layers]
        action = int(rng.choice(mask))
        mismatches = _fd_check(params, sky, action)
        assert not mismatches, mismatches[:5]


def test_untouched_embedding_rows_get_zero_gradient(small_params):
    sky = Skyline(heights=[2, 0, 1, 0, 0], summaries=[0.5, None, 0.8, None, None],
                  cost_spent=3)
    grad = log_prob_gradient(sky, 2, small_params)
    # heights 2 and 1 are touched; rows 0, 3, 4 of the height table are not
    assert not grad.height_emb[0].any()
    assert not grad.height_emb[3].any()
    assert not grad.height_emb[4].any()
    assert grad.height_emb[1].any() or grad.height_emb[2].any()
    # towers 0 and 2 are non-empty: no init-priority gradient for them
    assert grad.init_priority[0] == 0.0
    assert grad.init_priority[2] == 0.0


def test_params_json_round_trip(tmp_path, small_params):
    path = tmp_path / "params.json"
    small_params.save(path)
    loaded = PolicyParams.load(path)
    assert loaded.alpha == small_params.alpha
    assert np.array_equal(loaded.w1, small_params.w1)
    assert np.array_equal(loaded.height_emb, small_params.height_emb)
    assert loaded.init_priority_learnable == small_params.init_priority_learnable
    bad = small_params.to_json().replace('"d": 4', '"d": 3')
    with pytest.raises(ValueError):
        PolicyParams.from_json(bad)
