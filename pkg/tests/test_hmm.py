import itertools
import math

import numpy as np
import pytest

from tricluster.core import Partition, all_partitions
from tricluster.errors import CapacityError, ContractError
from tricluster.exp_model import ExpModelParams, TrainingSet
from tricluster.hmm import (
    ClusterHmm, emission_loglik, emission_matrix, filter_timeline, forward_filter, hmm_train, path_log_score,
    viterbi_decode, viterbi_path,
)


def random_hmm(rng, n=3, sticky=0.0):
    b = len(all_partitions(n))
    trans = rng.dirichlet(np.ones(b), size=b) + sticky * np.eye(b)
    trans /= trans.sum(axis=1, keepdims=True)
    init = rng.dirichlet(np.ones(b))
    em = ExpModelParams(n, rng.uniform(0.5, 4, (n, n)), rng.uniform(0.5, 4, (n, n)), np.full((n, n), 0.5))
    return ClusterHmm(tuple(all_partitions(n)), np.log(trans), np.log(init), em)


def random_sims(rng, n, t):
    out = []
    for _ in range(t):
        s = rng.uniform(0, 1, (n, n))
        s = 0.5 * (s + s.T)
        np.fill_diagonal(s, 1.0)
        out.append(s)
    return out


def training(seq_text, n=3):
    parts = [Partition.parse(x) for x in seq_text]
    return TrainingSet.from_pairs([np.full((n, n), 0.5)] * len(parts), parts)


def test_five_states_for_three_series():
    hmm = hmm_train(training(["1,2|3", "1,2|3", "1|2|3"]))
    assert len(hmm.states) == 5


def test_constant_sequence_alpha_zero_point_mass():
    hmm = hmm_train(training(["1,2|3"] * 6), alpha=0.0)
    i = hmm.index(Partition.parse("1,2|3"))
    row = np.exp(hmm.log_transition[i])
    assert row[i] == 1.0 and row.sum() == pytest.approx(1.0)
    # unseen source states get uniform rows
    j = hmm.index(Partition.singletons(3))
    np.testing.assert_allclose(np.exp(hmm.log_transition[j]), 0.2)


def test_large_alpha_approaches_uniform():
    hmm = hmm_train(training(["1,2|3", "1|2,3", "1,2|3"]), alpha=1e9)
    np.testing.assert_allclose(np.exp(hmm.log_transition), 0.2, atol=1e-8)


def test_smoothed_counts():
    hmm = hmm_train(training(["1,2|3", "1,2|3", "1|2|3"]), alpha=1.0)
    i, j = hmm.index(Partition.parse("1,2|3")), hmm.index(Partition.singletons(3))
    assert math.exp(hmm.log_transition[i, i]) == pytest.approx(2 / 7)
    assert math.exp(hmm.log_transition[i, j]) == pytest.approx(2 / 7)
    assert math.exp(hmm.log_initial[i]) == pytest.approx(3 / 8)


def test_guard_and_validation():
    with pytest.raises(CapacityError):
        hmm_train(TrainingSet.from_pairs([np.eye(9)] * 2, [Partition.singletons(9)] * 2))
    with pytest.raises(ContractError):
        hmm_train(training(["1|2|3"]))
    with pytest.raises(ContractError):
        hmm_train(training(["1|2|3"] * 2), alpha=-1)


def test_two_series_emission_difference():
    em = ExpModelParams.uniform(2, 3.0, 0.5, 0.5)
    s = np.array([[1, 0.4], [0.4, 1]])
    d = emission_loglik(s, Partition.single_block(2), em) - emission_loglik(s, Partition.singletons(2), em)
    assert d == pytest.approx(math.log(3) - 3 * 0.4 - math.log(0.5) + 0.5 * 0.4)


def test_equal_rates_equal_emissions():
    em = ExpModelParams.uniform(3, 2.0, 2.0, 0.9)
    vals = [emission_loglik(np.full((3, 3), 0.7), p, em) for p in all_partitions(3)]
    np.testing.assert_allclose(vals, vals[0])


def test_merged_state_hand_sum():
    em = ExpModelParams.uniform(3, 2.0, 1.0, 0.5)
    assert emission_loglik(np.full((3, 3), 0.9), Partition.single_block(3), em) == \
        pytest.approx(3 * (math.log(2) - 1.8))


def test_emission_matrix_matches_per_state(rng):
    hmm = random_hmm(rng)
    sims = random_sims(rng, 3, 4)
    em = emission_matrix(hmm, sims)
    for t, s in enumerate(sims):
        for i, p in enumerate(hmm.states):
            assert em[t, i] == pytest.approx(emission_loglik(s, p, hmm.emission))


def brute_force_best(hmm, log_em):
    b = len(hmm.states)
    best, best_path = -np.inf, None
    for path in itertools.product(range(b), repeat=log_em.shape[0]):
        score = path_log_score(hmm, log_em, path)
        if score > best + 1e-12:
            best, best_path = score, list(path)
    return best, best_path


@pytest.mark.parametrize("t_len", [1, 2, 3, 4, 5])
def test_viterbi_equals_exhaustive(rng, t_len):
    for _ in range(3):
        hmm = random_hmm(rng)
        log_em = emission_matrix(hmm, random_sims(rng, 3, t_len))
        best, best_path = brute_force_best(hmm, log_em)
        path = viterbi_path(hmm, log_em)
        assert path_log_score(hmm, log_em, path) == pytest.approx(best, abs=1e-10)
        assert path == best_path


def test_single_observation_is_argmax():
    rng = np.random.default_rng(2)
    hmm = random_hmm(rng)
    s = random_sims(rng, 3, 1)
    em = emission_matrix(hmm, s)[0]
    assert viterbi_decode(hmm, s).partitions[0] == hmm.states[int(np.argmax(hmm.log_initial + em))]


def test_sticky_transitions_hold_dominant_state(rng):
    hmm = random_hmm(rng, sticky=1e6)
    em = emission_matrix(hmm, random_sims(rng, 3, 4))
    path = viterbi_path(hmm, em)
    assert len(set(path)) == 1
    assert path_log_score(hmm, em, path) == pytest.approx(brute_force_best(hmm, em)[0])


def test_uniform_transitions_decode_stepwise(rng):
    base = random_hmm(rng)
    b = len(base.states)
    hmm = ClusterHmm(base.states, np.full((b, b), -math.log(b)), base.log_initial, base.emission)
    sims = random_sims(rng, 3, 6)
    em = emission_matrix(hmm, sims)
    path = viterbi_path(hmm, em)
    assert path[0] == int(np.argmax(hmm.log_initial + em[0]))
    assert path[1:] == [int(np.argmax(row)) for row in em[1:]]


def test_viterbi_beats_random_paths(rng):
    for _ in range(3):
        hmm = random_hmm(rng)
        em = emission_matrix(hmm, random_sims(rng, 3, 20))
        best = path_log_score(hmm, em, viterbi_path(hmm, em))
        for _ in range(1000):
            assert path_log_score(hmm, em, rng.integers(5, size=20)) <= best + 1e-9


def test_filter_matches_path_enumeration(rng):
    hmm = random_hmm(rng)
    sims = random_sims(rng, 3, 3)
    em = emission_matrix(hmm, sims)
    post = forward_filter(hmm, sims)
    for t in range(3):
        weights = np.zeros(5)
        for path in itertools.product(range(5), repeat=t + 1):
            weights[path[-1]] += math.exp(path_log_score(hmm, em[: t + 1], path))
        np.testing.assert_allclose(post[t], weights / weights.sum(), atol=1e-12)


def test_filter_uniform_case():
    b = 5
    em = ExpModelParams.uniform(3, 1.0, 1.0, 0.5)
    hmm = ClusterHmm(tuple(all_partitions(3)), np.full((b, b), -math.log(b)), np.full(b, -math.log(b)), em)
    np.testing.assert_allclose(forward_filter(hmm, [np.eye(3)] * 4), 0.2)


def test_filter_timeline_argmax(rng):
    hmm = random_hmm(rng)
    obs = [(k, s) for k, s in zip(range(30, 34), random_sims(rng, 3, 4))]
    tl = filter_timeline(hmm, obs)
    post = forward_filter(hmm, obs)
    assert tl.times == [30, 31, 32, 33]
    assert [hmm.index(p) for p in tl.partitions] == list(np.argmax(post, axis=1))


def test_invalid_rows_rejected():
    em = ExpModelParams.uniform(2, 1.0, 1.0, 0.5)
    with pytest.raises(ContractError):
        ClusterHmm(tuple(all_partitions(2)), np.zeros((2, 2)), np.log([0.5, 0.5]), em)
