"""Hidden Markov model whose hidden states are the clusterings of ``n`` series.

Transitions are smoothed transition frequencies from a labelled sequence;
emissions are the pairwise exponential likelihoods of the observed
similarity matrix under the state's co-membership pattern.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClusterTimeline, Partition, all_partitions, pair_indices, pair_membership, rgs_array
from .errors import CapacityError, ContractError
from .exp_model import ExpModelParams, TrainingSet, class_loglik, train_exponential

HMM_GUARD = 8


@dataclass(frozen=True)
class ClusterHmm:
    states: tuple
    log_transition: np.ndarray
    log_initial: np.ndarray
    emission: ExpModelParams

    def __post_init__(self):
        b = len(self.states)
        if self.log_transition.shape != (b, b) or self.log_initial.shape != (b,):
            raise ContractError("transition/initial shapes do not match the state count")
        rows = np.logaddexp.reduce(self.log_transition, axis=1)
        if not np.allclose(rows, 0.0, atol=1e-9):
            raise ContractError("transition rows must sum to 1")
        if not np.isclose(np.logaddexp.reduce(self.log_initial), 0.0, atol=1e-9):
            raise ContractError("initial distribution must sum to 1")

    @property
    def n(self) -> int:
        return self.emission.n

    def index(self, p: Partition) -> int:
        return _state_index(self.n)[tuple(p.labels().tolist())]


def _state_index(n: int) -> dict:
    return {tuple(int(x) for x in row): i for i, row in enumerate(rgs_array(n))}


def _check_guard(n: int) -> None:
    if n > HMM_GUARD:
        raise CapacityError(f"HMM state space is Bell(n); capped at n={HMM_GUARD}")


def hmm_train(data: TrainingSet, alpha: float = 1.0, rates: str = "conditional") -> ClusterHmm:
    """Smoothed maximum-likelihood transitions and initial frequencies.

    ``transition[a, b] = (count(a -> b) + alpha) / (count(a -> .) + alpha * B)``.
    With ``alpha = 0`` a state never seen as a source gets a uniform row.
    """
    if not isinstance(data, TrainingSet):
        data = TrainingSet(tuple(data))
    if len(data) < 2:
        raise ContractError("HMM training needs at least two time steps")
    if alpha < 0:
        raise ContractError("alpha must be non-negative")
    n = data.n
    _check_guard(n)
    lookup = _state_index(n)
    b = len(lookup)
    seq = np.array([lookup[tuple(p.labels().tolist())] for _, p in data.observations])
    counts = np.zeros((b, b))
    np.add.at(counts, (seq[:-1], seq[1:]), 1.0)
    num = counts + alpha
    den = num.sum(axis=1, keepdims=True)
    trans = np.where(den > 0, num / np.where(den > 0, den, 1.0), 1.0 / b)
    freq = np.bincount(seq, minlength=b) + alpha
    init = freq / freq.sum()
    with np.errstate(divide="ignore"):
        return ClusterHmm(
            states=tuple(all_partitions(n)),
            log_transition=np.log(trans),
            log_initial=np.log(init),
            emission=train_exponential(data, rates=rates),
        )


def emission_loglik(s, state: Partition, emission: ExpModelParams) -> float:
    """Sum over pairs of the exponential log-density for the state's class (no prior term)."""
    if state.n != emission.n:
        raise ContractError("state and emission disagree on n")
    l1, l0 = class_loglik(s, emission, with_prior=False)
    lab = state.labels()
    iu, ju = pair_indices(state.n)
    return float(np.where(lab[iu] == lab[ju], l1[iu, ju], l0[iu, ju]).sum())


def _split_obs(observations):
    obs = list(observations)
    if not obs:
        raise ContractError("need at least one observation")
    if isinstance(obs[0], tuple):
        return [k for k, _ in obs], [np.asarray(s, dtype=float) for _, s in obs]
    return list(range(1, len(obs) + 1)), [np.asarray(s, dtype=float) for s in obs]


def emission_matrix(hmm: ClusterHmm, sims) -> np.ndarray:
    """``(T, B)`` log emission for every step and state."""
    n = hmm.n
    iu, ju = pair_indices(n)
    mem = pair_membership(n).astype(float)
    out = np.empty((len(sims), len(hmm.states)))
    for t, s in enumerate(sims):
        l1, l0 = class_loglik(s, hmm.emission, with_prior=False)
        out[t] = l0[iu, ju].sum() + mem @ (l1 - l0)[iu, ju]
    return out


def viterbi_decode(hmm: ClusterHmm, observations) -> ClusterTimeline:
    """Most probable state path; ties go to the lower state index.

    ``observations`` is a list of similarity matrices (times ``1..T``) or of
    ``(time, matrix)`` pairs.
    """
    times, sims = _split_obs(observations)
    path = viterbi_path(hmm, emission_matrix(hmm, sims))
    return ClusterTimeline(tuple((k, hmm.states[i]) for k, i in zip(times, path)))


def viterbi_path(hmm: ClusterHmm, log_em: np.ndarray) -> list[int]:
    t_len, b = log_em.shape
    delta = hmm.log_initial + log_em[0]
    back = np.zeros((t_len, b), dtype=np.int64)
    lt = hmm.log_transition
    for t in range(1, t_len):
        cand = delta[:, None] + lt
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(b)] + log_em[t]
    path = [int(np.argmax(delta))]
    for t in range(t_len - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1]


def path_log_score(hmm: ClusterHmm, log_em: np.ndarray, path) -> float:
    score = hmm.log_initial[path[0]] + log_em[0, path[0]]
    for t in range(1, len(path)):
        score += hmm.log_transition[path[t - 1], path[t]] + log_em[t, path[t]]
    return float(score)


def forward_filter(hmm: ClusterHmm, observations) -> np.ndarray:
    """Filtered state posteriors ``P(state_t | S_1..S_t)``, shape ``(T, B)``."""
    _, sims = _split_obs(observations)
    log_em = emission_matrix(hmm, sims)
    out = np.empty_like(log_em)
    log_alpha = hmm.log_initial + log_em[0]
    for t in range(len(sims)):
        if t:
            log_alpha = np.logaddexp.reduce(log_alpha[:, None] + hmm.log_transition, axis=0) + log_em[t]
        log_alpha = log_alpha - np.logaddexp.reduce(log_alpha)
        out[t] = np.exp(log_alpha)
    return out


def filter_timeline(hmm: ClusterHmm, observations) -> ClusterTimeline:
    """Per-step argmax of the filtered posterior."""
    times, _ = _split_obs(observations)
    post = forward_filter(hmm, observations)
    return ClusterTimeline(tuple((k, hmm.states[int(np.argmax(row))]) for k, row in zip(times, post)))
