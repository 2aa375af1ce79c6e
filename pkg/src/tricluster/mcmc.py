"""Metropolis-Hastings over set partitions with split (fragmentation) and
merge (coagulation) proposals; the modal sample estimates the MAP.

Proposal, from a state with ``K`` blocks:

* fragmentation with probability ``f`` (``frag_prob``): pick one of the
  ``K`` blocks uniformly; a singleton yields a rejected self-move, otherwise
  one of its ``2**(s-1) - 1`` two-block splits is drawn uniformly;
* coagulation with probability ``1 - f``: merge a uniform pair of blocks.

``f`` becomes 1 when ``K = 1`` and 0 when every block is a singleton.
"""
from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import ClusterTimeline, EdgeEnsemble, Partition, canonicalize, ensemble_to_partition, pair_indices
from .errors import ContractError
from .exp_model import ExpModelParams, class_loglik
from .triangular import MapResult, log_posterior_unnorm


@dataclass(frozen=True)
class ChainConfig:
    steps: int = 100_000
    burn_in: int = 1_000
    thin: int = 1
    seed: int = 0
    frag_prob: float = 0.5
    estimator: Literal["mode", "max-score", "mean"] = "mode"
    trace: bool = False

    def __post_init__(self):
        if self.steps < 1 or not 0 <= self.burn_in < self.steps:
            raise ContractError("need 0 <= burn_in < steps")
        if self.thin < 1:
            raise ContractError("thin must be >= 1")
        if not 0 < self.frag_prob < 1:
            raise ContractError("frag_prob must lie in (0, 1)")
        if self.estimator not in ("mode", "max-score", "mean"):
            raise ContractError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class ChainStats:
    samples_kept: int
    acceptance_rate: float
    mode: Partition
    mode_frequency: float
    visited_distinct: int
    frequencies: dict
    trace: tuple = ()


def chain_rng(seed: int, chain: int = 0) -> random.Random:
    """Generator for chain ``chain`` of a run seeded with ``seed``.

    Streams are split by deriving one 64-bit seed per chain from the
    ``numpy.random.SeedSequence`` child ``(seed, spawn_key=(chain,))``, the
    same child ``SeedSequence(seed).spawn`` would hand out at position ``chain``.
    """
    child = np.random.SeedSequence(seed, spawn_key=(chain,))
    return random.Random(int(child.generate_state(1, np.uint64)[0]))


def _frag_prob(blocks, f: float) -> float:
    k = len(blocks)
    splittable = any(len(b) > 1 for b in blocks)
    if k == 1:
        return 1.0 if splittable else 0.0
    return f if splittable else 0.0


def _log_split(blocks_after_k: int, f_eff: float, size: int) -> float:
    # density of choosing one block among K then one of its 2^(s-1)-1 splits
    return math.log(f_eff) - math.log(blocks_after_k) - math.log(2 ** (size - 1) - 1)


def _log_merge(k: int, f_eff: float) -> float:
    return math.log(1.0 - f_eff) - math.log(k * (k - 1) / 2)


def split_log_ratio(blocks, idx: int, part_a, part_b, f: float) -> float:
    """``log q(reverse) - log q(forward)`` for splitting ``blocks[idx]`` into ``part_a | part_b``."""
    k = len(blocks)
    s = len(blocks[idx])
    after = [b for i, b in enumerate(blocks) if i != idx] + [list(part_a), list(part_b)]
    fwd = _log_split(k, _frag_prob(blocks, f), s)
    rev = _log_merge(k + 1, _frag_prob(after, f))
    return rev - fwd


def merge_log_ratio(blocks, a: int, b: int, f: float) -> float:
    """``log q(reverse) - log q(forward)`` for merging ``blocks[a]`` and ``blocks[b]``."""
    k = len(blocks)
    merged = list(blocks[a]) + list(blocks[b])
    after = [x for i, x in enumerate(blocks) if i not in (a, b)] + [merged]
    fwd = _log_merge(k, _frag_prob(blocks, f))
    rev = _log_split(k - 1, _frag_prob(after, f), len(merged))
    return rev - fwd


def _draw(blocks, rng: random.Random, f: float):
    """Draw one move. Returns ``None`` for a self-move, else a move tuple."""
    f_eff = _frag_prob(blocks, f)
    if f_eff == 0.0 and len(blocks) < 2:
        return None
    if rng.random() < f_eff:
        idx = rng.randrange(len(blocks))
        blk = blocks[idx]
        s = len(blk)
        if s == 1:
            return None
        r = rng.randrange(1, 2 ** (s - 1))
        part_a = [blk[0]] + [blk[t] for t in range(1, s) if not (r >> (t - 1)) & 1]
        part_b = [blk[t] for t in range(1, s) if (r >> (t - 1)) & 1]
        return ("split", idx, part_a, part_b)
    a, b = sorted(rng.sample(range(len(blocks)), 2))
    return ("merge", a, b)


def _apply(blocks, move):
    if move[0] == "split":
        _, idx, part_a, part_b = move
        return [b for i, b in enumerate(blocks) if i != idx] + [part_a, part_b]
    _, a, b = move
    return [x for i, x in enumerate(blocks) if i not in (a, b)] + [blocks[a] + blocks[b]]


def _move_log_ratio(blocks, move, f: float) -> float:
    if move[0] == "split":
        return split_log_ratio(blocks, move[1], move[2], move[3], f)
    return merge_log_ratio(blocks, move[1], move[2], f)


def propose(p: Partition, rng: random.Random, frag_prob: float = 0.5) -> tuple[Partition, float]:
    """Draw a split/merge proposal; a self-move returns ``(p, 0.0)``."""
    blocks = [list(b) for b in p.blocks]
    move = _draw(blocks, rng, frag_prob)
    if move is None:
        return p, 0.0
    return canonicalize(_apply(blocks, move), p.n), _move_log_ratio(blocks, move, frag_prob)


def mh_step(p: Partition, s, params: ExpModelParams, cfg: ChainConfig, rng: random.Random) -> tuple[Partition, bool]:
    new, log_q = propose(p, rng, cfg.frag_prob)
    if new == p:
        return p, False
    log_alpha = log_posterior_unnorm(new, s, params) - log_posterior_unnorm(p, s, params) + log_q
    if log_alpha >= 0 or rng.random() < math.exp(log_alpha):
        return new, True
    return p, False


def _key(blocks) -> tuple:
    return tuple(sorted(tuple(sorted(b)) for b in blocks))


def _partition_from_key(key, n: int) -> Partition:
    return canonicalize(key, n)


def run_chain_weights(gain: np.ndarray, n: int, cfg: ChainConfig, base: float = 0.0,
                      rng: random.Random | None = None) -> tuple[ChainStats, MapResult]:
    """Run one chain on the target ``base + sum_{same-block pairs} gain[i, j]``."""
    rng = rng or chain_rng(cfg.seed)
    g = [[float(x) for x in row] for row in gain]
    f = cfg.frag_prob
    blocks = [[i] for i in range(n)]
    score = base
    counts: Counter = Counter()
    co = np.zeros((n, n)) if cfg.estimator == "mean" else None
    accepted = proposed = 0
    key = _key(blocks)
    best_key, best_score = key, score
    trace = []
    for t in range(1, cfg.steps + 1):
        move = _draw(blocks, rng, f) if n > 1 else None
        proposed += 1
        acc = False
        if move is not None:
            if move[0] == "split":
                cross = sum(g[i][j] for i in move[2] for j in move[3])
                delta = -cross
            else:
                delta = sum(g[i][j] for i in blocks[move[1]] for j in blocks[move[2]])
            log_alpha = delta + _move_log_ratio(blocks, move, f)
            if log_alpha >= 0 or rng.random() < math.exp(log_alpha):
                blocks = _apply(blocks, move)
                score += delta
                acc = True
                accepted += 1
                key = None
        if key is None:
            key = _key(blocks)
        if score > best_score + 1e-12:
            best_key, best_score = key, score
        if cfg.trace:
            trace.append((t, acc, score, key))
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            counts[key] += 1
            if co is not None:
                for b in blocks:
                    for i in b:
                        for j in b:
                            co[i, j] += 1
    kept = sum(counts.values())
    # most frequent; ties broken by canonical key order
    mode_key = min(counts, key=lambda k: (-counts[k], k))
    mode = _partition_from_key(mode_key, n)
    if cfg.estimator == "mode":
        est = mode
    elif cfg.estimator == "max-score":
        est = _partition_from_key(best_key, n)
    else:
        freq = co / kept
        iu, ju = pair_indices(n)
        est = ensemble_to_partition(EdgeEnsemble(n, frozenset(
            (int(i), int(j)) for i, j in zip(iu, ju) if freq[i, j] > 0.5)))
    lab = est.labels()
    iu, ju = pair_indices(n)
    est_score = base + float(sum(gain[i, j] for i, j in zip(iu, ju) if lab[i] == lab[j]))
    stats = ChainStats(
        samples_kept=kept,
        acceptance_rate=accepted / proposed,
        mode=mode,
        mode_frequency=counts[mode_key] / kept,
        visited_distinct=len(counts),
        frequencies={_partition_from_key(k, n): c / kept for k, c in counts.items()},
        trace=tuple((t, a, s, _partition_from_key(k, n).to_string()) for t, a, s, k in trace),
    )
    return stats, MapResult(est, est_score, kept)


def run_chain(s, params: ExpModelParams, cfg: ChainConfig, rng: random.Random | None = None) -> tuple[ChainStats, MapResult]:
    """Sample the triangular-model posterior from the all-singletons state."""
    l1, l0 = class_loglik(s, params)
    iu, ju = pair_indices(params.n)
    return run_chain_weights(l1 - l0, params.n, cfg, base=float(l0[iu, ju].sum()), rng=rng)


def mcmc_timeline(observations, params: ExpModelParams, cfg: ChainConfig):
    """Independent chain per time step; chain ``t`` uses stream ``t`` of ``cfg.seed``."""
    out = []
    for t, (k, s) in enumerate(observations):
        stats, res = run_chain(s, params, cfg, rng=chain_rng(cfg.seed, t))
        out.append((k, res.partition))
    return ClusterTimeline(tuple(out))
