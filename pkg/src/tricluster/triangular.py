"""Triangular-potential model: MAP over valid clusterings.

The triangle factor vanishes on every non-transitive edge assignment, so the
posterior lives on set partitions and the MAP is found by scanning them
(exhaustively for small ``n``, or by branch and bound over clique partitions
of an allowed-pair graph).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ENUMERATION_GUARD, ClusterTimeline, Partition, bell, iter_rgs_chunks, pair_indices,
    pair_membership, rgs_array,
)
from .errors import CapacityError, ContractError
from .exp_model import ExpModelParams, class_loglik

EDGE_EPS = 1e-12


def triangle_potential(cij: bool, cik: bool, cjk: bool) -> int:
    return 0 if int(bool(cij)) + int(bool(cik)) + int(bool(cjk)) == 2 else 1


@dataclass(frozen=True)
class EdgeProbabilities:
    n: int
    p_hat: np.ndarray

    def __post_init__(self):
        p = np.array(self.p_hat, dtype=float)
        if p.shape != (self.n, self.n):
            raise ContractError(f"p_hat must be {self.n}x{self.n}")
        if not np.allclose(p, p.T):
            raise ContractError("p_hat must be symmetric")
        iu, ju = pair_indices(self.n)
        if np.any(p[iu, ju] < 0) or np.any(p[iu, ju] > 1):
            raise ContractError("p_hat entries must lie in [0, 1]")
        p = 0.5 * (p + p.T)
        p.setflags(write=False)
        object.__setattr__(self, "p_hat", p)


@dataclass(frozen=True)
class MapResult:
    partition: Partition
    log_score: float
    n_evaluated: int


def log_posterior_unnorm(p: Partition, s, params: ExpModelParams) -> float:
    """Log of the unnormalized posterior of a valid clustering."""
    if p.n != params.n:
        raise ContractError("partition and params disagree on n")
    l1, l0 = class_loglik(s, params)
    lab = p.labels()
    iu, ju = pair_indices(p.n)
    same = lab[iu] == lab[ju]
    return float(np.where(same, l1[iu, ju], l0[iu, ju]).sum())


def edge_posterior(s_ij: float, rate1: float, rate0: float, prior1: float, floor: float = EDGE_EPS) -> float:
    """Two-class posterior that a pair is co-clustered given its similarity."""
    p = min(max(prior1, floor), 1.0 - floor)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.log(rate1) - rate1 * s_ij + np.log(p)
        b = np.log(rate0) - rate0 * s_ij + np.log1p(-p)
        return float(1.0 / (1.0 + np.exp(b - a)))


def edge_posteriors(s, params: ExpModelParams) -> EdgeProbabilities:
    l1, l0 = class_loglik(s, params)
    p = 1.0 / (1.0 + np.exp(l0 - l1))
    np.fill_diagonal(p, 0.0)
    return EdgeProbabilities(params.n, p)


def _pair_gain(s, params: ExpModelParams) -> tuple[float, np.ndarray]:
    iu, ju = pair_indices(params.n)
    l1, l0 = class_loglik(s, params)
    return float(l0[iu, ju].sum()), (l1 - l0)[iu, ju]


def exact_map(s, params: ExpModelParams) -> MapResult:
    """MAP clustering by scoring every set partition.

    Ties resolve to the earliest partition in restricted-growth order.
    """
    n = params.n
    if n > ENUMERATION_GUARD:
        raise CapacityError(f"exact MAP enumerates Bell(n) partitions and is capped at n={ENUMERATION_GUARD}; use MCMC")
    base, gain = _pair_gain(s, params)
    if n <= 10:
        scores = pair_membership(n) @ gain
        r = int(np.argmax(scores))
        return MapResult(Partition.from_labels(rgs_array(n)[r]), float(base + scores[r]), bell(n))
    iu, ju = pair_indices(n)
    best, best_row = -np.inf, None
    for chunk in iter_rgs_chunks(n, chunk_prefixes=64):
        scores = (chunk[:, iu] == chunk[:, ju]) @ gain
        r = int(np.argmax(scores))
        if scores[r] > best:
            best, best_row = float(scores[r]), chunk[r].copy()
    return MapResult(Partition.from_labels(best_row), base + best, bell(n))


def triangular_timeline(observations, params: ExpModelParams) -> ClusterTimeline:
    """Per-step exact MAP for a sequence of ``(k, S)``; vectorised over partitions."""
    n = params.n
    mem = pair_membership(n).astype(float)
    rgs = rgs_array(n)
    out = []
    for k, s in observations:
        _, gain = _pair_gain(s, params)
        out.append((k, Partition.from_labels(rgs[int(np.argmax(mem @ gain))])))
    return ClusterTimeline(tuple(out))


def exact_map_constrained(ep: EdgeProbabilities, forbidden=frozenset(), max_nodes: int = 5_000_000) -> MapResult:
    """MAP of ``prod_chosen p * prod_unchosen (1 - p)`` over clique partitions of the allowed graph.

    Depth-first branch and bound assigning vertices in index order, each to an
    existing block (in block order) or a new block, so the first optimum found
    is the earliest in restricted-growth order. A pair with ``p = 0`` can never
    share a block. ``forbidden`` pairs must carry ``p = 0``.
    """
    n = ep.n
    p = ep.p_hat.copy()
    for i, j in forbidden:
        if p[i, j] > 0:
            raise ContractError(f"forbidden pair ({i + 1}, {j + 1}) has p_hat {p[i, j]} > 0")
    iu, ju = pair_indices(n)
    pc = np.minimum(p, 1.0 - EDGE_EPS)
    blocked = pc <= 0
    with np.errstate(divide="ignore"):
        w = np.where(blocked, -np.inf, np.log(np.where(blocked, 1.0, pc)) - np.log1p(-pc))
    np.fill_diagonal(w, 0.0)
    const = float(np.log1p(-pc[iu, ju]).sum())

    pos = np.where(np.isfinite(w), np.maximum(w, 0.0), 0.0)
    np.fill_diagonal(pos, 0.0)
    # pos_suffix[v]: positive weight among pairs of vertices >= v
    pos_suffix = np.zeros(n + 1)
    for v in range(n - 1, -1, -1):
        pos_suffix[v] = pos_suffix[v + 1] + pos[v, v + 1:].sum()

    gains = np.zeros((n, n))  # gains[u, b]: weight u would add by joining block b
    labels = np.full(n, -1)
    best = [-np.inf, None]
    nodes = [0]
    leaves = [0]

    def beats(x: float) -> bool:
        b = best[0]
        return b == -np.inf or x > b + 1e-9 * max(1.0, abs(b))

    def rec(v: int, nblocks: int, score: float):
        nodes[0] += 1
        if nodes[0] > max_nodes:
            raise CapacityError(f"constrained MAP search exceeded {max_nodes} nodes")
        if v == n:
            leaves[0] += 1
            if beats(score):
                best[0], best[1] = score, labels.copy()
            return
        if nblocks:
            reach = np.maximum(gains[v:, :nblocks].max(axis=1), 0.0)
            bound = score + reach.sum() + pos_suffix[v]
        else:
            bound = score + pos_suffix[v]
        if not beats(bound):
            return
        for b in range(nblocks + 1):
            g = gains[v, b] if b < nblocks else 0.0
            if g == -np.inf:
                continue
            labels[v] = b
            gains[:, b] += w[:, v]
            rec(v + 1, max(nblocks, b + 1), score + g)
            if np.all(np.isfinite(w[:, v])):
                gains[:, b] -= w[:, v]
            else:
                # -inf - (-inf) is nan; rebuild the column from its members
                members = np.flatnonzero(labels[:v] == b)
                gains[:, b] = w[:, members].sum(axis=1) if members.size else 0.0
            labels[v] = -1

    rec(0, 0, 0.0)
    return MapResult(Partition.from_labels(best[1]), float(const + best[0]), leaves[0])
