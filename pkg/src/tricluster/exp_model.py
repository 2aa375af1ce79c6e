"""Pairwise exponential model: per-pair class-conditional exponential
similarities with Bernoulli co-membership priors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import EdgeEnsemble, Partition, ensemble_to_partition, pair_indices
from .errors import ContractError

RATE_CAP = 1e9  # rate used when every similarity in a class is zero


@dataclass(frozen=True)
class ExpModelParams:
    """Per-pair parameters as symmetric ``n x n`` matrices (diagonal unused).

    ``rate1``/``rate0`` are exponential rates of ``S_ij`` given the pair is or
    is not co-clustered; ``prior1`` is ``P(co-clustered)``. Scoring clamps
    priors to ``[prior_floor, 1 - prior_floor]`` so log-scores stay finite.
    """

    n: int
    rate1: np.ndarray
    rate0: np.ndarray
    prior1: np.ndarray
    prior_floor: float = 1e-12

    def __post_init__(self):
        for name in ("rate1", "rate0", "prior1"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape != (self.n, self.n):
                raise ContractError(f"{name} must be {self.n}x{self.n}")
            m = 0.5 * (m + m.T)
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        iu, ju = pair_indices(self.n)
        if np.any(self.rate1[iu, ju] <= 0) or np.any(self.rate0[iu, ju] <= 0):
            raise ContractError("rates must be positive")
        p = self.prior1[iu, ju]
        if np.any(p < 0) or np.any(p > 1):
            raise ContractError("priors must lie in [0, 1]")

    @classmethod
    def uniform(cls, n: int, rate1: float, rate0: float, prior1: float, **kw) -> "ExpModelParams":
        full = lambda x: np.full((n, n), float(x))
        return cls(n, full(rate1), full(rate0), full(prior1), **kw)

    def clamped_prior(self) -> np.ndarray:
        f = self.prior_floor
        return np.clip(self.prior1, f, 1.0 - f)

    def permuted(self, perm) -> "ExpModelParams":
        """Parameters for series relabelled so new index ``a`` is old ``perm[a]``."""
        ix = np.ix_(perm, perm)
        return ExpModelParams(self.n, self.rate1[ix], self.rate0[ix], self.prior1[ix], self.prior_floor)


def class_loglik(s, params: ExpModelParams, with_prior: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair log of ``lambda_c exp(-lambda_c s) P(c)`` for ``c = 1`` and ``c = 0``."""
    s = np.asarray(s, dtype=float)
    l1 = np.log(params.rate1) - params.rate1 * s
    l0 = np.log(params.rate0) - params.rate0 * s
    if with_prior:
        p = params.clamped_prior()
        l1 = l1 + np.log(p)
        l0 = l0 + np.log1p(-p)
    return l1, l0


@dataclass(frozen=True)
class TrainingSet:
    """Similarity matrices paired with the clusterings that produced them."""

    observations: tuple

    def __post_init__(self):
        obs = tuple((np.asarray(s, dtype=float), p) for s, p in self.observations)
        if not obs:
            raise ContractError("training set is empty")
        n = obs[0][1].n
        for s, p in obs:
            if p.n != n or s.shape != (n, n):
                raise ContractError("training observations disagree on n")
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return self.observations[0][1].n

    def __len__(self) -> int:
        return len(self.observations)

    @classmethod
    def from_pairs(cls, sims: Sequence, parts: Sequence[Partition]) -> "TrainingSet":
        if len(sims) != len(parts):
            raise ContractError("need one clustering per similarity matrix")
        return cls(tuple(zip(sims, parts)))


def _inverse_mean(total, count):
    mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return np.where(mean > 0, 1.0 / np.where(mean > 0, mean, 1.0), RATE_CAP)


def train_exponential(data: TrainingSet, rates: Literal["conditional", "pooled"] = "conditional") -> ExpModelParams:
    """Maximum-likelihood rates and co-membership frequencies.

    ``rate_c`` is the inverse of the mean similarity over the steps where the
    pair was (``c=1``) or was not (``c=0``) co-clustered. A class never seen in
    training takes the pooled rate over all steps. ``rates="pooled"`` uses the
    pooled rate for both classes.
    """
    if not isinstance(data, TrainingSet):
        data = TrainingSet(tuple(data))
    n, m = data.n, len(data)
    sims = np.stack([s for s, _ in data.observations])
    same = np.stack([p.labels()[:, None] == p.labels()[None, :] for _, p in data.observations])
    count1 = same.sum(axis=0).astype(float)
    sum1 = np.where(same, sims, 0.0).sum(axis=0)
    total = sims.sum(axis=0)
    pooled = _inverse_mean(total, np.full((n, n), float(m)))
    if rates == "pooled":
        rate1 = rate0 = pooled
    elif rates == "conditional":
        rate1 = np.where(count1 > 0, _inverse_mean(sum1, count1), pooled)
        count0 = m - count1
        rate0 = np.where(count0 > 0, _inverse_mean(total - sum1, count0), pooled)
    else:
        raise ContractError(f"unknown rates mode {rates!r}")
    return ExpModelParams(n, rate1, rate0, count1 / m, prior_floor=1.0 / (2 * m))


def independent_map(s, params: ExpModelParams) -> EdgeEnsemble:
    """Pick each pair's class independently; ties go to "not co-clustered"."""
    s = np.asarray(s, dtype=float)
    if s.shape != (params.n, params.n):
        raise ContractError("similarity matrix and params disagree on n")
    l1, l0 = class_loglik(s, params)
    iu, ju = pair_indices(params.n)
    chosen = l1[iu, ju] > l0[iu, ju]
    return EdgeEnsemble(params.n, frozenset(
        (int(i), int(j)) for i, j, c in zip(iu, ju, chosen) if c
    ))


def exp_predict(s, params: ExpModelParams) -> Partition:
    """Connected components of the independent MAP ensemble; ``O(n^2)``."""
    return ensemble_to_partition(independent_map(s, params))
