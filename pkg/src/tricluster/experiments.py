"""Synthetic regime-switching panels, clustering metrics and inverse-volatility weights."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .core import ClusterTimeline, Partition, SeriesPanel, all_partitions
from .errors import ContractError, DegenerateInputError, InsufficientHistoryError


@dataclass(frozen=True)
class SynthConfig:
    n: int = 3
    steps: int = 5000
    noise_sd: float = 0.1
    regime_change_prob: float = 0.002
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ContractError("need at least two series")
        if self.steps < 1:
            raise ContractError("steps must be >= 1")
        if not self.noise_sd > 0:
            raise ContractError("noise_sd must be positive")
        if not 0 <= self.regime_change_prob <= 1:
            raise ContractError("regime_change_prob must lie in [0, 1]")


def gen_synthetic(cfg: SynthConfig) -> tuple[SeriesPanel, ClusterTimeline]:
    """Panel of block factor + idiosyncratic noise with randomly redrawn block structure.

    The first step draws a partition uniformly from all partitions of the
    series; every later step redraws with probability ``regime_change_prob``.
    Each block shares one standard normal draw per step and every series adds
    independent ``N(0, noise_sd^2)`` noise.
    """
    rng = np.random.default_rng(cfg.seed)
    parts = all_partitions(cfg.n)
    change = rng.random(cfg.steps) < cfg.regime_change_prob
    change[0] = True
    draws = rng.integers(len(parts), size=cfg.steps)
    factors = rng.standard_normal((cfg.steps, cfg.n))
    noise = rng.standard_normal((cfg.steps, cfg.n)) * cfg.noise_sd
    idx = np.maximum.accumulate(np.where(change, np.arange(cfg.steps), 0))
    states = draws[idx]
    labels = np.stack([parts[s].labels() for s in range(len(parts))])[states]
    values = np.take_along_axis(factors, labels, axis=1) + noise
    truth = ClusterTimeline(tuple((k + 1, parts[s]) for k, s in enumerate(states)))
    return SeriesPanel(values), truth


def _pair_agreement(a: Partition, b: Partition):
    if a.n != b.n:
        raise ContractError("partitions disagree on n")
    la, lb = a.labels(), b.labels()
    iu, ju = np.triu_indices(a.n, 1)
    return la[iu] == la[ju], lb[iu] == lb[ju]


def rand_index(a: Partition, b: Partition) -> float:
    sa, sb = _pair_agreement(a, b)
    if sa.size == 0:
        return 1.0
    return float(np.mean(sa == sb))


def adjusted_rand(a: Partition, b: Partition) -> float:
    """Rand index corrected for chance (Hubert-Arabie); 1.0 for identical partitions."""
    if a.n != b.n:
        raise ContractError("partitions disagree on n")
    la, lb = a.labels(), b.labels()
    table = np.zeros((la.max() + 1, lb.max() + 1), dtype=np.int64)
    np.add.at(table, (la, lb), 1)
    pairs = lambda x: sum(comb(int(v), 2) for v in np.ravel(x))
    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = comb(a.n, 2)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


@dataclass(frozen=True)
class EvalReport:
    per_step_exact_match: float
    rand_index: float
    adjusted_rand: float
    stability: float
    n_steps: int
    n_excluded: int
    rows: tuple = field(default=(), repr=False)

    def summary(self) -> dict:
        return {
            "exact_match": self.per_step_exact_match,
            "rand_index": self.rand_index,
            "adjusted_rand": self.adjusted_rand,
            "stability": self.stability,
            "n_steps": self.n_steps,
            "n_excluded": self.n_excluded,
        }


def stability(timeline: ClusterTimeline) -> float:
    """Fraction of consecutive steps whose partition is unchanged."""
    parts = timeline.partitions
    if len(parts) < 2:
        return 1.0
    return float(np.mean([p == q for p, q in zip(parts, parts[1:])]))


def change_exclusion(truth: ClusterTimeline, exclude_after: int) -> set:
    """Times within ``exclude_after`` steps from (and including) each truth change."""
    out = set()
    if exclude_after <= 0:
        return out
    steps = truth.steps
    for (_, p0), (k1, p1) in zip(steps, steps[1:]):
        if p1 != p0:
            out.update(range(k1, k1 + exclude_after))
    return out


def evaluate_timeline(pred: ClusterTimeline, truth: ClusterTimeline, exclude_after: int = 0) -> EvalReport:
    """Compare on the shared time indices.

    Steps falling within ``exclude_after`` steps of a truth regime change are
    reported but left out of the averages. Stability is measured on ``pred``
    over the shared indices.
    """
    truth_map = truth.as_dict()
    shared = [(k, p) for k, p in pred.steps if k in truth_map]
    if not shared:
        raise ContractError("prediction and truth share no time indices")
    if shared[0][1].n != next(iter(truth_map.values())).n:
        raise ContractError("prediction and truth disagree on n")
    skip = change_exclusion(truth, exclude_after)
    rows, exact, ri, ari = [], [], [], []
    for k, p in shared:
        t = truth_map[k]
        e, r, a = p == t, rand_index(p, t), adjusted_rand(p, t)
        excluded = k in skip
        rows.append((k, p.to_string(), t.to_string(), int(e), r, a, int(excluded)))
        if not excluded:
            exact.append(e)
            ri.append(r)
            ari.append(a)
    if not exact:
        raise ContractError("every shared step was excluded")
    return EvalReport(
        per_step_exact_match=float(np.mean(exact)),
        rand_index=float(np.mean(ri)),
        adjusted_rand=float(np.mean(ari)),
        stability=stability(ClusterTimeline(tuple(shared))),
        n_steps=len(exact),
        n_excluded=len(shared) - len(exact),
        rows=tuple(rows),
    )


def inverse_vol_weights(panel: SeriesPanel, p: Partition, window: int, at: int | None = None) -> np.ndarray:
    """Per-series weights from inverse-volatility weighting of block composites.

    Each block's composite is the equal-weighted mean of its members; block
    weights are proportional to ``1 / stdev`` of the composite over the
    ``window`` steps ending at ``at`` (default: last step), and each block's
    weight is split equally among its members.
    """
    if p.n != panel.n_series:
        raise ContractError("partition and panel disagree on the number of series")
    at = panel.n_steps if at is None else at
    if window < 2 or at < window or at > panel.n_steps:
        raise InsufficientHistoryError(f"need {window} >= 2 observations ending at step {at}")
    win = panel.window(at, window)
    inv = []
    for b in p.blocks:
        sd = np.std(win[:, list(b)].mean(axis=1), ddof=1)
        if not sd > 0:
            raise DegenerateInputError(f"composite of block {{{','.join(str(i + 1) for i in b)}}} has zero variance")
        inv.append(1.0 / sd)
    inv = np.array(inv) / np.sum(inv)
    out = np.empty(p.n)
    for wgt, b in zip(inv, p.blocks):
        out[list(b)] = wgt / len(b)
    return out
