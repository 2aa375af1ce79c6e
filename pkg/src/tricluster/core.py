"""Domain types: series panels, partitions, edge ensembles and timelines.

Indices are 0-based internally. The text form of a partition (``"1,2|3"``)
and every file format use 1-based series ids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CapacityError, ContractError, ValidityError

ENUMERATION_GUARD = 13


@dataclass(frozen=True)
class SeriesPanel:
    """``n_steps x n_series`` matrix of observations, one column per series."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ContractError("panel values must be a 2-d matrix")
        if v.shape[1] < 2 or v.shape[0] < 1:
            raise ContractError(f"panel needs >= 2 series and >= 1 step, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ContractError("panel contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_series(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def window(self, k: int, w: int) -> np.ndarray:
        """Rows for time steps ``k-w+1 .. k`` (1-based ``k``), shape ``(w, n)``."""
        return self.values[k - w:k]


@dataclass(frozen=True)
class Partition:
    """A set partition of ``range(n)`` in canonical form.

    Build through :func:`canonicalize` or :meth:`from_labels`; the
    constructor assumes its input is already canonical.
    """

    blocks: tuple[tuple[int, ...], ...]
    n: int

    def __str__(self) -> str:
        return self.to_string()

    def __len__(self) -> int:
        return len(self.blocks)

    def to_string(self) -> str:
        return "|".join(",".join(str(i + 1) for i in b) for b in self.blocks)

    @classmethod
    def parse(cls, text: str) -> "Partition":
        text = text.strip()
        if not text:
            raise ValidityError("empty partition string")
        try:
            blocks = [[int(tok) - 1 for tok in part.split(",")] for part in text.split("|")]
        except ValueError as exc:
            raise ValidityError(f"malformed partition string {text!r}") from exc
        n = sum(len(b) for b in blocks)
        return canonicalize(blocks, n)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(labels):
            groups.setdefault(int(lab), []).append(i)
        # dict keeps first-seen order, which is smallest-member order
        return cls(tuple(tuple(g) for g in groups.values()), len(labels))

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(tuple((i,) for i in range(n)), n)

    @classmethod
    def single_block(cls, n: int) -> "Partition":
        return cls((tuple(range(n)),), n)

    def labels(self) -> np.ndarray:
        """Restricted-growth label vector: ``labels[i]`` is the block of ``i``."""
        out = np.empty(self.n, dtype=np.int64)
        for b, members in enumerate(self.blocks):
            out[list(members)] = b
        return out

    def same_block(self, i: int, j: int) -> bool:
        lab = self.labels()
        return bool(lab[i] == lab[j])


def canonicalize(blocks: Iterable[Iterable[int]], n: int | None = None) -> Partition:
    """Sort members within blocks and order blocks by smallest member."""
    bl = [sorted(int(i) for i in b) for b in blocks]
    if any(len(b) == 0 for b in bl):
        raise ValidityError("empty block")
    members = [i for b in bl for i in b]
    if n is None:
        n = len(members)
    if len(set(members)) != len(members):
        raise ValidityError("blocks overlap")
    if sorted(members) != list(range(n)):
        raise ValidityError(f"blocks do not cover exactly 0..{n - 1}")
    bl.sort(key=lambda b: b[0])
    return Partition(tuple(tuple(b) for b in bl), n)


@dataclass(frozen=True)
class EdgeEnsemble:
    """Co-membership indicators, stored once per unordered pair ``(i, j)``, ``i < j``."""

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                raise ContractError(f"bad pair ({i}, {j}) for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def __getitem__(self, pair: tuple[int, int]) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in self.edges

    @classmethod
    def from_matrix(cls, mat) -> "EdgeEnsemble":
        a = np.asarray(mat, dtype=bool)
        n = a.shape[0]
        iu, ju = np.triu_indices(n, 1)
        return cls(n, frozenset((int(i), int(j)) for i, j in zip(iu, ju) if a[i, j] or a[j, i]))

    def matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        return a


@dataclass(frozen=True)
class ClusterTimeline:
    """Sequence of ``(time index, Partition)`` with strictly increasing times."""

    steps: tuple[tuple[int, Partition], ...]

    def __post_init__(self):
        steps = tuple((int(k), p) for k, p in self.steps)
        for (k0, p0), (k1, p1) in zip(steps, steps[1:]):
            if k1 <= k0:
                raise ContractError("timeline times must increase strictly")
            if p1.n != p0.n:
                raise ContractError("timeline partitions disagree on n")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def times(self) -> list[int]:
        return [k for k, _ in self.steps]

    @property
    def partitions(self) -> list[Partition]:
        return [p for _, p in self.steps]

    def as_dict(self) -> dict[int, Partition]:
        return dict(self.steps)


def partition_to_ensemble(p: Partition) -> EdgeEnsemble:
    edges = set()
    for b in p.blocks:
        for a_idx, i in enumerate(b):
            for j in b[a_idx + 1:]:
                edges.add((i, j))
    return EdgeEnsemble(p.n, frozenset(edges))


def ensemble_to_partition(c: EdgeEnsemble) -> Partition:
    """Connected components of the ensemble's graph, canonical order."""
    parent = list(range(c.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in c.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return Partition.from_labels([find(i) for i in range(c.n)])


def is_valid_clustering(c: EdgeEnsemble) -> bool:
    """True iff every path of two edges closes into a triangle."""
    a = c.matrix()
    for j in range(c.n):
        nb = np.flatnonzero(a[j])
        if len(nb) > 1:
            sub = a[np.ix_(nb, nb)]
            if not np.all(sub | np.eye(len(nb), dtype=bool)):
                return False
    return True


@lru_cache(maxsize=None)
def bell(n: int) -> int:
    """Bell number via the Bell triangle."""
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def _extend_rgs(arr: np.ndarray, mx: np.ndarray, length: int) -> tuple[np.ndarray, np.ndarray]:
    while arr.shape[1] < length:
        counts = mx + 2
        rows = np.repeat(arr, counts, axis=0)
        starts = np.cumsum(counts) - counts
        new = np.arange(rows.shape[0]) - np.repeat(starts, counts)
        mx = np.maximum(np.repeat(mx, counts), new)
        arr = np.column_stack([rows, new.astype(arr.dtype)])
    return arr, mx


def _check_guard(n: int) -> None:
    if n < 1:
        raise ContractError("n must be >= 1")
    if n > ENUMERATION_GUARD:
        raise CapacityError(
            f"exact enumeration is capped at n={ENUMERATION_GUARD} (Bell({n}) partitions); use MCMC"
        )


def iter_rgs_chunks(n: int, chunk_prefixes: int = 256) -> Iterator[np.ndarray]:
    """Yield restricted-growth strings of length ``n`` in lexicographic order, in chunks."""
    _check_guard(n)
    head = min(n, 8)
    pre, mx = _extend_rgs(np.zeros((1, 1), dtype=np.int8), np.zeros(1, dtype=np.int64), head)
    for s in range(0, pre.shape[0], chunk_prefixes):
        arr, _ = _extend_rgs(pre[s:s + chunk_prefixes], mx[s:s + chunk_prefixes], n)
        yield arr


@lru_cache(maxsize=16)
def rgs_array(n: int) -> np.ndarray:
    """All restricted-growth strings of length ``n`` as a ``(Bell(n), n)`` array."""
    out = np.concatenate(list(iter_rgs_chunks(n)))
    out.setflags(write=False)
    return out


def all_partitions(n: int) -> list[Partition]:
    """Every partition of ``range(n)``, ordered lexicographically by restricted-growth string."""
    return [Partition.from_labels(row) for row in rgs_array(n)]


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(n, 1)


@lru_cache(maxsize=16)
def pair_membership(n: int) -> np.ndarray:
    """``(Bell(n), n(n-1)/2)`` boolean matrix: does partition ``r`` join pair ``p``."""
    rgs = rgs_array(n)
    iu, ju = pair_indices(n)
    out = rgs[:, iu] == rgs[:, ju]
    out.setflags(write=False)
    return out
