"""k-clique to triangular-MAP reduction, with a brute-force clique oracle.

Given ``G = (V, E)`` and ``k``, the reduction appends ``N`` extra vertices
joined to each other and to all of ``V``, puts probability ``q > 1/2`` on
every edge of the enlarged graph and ``0`` elsewhere, and reads the answer
off the MAP clustering: the block holding the extra vertices contains a
maximum clique of ``G``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .core import Partition
from .errors import CapacityError, ContractError
from .triangular import EdgeProbabilities, MapResult, exact_map_constrained


@dataclass(frozen=True)
class SimpleGraph:
    n_vertices: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        norm = set()
        for u, v in self.edges:
            if u == v:
                raise ContractError(f"self-loop on vertex {u + 1}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ContractError(f"edge ({u + 1}, {v + 1}) outside 1..{self.n_vertices}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_vertices, self.n_vertices), dtype=bool)
        for u, v in self.edges:
            a[u, v] = a[v, u] = True
        return a

    def is_clique(self, verts) -> bool:
        return all((min(u, v), max(u, v)) in self.edges for u, v in combinations(verts, 2))


def read_edge_list(path, n_vertices: int | None = None) -> SimpleGraph:
    """Parse ``u v`` lines (1-based), ignoring blanks and ``#`` comments.

    A line ``# vertices: N`` fixes the vertex count; otherwise it is the
    largest id seen.
    """
    edges = []
    declared = n_vertices
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("vertices:") and declared is None:
                declared = int(body.split(":", 1)[1])
            continue
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ContractError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
        u, v = int(parts[0]), int(parts[1])
        if u < 1 or v < 1:
            raise ContractError(f"{path}:{lineno}: vertex ids are 1-based")
        edges.append((u - 1, v - 1))
    n = declared if declared is not None else max((max(e) + 1 for e in edges), default=0)
    return SimpleGraph(n, frozenset(edges))


def max_clique_bruteforce(g: SimpleGraph) -> int:
    """Largest clique size by subset enumeration, largest sizes first."""
    if g.n_vertices > 16:
        raise CapacityError("brute-force clique search is capped at 16 vertices")
    if g.n_vertices == 0:
        return 0
    adj = g.adjacency()
    for size in range(g.n_vertices, 1, -1):
        for sub in combinations(range(g.n_vertices), size):
            if all(adj[u, v] for u, v in combinations(sub, 2)):
                return size
    return 1


@dataclass(frozen=True)
class ReductionInstance:
    original: SimpleGraph
    k: int
    q: float
    N: int
    graph_prime: SimpleGraph
    ep: EdgeProbabilities

    @property
    def extra(self) -> range:
        """Indices of the appended vertices."""
        return range(self.original.n_vertices, self.original.n_vertices + self.N)

    def forbidden(self) -> frozenset:
        n = self.graph_prime.n_vertices
        return frozenset(
            (i, j) for i, j in combinations(range(n), 2) if (i, j) not in self.graph_prime.edges
        )


def reduction_size(g: SimpleGraph, slack: int = 0) -> int:
    return max(2 * len(g.edges) + 2, 2 * g.n_vertices) + 1 + slack


def build_reduction(g: SimpleGraph, k: int, q: float = 0.75, slack: int = 0) -> ReductionInstance:
    if not 0.5 < q < 1:
        raise ContractError("q must lie strictly between 1/2 and 1")
    if not 1 <= k <= g.n_vertices:
        raise ContractError(f"k must lie in 1..{g.n_vertices}")
    if slack < 0:
        raise ContractError("slack must be non-negative")
    nv = g.n_vertices
    big_n = reduction_size(g, slack)
    total = nv + big_n
    edges = set(g.edges)
    edges.update((u, x) for u in range(nv) for x in range(nv, total))
    edges.update(combinations(range(nv, total), 2))
    gp = SimpleGraph(total, frozenset(edges))
    p = np.zeros((total, total))
    for i, j in gp.edges:
        p[i, j] = p[j, i] = q
    return ReductionInstance(g, k, q, big_n, gp, EdgeProbabilities(total, p))


def solve_reduction(inst: ReductionInstance, max_nodes: int = 5_000_000) -> MapResult:
    return exact_map_constrained(inst.ep, inst.forbidden(), max_nodes=max_nodes)


def _chosen_original_edges(inst: ReductionInstance, part: Partition) -> SimpleGraph:
    lab = part.labels()
    kept = frozenset(e for e in inst.original.edges if lab[e[0]] == lab[e[1]])
    return SimpleGraph(inst.original.n_vertices, kept)


def decide_kclique_via_map(inst: ReductionInstance, solution: MapResult | None = None) -> bool:
    """True iff the MAP edges inside ``E`` contain a component of at least ``k`` vertices.

    Each such component is a clique because MAP edges form disjoint cliques.
    """
    solution = solution or solve_reduction(inst)
    kept = _chosen_original_edges(inst, solution.partition)
    nv = inst.original.n_vertices
    lab = solution.partition.labels()[:nv]
    sizes = [int(np.sum(lab == b)) for b in np.unique(lab)]
    # vertices sharing a block are joined by chosen edges, all of which lie in E
    assert all(kept.is_clique(np.flatnonzero(lab == b)) for b in np.unique(lab))
    return max(sizes, default=0) >= inst.k


@dataclass(frozen=True)
class StructureReport:
    extra_complete: bool
    attached_to_max_clique: bool
    attached_clique: tuple
    max_clique_size: int

    @property
    def ok(self) -> bool:
        return self.extra_complete and self.attached_to_max_clique

    def lines(self) -> list[str]:
        mark = lambda b: "pass" if b else "FAIL"
        clique = ",".join(str(v + 1) for v in self.attached_clique)
        return [
            f"appended vertices form one complete block: {mark(self.extra_complete)}",
            f"appended block attached to a maximum clique of G ({{{clique}}}, size "
            f"{len(self.attached_clique)} of {self.max_clique_size}): {mark(self.attached_to_max_clique)}",
        ]


def map_structure_report(inst: ReductionInstance, solution: MapResult | None) -> StructureReport:
    """Check the two structural properties the correctness argument relies on."""
    if solution is None:
        raise ContractError("structure report needs a solved instance")
    lab = solution.partition.labels()
    extra = list(inst.extra)
    extra_labels = set(lab[extra].tolist())
    complete = len(extra_labels) == 1
    nv = inst.original.n_vertices
    attached = tuple(int(v) for v in range(nv) if complete and lab[v] in extra_labels)
    omega = max_clique_bruteforce(inst.original)
    ok = complete and inst.original.is_clique(attached) and len(attached) == omega
    return StructureReport(complete, ok, attached, omega)
