"""Spectral clustering: Jacobi eigensolver, normalized Laplacian, Shi-Malik
bipartition and rotation-aligned multi-way clustering with model selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import ClusterTimeline, Partition, SeriesPanel, canonicalize
from .errors import ContractError, DegenerateInputError
from .similarity import SimilarityConfig, similarity_at


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray


def eigen_symmetric(a, tol: float = 1e-12, max_sweeps: int = 100) -> EigenDecomposition:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps visit pairs ``(p, q)``, ``p < q``, in row order and stop once the
    off-diagonal Frobenius mass drops below ``tol * ||A||_F``. Eigenvalues are
    returned ascending; each eigenvector's first non-negligible entry is positive.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError("matrix must be square")
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, scale)):
        raise ContractError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    target = tol * scale
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < abs(diff) * 1e-36:
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    values = values[order]
    v = v[:, order]
    for j in range(n):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            v[:, j] = -col
    return EigenDecomposition(values, v)


def laplacian(s) -> np.ndarray:
    """Normalized Laplacian ``I - D^-1/2 S D^-1/2`` with ``D`` the row sums of ``S``."""
    s = np.asarray(s, dtype=float)
    d = s.sum(axis=1)
    if np.any(d <= 0):
        raise DegenerateInputError(
            f"series {(np.flatnonzero(d <= 0) + 1).tolist()} have zero total similarity"
        )
    r = 1.0 / np.sqrt(d)
    lap = np.eye(s.shape[0]) - r[:, None] * s * r[None, :]
    return 0.5 * (lap + lap.T)


def median_split(v) -> Partition:
    """Items strictly above the median of ``v`` against the rest.

    When nothing is strictly above the median the items are split into the
    first ``n // 2`` indices and the remainder.
    """
    v = np.asarray(v, dtype=float)
    n = len(v)
    upper = v > np.median(v)
    if not upper.any():
        upper = np.arange(n) < n // 2
    b1 = np.flatnonzero(upper).tolist()
    b2 = np.flatnonzero(~upper).tolist()
    return canonicalize([b1, b2], n)


def shi_malik(s) -> Partition:
    s = np.asarray(s, dtype=float)
    if s.shape[0] < 2:
        raise ContractError("need at least two items")
    eig = eigen_symmetric(laplacian(s))
    return median_split(eig.vectors[:, 1])


# --- rotation alignment ---------------------------------------------------

def givens_pairs(c: int) -> list[tuple[int, int]]:
    return list(combinations(range(c), 2))


def givens(c: int, i: int, j: int, theta: float) -> np.ndarray:
    g = np.eye(c)
    cs, sn = np.cos(theta), np.sin(theta)
    g[i, i] = g[j, j] = cs
    g[i, j] = -sn
    g[j, i] = sn
    return g


def _givens_deriv(c: int, i: int, j: int, theta: float) -> np.ndarray:
    g = np.zeros((c, c))
    cs, sn = np.cos(theta), np.sin(theta)
    g[i, i] = g[j, j] = -sn
    g[i, j] = -cs
    g[j, i] = cs
    return g


def rotation(theta, c: int) -> np.ndarray:
    """Product of Givens rotations, one angle per coordinate pair in lexicographic order."""
    theta = np.asarray(theta, dtype=float)
    pairs = givens_pairs(c)
    if len(theta) != len(pairs):
        raise ContractError(f"need {len(pairs)} angles for c={c}, got {len(theta)}")
    r = np.eye(c)
    for (i, j), t in zip(pairs, theta):
        r = r @ givens(c, i, j, t)
    return r


def rotation_gradients(theta, c: int) -> list[np.ndarray]:
    """``dR/dtheta_k`` for every angle."""
    pairs = givens_pairs(c)
    gs = [givens(c, i, j, t) for (i, j), t in zip(pairs, theta)]
    k = len(gs)
    prefix = [np.eye(c)]
    for g in gs:
        prefix.append(prefix[-1] @ g)
    suffix = [np.eye(c)] * (k + 1)
    for idx in range(k - 1, -1, -1):
        suffix[idx] = gs[idx] @ suffix[idx + 1]
    return [
        prefix[idx] @ _givens_deriv(c, i, j, theta[idx]) @ suffix[idx + 1]
        for idx, (i, j) in enumerate(pairs)
    ]


def _row_scales(z: np.ndarray, row_norm2: np.ndarray, zero_rows: np.ndarray):
    absz = np.abs(z)
    jstar = np.argmax(absz, axis=1)
    m = absz[np.arange(z.shape[0]), jstar]
    m = np.where(zero_rows, 1.0, m)
    return jstar, m


def _zero_rows(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    row_norm2 = np.sum(v * v, axis=1)
    ref = row_norm2.max() if row_norm2.size else 0.0
    return row_norm2, row_norm2 <= 1e-24 * max(ref, 1e-300)


def alignment_cost(v, theta) -> float:
    """``J = sum_i sum_j (Z_ij / M_i)^2`` for ``Z = V R(theta)``, ``M_i = max_j |Z_ij|``.

    A numerically zero row of ``V`` has no dominant entry; it is charged the
    worst-case value ``c``.
    """
    v = np.asarray(v, dtype=float)
    c = v.shape[1]
    z = v @ rotation(theta, c)
    row_norm2, zero = _zero_rows(v)
    _, m = _row_scales(z, row_norm2, zero)
    terms = np.where(zero, float(c), np.sum(z * z, axis=1) / (m * m))
    return float(terms.sum())


def alignment_cost_grad(v, theta) -> tuple[float, np.ndarray]:
    """Cost and its gradient with respect to the angles.

    The gradient differentiates through ``M_i`` at its current argmax column.
    Holding ``M_i`` fixed instead gives an identically zero gradient, since a
    rotation preserves every row norm.
    """
    v = np.asarray(v, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n, c = v.shape
    z = v @ rotation(theta, c)
    row_norm2, zero = _zero_rows(v)
    jstar, m = _row_scales(z, row_norm2, zero)
    rows = np.arange(n)
    zn2 = np.sum(z * z, axis=1)
    cost = float(np.where(zero, float(c), zn2 / (m * m)).sum())
    sign = np.sign(z[rows, jstar])
    live = ~zero
    grad = np.empty(len(theta))
    for k, dr in enumerate(rotation_gradients(theta, c)):
        dz = v @ dr
        # first term vanishes analytically (row norms are rotation invariant)
        d_num = 2.0 * np.sum(z * dz, axis=1) / (m * m)
        d_max = -2.0 * zn2 / m ** 3 * sign * dz[rows, jstar]
        grad[k] = float(np.sum((d_num + d_max)[live]))
    return cost, grad


@dataclass(frozen=True)
class DescentConfig:
    step: float = 0.5
    iters: int = 200
    tol: float = 1e-10
    max_halvings: int = 20
    restarts: int = 4
    seed: int = 0
    q_tie_tol: float = 1e-6


@dataclass(frozen=True)
class AlignmentResult:
    Z: np.ndarray
    J: float
    q: float
    assignments: Partition
    theta: np.ndarray
    iterations: int = 0
    history: tuple = field(default=(), repr=False)


def align_rotation(v, init, step: float = 0.5, iters: int = 200,
                   tol: float = 1e-10, max_halvings: int = 20) -> AlignmentResult:
    """Gradient descent with backtracking on the rotation angles.

    Each iteration starts from ``step`` and halves it until ``J`` does not
    increase; the loop ends when no step is accepted, ``|dJ| < tol`` or after
    ``iters`` iterations.
    """
    v = np.asarray(v, dtype=float)
    n, c = v.shape
    if c < 2:
        raise ContractError("rotation alignment needs c >= 2")
    theta = np.array(init, dtype=float)
    if len(theta) != c * (c - 1) // 2:
        raise ContractError(f"need {c * (c - 1) // 2} initial angles")
    cost, grad = alignment_cost_grad(v, theta)
    history = [cost]
    it = 0
    for it in range(1, iters + 1):
        h = step
        accepted = False
        for _ in range(max_halvings + 1):
            cand = theta - h * grad
            cand_cost = alignment_cost(v, cand)
            if cand_cost <= cost:
                accepted = True
                break
            h *= 0.5
        if not accepted:
            break
        delta = cost - cand_cost
        theta = cand
        cost, grad = alignment_cost_grad(v, theta)
        history.append(cost)
        if delta < tol:
            break
    z = v @ rotation(theta, c)
    labels = np.argmax(np.abs(z), axis=1)
    return AlignmentResult(
        Z=z, J=cost, q=1.0 - (cost / n - 1.0), assignments=Partition.from_labels(labels),
        theta=theta, iterations=it, history=tuple(history),
    )


@dataclass(frozen=True)
class SpectralResult:
    partition: Partition
    best_c: int
    q: dict
    alignments: dict = field(default_factory=dict, repr=False)


def dynamic_spectral(s, c_min: int = 2, c_max: int | None = None,
                     gd: DescentConfig | None = None) -> SpectralResult:
    """Cluster with the ``c`` in ``[c_min, c_max]`` whose aligned eigenvectors score best.

    For each ``c`` the eigenvectors of the ``c`` smallest Laplacian
    eigenvalues are aligned from ``theta = 0`` plus ``gd.restarts`` seeded
    uniform starts in ``[-pi/4, pi/4]``; the lowest ``J`` is kept. The ``c``
    maximizing ``q = 2 - J/n`` wins, with scores within ``gd.q_tie_tol``
    resolved toward smaller ``c``.
    """
    gd = gd or DescentConfig()
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    c_max = n if c_max is None else c_max
    if not 2 <= c_min <= c_max <= n:
        raise ContractError(f"need 2 <= c_min <= c_max <= n, got {c_min}, {c_max}, n={n}")
    eig = eigen_symmetric(laplacian(s))
    qs, aligns = {}, {}
    best_c = None
    for c in range(c_min, c_max + 1):
        v = eig.vectors[:, :c]
        k = c * (c - 1) // 2
        rng = np.random.default_rng([gd.seed, c])
        starts = [np.zeros(k)] + [rng.uniform(-np.pi / 4, np.pi / 4, size=k) for _ in range(gd.restarts)]
        best = None
        for init in starts:
            res = align_rotation(v, init, gd.step, gd.iters, gd.tol, gd.max_halvings)
            if best is None or res.J < best.J:
                best = res
        qs[c] = best.q
        aligns[c] = best
        if best_c is None or best.q > qs[best_c] + gd.q_tie_tol:
            best_c = c
    return SpectralResult(aligns[best_c].assignments, best_c, qs, aligns)


def spectral_timeline(panel: SeriesPanel, cfg: SimilarityConfig, c_min: int = 2,
                      c_max: int | None = None, gd: DescentConfig | None = None,
                      times=None) -> ClusterTimeline:
    times = range(cfg.window, panel.n_steps + 1) if times is None else times
    return ClusterTimeline(tuple(
        (k, dynamic_spectral(similarity_at(panel, k, cfg), c_min, c_max, gd).partition)
        for k in times
    ))


def shi_malik_timeline(panel: SeriesPanel, cfg: SimilarityConfig, times=None) -> ClusterTimeline:
    times = range(cfg.window, panel.n_steps + 1) if times is None else times
    return ClusterTimeline(tuple((k, shi_malik(similarity_at(panel, k, cfg))) for k in times))
