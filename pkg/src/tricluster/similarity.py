"""Windowed distance and similarity matrices."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import SeriesPanel
from .errors import ContractError, DegenerateInputError, InsufficientHistoryError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimilarityConfig:
    """Distance norm, similarization scale/threshold, window and decay.

    ``decay`` weights an entry of age ``a`` (0 = most recent) by ``decay**a``
    before normalization; ``decay=1`` switches it off.
    """

    norm: Literal["L1", "L2"] = "L2"
    scale: float = 1.0
    threshold: float = 0.0
    window: int = 20
    decay: float = 1.0

    def __post_init__(self):
        if self.norm not in ("L1", "L2"):
            raise ContractError(f"norm must be L1 or L2, got {self.norm!r}")
        if not self.scale > 0:
            raise ContractError("scale must be positive")
        if not 0 <= self.threshold < 1:
            raise ContractError("threshold must lie in [0, 1)")
        if self.window < 2:
            raise ContractError("window must be >= 2")
        if not 0 < self.decay <= 1:
            raise ContractError("decay must lie in (0, 1]")

    @property
    def ord(self) -> int:
        return 1 if self.norm == "L1" else 2


def _decay_weights(w: int, decay: float) -> np.ndarray:
    return decay ** np.arange(w - 1, -1, -1, dtype=float)


def window_distance(x1, x2, cfg: SimilarityConfig) -> float:
    """Norm of the difference of the two windows after scaling each to unit norm."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ContractError("windows must be 1-d and of equal length")
    if cfg.decay != 1.0:
        wts = _decay_weights(len(x1), cfg.decay)
        x1, x2 = x1 * wts, x2 * wts
    n1 = np.linalg.norm(x1, cfg.ord)
    n2 = np.linalg.norm(x2, cfg.ord)
    if n1 == 0 or n2 == 0:
        raise DegenerateInputError("all-zero window has no direction")
    return float(np.linalg.norm(x1 / n1 - x2 / n2, cfg.ord))


def similarize(d: float, cfg: SimilarityConfig) -> float:
    if d < 0:
        raise ContractError("distance must be non-negative")
    s = float(np.exp(-cfg.scale * d))
    return 0.0 if s < cfg.threshold else s


def _similarity_from_window(win: np.ndarray, cfg: SimilarityConfig) -> np.ndarray:
    # win: (w, n); vectorised version of window_distance + similarize over all pairs
    if cfg.decay != 1.0:
        win = win * _decay_weights(win.shape[0], cfg.decay)[:, None]
    norms = np.linalg.norm(win, cfg.ord, axis=0)
    zero = norms == 0
    if zero.any():
        log.warning("zero window for series %s; similarity set to 0", (np.flatnonzero(zero) + 1).tolist())
    u = win / np.where(zero, 1.0, norms)
    diff = u[:, :, None] - u[:, None, :]
    if cfg.ord == 1:
        d = np.abs(diff).sum(axis=0)
    else:
        d = np.sqrt((diff * diff).sum(axis=0))
    s = np.exp(-cfg.scale * d)
    s[s < cfg.threshold] = 0.0
    s[zero, :] = 0.0
    s[:, zero] = 0.0
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return s


def similarity_at(panel: SeriesPanel, k: int, cfg: SimilarityConfig) -> np.ndarray:
    """Similarity matrix over the ``cfg.window`` observations ending at step ``k`` (1-based)."""
    if k < cfg.window or k > panel.n_steps:
        raise InsufficientHistoryError(
            f"step {k} needs {cfg.window} observations; panel has {panel.n_steps}"
        )
    return _similarity_from_window(panel.window(k, cfg.window), cfg)


def similarity_sequence(panel: SeriesPanel, cfg: SimilarityConfig) -> list[tuple[int, np.ndarray]]:
    if panel.n_steps < cfg.window:
        raise InsufficientHistoryError(
            f"panel has {panel.n_steps} steps, window is {cfg.window}"
        )
    return [(k, similarity_at(panel, k, cfg)) for k in range(cfg.window, panel.n_steps + 1)]


def check_similarity(s: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    """Validate a similarity matrix (square, symmetric, entries in [0, 1])."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractError("similarity matrix must be square")
    if not np.allclose(s, s.T, atol=atol, rtol=0):
        raise ContractError("similarity matrix must be symmetric")
    if s.min() < -atol or s.max() > 1 + atol:
        raise ContractError("similarities must lie in [0, 1]")
    return s
