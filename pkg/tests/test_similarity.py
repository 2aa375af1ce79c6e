import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tricluster.core import SeriesPanel
from tricluster.errors import ContractError, DegenerateInputError, InsufficientHistoryError
from tricluster.similarity import (
    SimilarityConfig, check_similarity, similarity_at, similarity_sequence, similarize, window_distance,
)

L1 = SimilarityConfig(norm="L1")
L2 = SimilarityConfig(norm="L2")


def test_identical_windows_have_zero_distance():
    x = np.array([1.0, -2.0, 3.0])
    assert window_distance(x, x, L2) == pytest.approx(0.0, abs=1e-15)


def test_opposite_windows_l2():
    x = np.array([3.0, 4.0])
    assert window_distance(x, -x, L2) == pytest.approx(2.0)


def test_orthogonal_windows_l1():
    assert window_distance([1.0, 0.0], [0.0, 1.0], L1) == pytest.approx(2.0)


def test_scale_invariance():
    x, y = np.array([1.0, 2.0, -1.0]), np.array([0.5, 0.1, 0.3])
    assert window_distance(5 * x, y, L2) == pytest.approx(window_distance(x, y, L2))


def test_zero_window_is_degenerate():
    with pytest.raises(DegenerateInputError):
        window_distance([0.0, 0.0], [1.0, 0.0], L2)


def test_similarize_examples():
    assert similarize(0.0, SimilarityConfig(scale=3.0, threshold=0.5)) == 1.0
    assert similarize(2.0, SimilarityConfig()) == pytest.approx(math.exp(-2))
    assert similarize(2.0, SimilarityConfig(threshold=0.2)) == 0.0


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.1, 5), st.floats(0, 0.99))
def test_similarize_monotone_and_bounded(d1, d2, c, lam):
    cfg = SimilarityConfig(scale=c, threshold=lam)
    lo, hi = sorted((d1, d2))
    assert 0.0 <= similarize(hi, cfg) <= similarize(lo, cfg) <= 1.0


def test_config_validation():
    for bad in (dict(norm="L3"), dict(scale=0), dict(threshold=1.0), dict(window=1), dict(decay=0)):
        with pytest.raises(ContractError):
            SimilarityConfig(**bad)


def test_matrix_from_orthogonal_windows():
    panel = SeriesPanel(np.array([[1.0, 0.0], [0.0, 1.0]]))
    s = similarity_at(panel, 2, SimilarityConfig(norm="L1", window=2))
    assert s[0, 1] == pytest.approx(math.exp(-2))
    np.testing.assert_array_equal(np.diag(s), 1.0)


def test_identical_series_are_fully_similar(rng):
    x = rng.standard_normal(30)
    panel = SeriesPanel(np.column_stack([x, x, rng.standard_normal(30)]))
    s = similarity_at(panel, 30, L2)
    assert s[0, 1] == pytest.approx(1.0)


def test_matrix_agrees_with_pairwise_definition(rng):
    panel = SeriesPanel(rng.standard_normal((25, 4)))
    for cfg in (SimilarityConfig(norm="L1", scale=2.0, threshold=0.1, window=10, decay=0.9),
                SimilarityConfig(norm="L2", scale=0.5, window=25)):
        s = similarity_at(panel, 25, cfg)
        win = panel.window(25, cfg.window)
        for i in range(4):
            for j in range(4):
                expected = 1.0 if i == j else similarize(window_distance(win[:, i], win[:, j], cfg), cfg)
                assert s[i, j] == pytest.approx(expected, abs=1e-12)
        check_similarity(s)


def test_sequence_lengths():
    panel = SeriesPanel(np.random.default_rng(1).standard_normal((22, 3)))
    assert len(similarity_sequence(SeriesPanel(panel.values[:20]), L2)) == 1
    seq = similarity_sequence(panel, L2)
    assert [k for k, _ in seq] == [20, 21, 22]


def test_constant_panel_is_all_ones():
    panel = SeriesPanel(np.full((21, 3), 2.5))
    for _, s in similarity_sequence(panel, L2):
        np.testing.assert_allclose(s, np.ones((3, 3)))


def test_short_panel_rejected():
    with pytest.raises(InsufficientHistoryError):
        similarity_sequence(SeriesPanel(np.ones((5, 2))), L2)


def test_zero_window_gets_zero_similarity(caplog):
    values = np.ones((20, 3))
    values[:, 2] = 0.0
    s = similarity_at(SeriesPanel(values), 20, L2)
    assert s[0, 2] == 0.0 and s[2, 2] == 1.0
    assert "zero window" in caplog.text
