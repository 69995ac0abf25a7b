import numpy as np
import pytest

from oracles import ap_integral
from pclmp.data import NOISE
from pclmp.errors import MissingGroundTruth, NoRelevantItem
from pclmp.evaluation import (
    RetrievalResult, ari_report, average_precision, cmc, cross_modal_retrieval, mean_average_precision,
    rank_gallery, relevant_positions, scores_from_positions,
)


def result(*rows):
    rel = np.array(rows, dtype=bool)
    return RetrievalResult(np.tile(np.arange(rel.shape[1]), (rel.shape[0], 1)), rel)


def test_cmc_examples():
    assert cmc(result([1, 0, 0]), [1]) == {1: 1.0}
    assert cmc(result([0, 1, 0]), [1, 2]) == {1: 0.0, 2: 1.0}


def test_ap_examples():
    assert average_precision([1, 0, 1, 0]) == pytest.approx((1 / 1 + 2 / 3) / 2)
    assert average_precision([1, 0, 1, 0]) == pytest.approx(0.83333, abs=1e-5)
    assert mean_average_precision(result([1, 1, 1])) == 1.0
    with pytest.raises(NoRelevantItem):
        average_precision([0, 0])


def test_queries_without_match_are_skipped():
    r = result([0, 0, 0], [0, 1, 0])
    assert cmc(r, [1, 2]) == {1: 0.0, 2: 1.0}
    with pytest.raises(NoRelevantItem):
        cmc(result([0, 0]), [1])


def naive_cmc(rel, k):
    hits = [any(row[:k]) for row in rel if any(row)]
    return sum(hits) / len(hits)


def test_random_queries_against_naive_oracles():
    rng = np.random.default_rng(0)
    rel = rng.random((100, 40)) < 0.1
    rel[:, 39] |= ~rel.any(axis=1)
    r = result(*rel)
    scores = cmc(r, [1, 5, 10, 20, 40])
    for k, v in scores.items():
        assert v == pytest.approx(naive_cmc(rel, k), abs=1e-12)
    assert list(scores.values()) == sorted(scores.values())
    assert mean_average_precision(r) == pytest.approx(np.mean([ap_integral(row) for row in rel]), abs=1e-12)


def test_rank_gallery_ties_by_index():
    r = rank_gallery([[1.0, 0.0]], [5], [[0, 1], [1, 0], [1, 0]], [5, 3, 5])
    assert r.order[0].tolist() == [1, 2, 0]
    assert r.relevance[0].tolist() == [False, True, True]


def test_fast_positions_match_sorting(rng):
    q = np.round(rng.standard_normal((60, 4)), 1)   # rounding creates exact ties
    g = np.round(rng.standard_normal((80, 4)), 1)
    g[::7] = g[0]
    qi, gi = rng.integers(0, 6, 60), rng.integers(0, 6, 80)
    slow = rank_gallery(q, qi, g, gi)
    fast = relevant_positions(q, qi, g, gi)
    for row, pos in zip(slow.relevance, fast):
        assert np.flatnonzero(row).tolist() == pos.tolist()
    s = scores_from_positions(fast, (1, 5))
    assert s["map"] == pytest.approx(mean_average_precision(slow), abs=1e-12)
    assert s["rank1"] == cmc(slow, [1])[1] and s["rank5"] == cmc(slow, [5])[5]


def test_map_one_iff_relevant_first():
    emb = np.eye(3)
    out = cross_modal_retrieval(emb, [0, 1, 2], emb, [0, 1, 2])
    assert out["mean"]["map"] == 1.0 and out["mean"]["rank1"] == 1.0
    out = cross_modal_retrieval(emb, [0, 1, 2], emb[[1, 0, 2]], [0, 1, 2])
    assert out["mean"]["map"] < 1.0


def test_ari_report_perfect_and_degenerate():
    t = np.array([0, 0, 1, 1])
    rep = ari_report([0, 0, 1, 1], [1, 1, 0, 0], (np.array([0, 0, 1, 1]), np.array([0, 0, 1, 1])), t, t)
    assert rep == {"RGB": 1.0, "IR": 1.0, "ALL": 1.0}
    rep = ari_report([0, 0, 0, 0], [0, 0, 0, 0], (np.zeros(4, int), np.full(4, 1)), t, t)
    assert rep["RGB"] == 0.0 and rep["IR"] == 0.0


def test_ari_all_needs_correct_match():
    t = np.array([0, 0, 1, 1])
    rep = ari_report([0, 0, 1, 1], [0, 0, 1, 1], (np.array([0, 0, 1, 1]), np.array([1, 1, 0, 0])), t, t)
    assert rep["RGB"] == 1.0 and rep["IR"] == 1.0 and rep["ALL"] < 1.0


def test_ari_report_requires_ground_truth():
    with pytest.raises(MissingGroundTruth):
        ari_report([0], [0], (np.array([0]), np.array([0])), [-1], [0])


def test_noise_in_unified_labels():
    t = np.array([0, 0, 1, 1])
    rep = ari_report([0, 0, 1, NOISE], [0, 0, 1, 1], (np.array([0, 0, 1, NOISE]), np.array([0, 0, 1, 1])), t, t)
    assert 0 < rep["RGB"] < 1
