"""Retrieval (CMC, mAP) and clustering (ARI) metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from .clustering import adjusted_rand_index
from .data import UNKNOWN_ID
from .errors import MissingGroundTruth, NoRelevantItem

log = logging.getLogger(__name__)

DEFAULT_RANKS = (1, 5, 10, 20)


@dataclass
class RetrievalResult:
    order: np.ndarray      # (Q, G) gallery indices, best first
    relevance: np.ndarray  # (Q, G) bool, aligned with order

    def valid_queries(self) -> np.ndarray:
        return self.relevance.any(axis=1)


def rank_gallery(query_emb, query_ids, gallery_emb, gallery_ids) -> RetrievalResult:
    """Sort by descending cosine similarity; equal scores keep gallery order."""
    q = np.atleast_2d(np.asarray(query_emb, dtype=np.float64))
    g = np.atleast_2d(np.asarray(gallery_emb, dtype=np.float64))
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    order = np.argsort(-(qn @ gn.T), axis=1, kind="stable")
    relevance = np.asarray(gallery_ids)[order] == np.asarray(query_ids)[:, None]
    return RetrievalResult(order, relevance)


def _usable(results: RetrievalResult) -> np.ndarray:
    ok = results.valid_queries()
    skipped = int((~ok).sum())
    if ok.sum() == 0:
        raise NoRelevantItem("no query has a relevant gallery item")
    if skipped:
        log.warning("%d queries without a relevant gallery item were skipped", skipped)
    return results.relevance[ok]


def cmc(results: RetrievalResult, ranks: Sequence[int] = DEFAULT_RANKS) -> Dict[int, float]:
    rel = _usable(results)
    first_hit = np.argmax(rel, axis=1)  # 0-based position of the first match
    return {int(k): float(np.mean(first_hit < k)) for k in ranks}


def average_precision(relevance_row) -> float:
    rel = np.asarray(relevance_row, dtype=bool)
    hits = np.flatnonzero(rel)
    if hits.size == 0:
        raise NoRelevantItem("query has no relevant gallery item")
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def mean_average_precision(results: RetrievalResult) -> float:
    rel = _usable(results)
    hits_cum = np.cumsum(rel, axis=1)
    positions = np.arange(1, rel.shape[1] + 1)
    ap = (hits_cum / positions * rel).sum(axis=1) / rel.sum(axis=1)
    return float(ap.mean())


def n_skipped(results: RetrievalResult) -> int:
    return int((~results.valid_queries()).sum())


def relevant_positions(query_emb, query_ids, gallery_emb, gallery_ids) -> list:
    """0-based ranks of the relevant gallery items for each query, without a
    full sort. Matches the ordering of ``rank_gallery`` exactly."""
    q = np.atleast_2d(np.asarray(query_emb, dtype=np.float64))
    g = np.atleast_2d(np.asarray(gallery_emb, dtype=np.float64))
    sim = -((q / np.linalg.norm(q, axis=1, keepdims=True)) @ (g / np.linalg.norm(g, axis=1, keepdims=True)).T)
    gallery_ids = np.asarray(gallery_ids)
    query_ids = np.asarray(query_ids)
    cols = np.arange(g.shape[0])
    out = [None] * q.shape[0]
    for qid in np.unique(query_ids):
        rows = np.flatnonzero(query_ids == qid)
        rel = np.flatnonzero(gallery_ids == qid)
        block = sim[rows][:, None, :]           # (nq, 1, G)
        sr = sim[np.ix_(rows, rel)][:, :, None]  # (nq, nr, 1)
        pos = (block < sr).sum(axis=2) + ((block == sr) & (cols[None, None, :] < rel[None, :, None])).sum(axis=2)
        pos.sort(axis=1)
        for r, p in zip(rows, pos):
            out[r] = p
    return out


def scores_from_positions(positions, ranks: Sequence[int] = DEFAULT_RANKS) -> dict:
    """CMC and mAP from per-query relevant positions (see ``relevant_positions``)."""
    usable = [p for p in positions if p.size]
    if not usable:
        raise NoRelevantItem("no query has a relevant gallery item")
    skipped = len(positions) - len(usable)
    if skipped:
        log.warning("%d queries without a relevant gallery item were skipped", skipped)
    first = np.array([p[0] for p in usable])
    ap = [float(np.mean(np.arange(1, p.size + 1) / (p + 1))) for p in usable]
    return {"map": float(np.mean(ap)), "skipped": skipped, **{f"rank{k}": float(np.mean(first < k)) for k in ranks}}


def cross_modal_retrieval(emb_v, ids_v, emb_r, ids_r, ranks: Sequence[int] = DEFAULT_RANKS) -> dict:
    """Infrared->visible and visible->infrared retrieval, each direction
    scored separately and then averaged."""
    out = {}
    for name, (qe, qi, ge, gi) in {
        "r2v": (emb_r, ids_r, emb_v, ids_v),
        "v2r": (emb_v, ids_v, emb_r, ids_r),
    }.items():
        out[name] = scores_from_positions(relevant_positions(qe, qi, ge, gi), ranks)
    keys = [k for k in out["r2v"] if k != "skipped"]
    out["mean"] = {k: 0.5 * (out["r2v"][k] + out["v2r"][k]) for k in keys}
    return out


def ari_report(labels_v, labels_r, unified, true_ids_v, true_ids_r) -> Dict[str, float]:
    """ARI of visible, infrared and joint (cross-modality unified) clusterings."""
    tv, tr = np.asarray(true_ids_v), np.asarray(true_ids_r)
    if np.any(tv == UNKNOWN_ID) or np.any(tr == UNKNOWN_ID):
        raise MissingGroundTruth("ARI needs ground-truth identities for every record")
    uni_v, uni_r = unified
    return {
        "RGB": adjusted_rand_index(labels_v, tv),
        "IR": adjusted_rand_index(labels_r, tr),
        "ALL": adjusted_rand_index(np.concatenate([uni_v, uni_r]), np.concatenate([tv, tr])),
    }
