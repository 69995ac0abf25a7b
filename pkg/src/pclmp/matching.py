"""Cross-modality correspondence between visible and infrared centroids via
optimal bipartite assignment, plus unified labels across both modalities."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import NOISE
from .errors import EmptyMemory, InconsistentInput


@dataclass
class CrossModalMatch:
    pairs: List[Tuple[int, int, float]]
    unmatched_v: List[int] = field(default_factory=list)
    unmatched_r: List[int] = field(default_factory=list)

    @property
    def total_similarity(self) -> float:
        return float(sum(s for _, _, s in self.pairs))

    def as_dict(self) -> dict:
        return {v: r for v, r, _ in self.pairs}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vis_cluster", "ir_cluster", "similarity"])
            for v, r, s in self.pairs:
                w.writerow([v, r, f"{s:.6f}"])


def match_prototypes(cent_v, cent_r) -> CrossModalMatch:
    """Maximum total cosine similarity assignment of the smaller side."""
    pv = np.asarray(getattr(cent_v, "prototypes", cent_v), dtype=np.float64)
    pr = np.asarray(getattr(cent_r, "prototypes", cent_r), dtype=np.float64)
    if pv.shape[0] == 0 or pr.shape[0] == 0:
        raise EmptyMemory("both centroid memories must be non-empty")
    sim = pv @ pr.T
    rows, cols = linear_sum_assignment(sim, maximize=True)
    pairs = [(int(v), int(r), float(sim[v, r])) for v, r in zip(rows, cols)]
    used_v, used_r = set(rows.tolist()), set(cols.tolist())
    return CrossModalMatch(
        pairs,
        [v for v in range(pv.shape[0]) if v not in used_v],
        [r for r in range(pr.shape[0]) if r not in used_r],
    )


def unify_labels(labels_v, labels_r, match: CrossModalMatch):
    """Matched pairs share the visible label; unmatched infrared clusters are
    shifted past the visible range. NOISE is preserved."""
    labels_v = np.asarray(labels_v, dtype=np.int64)
    labels_r = np.asarray(labels_r, dtype=np.int64)
    n_v = int(labels_v.max(initial=-1)) + 1
    n_r = int(labels_r.max(initial=-1)) + 1
    seen_v, seen_r = set(), set()
    for v, r, _ in match.pairs:
        if not (0 <= v < n_v and 0 <= r < n_r) or v in seen_v or r in seen_r:
            raise InconsistentInput(f"pair ({v}, {r}) does not fit the assignments")
        seen_v.add(v)
        seen_r.add(r)
    mapping = np.arange(n_r) + n_v
    for v, r, _ in match.pairs:
        mapping[r] = v
    uni_r = np.where(labels_r == NOISE, NOISE, mapping[np.maximum(labels_r, 0)] if n_r else NOISE)
    return labels_v.copy(), uni_r
