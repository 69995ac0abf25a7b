"""DBSCAN pseudo-labelling and the adjusted Rand index."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .data import NOISE
from .errors import InvalidParams, LengthMismatch
from .numerics import pairwise_sq_dists


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    @property
    def n_noise(self) -> int:
        return int(np.sum(self.labels == NOISE))


def dbscan(points, eps: float, min_pts: int) -> ClusterAssignment:
    """Density clustering under the Euclidean metric.

    The eps-neighbourhood is inclusive and contains the point itself. Clusters
    are numbered in order of their lowest-index core point; a border point
    takes the label of the first cluster whose expansion reaches it.
    """
    if not eps > 0 or min_pts < 1:
        raise InvalidParams(f"dbscan needs eps > 0 and min_pts >= 1 (eps={eps}, min_pts={min_pts})")
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return ClusterAssignment(labels, 0)
    adj = eps_neighbours(x, eps)
    core = adj.sum(axis=1) >= min_pts
    neighbours = [np.flatnonzero(row) for row in adj]

    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            for q in neighbours[p]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    if core[q]:
                        queue.append(q)
        cluster += 1
    return ClusterAssignment(labels, cluster)


def eps_neighbours(x: np.ndarray, eps: float) -> np.ndarray:
    """Boolean matrix of ``|x_i - x_j| <= eps``.

    Uses the Gram-matrix identity, then re-decides pairs within rounding
    distance of the threshold with exact differences.
    """
    sq = pairwise_sq_dists(x, x)
    band = 1e-9 * (1.0 + np.einsum("ij,ij->i", x, x).max(initial=0.0))
    adj = sq <= eps * eps
    close = np.abs(sq - eps * eps) <= band
    if close.any():
        i, j = np.nonzero(close)
        adj[i, j] = np.linalg.norm(x[i] - x[j], axis=1) <= eps
    np.fill_diagonal(adj, True)
    return adj


def noise_to_singletons(labels) -> np.ndarray:
    """Give every NOISE entry its own fresh label."""
    labels = np.array(labels, dtype=np.int64)
    noise = labels == NOISE
    start = labels.max(initial=-1) + 1
    labels[noise] = start + np.arange(noise.sum())
    return labels


def _comb2(x) -> int:
    x = np.asarray(x, dtype=np.int64)
    return int(np.sum(x * (x - 1) // 2))


def contingency_table(a, b) -> np.ndarray:
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair agreement; NOISE entries count as singletons."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"label arrays differ in length: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        return 1.0
    table = contingency_table(noise_to_singletons(a), noise_to_singletons(b))
    index = _comb2(table)
    sum_a = _comb2(table.sum(axis=1))
    sum_b = _comb2(table.sum(axis=0))
    expected = sum_a * sum_b / (n * (n - 1) // 2)
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial and identical in kind
        return 1.0
    return float((index - expected) / (max_index - expected))
