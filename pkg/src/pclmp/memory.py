"""Prototype memories: cluster centroids, hard (farthest-member) prototypes and
the per-epoch dynamic member bank used for query-dependent prototypes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .clustering import ClusterAssignment
from .errors import EmptyCluster, InvalidLabel
from .numerics import l2_normalize, normalize_rows


@dataclass
class CentroidMemory:
    prototypes: np.ndarray  # (N, d)

    def __len__(self) -> int:
        return self.prototypes.shape[0]

    def update(self, label: int, query, alpha: float) -> None:
        self.prototypes[label] = momentum_update(self.prototypes[label], query, alpha)

    def update_batch(self, labels, queries, alpha: float) -> None:
        """Equivalent to calling ``update`` for each query in order.

        Queries are grouped into rounds by how often their label has appeared
        so far; within a round every label is distinct, so one vectorised
        update per round is exact.
        """
        labels = np.asarray(labels, dtype=np.int64)
        q = np.asarray(queries, dtype=np.float64)
        occurrence = np.zeros(labels.size, dtype=np.int64)
        seen = {}
        for i, c in enumerate(labels.tolist()):
            occurrence[i] = seen.get(c, 0)
            seen[c] = occurrence[i] + 1
        for r in range(int(occurrence.max(initial=-1)) + 1):
            rows = occurrence == r
            lab = labels[rows]
            blend = alpha * self.prototypes[lab] + (1.0 - alpha) * q[rows]
            self.prototypes[lab] = normalize_rows(blend)


@dataclass
class HardMemory(CentroidMemory):
    source_k: int = 1
    sources: np.ndarray = None  # (N, k') record indices that formed each prototype


@dataclass
class DynamicMemory:
    members: np.ndarray         # (N, M, d), unit rows
    sample_indices: np.ndarray  # (N, M)

    @property
    def n_clusters(self) -> int:
        return self.members.shape[0]

    @property
    def M(self) -> int:
        return self.members.shape[1]


def init_centroid_memory(embeddings, assignment: ClusterAssignment) -> CentroidMemory:
    x = np.asarray(embeddings, dtype=np.float64)
    protos = np.empty((assignment.n_clusters, x.shape[1]))
    for c in range(assignment.n_clusters):
        idx = assignment.members(c)
        if idx.size == 0:
            raise EmptyCluster(f"cluster {c} has no members")
        protos[c] = l2_normalize(x[idx].mean(axis=0))
    return CentroidMemory(protos)


def select_hard_prototypes(embeddings, assignment: ClusterAssignment, centroids: CentroidMemory, k: int = 1) -> HardMemory:
    """Per cluster, the member farthest from its centroid (k=1), or the
    normalised mean of the k farthest members. Ties go to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(embeddings, dtype=np.float64)
    protos = np.empty((assignment.n_clusters, x.shape[1]))
    sources = []
    for c in range(assignment.n_clusters):
        idx = assignment.members(c)
        if idx.size == 0:
            raise EmptyCluster(f"cluster {c} has no members")
        dist = np.linalg.norm(x[idx] - centroids.prototypes[c], axis=1)
        far = idx[np.argsort(-dist, kind="stable")[: min(k, idx.size)]]
        protos[c] = x[far[0]] if far.size == 1 else l2_normalize(x[far].mean(axis=0))
        sources.append(far)
    return HardMemory(protos, source_k=k, sources=sources)


def momentum_update(prototype, query, alpha: float) -> np.ndarray:
    """l2_normalize(alpha * old + (1 - alpha) * query)."""
    return l2_normalize(alpha * np.asarray(prototype, dtype=np.float64) + (1.0 - alpha) * np.asarray(query, dtype=np.float64))


def rebuild_dynamic_memory(raw, assignment: ClusterAssignment, phi_m: enc.EncoderParams, M: int, seed) -> DynamicMemory:
    """Draw M records per cluster (with replacement only when the cluster is
    smaller than M) and embed them with the momentum encoder."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    picks = np.empty((assignment.n_clusters, M), dtype=np.int64)
    for c in range(assignment.n_clusters):
        idx = assignment.members(c)
        picks[c] = rng.choice(idx, size=M, replace=idx.size < M)
    feats = enc.forward(phi_m, np.asarray(raw)[picks.ravel()]) if picks.size else np.zeros((0, 1))
    return DynamicMemory(feats.reshape(assignment.n_clusters, M, -1), picks)


def select_dynamic_prototypes(queries, labels, dyn: DynamicMemory):
    """Batched query-dependent prototypes.

    For the query's own cluster the member farthest from the query is taken,
    for every other cluster the closest one. Returns ``(banks, choice)`` with
    ``banks`` of shape (B, N, d) and ``choice`` the member index per cluster.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    n = dyn.n_clusters
    if np.any((labels < 0) | (labels >= n)):
        raise InvalidLabel(f"query labels must lie in [0, {n})")
    f = dyn.members
    m, d = f.shape[1], f.shape[2]
    cross = (q @ f.reshape(n * m, d).T).reshape(-1, n, m)
    sq = np.einsum("bd,bd->b", q, q)[:, None, None] + np.einsum("nmd,nmd->nm", f, f)[None] - 2.0 * cross
    choice = np.argmin(sq, axis=2)
    rows = np.arange(q.shape[0])
    choice[rows, labels] = np.argmax(sq[rows, labels], axis=1)
    banks = f[np.arange(n)[None, :], choice]
    return banks, choice


def select_dynamic_prototype(query, query_label: int, dyn: DynamicMemory):
    """Single-query form: returns (bank of N prototypes, positive index)."""
    banks, _ = select_dynamic_prototypes(np.asarray(query)[None], [query_label], dyn)
    return banks[0], int(query_label)


def all_unit_norm(memory, tol: float = 1e-6) -> bool:
    x = memory.members.reshape(-1, memory.members.shape[-1]) if isinstance(memory, DynamicMemory) else memory.prototypes
    return bool(np.all(np.abs(np.linalg.norm(x, axis=1) - 1.0) <= tol))
