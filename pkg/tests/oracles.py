"""Independent reference implementations used only by the tests."""
import itertools
import math

import numpy as np

NOISE = -1


def dbscan_oracle(points, eps, min_pts):
    """Union-find over core points on an explicit all-pairs distance table.

    Clusters are numbered by their lowest core index; a border point joins the
    lowest-numbered cluster among its core neighbours (the cluster that any
    index-ordered expansion reaches first).
    """
    x = [np.asarray(p, dtype=float) for p in points]
    n = len(x)
    dist = [[math.sqrt(sum((a - b) ** 2 for a, b in zip(x[i], x[j]))) for j in range(n)] for i in range(n)]
    nbrs = [[j for j in range(n) if dist[i][j] <= eps] for i in range(n)]
    core = [len(nb) >= min_pts for nb in nbrs]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        if core[i]:
            for j in nbrs[i]:
                if core[j]:
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    roots = sorted({find(i) for i in range(n) if core[i]}, key=lambda r: min(i for i in range(n) if core[i] and find(i) == r))
    cid = {r: k for k, r in enumerate(roots)}
    labels = [NOISE] * n
    for i in range(n):
        if core[i]:
            labels[i] = cid[find(i)]
        else:
            cands = [cid[find(j)] for j in nbrs[i] if core[j]]
            if cands:
                labels[i] = min(cands)
    return labels


def ari_pair_count(a, b):
    """ARI by explicit enumeration of all unordered pairs."""
    a, b = list(a), list(b)
    n = len(a)
    both = same_a = same_b = 0
    for i, j in itertools.combinations(range(n), 2):
        sa, sb = a[i] == a[j], b[i] == b[j]
        same_a += sa
        same_b += sb
        both += sa and sb
    total = n * (n - 1) // 2
    expected = same_a * same_b / total
    max_index = (same_a + same_b) / 2
    if max_index == expected:
        return 1.0
    return (both - expected) / (max_index - expected)


def ap_integral(relevance):
    """AP as the area under the precision-recall step curve."""
    rel = list(map(bool, relevance))
    n_rel = sum(rel)
    area, hits, prev_recall = 0.0, 0, 0.0
    for k, r in enumerate(rel, start=1):
        if r:
            hits += 1
            recall = hits / n_rel
            area += (recall - prev_recall) * (hits / k)
            prev_recall = recall
    return area


def best_matching_bruteforce(sim):
    """Max total similarity over injective maps from the smaller side."""
    sim = np.asarray(sim)
    rows, cols = sim.shape
    if rows > cols:
        return best_matching_bruteforce(sim.T)
    return max(sum(sim[i, p[i]] for i in range(rows)) for p in itertools.permutations(range(cols), rows))


def numerical_grad(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g
