"""Seeded synthetic transmission-like networks for benchmarks and property tests."""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial import cKDTree

from .network import PowerNetwork, network_from_edges


def make_synthetic_network(buses: int, avg_degree: float = 2.6, seed: int = 0) -> PowerNetwork:
    """Connected random network: a random spanning tree plus extra local edges.

    Buses are scattered in the unit square and candidate branches join
    geometric near neighbours, which keeps the graph sparse and grid-like. The
    spanning tree is the minimum spanning tree under random weights; extra
    branches are drawn from the remaining candidates until
    ``round(avg_degree * buses / 2)`` branches exist (never fewer than
    ``buses - 1``). Bus ids are ``1..buses``.
    """
    if buses < 2:
        raise ValueError("need at least two buses")
    if avg_degree < 1:
        raise ValueError("avg_degree must be at least 1")
    rng = np.random.default_rng(seed)
    target = max(buses - 1, int(round(avg_degree * buses / 2)))
    target = min(target, buses * (buses - 1) // 2)
    pts = rng.random((buses, 2))
    k = min(buses - 1, max(6, int(np.ceil(avg_degree * 2))))
    _, nn = cKDTree(pts).query(pts, k=k + 1)
    a = np.repeat(np.arange(buses), k)
    b = nn[:, 1:].ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    cand = np.unique(np.stack([lo, hi], axis=1), axis=0)
    if len(cand) < target:
        # dense request on a small network: fall back to all pairs
        iu = np.triu_indices(buses, 1)
        cand = np.stack(iu, axis=1)
    # join any disconnected kNN components through their closest-index pair
    g = coo_matrix((np.ones(len(cand)), (cand[:, 0], cand[:, 1])), shape=(buses, buses))
    ncomp, labels = connected_components(g, directed=False)
    if ncomp > 1:
        reps = [int(np.flatnonzero(labels == c)[0]) for c in range(ncomp)]
        bridges = np.array([(min(reps[i], reps[i + 1]), max(reps[i], reps[i + 1])) for i in range(ncomp - 1)])
        cand = np.unique(np.concatenate([cand, bridges]), axis=0)
    w = rng.random(len(cand)) + 1e-9
    g = coo_matrix((w, (cand[:, 0], cand[:, 1])), shape=(buses, buses)).tocsr()
    tree = minimum_spanning_tree(g).tocoo()
    tree_edges = {(int(min(i, j)), int(max(i, j))) for i, j in zip(tree.row, tree.col)}
    rest = [tuple(map(int, e)) for e in cand if (int(e[0]), int(e[1])) not in tree_edges]
    n_extra = min(len(rest), target - len(tree_edges))
    extra = [rest[i] for i in sorted(rng.choice(len(rest), size=n_extra, replace=False))] if n_extra > 0 else []
    edges = sorted(tree_edges) + extra
    order = rng.permutation(len(edges))
    edges = [edges[i] for i in order]
    return network_from_edges(list(range(1, buses + 1)), [(i + 1, j + 1) for i, j in edges],
                              name=f"synthetic-{buses}-{avg_degree:g}-{seed}")
