"""Density-induced break of similarity: analytic bounds and exact counting.

The analytic side evaluates the first-order (2-path) lower bound and the
closed-path upper bound on the asymptotic training error for dense pair sets
with pair-label noise. The combinatorial side counts inconsistent 2-paths,
contracts positive components, and finds the exact minimum fraction of
violated edges over all set partitions of the nodes (correlation clustering
on small graphs).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .pairgraph import PairDataset, SimilarityGraph, graph_of

DEFAULT_MAX_NODES = 12


class DibsError(ValueError):
    pass


class OracleSizeError(DibsError):
    pass


def _check_p(P: float):
    if not 0.0 <= P <= 1.0:
        raise DibsError(f"P must lie in [0, 1], got {P}")


def e_sim(P: float, N_c: int) -> float:
    """Error from a class chain carrying exactly one flipped positive pair."""
    _check_p(P)
    if N_c < 2:
        raise DibsError(f"N_c must be >= 2, got {N_c}")
    return P * (1.0 - P) ** (N_c - 1) / 2.0


def e_diff(P: float, n_c: int, N_c: int) -> float:
    """Closed-path upper-bound term, summed over path lengths ``m = 2..n_c``.

    Each term is ``m * P**(m-1) * (1-P) / (2**m * (n_c-1)**(m-1))`` times the
    falling factorial ``(n_c-2)!/(n_c-m)!``; the whole coefficient is carried
    as a running product so large ``n_c`` cannot overflow. The chain factor
    sums ``((1-P)/2)**(2i)`` for ``i = 0..floor(N_c/2)``.
    """
    _check_p(P)
    if n_c < 2:
        raise DibsError(f"n_c must be >= 2, got {n_c}")
    if N_c < 2:
        raise DibsError(f"N_c must be >= 2, got {N_c}")
    r = ((1.0 - P) / 2.0) ** 2
    chain = sum(r ** i for i in range(N_c // 2 + 1))
    coef = P * (1.0 - P) / (4.0 * (n_c - 1))  # m = 2, without the factor m
    total = 0.0
    for m in range(2, n_c + 1):
        total += m * coef
        coef *= P / (2.0 * (n_c - 1)) * (n_c - m)
        if coef == 0.0:
            break
    return total * chain


@dataclass(frozen=True)
class DibsBounds:
    P: float
    n_c: int
    N_c: int
    e_sim: float
    e_diff: float
    lower: float
    upper: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return asdict(self)


def dibs_bounds(P: float, n_c: int, N_c: int) -> DibsBounds:
    es = e_sim(P, N_c)
    ed = e_diff(P, n_c, N_c)
    lower = es + P * (1.0 - P) / (2.0 * (n_c - 1))
    return DibsBounds(P, n_c, N_c, es, ed, lower, es + ed)


def count_inconsistent_2paths(g: SimilarityGraph) -> int:
    """Count minimal similarity violations.

    A node pair joined by at least one similar and one different edge counts
    once. A different edge whose endpoints were merged into one node (a
    negative self-loop of a collapsed graph) counts once per edge.
    """
    u, v = g.edges[:, 0], g.edges[:, 1]
    loops = u == v
    n_loops = int(np.sum(loops & (g.labels == 0)))
    lo, hi = np.minimum(u, v)[~loops], np.maximum(u, v)[~loops]
    lab = g.labels[~loops]
    if lo.size == 0:
        return n_loops
    keys = np.stack([lo, hi], axis=1)
    pos_keys = {tuple(k) for k in keys[lab == 1].tolist()}
    neg_keys = {tuple(k) for k in keys[lab == 0].tolist()}
    return len(pos_keys & neg_keys) + n_loops


def positive_components(g: SimilarityGraph) -> dict[int, int]:
    """Map each node to the smallest node id of its similar-edge component."""
    nodes = g.nodes
    index = {int(x): i for i, x in enumerate(nodes.tolist())}
    n = len(nodes)
    pos = g.labels == 1
    rows = np.array([index[x] for x in g.edges[pos, 0].tolist()], dtype=np.int64)
    cols = np.array([index[x] for x in g.edges[pos, 1].tolist()], dtype=np.int64)
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    rep = {}
    for x, c in zip(nodes.tolist(), comp.tolist()):
        rep[c] = min(rep.get(c, x), x)
    return {x: rep[c] for x, c in zip(nodes.tolist(), comp.tolist())}


def collapse_positive(g: SimilarityGraph) -> SimilarityGraph:
    """Contract similar-edge components into single nodes.

    Different edges are re-attached to the contracted nodes (parallel edges
    and self-loops kept); similar edges all become loops and are dropped.
    """
    if g.n_nodes == 0:
        return g
    rep = positive_components(g)
    neg = g.labels == 0
    mapped = np.array([[rep[a], rep[b]] for a, b in g.edges[neg].tolist()],
                      dtype=np.int64).reshape(-1, 2)
    nodes = np.unique(np.fromiter(rep.values(), dtype=np.int64))
    return SimilarityGraph(nodes, mapped, np.zeros(len(mapped), dtype=np.int64),
                           g.origin[neg])


def partition_violations(g: SimilarityGraph, blocks: dict) -> int:
    """Edges violated by assigning node ``x`` to block ``blocks[x]``."""
    bu = np.array([blocks[x] for x in g.edges[:, 0].tolist()])
    bv = np.array([blocks[x] for x in g.edges[:, 1].tolist()])
    same = bu == bv
    return int(np.sum((g.labels == 1) & ~same) + np.sum((g.labels == 0) & same))


def _search_order(pos: np.ndarray, neg: np.ndarray) -> list[int]:
    # Greedy: start from the busiest node, then always take the unplaced node
    # with the most edges into the placed set, so costs show up early.
    w = pos + neg
    n = len(w)
    order = [int(np.argmax(w.sum(axis=1)))]
    rest = set(range(n)) - set(order)
    while rest:
        cand = max(rest, key=lambda j: (w[j, order].sum(), w[j].sum(), -j))
        order.append(cand)
        rest.remove(cand)
    return order


def min_violation_oracle(g: SimilarityGraph, max_nodes: int = DEFAULT_MAX_NODES) -> float:
    """Exact minimum fraction of violated edges over all node partitions.

    A similar edge is violated when its endpoints sit in different blocks, a
    different edge when they share one. The search walks restricted-growth
    strings (each set partition exactly once) depth first and prunes a branch
    only when an admissible lower bound already reaches the incumbent, so the
    result is the exact minimum.
    """
    n = g.n_nodes
    if n > max_nodes:
        raise OracleSizeError(
            f"graph has {n} nodes, oracle limit is {max_nodes}; evaluate sampled "
            f"subgraphs of at most {max_nodes} nodes instead")
    m = g.n_edges
    if m == 0:
        return 0.0
    index = {int(x): i for i, x in enumerate(g.nodes.tolist())}
    pos = np.zeros((n, n), dtype=np.int64)
    neg = np.zeros((n, n), dtype=np.int64)
    fixed = 0
    for (a, b), lab in zip(g.edges.tolist(), g.labels.tolist()):
        i, j = index[a], index[b]
        if i == j:
            fixed += lab == 0
            continue
        (pos if lab == 1 else neg)[i, j] += 1
        (pos if lab == 1 else neg)[j, i] += 1

    order = _search_order(pos, neg)
    pos, neg = pos[np.ix_(order, order)], neg[np.ix_(order, order)]

    # Unavoidable cost among not-yet-placed nodes: parallel opposite edges.
    pair_floor = np.triu(np.minimum(pos, neg), 1)
    suffix = np.zeros(n + 1, dtype=np.int64)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] + pair_floor[k, k:].sum()

    rep = positive_components(SimilarityGraph(np.arange(n), np.argwhere(np.triu(pos) > 0),
                                              np.ones(int((np.triu(pos) > 0).sum()))))
    comp = np.array([rep[i] for i in range(n)])
    same = comp[:, None] == comp[None, :]
    best = int(np.triu(np.where(same, neg, pos), 1).sum())
    best = min(best, int(np.triu(pos, 1).sum()), int(np.triu(neg, 1).sum()))

    assign = np.zeros(n, dtype=np.int64)

    def bound(k: int, n_blocks: int) -> int:
        if k == n:
            return 0
        onehot = np.zeros((k, n_blocks), dtype=np.int64)
        onehot[np.arange(k), assign[:k]] = 1
        gain = pos[k:, :k] @ onehot - neg[k:, :k] @ onehot
        tot = pos[k:, :k].sum(axis=1)
        return int(np.sum(tot - np.maximum(gain.max(axis=1), 0))) + int(suffix[k])

    def dfs(k: int, n_blocks: int, cost: int):
        nonlocal best
        if k == n:
            best = min(best, cost)
            return
        if cost + bound(k, n_blocks) >= best:
            return
        p, q = pos[k, :k], neg[k, :k]
        tot = int(p.sum())
        same_p = np.bincount(assign[:k], weights=p, minlength=n_blocks)
        same_q = np.bincount(assign[:k], weights=q, minlength=n_blocks)
        inc = [(tot - int(same_p[b]) + int(same_q[b]), b) for b in range(n_blocks)]
        inc.append((tot, n_blocks))
        for extra, b in sorted(inc):
            if cost + extra >= best:
                break
            assign[k] = b
            dfs(k + 1, n_blocks + (b == n_blocks), cost + extra)
            if best == 0:
                return

    if best > 0:
        assign[0] = 0
        dfs(1, 1, 0)
    return (best + fixed) / m


@dataclass(frozen=True)
class ConsistencyReport:
    n_nodes: int
    n_edges: int
    n_inconsistent_2paths: int
    n_collapsed_inconsistencies: int
    collapsed_nodes: int
    min_violation_fraction: float | None
    noisy_fraction: float | None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def consistency_report(data, max_nodes: int = DEFAULT_MAX_NODES) -> ConsistencyReport:
    """Counts for a PairDataset or SimilarityGraph; the oracle runs when small enough."""
    noisy = None
    if isinstance(data, PairDataset):
        noisy = float(np.mean(data.noise_mask())) if len(data) else 0.0
        g = graph_of(data)
    else:
        g = data
    collapsed = collapse_positive(g)
    frac = min_violation_oracle(g, max_nodes) if g.n_nodes <= max_nodes else None
    return ConsistencyReport(g.n_nodes, g.n_edges, count_inconsistent_2paths(g),
                             count_inconsistent_2paths(collapsed), collapsed.n_nodes,
                             frac, noisy)


@dataclass(frozen=True)
class DibsEstimate:
    n: int
    mean: float
    stderr: float
    lower: float
    upper: float
    inside: bool

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_error_dibs(values, bounds: DibsBounds) -> DibsEstimate:
    """Mean and standard error of asymptotic train errors vs. the bounds."""
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        raise DibsError("empty batch")
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return DibsEstimate(int(x.size), mean, se, bounds.lower, bounds.upper,
                        bool(bounds.lower <= mean <= bounds.upper))
