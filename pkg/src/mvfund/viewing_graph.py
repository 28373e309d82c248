"""Viewing graphs and triplet covers.

A triplet cover is a set of 3-cliques of the viewing graph that together
touch every view and that form a connected graph when two triplets are
adjacent iff they share two views (and hence one fundamental matrix).
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import CoverInfeasible, DisconnectedGraph, RankDeficiencyError, UncoverableView
from .geometry import ImageMeta, epipoles
from .mvfm import NViewFundamental

log = logging.getLogger(__name__)

Edge = Tuple[int, int]
Triplet = Tuple[int, int, int]

# ratio contributed by a view whose epipole lies at infinity
INFINITE_EPIPOLE_RATIO = 2.0


def _edge(i, j) -> Edge:
    return (i, j) if i < j else (j, i)


@dataclass
class ViewingGraph:
    n: int
    blocks: Dict[Edge, np.ndarray]
    weights: Dict[Edge, float] = field(default_factory=dict)

    def __post_init__(self):
        blocks, weights = {}, {}
        for (i, j), M in self.blocks.items():
            if i == j:
                raise ValueError("self-loops are not allowed")
            M = np.asarray(M, dtype=float)
            e = _edge(i, j)
            blocks[e] = M if (i, j) == e else M.T
            w = float(self.weights.get((i, j), self.weights.get((j, i), 1.0)))
            if w < 0:
                raise ValueError("edge weights must be nonnegative")
            weights[e] = w
        self.blocks = blocks
        self.weights = weights

    @classmethod
    def from_nview(cls, F: NViewFundamental, weights: Optional[Mapping] = None):
        return cls(F.n, F.blocks(), dict(weights or {}))

    @property
    def edges(self) -> List[Edge]:
        return sorted(self.blocks)

    def has_edge(self, i, j):
        return _edge(i, j) in self.blocks

    def block(self, i, j):
        """``F_ij`` oriented so that ``x_i^T F_ij x_j = 0``."""
        M = self.blocks[_edge(i, j)]
        return M if i < j else M.T

    def to_nview(self, check_rank=False) -> NViewFundamental:
        return NViewFundamental.from_blocks(self.n, self.blocks, check_rank=check_rank)

    def is_connected(self, edges=None):
        return len(_components(self.n, self.edges if edges is None else edges)) == 1


def _components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: Dict[int, List[int]] = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return sorted(groups.values())


def max_spanning_tree(n, weighted_edges: Mapping[Edge, float]) -> List[Edge]:
    """Kruskal on descending weight. Returns a forest if disconnected.

    Equal weights are ordered by index gap ``j - i`` and then by ``i``, so ties
    produce path-like trees rather than a star that would isolate a view once
    its edges are removed.
    """
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree = []
    for e in sorted(weighted_edges, key=lambda e: (-weighted_edges[e], e[1] - e[0], e[0])):
        ri, rj = find(e[0]), find(e[1])
        if ri != rj:
            parent[ri] = rj
            tree.append(e)
            if len(tree) == n - 1:
                break
    return sorted(tree)


def edge_disjoint_max_trees(G: ViewingGraph, n_trees=5) -> List[Edge]:
    """Union of up to ``n_trees`` edge-disjoint maximum-weight spanning trees."""
    if n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    if not G.is_connected():
        raise DisconnectedGraph(f"viewing graph has components {_components(G.n, G.edges)}")
    remaining = dict(G.weights)
    chosen: List[Edge] = []
    for _ in range(n_trees):
        tree = max_spanning_tree(G.n, remaining)
        if len(tree) < G.n - 1:
            break
        chosen.extend(tree)
        for e in tree:
            del remaining[e]
    return sorted(chosen)


def three_cliques(edges) -> List[Triplet]:
    """All triangles of the graph with the given edge set, lexicographically sorted."""
    adj: Dict[int, set] = {}
    for i, j in edges:
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)
    out = []
    for i in sorted(adj):
        for j in sorted(v for v in adj[i] if v > i):
            for k in sorted(v for v in adj[i] & adj[j] if v > j):
                out.append((i, j, k))
    return out


def enumerate_triplets(edge_subset, G: ViewingGraph) -> List[Triplet]:
    """Triangles of the subgraph ``edge_subset``, augmented from ``G`` for uncovered views.

    An uncovered view first receives its incident edges of ``G`` in order of
    decreasing weight; if it is still in no triangle, the heaviest triangle of
    ``G`` through it is added outright.
    """
    sub = {_edge(*e) for e in edge_subset}
    if not sub <= set(G.blocks):
        raise ValueError("edge subset contains edges without measured blocks")
    all_tri = three_cliques(G.edges)
    for v in range(G.n):
        if any(v in t for t in three_cliques(sub)):
            continue
        incident = sorted((e for e in G.edges if v in e and e not in sub), key=lambda e: (-G.weights[e], e))
        for e in incident:
            sub.add(e)
            if any(v in t for t in three_cliques(sub)):
                break
        else:
            through = [t for t in all_tri if v in t]
            if not through:
                raise UncoverableView(f"view {v} belongs to no 3-clique of the viewing graph")

            def strength(t):
                return min(G.weights[e] for e in itertools.combinations(t, 2))

            best = max(through, key=lambda t: (strength(t), tuple(-x for x in t)))
            sub.update(itertools.combinations(best, 2))
    return three_cliques(sub)


def _dehomogenize(e):
    if abs(e[2]) < 1e-12:
        return None
    return e[:2] / e[2]


def _view_ratio(e1, e2, center):
    p1, p2 = _dehomogenize(e1), _dehomogenize(e2)
    if p1 is None or p2 is None:
        return INFINITE_EPIPOLE_RATIO
    c = np.asarray(center, dtype=float)
    avg = 0.5 * (np.linalg.norm(p1 - c) + np.linalg.norm(p2 - c))
    d = np.linalg.norm(p1 - p2)
    if avg == 0:
        return 0.0 if d == 0 else INFINITE_EPIPOLE_RATIO
    return min(d / avg, INFINITE_EPIPOLE_RATIO)


def collinearity_measure(triplet_blocks, meta: Optional[Sequence[ImageMeta]] = None, tol=1e-6):
    """Non-collinearity ``l_k`` of a triplet ``(a, b, c)`` from blocks ``(F_ab, F_ac, F_bc)``.

    In every view the two epipoles are compared: their distance over their mean
    distance to the image center, averaged over the three views. Without
    metadata the center is the origin.
    """
    F_ab, F_ac, F_bc = (np.asarray(M, dtype=float) for M in triplet_blocks)
    l_ab, r_ab = epipoles(F_ab, tol)
    l_ac, r_ac = epipoles(F_ac, tol)
    l_bc, r_bc = epipoles(F_bc, tol)
    centers = [(0.0, 0.0)] * 3 if meta is None else [m.center for m in meta]
    ratios = [
        _view_ratio(l_ab, l_ac, centers[0]),
        _view_ratio(r_ab, l_bc, centers[1]),
        _view_ratio(r_ac, r_bc, centers[2]),
    ]
    return float(np.mean(ratios))


@dataclass(frozen=True)
class CoverParams:
    n_trees: int = 5
    delta1: float = 0.03
    delta2_threshold: float = 0.5
    delta2_collinear: float = 1.2
    score_iterations: int = 50

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.delta1 < 0:
            raise ValueError("delta1 must be nonnegative")

    def delta2(self, mean_l):
        return 0.0 if mean_l > self.delta2_threshold else self.delta2_collinear


@dataclass
class TripletCover:
    triplets: List[Triplet]
    l: Dict[Triplet, float] = field(default_factory=dict)
    c: Dict[Triplet, float] = field(default_factory=dict)
    s: Dict[Triplet, float] = field(default_factory=dict)
    delta2: Optional[float] = None
    candidates: int = 0
    removed: List[Triplet] = field(default_factory=list)  # in removal order

    @property
    def adjacency(self) -> List[Tuple[int, int]]:
        return triplet_adjacency(self.triplets)

    def root(self):
        """Index of the highest-scoring triplet (first one on ties or without scores)."""
        if not self.s:
            return 0
        return max(range(len(self.triplets)), key=lambda k: (self.s.get(self.triplets[k], -np.inf), -k))


def triplet_adjacency(triplets) -> List[Tuple[int, int]]:
    out = []
    sets = [set(t) for t in triplets]
    for k in range(len(sets)):
        for m in range(k + 1, len(sets)):
            if len(sets[k] & sets[m]) == 2:
                out.append((k, m))
    return out


def _triplet_components(triplets):
    n = len(triplets)
    if n == 0:
        return []
    return _components(n, triplet_adjacency(triplets))


@dataclass(frozen=True)
class CoverReport:
    covered: bool
    missing_views: Tuple[int, ...]
    connected: bool
    components: Tuple[Tuple[int, ...], ...]
    blocks_present: bool
    missing_blocks: Tuple[Edge, ...]

    @property
    def ok(self):
        return self.covered and self.connected and self.blocks_present

    def __bool__(self):
        return self.ok


def validate_cover(cover, G: ViewingGraph) -> CoverReport:
    triplets = cover.triplets if isinstance(cover, TripletCover) else list(cover)
    seen = {v for t in triplets for v in t}
    missing = tuple(v for v in range(G.n) if v not in seen)
    comps = _triplet_components(triplets)
    need = sorted({e for t in triplets for e in itertools.combinations(sorted(t), 2)})
    absent = tuple(e for e in need if not G.has_edge(*e))
    return CoverReport(
        covered=not missing,
        missing_views=missing,
        connected=len(comps) == 1,
        components=tuple(tuple(c) for c in comps),
        blocks_present=not absent,
        missing_blocks=absent,
    )


def _is_valid(triplets, n):
    if not triplets:
        return False
    if len({v for t in triplets for v in t}) != n:
        return False
    return len(_triplet_components(triplets)) == 1


def triplet_blocks(G: ViewingGraph, t: Triplet):
    a, b, c = t
    return G.block(a, b), G.block(a, c), G.block(b, c)


def stability_scores(l, c, delta2):
    """``l^delta2 / c``; a zero ``c`` gives an infinite score."""
    with np.errstate(divide="ignore"):
        return {t: (l[t] ** delta2) / c[t] if c[t] > 0 else np.inf for t in l}


def prune_cover(triplets, scores: Mapping[Triplet, float], n):
    """Greedily drop low-score triplets while the cover stays connected and complete.

    Ties are broken lexicographically; passes repeat until nothing is removable.
    Returns ``(kept, removed)`` with ``removed`` in removal order.
    """
    keep = sorted(triplets)
    removed = []
    order = sorted(keep, key=lambda t: (scores[t], t))
    changed = True
    while changed:
        changed = False
        for t in order:
            if t not in keep:
                continue
            trial = [u for u in keep if u != t]
            if _is_valid(trial, n):
                keep = trial
                removed.append(t)
                changed = True
    return keep, removed


def build_triplet_cover(
    G: ViewingGraph,
    params: CoverParams = CoverParams(),
    consistency_scorer: Optional[Callable[[Triplet], float]] = None,
    meta: Optional[Sequence[ImageMeta]] = None,
    map_fn=map,
) -> TripletCover:
    """Select a small, reliable triplet cover of ``G``.

    ``consistency_scorer(t)`` returns ``c_k`` for a triplet; ``map_fn`` may be
    a parallel, order-preserving map used for scoring.
    """
    trees = edge_disjoint_max_trees(G, params.n_trees)
    cands = enumerate_triplets(trees, G)
    if not _is_valid(cands, G.n):
        # tree-derived triangles do not chain up; fall back to every triangle of G
        log.info("triangles of the tree union do not form a connected cover; using all 3-cliques")
        cands = three_cliques(G.edges)
    n_cands = len(cands)

    l = {}
    for t in cands:
        m = None if meta is None else [meta[v] for v in t]
        try:
            l[t] = collinearity_measure(triplet_blocks(G, t), m)
        except RankDeficiencyError:
            l[t] = 0.0
    kept = [t for t in cands if l[t] >= params.delta1]
    uncovered = sorted(set(range(G.n)) - {v for t in kept for v in t})
    if uncovered:
        raise CoverInfeasible(f"collinear-triplet removal leaves views {uncovered} uncovered")
    if len(_triplet_components(kept)) != 1:
        raise CoverInfeasible("non-collinear triplets do not form a connected cover")

    if consistency_scorer is None:
        c = {t: 1.0 for t in kept}
    else:
        c = dict(zip(kept, map_fn(consistency_scorer, kept)))
    mean_l = float(np.mean([l[t] for t in kept]))
    delta2 = params.delta2(mean_l)
    s = stability_scores({t: l[t] for t in kept}, c, delta2)
    final, removed = prune_cover(kept, s, G.n)
    return TripletCover(
        triplets=final,
        l={t: l[t] for t in final},
        c={t: c[t] for t in final},
        s={t: s[t] for t in final},
        delta2=delta2,
        candidates=n_cands,
        removed=removed,
    )
