import itertools
import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mvfund.admm import triplet_consistency_score
from mvfund.errors import CoverInfeasible, DisconnectedGraph, UncoverableView
from mvfund.geometry import ImageMeta
from mvfund.mvfm import NViewFundamental, from_cameras
from mvfund.reconstruction import normalize_blocks
from mvfund.synth import SceneSpec, generate_scene
from mvfund.viewing_graph import (
    CoverParams,
    ViewingGraph,
    build_triplet_cover,
    collinearity_measure,
    edge_disjoint_max_trees,
    enumerate_triplets,
    max_spanning_tree,
    prune_cover,
    stability_scores,
    three_cliques,
    triplet_blocks,
    validate_cover,
)

from oracles import brute_force_max_tree_weight, brute_force_triangles, random_views


def graph(n, edges, weights=None, rng=None):
    rng = rng or np.random.default_rng(0)
    F = from_cameras(random_views(rng, n))
    return ViewingGraph(n, {e: F.block(*e) for e in edges}, dict(weights or {}))


def complete(n):
    return list(itertools.combinations(range(n), 2))


def bfs_cover_ok(triplets, n):
    # independent oracle: coverage plus BFS over the shared-two-views adjacency
    if not triplets:
        return False
    if {v for t in triplets for v in t} != set(range(n)):
        return False
    seen, q = {0}, deque([0])
    while q:
        k = q.popleft()
        for m in range(len(triplets)):
            if m not in seen and len(set(triplets[k]) & set(triplets[m])) == 2:
                seen.add(m)
                q.append(m)
    return len(seen) == len(triplets)


def spans(n, edges):
    adj = {v: set() for v in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, q = {0}, deque([0])
    while q:
        for w in adj[q.popleft()] - seen:
            seen.add(w)
            q.append(w)
    return len(seen) == n


# graph basics

def test_graph_orients_blocks(rng):
    F = from_cameras(random_views(rng, 3))
    G = ViewingGraph(3, {(1, 0): F.block(1, 0)}, {(1, 0): 4.0})
    assert G.edges == [(0, 1)] and G.weights[(0, 1)] == 4.0
    assert np.array_equal(G.block(0, 1), F.block(0, 1))
    assert np.array_equal(G.block(1, 0), F.block(0, 1).T)


def test_graph_rejects_bad_input():
    with pytest.raises(ValueError):
        ViewingGraph(2, {(0, 0): np.zeros((3, 3))})
    with pytest.raises(ValueError):
        ViewingGraph(2, {(0, 1): np.zeros((3, 3))}, {(0, 1): -1.0})


# spanning trees

def test_k4_single_tree():
    G = graph(4, complete(4))
    tree = edge_disjoint_max_trees(G, 1)
    assert len(tree) == 3 and spans(4, tree)


def test_k4_three_trees_disjoint():
    G = graph(4, complete(4))
    remaining = dict(G.weights)
    passes = []
    for _ in range(3):
        t = max_spanning_tree(4, remaining)
        if len(t) < 3:
            break
        assert spans(4, t)
        passes.append(t)
        for e in t:
            del remaining[e]
    union = edge_disjoint_max_trees(G, 3)
    assert len(union) == len(set(union))
    assert sorted(union) == sorted(e for t in passes for e in t)
    assert set(union) <= set(G.edges) and spans(4, union)


def test_weighted_triangle_with_pendant():
    w = {(0, 1): 3.0, (1, 2): 2.0, (0, 2): 1.0, (2, 3): 5.0}
    tree = max_spanning_tree(4, w)
    assert sum(w[e] for e in tree) == brute_force_max_tree_weight(4, w)
    assert set(tree) == {(0, 1), (1, 2), (2, 3)}


@given(st.integers(0, 2**32 - 1), st.integers(3, 6))
def test_max_tree_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    edges = [e for e in complete(n) if rng.random() < 0.7]
    # keep it connected with a path
    edges = sorted(set(edges) | {(i, i + 1) for i in range(n - 1)})
    w = {e: float(rng.integers(0, 5)) for e in edges}
    tree = max_spanning_tree(n, w)
    assert len(tree) == n - 1 and spans(n, tree)
    assert sum(w[e] for e in tree) == brute_force_max_tree_weight(n, w)


def test_disconnected_graph_raises():
    G = graph(4, [(0, 1), (2, 3)])
    with pytest.raises(DisconnectedGraph):
        edge_disjoint_max_trees(G, 2)


def test_trees_stop_when_residual_disconnects():
    G = graph(5, complete(5))
    union = edge_disjoint_max_trees(G, 5)
    # K5 has 10 edges, so at most two disjoint spanning trees
    assert len(union) == 8 and len(set(union)) == 8


def test_equal_weights_avoid_star():
    G = graph(10, complete(10), {e: 2000.0 for e in complete(10)})
    tree = max_spanning_tree(10, G.weights)
    degree = np.bincount(np.array(tree).ravel(), minlength=10)
    assert degree.max() < 9
    assert len(edge_disjoint_max_trees(G, 5)) >= 4 * 9


# triplet enumeration

def test_k4_triangles():
    G = graph(4, complete(4))
    assert enumerate_triplets(G.edges, G) == [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]


def test_tree_is_augmented():
    G = graph(4, complete(4))
    tri = enumerate_triplets([(0, 1), (1, 2), (2, 3)], G)
    assert tri and {v for t in tri for v in t} == {0, 1, 2, 3}
    assert set(tri) <= set(brute_force_triangles(G.edges))


def test_path_graph_uncoverable():
    G = graph(4, [(0, 1), (1, 2), (2, 3)])
    with pytest.raises(UncoverableView):
        enumerate_triplets(G.edges, G)


def test_house_graph_cliques(rng):
    # two stacked houses joined by a chord, ten views
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (3, 4), (1, 5), (2, 5),
             (5, 6), (6, 7), (7, 2), (6, 8), (7, 8), (8, 9), (7, 9), (0, 2)]
    G = graph(10, edges, rng=rng)
    assert three_cliques(G.edges) == brute_force_triangles(edges)
    assert enumerate_triplets(G.edges, G) == brute_force_triangles(edges)


@given(st.integers(0, 2**32 - 1))
def test_three_cliques_random_graphs(seed):
    rng = np.random.default_rng(seed)
    edges = [e for e in complete(8) if rng.random() < 0.5]
    assert three_cliques(edges) == brute_force_triangles(edges)


def test_subset_must_be_measured():
    G = graph(4, [(0, 1), (1, 2), (0, 2)])
    with pytest.raises(ValueError):
        enumerate_triplets([(0, 3)], G)


# collinearity

def epipole_ratio_oracle(Fs, centers):
    # null vectors straight from numpy; l is the mean over views of |e1-e2| / mean(|e-c|)
    def null_l(M):
        return np.linalg.svd(M.T)[2][-1]

    def null_r(M):
        return np.linalg.svd(M)[2][-1]

    F_ab, F_ac, F_bc = Fs
    pairs = [(null_l(F_ab), null_l(F_ac)), (null_r(F_ab), null_l(F_bc)), (null_r(F_ac), null_r(F_bc))]
    out = []
    for (p, q), c in zip(pairs, centers):
        p, q, c = p[:2] / p[2], q[:2] / q[2], np.asarray(c)
        out.append(np.linalg.norm(p - q) / (0.5 * (np.linalg.norm(p - c) + np.linalg.norm(q - c))))
    return np.mean(out)


def test_collinear_triplet_zero(rng):
    views = random_views(rng, 3)
    d = rng.normal(size=3)
    views = [(V, s * d) for (V, _), s in zip(views, (0.0, 1.0, 3.0))]
    F = from_cameras(views)
    assert collinearity_measure((F.block(0, 1), F.block(0, 2), F.block(1, 2))) < 1e-8


def test_generic_triplet_positive():
    bundle = generate_scene(SceneSpec(n_cameras=3, n_points=200, seed=1))
    F = from_cameras(bundle.views)
    l = collinearity_measure((F.block(0, 1), F.block(0, 2), F.block(1, 2)), bundle.meta)
    assert l > 0.03


def test_collinearity_matches_oracle_under_center_shift():
    bundle = generate_scene(SceneSpec(n_cameras=3, n_points=200, seed=2))
    F = from_cameras(bundle.views)
    Fs = (F.block(0, 1), F.block(0, 2), F.block(1, 2))
    vals = []
    for shift in (np.zeros(2), np.array([150.0, -80.0])):
        meta = [ImageMeta(m.view, m.width, m.height, tuple(np.asarray(m.center) + shift)) for m in bundle.meta]
        got = collinearity_measure(Fs, meta)
        assert np.isclose(got, epipole_ratio_oracle(Fs, [m.center for m in meta]), rtol=1e-9)
        vals.append(got)
    assert vals[0] != vals[1]


# cover construction

def test_validate_cover_flags():
    G = graph(7, complete(7))
    good = validate_cover([(0, 1, 2), (1, 2, 3), (2, 3, 4), (3, 4, 5), (4, 5, 6)], G)
    assert good.ok and bool(good)
    miss = validate_cover([(0, 1, 2), (1, 2, 3)], G)
    assert not miss.covered and 6 in miss.missing_views
    split = validate_cover([(0, 1, 2), (3, 4, 5), (4, 5, 6)], G)
    assert not split.connected and split.components == ((0,), (1, 2))
    G2 = graph(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    assert validate_cover([(0, 1, 3)], G2).missing_blocks == ((0, 3), (1, 3))


def test_minimal_cover_kept():
    edges = sorted({e for t in [(0, 1, 2), (1, 2, 3), (2, 3, 4)] for e in itertools.combinations(t, 2)})
    G = graph(5, edges, rng=np.random.default_rng(4))
    cover = build_triplet_cover(G, CoverParams())
    assert cover.triplets == [(0, 1, 2), (1, 2, 3), (2, 3, 4)]
    assert cover.removed == []


def corrupted_scene(seed, bad=(2, 5)):
    bundle = generate_scene(SceneSpec(n_cameras=10, n_points=500, seed=seed))
    Fn, _ = normalize_blocks(from_cameras(bundle.views), bundle.tracks())
    blocks = {e: M / np.linalg.norm(M) for e, M in Fn.blocks().items()}
    rng = np.random.default_rng(seed)
    u, s, vt = np.linalg.svd(rng.normal(size=(3, 3)))
    R = (u[:, :2] * s[:2]) @ vt[:2]
    blocks[bad] = R / np.linalg.norm(R)
    return ViewingGraph(10, blocks, {e: 100.0 for e in blocks})


def scorer_for(G):
    def score(t):
        a, b, c = t
        F = NViewFundamental.from_blocks(3, {(0, 1): G.block(a, b), (0, 2): G.block(a, c), (1, 2): G.block(b, c)},
                                         check_rank=False)
        return triplet_consistency_score(F)
    return score


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_outlier_triplet_removed_first(seed):
    G = corrupted_scene(seed)
    cover = build_triplet_cover(G, CoverParams(), consistency_scorer=scorer_for(G))
    assert cover.removed, "nothing was pruned"
    assert {2, 5} <= set(cover.removed[0])


def test_ten_view_cover_size_and_validity():
    G = corrupted_scene(3)
    cover = build_triplet_cover(G, CoverParams(), consistency_scorer=scorer_for(G))
    assert math.ceil(10 / 3) <= len(cover.triplets) <= len(brute_force_triangles(G.edges))
    assert bfs_cover_ok(cover.triplets, 10)
    assert validate_cover(cover, G).ok
    # every intermediate state of the greedy removal stays a valid cover
    state = sorted(cover.triplets + cover.removed)
    for t in cover.removed:
        state.remove(t)
        assert bfs_cover_ok(state, 10)


def test_collinear_pruning_infeasible():
    bundle = generate_scene(SceneSpec(n_cameras=5, n_points=300, layout="line"))
    F = from_cameras(bundle.views)
    G = ViewingGraph.from_nview(F)
    with pytest.raises(CoverInfeasible):
        build_triplet_cover(G, CoverParams(), meta=bundle.meta)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_removal_order_invariant_to_c_scale(seed, k):
    rng = np.random.default_rng(seed)
    tri = three_cliques(complete(6))
    l = {t: float(rng.uniform(0.05, 1)) for t in tri}
    c = {t: float(rng.uniform(0.01, 1)) for t in tri}
    a = prune_cover(tri, stability_scores(l, c, 1.2), 6)
    b = prune_cover(tri, stability_scores(l, {t: k * v for t, v in c.items()}, 1.2), 6)
    assert a == b


def test_delta2_rule(rng):
    p = CoverParams()
    assert p.delta2(0.51) == 0.0 and p.delta2(0.5) == 1.2
    tri = three_cliques(complete(5))
    l = {t: float(rng.uniform(0.6, 1)) for t in tri}
    c = {t: float(rng.uniform(0.01, 1)) for t in tri}
    s = stability_scores(l, c, p.delta2(np.mean(list(l.values()))))
    assert sorted(tri, key=lambda t: s[t]) == sorted(tri, key=lambda t: -c[t])


def test_zero_c_gives_infinite_score():
    assert stability_scores({(0, 1, 2): 0.4}, {(0, 1, 2): 0.0}, 1.2)[(0, 1, 2)] == np.inf


def test_cover_params_validation():
    with pytest.raises(ValueError):
        CoverParams(n_trees=0)
    with pytest.raises(ValueError):
        CoverParams(delta1=-1)


def test_triplet_blocks_orientation(rng):
    G = graph(4, complete(4), rng=rng)
    ab, ac, bc = triplet_blocks(G, (0, 2, 3))
    assert np.array_equal(ab, G.block(0, 2)) and np.array_equal(bc, G.block(2, 3))
