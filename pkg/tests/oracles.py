"""Independent reference computations used by the tests.

Deliberately naive: loops, brute force and explicit formulas, sharing no code
with the package beyond numpy.
"""

import itertools

import numpy as np


def cross(t, v):
    return np.array([t[1] * v[2] - t[2] * v[1], t[2] * v[0] - t[0] * v[2], t[0] * v[1] - t[1] * v[0]])


def cross_matrix(t):
    # columns are t x e_k
    return np.stack([cross(t, e) for e in np.eye(3)], axis=1)


def correlation(A, B):
    A, B = np.ravel(A), np.ravel(B)
    return abs(A @ B) / (np.linalg.norm(A) * np.linalg.norm(B))


def random_views(rng, n, spread=1.0):
    """Generic (V_i, t_i): random well-conditioned V and random centers."""
    out = []
    for _ in range(n):
        while True:
            V = rng.normal(size=(3, 3))
            if np.linalg.cond(V) < 50:
                break
        out.append((V, spread * rng.normal(size=3)))
    return out


def fundamental(V_i, t_i, V_j, t_j):
    """x_i^T F x_j = 0 written out from P = V^{-T}[I | -t], independent of the package."""
    P_i = np.linalg.inv(V_i).T @ np.hstack([np.eye(3), -np.reshape(t_i, (3, 1))])
    P_j = np.linalg.inv(V_j).T @ np.hstack([np.eye(3), -np.reshape(t_j, (3, 1))])
    # textbook pseudo-inverse form F = [e_i]x P_i P_j^+ with e_i = P_i C_j
    e_i = P_i @ np.append(t_j, 1.0)
    return cross_matrix(e_i) @ P_i @ np.linalg.pinv(P_j)


def projection(V, t):
    return np.linalg.inv(V).T @ np.hstack([np.eye(3), -np.reshape(t, (3, 1))])


def brute_force_triangles(edges):
    es = {tuple(sorted(e)) for e in edges}
    verts = sorted({v for e in es for v in e})
    return sorted(t for t in itertools.combinations(verts, 3)
                  if all(p in es for p in itertools.combinations(t, 2)))


def _spans(n, edges):
    seen = {0}
    changed = True
    while changed:
        changed = False
        for a, b in edges:
            if (a in seen) != (b in seen):
                seen |= {a, b}
                changed = True
    return len(seen) == n


def brute_force_max_tree_weight(n, weights):
    best = None
    for sub in itertools.combinations(sorted(weights), n - 1):
        if _spans(n, sub):
            w = sum(weights[e] for e in sub)
            best = w if best is None else max(best, w)
    return best


def truncated_svd_sum(A, p):
    U, s, Vt = np.linalg.svd(A)
    out = np.zeros_like(A)
    for k in range(p):
        out += s[k] * np.outer(U[:, k], Vt[k])
    return out


def reprojection(P, X, x):
    y = P @ X
    return np.hypot(y[0] / y[2] - x[0], y[1] / y[2] - x[1])
