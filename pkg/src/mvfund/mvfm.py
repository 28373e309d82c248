"""The n-view fundamental matrix and its algebraic consistency test.

An n-view fundamental matrix stacks all pairwise fundamental matrices into a
symmetric ``3n x 3n`` matrix with zero diagonal blocks. It comes from actual
cameras (whose centers are not all collinear) exactly when it has rank 6 with
three positive and three negative eigenvalues and every 3 x 3n block row has
full rank. When that holds, cameras can be read off its eigendecomposition.
"""

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import IncompleteMatrix, RoleAmbiguity, SignatureError, SkewnessViolation
from .geometry import RANK_TOL, camera_matrix, compose_fundamental, unskew

SKEW_TOLERANCE = 0.1


def _blk(i):
    return slice(3 * i, 3 * i + 3)


@dataclass(frozen=True, eq=False)
class NViewFundamental:
    """Symmetric block matrix of pairwise fundamental matrices.

    ``known[i, j]`` marks measured blocks; unknown blocks hold zeros. Arrays
    are stored read-only.
    """

    n: int
    data: np.ndarray
    known: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        known = np.array(self.known, dtype=bool)
        if data.shape != (3 * self.n, 3 * self.n) or known.shape != (self.n, self.n):
            raise ValueError("inconsistent shapes for an n-view matrix")
        if not np.array_equal(data, data.T, equal_nan=True):
            raise ValueError("n-view matrix must be exactly symmetric")
        if not np.array_equal(known, known.T) or known.diagonal().any():
            raise ValueError("known mask must be symmetric with an empty diagonal")
        for i in range(self.n):
            if np.any(data[_blk(i), _blk(i)] != 0):
                raise ValueError(f"diagonal block {i} is not zero")
        data.setflags(write=False)
        known.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "known", known)

    @classmethod
    def from_blocks(cls, n, blocks: Mapping, check_rank=True, tol=RANK_TOL):
        """Build from ``{(i, j): F_ij}``; ``(j, i)`` keys are transposed in."""
        data = np.zeros((3 * n, 3 * n))
        known = np.zeros((n, n), dtype=bool)
        for (i, j), M in blocks.items():
            M = np.asarray(M, dtype=float)
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"invalid block index {(i, j)}")
            if i > j:
                i, j, M = j, i, M.T
            if known[i, j]:
                raise ValueError(f"block {(i, j)} given twice")
            if check_rank:
                s = np.linalg.svd(M, compute_uv=False)
                if s[0] == 0 or s[1] / s[0] < tol or s[2] / s[0] >= tol:
                    raise ValueError(f"block {(i, j)} is not rank 2")
            data[_blk(i), _blk(j)] = M
            data[_blk(j), _blk(i)] = M.T
            known[i, j] = known[j, i] = True
        return cls(n, data, known)

    @classmethod
    def from_matrix(cls, data, known=None):
        """Wrap a full matrix; the diagonal blocks are zeroed and symmetry is imposed."""
        data = np.array(data, dtype=float)
        n = data.shape[0] // 3
        if data.shape != (3 * n, 3 * n):
            raise ValueError("matrix size must be a multiple of 3")
        data = 0.5 * (data + data.T)
        for i in range(n):
            data[_blk(i), _blk(i)] = 0.0
        if known is None:
            known = ~np.eye(n, dtype=bool)
        return cls(n, data, known)

    def block(self, i, j):
        return self.data[_blk(i), _blk(j)].copy()

    def block_row(self, i):
        return self.data[_blk(i), :].copy()

    def pairs(self):
        """Known ``(i, j)`` pairs with ``i < j``, sorted."""
        ii, jj = np.nonzero(np.triu(self.known, 1))
        return list(zip(ii.tolist(), jj.tolist()))

    def blocks(self):
        return {p: self.block(*p) for p in self.pairs()}

    @property
    def complete(self):
        return bool(np.all(self.known | np.eye(self.n, dtype=bool)))

    def submatrix(self, views: Sequence[int]):
        views = list(views)
        idx = np.concatenate([np.arange(3 * v, 3 * v + 3) for v in views])
        return NViewFundamental(len(views), self.data[np.ix_(idx, idx)], self.known[np.ix_(views, views)])

    def scaled_views(self, s):
        """``S F S`` with ``S = diag(s_1 I, ..., s_n I)``."""
        d = np.repeat(np.asarray(s, dtype=float), 3)
        # outer(d, d) is exactly symmetric, so the product stays exactly symmetric
        return NViewFundamental(self.n, self.data * np.outer(d, d), self.known)

    def scaled_block(self, i, j, s):
        blocks = self.blocks()
        key = (min(i, j), max(i, j))
        blocks[key] = s * blocks[key]
        return NViewFundamental.from_blocks(self.n, blocks, check_rank=False)

    def __neg__(self):
        return NViewFundamental(self.n, -self.data, self.known)


@dataclass(frozen=True)
class ConsistencyReport:
    rank_of_F: int
    sigma_ratio: float  # sigma7 / sigma6
    eig_signature: tuple
    block_row_ranks: tuple
    block_row_ratios: tuple  # sigma3 / sigma1 of each block row
    block_ranks_ok: bool
    diagonal_ok: bool
    consistent: bool

    def summary(self):
        if self.consistent:
            return "CONSISTENT"
        reasons = []
        if self.rank_of_F != 6:
            reasons.append(f"rank(F)={self.rank_of_F}")
        if tuple(self.eig_signature) != (3, 3):
            reasons.append(f"signature={self.eig_signature[0]}+/{self.eig_signature[1]}-")
        bad = [i for i, r in enumerate(self.block_row_ranks) if r != 3]
        if bad:
            reasons.append(f"rank(F_i)<3 for views {bad}")
        if not self.block_ranks_ok:
            reasons.append("some block is not rank 2")
        if not self.diagonal_ok:
            reasons.append("nonzero diagonal block")
        return "INCONSISTENT: " + ", ".join(reasons)


def _as_matrix(F):
    return F.data if isinstance(F, NViewFundamental) else np.asarray(F, dtype=float)


def from_cameras(cams):
    """Fully known n-view matrix of cameras given as ``(V_i, t_i)`` pairs."""
    n = len(cams)
    blocks = {}
    for i in range(n):
        for j in range(i + 1, n):
            blocks[(i, j)] = compose_fundamental(cams[i][0], cams[i][1], cams[j][0], cams[j][1])
    return NViewFundamental.from_blocks(n, blocks, check_rank=False)


def eigen_signature(F, tol=RANK_TOL):
    lam = np.linalg.eigvalsh(_as_matrix(F))
    big = np.abs(lam) >= tol * np.abs(lam).max()
    return int(np.sum(big & (lam > 0))), int(np.sum(big & (lam < 0)))


def check_consistency(F: NViewFundamental, tol=RANK_TOL) -> ConsistencyReport:
    if not F.complete:
        missing = [(i, j) for i in range(F.n) for j in range(i + 1, F.n) if not F.known[i, j]]
        raise IncompleteMatrix(f"{len(missing)} blocks unknown, e.g. {missing[:3]}")
    A = F.data
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s >= tol * s[0])) if s[0] > 0 else 0
    sigma_ratio = float(s[6] / s[5]) if len(s) > 6 and s[5] > 0 else (0.0 if len(s) <= 6 else np.inf)
    signature = eigen_signature(A, tol)

    row_ranks, row_ratios = [], []
    for i in range(F.n):
        si = np.linalg.svd(F.block_row(i), compute_uv=False)
        row_ranks.append(int(np.sum(si >= tol * si[0])) if si[0] > 0 else 0)
        row_ratios.append(float(si[2] / si[0]) if si[0] > 0 else 0.0)

    blocks_ok = True
    for i, j in F.pairs():
        sb = np.linalg.svd(F.block(i, j), compute_uv=False)
        if sb[0] == 0 or sb[1] / sb[0] < tol or sb[2] / sb[0] >= tol:
            blocks_ok = False
            break
    diagonal_ok = all(not np.any(A[_blk(i), _blk(i)]) for i in range(F.n))
    consistent = rank == 6 and signature == (3, 3) and all(r == 3 for r in row_ranks) and blocks_ok and diagonal_ok
    return ConsistencyReport(
        rank_of_F=rank,
        sigma_ratio=sigma_ratio,
        eig_signature=signature,
        block_row_ranks=tuple(row_ranks),
        block_row_ratios=tuple(row_ratios),
        block_ranks_ok=blocks_ok,
        diagonal_ok=diagonal_ok,
        consistent=consistent,
    )


def _fix_columns(Q):
    k = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[k, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def eig_split(F, tol=RANK_TOL):
    """Factor ``F = X X^T - Y Y^T`` from its three positive and three negative eigenpairs.

    Columns are ordered by decreasing ``|lambda|``; eigenvector signs make the
    largest-magnitude component positive.
    """
    A = _as_matrix(F)
    lam, Q = np.linalg.eigh(A)
    big = np.abs(lam) >= tol * np.abs(lam).max()
    pos = np.nonzero(big & (lam > 0))[0]
    neg = np.nonzero(big & (lam < 0))[0]
    if len(pos) != 3 or len(neg) != 3:
        raise SignatureError(f"eigenvalue signature is ({len(pos)}, {len(neg)}), expected (3, 3)")
    pos = pos[np.argsort(-np.abs(lam[pos]), kind="stable")]
    neg = neg[np.argsort(-np.abs(lam[neg]), kind="stable")]
    X = _fix_columns(Q[:, pos]) * np.sqrt(lam[pos])
    Y = _fix_columns(Q[:, neg]) * np.sqrt(-lam[neg])
    return X, Y


def uv_factors(X, Y):
    """``U = (X - Y)/sqrt(2)``, ``V = (X + Y)/sqrt(2)`` so that ``UV^T + VU^T = XX^T - YY^T``."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    r = np.sqrt(0.5)
    return r * (X - Y), r * (X + Y)


def _min_block_conditioning(W, n):
    worst = np.inf
    for i in range(n):
        s = np.linalg.svd(W[_blk(i)], compute_uv=False)
        worst = min(worst, s[2] / s[0] if s[0] > 0 else 0.0)
    return worst


_ROTATION_RETRIES = 16
ROLE_RETRY_TARGET = 1e-3


def _pick_roles(X, Y, n):
    U, V = uv_factors(X, Y)
    # the role of U and V is fixed by which factor has invertible blocks
    q_v = _min_block_conditioning(V, n)
    q_u = _min_block_conditioning(U, n)
    if q_u > q_v:
        return V, U, q_u
    return U, V, q_v


def extract_view_params(F, tol=RANK_TOL, skew_tol=SKEW_TOLERANCE):
    """Recover ``(V_i, t_i)`` for every view of a consistent n-view matrix."""
    A = _as_matrix(F)
    n = A.shape[0] // 3
    X, Y = eig_split(A, tol)
    U, V, q_v = _pick_roles(X, Y, n)
    if not q_v >= tol:
        # X and Y are only defined up to orthogonal mixing within each factor.
        # Symmetric configurations can make the eigh basis land on a singular
        # block, so retry with a few fixed relative rotations.
        rng = np.random.default_rng(0)
        for _ in range(_ROTATION_RETRIES):
            Q, _r = np.linalg.qr(rng.normal(size=(3, 3)))
            cand = _pick_roles(X, Y @ Q, n)
            if cand[2] > q_v:
                U, V, q_v = cand
            if q_v >= ROLE_RETRY_TARGET:
                break
    if not q_v >= tol:
        raise RoleAmbiguity("neither factor has invertible 3x3 blocks for all views")
    params = []
    for i in range(n):
        Vi = V[_blk(i)]
        T = np.linalg.solve(Vi, U[_blk(i)])
        asym = np.linalg.norm(T + T.T)
        norm = np.linalg.norm(T)
        if norm > 0 and asym / norm > skew_tol:
            raise SkewnessViolation(f"view {i}: V^-1 U deviates from skew-symmetry by {asym / norm:.3g}")
        params.append((Vi.copy(), unskew(T)))
    return params


def extract_cameras(F, tol=RANK_TOL, skew_tol=SKEW_TOLERANCE):
    """Camera matrices ``P_i = V_i^{-T}[I | -t_i]`` consistent with ``F`` (up to a 4x4 homography)."""
    return [camera_matrix(V, t) for V, t in extract_view_params(F, tol, skew_tol)]


def rebalance_triplet_scales(s12, s13, s23):
    """Per-view scales ``(s1, s2, s3)`` with ``s_i s_j = s_ij``.

    When an odd number of the inputs is negative the triple is negated first,
    so the products then match ``-s_ij``.
    """
    s = np.array([s12, s13, s23], dtype=float)
    if np.any(s == 0):
        raise ValueError("scale factors must be nonzero")
    if np.sum(s < 0) % 2 == 1:
        s = -s
    s12, s13, s23 = s
    s1 = np.sqrt(abs(s12 * s13 / s23))
    s2 = np.sqrt(abs(s23 * s12 / s13))
    s3 = np.sqrt(abs(s13 * s23 / s12))
    # two negative factors: the view shared by both takes the minus sign
    if s12 < 0 and s13 < 0:
        s1 = -s1
    elif s12 < 0 and s23 < 0:
        s2 = -s2
    elif s13 < 0 and s23 < 0:
        s3 = -s3
    return float(s1), float(s2), float(s3)
