"""From consistent triplets to one projective reconstruction."""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import AlignmentDegenerate, DegenerateCloud, UnreachedTriplet
from .geometry import Track, _dlt_rows, hartley_normalization, homogenize, normalization_mode
from .mvfm import NViewFundamental
from .viewing_graph import TripletCover, triplet_adjacency

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormalizationSet:
    transforms: tuple  # per-view 3x3, x_normalized ~ N_i x_pixel
    modes: tuple

    def __post_init__(self):
        for N in self.transforms:
            if abs(np.linalg.det(N)) < 1e-300:
                raise ValueError("normalization transforms must be invertible")

    @classmethod
    def identity(cls, n):
        return cls(tuple(np.eye(3) for _ in range(n)), ("identity",) * n)

    def __len__(self):
        return len(self.transforms)

    def apply_points(self, view, xy):
        y = homogenize(xy) @ self.transforms[view].T
        return y[:, :2] / y[:, 2:3]

    def denormalize_camera(self, view, P):
        """Pixel camera from one expressed in normalized image coordinates."""
        return np.linalg.solve(self.transforms[view], P)


def view_points(tracks: Sequence[Track], n):
    pts = [[] for _ in range(n)]
    for tr in tracks:
        for v, xy in zip(tr.views, tr.xy):
            pts[v].append(xy)
    return [np.array(p).reshape(-1, 2) for p in pts]


def normalization_from_tracks(tracks, n, mode="auto", allow_missing=False):
    """Per-view normalization from the observed interest points.

    With ``allow_missing`` a view without observations gets the identity.
    """
    transforms, modes = [], []
    for v, pts in enumerate(view_points(tracks, n)):
        if len(pts) == 0:
            if not allow_missing:
                raise DegenerateCloud(f"view {v} has no observations")
            transforms.append(np.eye(3))
            modes.append("identity")
            continue
        transforms.append(hartley_normalization(pts, mode))
        modes.append(normalization_mode(pts) if mode == "auto" else mode)
    return NormalizationSet(tuple(transforms), tuple(modes))


def _transform_blocks(F: NViewFundamental, left, right):
    blocks = {(i, j): left[i] @ M @ right[j] for (i, j), M in F.blocks().items()}
    return NViewFundamental.from_blocks(F.n, blocks, check_rank=False)


def normalize_blocks(F_hat: NViewFundamental, tracks=None, norm: Optional[NormalizationSet] = None):
    """``F^n_ij = N_i^{-T} F_ij N_j^{-1}``; returns ``(F^n, NormalizationSet)``."""
    if norm is None:
        norm = normalization_from_tracks(tracks, F_hat.n)
    inv = [np.linalg.inv(N) for N in norm.transforms]
    return _transform_blocks(F_hat, [M.T for M in inv], inv), norm


def denormalize_blocks(F: NViewFundamental, norm: NormalizationSet):
    """``F_ij = N_i^T F^n_ij N_j``."""
    T = list(norm.transforms)
    return _transform_blocks(F, [N.T for N in T], T)


@dataclass(frozen=True)
class Alignment:
    H: np.ndarray  # 4x4, unit Frobenius norm
    mu: tuple  # scales with src_k @ H ~ mu_k * dst_k
    residual: float  # relative, 0 for exactly compatible pairs


def align_homography(src_pair, dst_pair, degenerate_tol=1e-10) -> Alignment:
    """Homography ``H`` with ``src_k H = mu_k dst_k`` for both cameras of a pair, in least squares."""
    rows = []
    scales = []
    for k, (S, D) in enumerate(zip(src_pair, dst_pair)):
        S = np.asarray(S, dtype=float)
        D = np.asarray(D, dtype=float)
        a_s, a_d = np.linalg.norm(S), np.linalg.norm(D)
        scales.append(a_s / a_d)
        block = np.zeros((12, 18))
        # row-major vec(S H) = (S kron I4) vec(H)
        block[:, :16] = np.kron(S / a_s, np.eye(4))
        block[:, 16 + k] = -(D / a_d).ravel()
        rows.append(block)
    A = np.vstack(rows)
    _, s, Vt = np.linalg.svd(A)
    if s[-2] / s[0] < degenerate_tol:
        raise AlignmentDegenerate(f"homography is not unique (sigma17/sigma1 = {s[-2] / s[0]:.3g})")
    z = Vt[-1]
    h = z[:16]
    hn = np.linalg.norm(h)
    residual = float(s[-1] / hn) if hn > 0 else np.inf
    H = (h / hn).reshape(4, 4)
    mu = z[16:] / hn
    k = np.argmax(np.abs(H))
    if H.flat[k] < 0:
        H, mu = -H, -mu
    return Alignment(H=H, mu=(float(mu[0] * scales[0]), float(mu[1] * scales[1])), residual=residual)


def _normalized(P):
    P = np.asarray(P, dtype=float)
    P = P / np.linalg.norm(P)
    k = np.argmax(np.abs(P))
    return P if P.flat[k] >= 0 else -P


def merge_cameras(cover, per_triplet_cams, n=None, root=None):
    """Bring per-triplet cameras into the frame of the root triplet by BFS over shared pairs.

    ``per_triplet_cams[k]`` holds the three cameras of ``cover.triplets[k]``
    in sorted view order. A view placed by several triplets keeps the first
    placement. Returns ``(cameras, info)`` where ``info`` lists alignment residuals
    and placement discrepancies.
    """
    triplets = [tuple(sorted(t)) for t in (cover.triplets if isinstance(cover, TripletCover) else cover)]
    if len(per_triplet_cams) != len(triplets):
        raise ValueError("need one camera triple per triplet")
    if n is None:
        n = max(max(t) for t in triplets) + 1
    if root is None:
        root = cover.root() if isinstance(cover, TripletCover) else 0
    nbrs: Dict[int, List[int]] = {k: [] for k in range(len(triplets))}
    for a, b in triplet_adjacency(triplets):
        nbrs[a].append(b)
        nbrs[b].append(a)

    cams: List[Optional[np.ndarray]] = [None] * n
    info = {"residuals": [], "discrepancies": []}

    def place(k, P_list):
        for v, P in zip(triplets[k], P_list):
            if cams[v] is None:
                cams[v] = np.asarray(P, dtype=float)
            else:
                d = np.linalg.norm(_normalized(P) - _normalized(cams[v]))
                info["discrepancies"].append(float(d))
                if d > 1e-6:
                    log.debug("view %d: placement by triplet %s differs by %.3g", v, triplets[k], d)

    place(root, per_triplet_cams[root])
    seen = {root}
    queue = deque([root])
    while queue:
        k = queue.popleft()
        for m in sorted(nbrs[k]):
            if m in seen:
                continue
            shared = sorted(set(triplets[k]) & set(triplets[m]))
            local = dict(zip(triplets[m], per_triplet_cams[m]))
            al = align_homography([local[v] for v in shared], [cams[v] for v in shared])
            info["residuals"].append(al.residual)
            place(m, [np.asarray(P) @ al.H for P in per_triplet_cams[m]])
            seen.add(m)
            queue.append(m)
    if len(seen) != len(triplets):
        raise UnreachedTriplet(f"{len(triplets) - len(seen)} triplets are not connected to the root")
    missing = [v for v in range(n) if cams[v] is None]
    if missing:
        raise UnreachedTriplet(f"views {missing} are not covered by any triplet")
    return cams, info


def triangulate_tracks(cams, tracks: Sequence[Track]) -> Dict[int, np.ndarray]:
    """Linear triangulation per track; tracks with degenerate rays are left out."""
    by_len: Dict[int, List[Track]] = {}
    for tr in tracks:
        if len(tr) >= 2:
            by_len.setdefault(len(tr), []).append(tr)
    out: Dict[int, np.ndarray] = {}
    for k, group in by_len.items():
        A = np.stack([_dlt_rows([cams[v] for v in tr.views], tr.xy) for tr in group])
        _, s, Vt = np.linalg.svd(A)
        X = Vt[:, -1, :]
        good = (s[:, 2] > 1e-12 * s[:, 0]) & (s[:, 3] <= 0.99 * s[:, 2])
        X = X * np.where(X[:, 3:4] < 0, -1.0, 1.0)
        for tr, x, ok in zip(group, X, good):
            if ok:
                out[tr.point_id] = x
    return dict(sorted(out.items()))


@dataclass
class GlobalReconstruction:
    cameras: List[np.ndarray]
    points: Dict[int, np.ndarray]
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    invalid_tracks: int = 0


def reprojection_residuals(cams, points: Dict[int, np.ndarray], tracks: Sequence[Track]):
    """Pixel distances for every observation of a triangulated track; also the skipped-track count."""
    res = []
    skipped = 0
    for tr in tracks:
        X = points.get(tr.point_id)
        if X is None:
            skipped += 1
            continue
        for v, xy in zip(tr.views, tr.xy):
            x = np.asarray(cams[v]) @ X
            res.append(np.hypot(x[0] / x[2] - xy[0], x[1] / x[2] - xy[1]))
    return np.array(res), skipped


def mean_reprojection_error(recon: GlobalReconstruction, tracks) -> float:
    res, skipped = reprojection_residuals(recon.cameras, recon.points, tracks)
    recon.residuals = res
    recon.invalid_tracks = skipped
    if len(res) == 0:
        log.warning("no triangulated observations; mean reprojection error defined as 0")
        return 0.0
    return float(res.mean())
