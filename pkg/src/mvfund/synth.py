"""Synthetic scenes and the graph-consistency simulation."""

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .admm import AdmmConfig, solve
from .errors import InsufficientMatches, InvalidLayout
from .geometry import ImageMeta, Track, camera_matrix, eight_point, fundamental_from_cameras, symmetric_epipolar_distance
from .mvfm import NViewFundamental
from .reconstruction import denormalize_blocks, normalization_from_tracks, normalize_blocks
from .viewing_graph import ViewingGraph, three_cliques

log = logging.getLogger(__name__)

LAYOUTS = ("ring", "sphere", "line")


@dataclass(frozen=True)
class SceneSpec:
    n_cameras: int = 10
    n_points: int = 15000
    layout: str = "ring"
    focal_range: Tuple[float, float] = (800.0, 1200.0)
    noise_sigma: float = 0.0  # pixels, per coordinate
    seed: int = 0
    image_size: Tuple[int, int] = (1280, 960)
    camera_radius: float = 6.0
    cloud_radius: float = 1.5

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise InvalidLayout(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if self.n_cameras < 2:
            raise ValueError("need at least two cameras")
        if self.n_points < 1:
            raise ValueError("need at least one point")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        lo, hi = self.focal_range
        if not 0 < lo <= hi:
            raise ValueError("focal_range must be positive and ordered")


@dataclass
class SceneBundle:
    spec: SceneSpec
    views: List[Tuple[np.ndarray, np.ndarray]]  # (V_i, t_i)
    cameras: List[np.ndarray]  # P_i, pixels
    points: np.ndarray  # (N, 3)
    observations: np.ndarray  # (n, N, 2) noisy pixels, NaN where not visible
    clean: np.ndarray = field(repr=False, default=None)  # noise-free projections, same layout
    meta: List[ImageMeta] = field(default_factory=list)

    @property
    def n(self):
        return len(self.cameras)

    def visible(self):
        return ~np.isnan(self.observations[..., 0])

    def tracks(self) -> List[Track]:
        vis = self.visible()
        out = []
        for p in range(self.points.shape[0]):
            views = np.flatnonzero(vis[:, p])
            if len(views) >= 2:
                out.append(Track(p, views, self.observations[views, p]))
        return out

    def matches(self, i, j, clean=False):
        obs = self.clean if clean else self.observations
        both = self.visible()[i] & self.visible()[j]
        return obs[i, both], obs[j, both]

    def ground_truth_block(self, i, j):
        F = fundamental_from_cameras(self.cameras[i], self.cameras[j])
        return F / np.linalg.norm(F)


def _centers(spec: SceneSpec, rng):
    n, r = spec.n_cameras, spec.camera_radius
    if spec.layout == "ring":
        ang = 2 * np.pi * np.arange(n) / n
        rad = r * (1 + 0.1 * rng.uniform(-1, 1, n))
        h = 0.05 * r * rng.normal(size=n)
        return np.stack([rad * np.cos(ang), rad * np.sin(ang), h], axis=1)
    if spec.layout == "sphere":
        # Fibonacci directions
        k = np.arange(n) + 0.5
        z = 1 - 2 * k / n
        phi = np.pi * (1 + 5**0.5) * k
        d = np.stack([np.sqrt(1 - z**2) * np.cos(phi), np.sqrt(1 - z**2) * np.sin(phi), z], axis=1)
        return d * (r * (1 + 0.1 * rng.uniform(-1, 1, n)))[:, None]
    # line: centers on a segment in front of the cloud
    x = np.linspace(-0.5 * r, 0.5 * r, n)
    return np.stack([x, np.full(n, -r), np.zeros(n)], axis=1)


def _look_at(C, target):
    z = target - C
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    if abs(z @ up) > 0.95:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])  # rows: camera axes in world coordinates


def generate_scene(spec: SceneSpec) -> SceneBundle:
    """Cameras facing a random point cloud, noisy projections and tracks.

    Deterministic for a given ``spec.seed``; points behind a camera are not
    observed in that view.
    """
    if spec.layout not in LAYOUTS:
        raise InvalidLayout(f"unknown layout {spec.layout!r}")
    rng = np.random.default_rng(spec.seed)
    N = spec.n_points
    # uniform in a ball
    d = rng.normal(size=(N, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    X = d * (spec.cloud_radius * rng.uniform(size=N) ** (1 / 3))[:, None]
    centroid = X.mean(axis=0)

    w, h = spec.image_size
    C = _centers(spec, rng)
    focals = rng.uniform(*spec.focal_range, size=spec.n_cameras)
    views, cams, meta = [], [], []
    obs = np.full((spec.n_cameras, N, 2), np.nan)
    clean = np.full_like(obs, np.nan)
    for i in range(spec.n_cameras):
        R = _look_at(C[i], centroid)
        K = np.array([[focals[i], 0, w / 2], [0, focals[i], h / 2], [0, 0, 1.0]])
        V = np.linalg.inv(K @ R).T
        views.append((V, C[i].copy()))
        P = camera_matrix(V, C[i])
        cams.append(P)
        meta.append(ImageMeta(i, w, h))
        Xc = (X - C[i]) @ R.T
        front = Xc[:, 2] > 0
        x = (Xc[front] @ K.T)
        x = x[:, :2] / x[:, 2:3]
        clean[i, front] = x
        obs[i, front] = x + spec.noise_sigma * rng.normal(size=x.shape)
    return SceneBundle(spec, views, cams, X, obs, clean, meta)


def estimate_pairwise(bundle: SceneBundle, pairs) -> ViewingGraph:
    """Eight-point block per requested pair, weighted by its match count."""
    blocks, weights = {}, {}
    for i, j in sorted({(min(p), max(p)) for p in pairs}):
        xa, xb = bundle.matches(i, j)
        if len(xa) < 8:
            raise InsufficientMatches(f"pair ({i}, {j}) has {len(xa)} matches, need 8")
        blocks[(i, j)] = eight_point(xa, xb)
        weights[(i, j)] = float(len(xa))
    return ViewingGraph(bundle.n, blocks, weights)


def _null_vectors(F):
    U, _, Vt = np.linalg.svd(F)
    return U[:, 2], Vt[2]


def _dehom(e):
    return e[:2] / e[2]


def epipole_consistency_terms(blocks, i, j, k):
    """``S_ijk, S_jki, S_kij`` for views ``i < j < k``.

    ``S_ijk`` is the symmetric epipolar distance of the epipole pair
    ``(e_ik, e_jk)`` (camera k seen in views i and j) under ``F_ij``.
    ``blocks(a, b)`` returns ``F_ab`` oriented with ``x_a^T F_ab x_b = 0``.
    """
    def ep(a, b):  # camera b seen in view a: left null vector of F_ab
        return _dehom(_null_vectors(blocks(a, b))[0])

    out = []
    for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
        out.append(float(symmetric_epipolar_distance(blocks(a, b), ep(a, c), ep(b, c))))
    return out


def _unit(F):
    return F / np.linalg.norm(F)


def _aligned_frobenius(F, F_gt):
    F, F_gt = _unit(F), _unit(F_gt)
    lam = np.sum(F * F_gt) / np.sum(F * F)
    return float(np.linalg.norm(lam * F - F_gt))


def _metrics(bundle, getter, triplets, edges):
    terms = [epipole_consistency_terms(getter, *t) for t in triplets]
    sums = [abs(sum(ts)) for ts in terms]
    # triangles of estimated blocks that no optimized triplet constrains
    cross = [abs(sum(epipole_consistency_terms(getter, *t))) for t in three_cliques(edges) if t not in set(triplets)]
    frob = [_aligned_frobenius(getter(i, j), bundle.ground_truth_block(i, j)) for i, j in edges]
    ged = []
    for i, j in edges:
        xa, xb = bundle.matches(i, j, clean=True)
        ged.append(float(np.mean(symmetric_epipolar_distance(getter(i, j), xa, xb))))
    return {
        "epipole_consistency": float(np.mean(sums)),
        "epipole_terms": float(np.mean(terms)),
        "epipole_consistency_cross": float(np.mean(cross)) if cross else 0.0,
        "frobenius_error": float(np.mean(frob)),
        "gt_epipolar_distance": float(np.mean(ged)),
    }


def simulate_once(spec: SceneSpec, n_triplets=15, cfg: AdmmConfig = AdmmConfig()):
    """One seed of the consistency simulation; metrics before and after ADMM."""
    if spec.n_cameras < 4:
        raise ValueError("the consistency simulation needs at least four cameras")
    bundle = generate_scene(spec)
    rng = np.random.default_rng([spec.seed, 1])
    allt = list(itertools.combinations(range(spec.n_cameras), 3))
    pick = rng.choice(len(allt), size=min(n_triplets, len(allt)), replace=False)
    triplets = sorted(allt[k] for k in pick)
    edges = sorted({e for a, b, c in triplets for e in ((a, b), (a, c), (b, c))})
    G = estimate_pairwise(bundle, edges)

    norm = normalization_from_tracks(bundle.tracks(), bundle.n, allow_missing=True)
    Fn, _ = normalize_blocks(G.to_nview(), norm=norm)
    Fn = NViewFundamental.from_blocks(bundle.n, {e: _unit(M) for e, M in Fn.blocks().items()}, check_rank=False)
    F_fit, diag = solve(Fn, triplets, cfg)
    F_out = denormalize_blocks(F_fit, norm)

    raw = _metrics(bundle, G.block, triplets, edges)
    post = _metrics(bundle, F_out.block, triplets, edges)
    return raw, post, diag


CSV_COLUMNS = (
    "sigma",
    "epipole_consistency",
    "frobenius_error",
    "gt_epipolar_distance",
    "epipole_terms",
    "epipole_consistency_cross",
    "epipole_consistency_raw",
    "frobenius_error_raw",
    "gt_epipolar_distance_raw",
)


def consistency_experiment(spec: SceneSpec, sigma_list: Sequence[float], seeds: Sequence[int] = (0,),
                           n_triplets=15, cfg: AdmmConfig = AdmmConfig()) -> List[Dict[str, float]]:
    """Seed-averaged metric rows, one per noise level, in the order of ``sigma_list``."""
    if len(sigma_list) == 0:
        raise ValueError("sigma_list must not be empty")
    rows = []
    for sigma in sigma_list:
        acc: Dict[str, List[float]] = {c: [] for c in CSV_COLUMNS[1:]}
        for seed in seeds:
            raw, post, _ = simulate_once(replace(spec, noise_sigma=float(sigma), seed=int(seed)), n_triplets, cfg)
            for key, val in post.items():
                acc[key].append(val)
            for key in ("epipole_consistency", "frobenius_error", "gt_epipolar_distance"):
                acc[key + "_raw"].append(raw[key])
        row = {"sigma": float(sigma)}
        row.update({k: float(np.mean(v)) for k, v in acc.items()})
        rows.append(row)
    return rows


def write_csv(rows, fh):
    fh.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        fh.write(",".join(f"{r[c]:.17g}" for c in CSV_COLUMNS) + "\n")
