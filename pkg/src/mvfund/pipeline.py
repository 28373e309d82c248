"""Pairwise fundamental matrices and tracks in, projective cameras and points out.

normalize -> triplet cover -> ADMM -> per-triplet cameras -> merge ->
triangulate -> reprojection error. There is no bundle adjustment.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .admm import PAPER_CONFIG, AdmmConfig, AdmmDiagnostics, solve, triplet_consistency_score
from .geometry import Track, homogenize
from .io import Problem
from .mvfm import NViewFundamental, extract_cameras
from .reconstruction import (
    GlobalReconstruction,
    mean_reprojection_error,
    merge_cameras,
    normalization_from_tracks,
    triangulate_tracks,
)
from .viewing_graph import CoverParams, TripletCover, ViewingGraph, build_triplet_cover

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    admm: AdmmConfig = AdmmConfig()
    cover: CoverParams = CoverParams()
    normalization: str = "auto"
    threads: Optional[int] = None  # None: MVFUND_THREADS or the CPU count

    @classmethod
    def paper_parity(cls, **kw):
        return cls(admm=PAPER_CONFIG, cover=CoverParams(), **kw)


def worker_count(requested=None):
    if requested is None:
        env = os.environ.get("MVFUND_THREADS")
        requested = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(requested))


@dataclass
class PipelineResult:
    reconstruction: GlobalReconstruction
    cover: TripletCover
    admm: AdmmDiagnostics
    mean_error: float
    merge_info: dict = field(default_factory=dict)

    def diagnostics(self):
        """Plain-data report (no timings, so runs are comparable byte for byte)."""
        res = self.merge_info.get("residuals", [])
        return {
            "admm_final_sigma_ratio": self.admm.final_sigma_ratio,
            "admm_iterations": self.admm.iterations,
            "admm_residuals": self.admm.residuals,
            "admm_sigma_ratios": self.admm.sigma_ratios,
            "admm_warnings": self.admm.warnings,
            "cover_size": len(self.cover.triplets),
            "cover_candidates": self.cover.candidates,
            "cover_delta2": self.cover.delta2,
            "cover_triplets": [list(t) for t in self.cover.triplets],
            "cover_removed": [list(t) for t in self.cover.removed],
            "merge_max_residual": max(res) if res else 0.0,
            "mean_reprojection_error": self.mean_error,
            "points": len(self.reconstruction.points),
            "invalid_tracks": self.reconstruction.invalid_tracks,
        }


def normalize_tracks(tracks, norm):
    T = np.stack(norm.transforms)
    out = []
    for tr in tracks:
        y = np.einsum("kab,kb->ka", T[tr.views], homogenize(tr.xy))
        out.append(Track(tr.point_id, tr.views, y[:, :2] / y[:, 2:3]))
    return out


def run(problem: Problem, cfg: PipelineConfig = PipelineConfig()) -> PipelineResult:
    n = problem.n
    G = ViewingGraph(n, problem.blocks, problem.weights)
    tracks: List[Track] = problem.tracks
    norm = normalization_from_tracks(tracks, n, cfg.normalization, allow_missing=True)

    # blocks in normalized coordinates, unit scale
    inv = [np.linalg.inv(N) for N in norm.transforms]
    nblocks = {(i, j): inv[i].T @ M @ inv[j] for (i, j), M in G.blocks.items()}
    nblocks = {e: M / np.linalg.norm(M) for e, M in nblocks.items()}
    Gn = ViewingGraph(n, nblocks, G.weights)

    score_cfg = AdmmConfig(iterations=cfg.cover.score_iterations, early_stop_residual=0.0, track_rank=False)

    def score(t):
        return triplet_consistency_score(NViewFundamental.from_blocks(3, {
            (0, 1): Gn.block(t[0], t[1]), (0, 2): Gn.block(t[0], t[2]), (1, 2): Gn.block(t[1], t[2]),
        }, check_rank=False), score_cfg)

    meta = problem.meta or None
    with ThreadPoolExecutor(max_workers=worker_count(cfg.threads)) as pool:
        cover = build_triplet_cover(G, cfg.cover, consistency_scorer=score, meta=meta, map_fn=pool.map)
    log.info("triplet cover: %d of %d candidates", len(cover.triplets), cover.candidates)

    Fn = Gn.to_nview()
    F_fit, diag = solve(Fn, cover.triplets, cfg.admm)

    per_triplet = [extract_cameras(F_fit.submatrix(t)) for t in cover.triplets]
    cams_n, info = merge_cameras(cover, per_triplet, n=n)
    cams = [norm.denormalize_camera(v, P) for v, P in enumerate(cams_n)]

    points = triangulate_tracks(cams_n, normalize_tracks(tracks, norm))
    recon = GlobalReconstruction(cameras=cams, points=points)
    err = mean_reprojection_error(recon, tracks)
    return PipelineResult(recon, cover, diag, err, info)

