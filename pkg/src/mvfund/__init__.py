"""Projective structure from motion by enforcing consistency of n-view fundamental matrices."""

from .admm import PAPER_CONFIG, AdmmConfig, solve
from .geometry import eight_point, epipoles, svp, triangulate_point
from .mvfm import NViewFundamental, check_consistency, extract_cameras, from_cameras
from .viewing_graph import CoverParams, ViewingGraph, build_triplet_cover

__version__ = "0.1.0"

__all__ = [
    "PAPER_CONFIG", "AdmmConfig", "solve",
    "eight_point", "epipoles", "svp", "triangulate_point",
    "NViewFundamental", "check_consistency", "extract_cameras", "from_cameras",
    "CoverParams", "ViewingGraph", "build_triplet_cover",
]
