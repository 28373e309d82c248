"""Rank-constrained ADMM over a set of view triplets.

Finds a symmetric, zero-block-diagonal matrix close to the measured blocks
such that every selected 9x9 triplet submatrix has rank 6. Per-triplet
consistency does not depend on the scale of the individual blocks, so no
scale factors are estimated.

Each iteration performs three closed-form steps:

* F step: every covered block becomes the average over its triplets of
  ``(B_k + Gamma_k + alpha * F_hat) / (1 + alpha)``;
* B step: ``B_k = SVP(F_tau(k) - Gamma_k, 6)``;
* multiplier step: ``Gamma_k += B_k - F_tau(k)``.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import IncompleteMatrix, NonFinite, UncoveredEdge
from .geometry import svp
from .mvfm import NViewFundamental, eigen_signature

log = logging.getLogger(__name__)

TRIPLET_RANK = 6
# (row, col) positions of the upper blocks inside a 9x9 triplet matrix
_PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class AdmmConfig:
    alpha: float = 1e-3
    iterations: int = 1000
    # relative primal residual at which to stop early; 0 disables
    early_stop_residual: float = 1e-14
    track_rank: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.early_stop_residual < 0:
            raise ValueError("early_stop_residual must be nonnegative")


PAPER_CONFIG = AdmmConfig(alpha=1e-3, iterations=1000, early_stop_residual=0.0)


@dataclass
class AdmmState:
    F: np.ndarray  # working 3n x 3n iterate
    B: np.ndarray  # (m, 9, 9)
    Gamma: np.ndarray  # (m, 9, 9)
    triplets: np.ndarray  # (m, 3), each row sorted
    multiplicity: Dict[Tuple[int, int], int]
    edges: List[Tuple[int, int]] = field(default_factory=list)
    edge_index: np.ndarray = None  # (m, 3) index into edges for each triplet pair

    @property
    def m(self):
        return len(self.triplets)

    def gather(self, M=None):
        """Stack of 9x9 triplet submatrices of ``M`` (default: the iterate)."""
        M = self.F if M is None else M
        idx = (3 * self.triplets[:, :, None] + np.arange(3)).reshape(-1, 9)
        return M[idx[:, :, None], idx[:, None, :]]


@dataclass
class AdmmDiagnostics:
    residuals: List[float]  # mean ||B_k - F_tau(k)||_F per iteration
    sigma_ratios: List[float]  # mean sigma7/sigma6 over triplets per iteration (if tracked)
    final_sigma_ratio: float
    triplet_sigma_ratios: List[float]
    iterations: int
    warnings: List[str] = field(default_factory=list)


def _normalize_triplets(triplets):
    T = np.array([sorted(t) for t in triplets], dtype=int).reshape(-1, 3)
    if len(T) == 0:
        raise ValueError("at least one triplet is required")
    if np.any(T[:, 0] == T[:, 1]) or np.any(T[:, 1] == T[:, 2]):
        raise ValueError("triplets must consist of three distinct views")
    return T


def init_state(F_hat: NViewFundamental, triplets) -> AdmmState:
    T = _normalize_triplets(triplets)
    if T.max() >= F_hat.n:
        raise ValueError("triplet references a view outside the matrix")
    multiplicity: Dict[Tuple[int, int], int] = {}
    for t in T:
        for a, b in _PAIRS:
            e = (int(t[a]), int(t[b]))
            if not F_hat.known[e]:
                raise IncompleteMatrix(f"triplet {tuple(t)} uses unknown block {e}")
            multiplicity[e] = multiplicity.get(e, 0) + 1
    edges = sorted(multiplicity)
    lookup = {e: k for k, e in enumerate(edges)}
    edge_index = np.array([[lookup[(int(t[a]), int(t[b]))] for a, b in _PAIRS] for t in T])
    F = np.array(F_hat.data)
    state = AdmmState(F=F, B=None, Gamma=None, triplets=T, multiplicity=multiplicity,
                      edges=edges, edge_index=edge_index)
    state.B = state.gather(F_hat.data)
    state.Gamma = np.zeros_like(state.B)
    return state


def f_update(state: AdmmState, F_hat: NViewFundamental, alpha, edges: Optional[Sequence] = None):
    """Closed-form data/consensus step; writes the covered blocks of ``state.F``.

    Symmetry and the zero diagonal are maintained by writing each block together
    with its transpose. ``edges``, when given, lists the blocks that must be
    optimized and raises :class:`UncoveredEdge` for any outside the triplets.
    """
    if edges is not None:
        missing = [e for e in (tuple(sorted(e)) for e in edges) if e not in state.multiplicity]
        if missing:
            raise UncoveredEdge(f"blocks {missing} are not covered by any triplet")
    Fh = state.gather(F_hat.data)
    E = len(state.edges)
    acc = np.zeros((E, 3, 3))
    # fixed triplet order keeps the accumulation reproducible
    for p, (a, b) in enumerate(_PAIRS):
        ra, rb = slice(3 * a, 3 * a + 3), slice(3 * b, 3 * b + 3)
        contrib = state.B[:, ra, rb] + state.Gamma[:, ra, rb] + alpha * Fh[:, ra, rb]
        np.add.at(acc, state.edge_index[:, p], contrib)
    counts = np.array([state.multiplicity[e] for e in state.edges], dtype=float)
    vals = acc / (counts[:, None, None] * (1.0 + alpha))
    ei = np.array([e[0] for e in state.edges])
    ej = np.array([e[1] for e in state.edges])
    r = 3 * ei[:, None, None] + np.arange(3)[None, :, None]
    c = 3 * ej[:, None, None] + np.arange(3)[None, None, :]
    state.F[r, c] = vals
    state.F[c, r] = vals
    return state.F


def b_update(state: AdmmState):
    state.B = svp(state.gather() - state.Gamma, TRIPLET_RANK)
    return state.B


def gamma_update(state: AdmmState):
    state.Gamma = state.Gamma + (state.B - state.gather())
    return state.Gamma


def triplet_sigma_ratios(blocks9) -> np.ndarray:
    s = np.linalg.svd(blocks9, compute_uv=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s[:, 5] > 0, s[:, 6] / s[:, 5], np.inf)


def _post_hoc_warnings(Ft, triplets, tol=1e-6):
    """Conditions the rank constraint alone does not enforce."""
    out = []
    for k, M in enumerate(Ft):
        t = tuple(int(v) for v in triplets[k])
        sig = eigen_signature(M, tol)
        if sig != (3, 3):
            out.append(f"triplet {t}: eigenvalue signature {sig}")
        for a in range(3):
            s = np.linalg.svd(M[3 * a:3 * a + 3], compute_uv=False)
            if s[2] < tol * s[0]:
                out.append(f"triplet {t}: block row of view {t[a]} is rank deficient")
        for a, b in _PAIRS:
            s = np.linalg.svd(M[3 * a:3 * a + 3, 3 * b:3 * b + 3], compute_uv=False)
            if s[2] > tol * s[0]:
                out.append(f"triplet {t}: block {(t[a], t[b])} not rank 2 (sigma3/sigma1={s[2] / s[0]:.2g})")
    return out


def solve(F_hat: NViewFundamental, triplets, cfg: AdmmConfig = AdmmConfig()):
    """Run ADMM; returns the fitted n-view matrix and diagnostics.

    Blocks outside every triplet are passed through unchanged.
    """
    state = init_state(F_hat, triplets)
    residuals: List[float] = []
    ratios: List[float] = []
    it = 0
    for it in range(1, cfg.iterations + 1):
        f_update(state, F_hat, cfg.alpha)
        if not np.all(np.isfinite(state.F)):
            raise NonFinite(f"non-finite iterate at iteration {it}")
        b_update(state)
        gamma_update(state)
        Ft = state.gather()
        diff = np.linalg.norm(state.B - Ft, axis=(1, 2))
        res = float(diff.mean())
        if not (np.isfinite(res) and np.all(np.isfinite(state.Gamma))):
            raise NonFinite(f"non-finite iterate at iteration {it}")
        residuals.append(res)
        if cfg.track_rank:
            ratios.append(float(triplet_sigma_ratios(Ft).mean()))
        if cfg.early_stop_residual > 0:
            scale = float(np.linalg.norm(Ft, axis=(1, 2)).mean())
            if scale > 0 and res / scale < cfg.early_stop_residual:
                break
    Ft = state.gather()
    per = triplet_sigma_ratios(Ft)
    warnings = _post_hoc_warnings(Ft, state.triplets)
    for w in warnings:
        log.debug(w)
    out = NViewFundamental(F_hat.n, state.F, F_hat.known)
    diag = AdmmDiagnostics(
        residuals=residuals,
        sigma_ratios=ratios,
        final_sigma_ratio=float(per.mean()),
        triplet_sigma_ratios=per.tolist(),
        iterations=it,
        warnings=warnings,
    )
    return out, diag


def triplet_consistency_score(F_hat_tau, cfg: Optional[AdmmConfig] = None, iterations=50):
    """Frobenius distance between a measured triplet and its ADMM fit (single triplet run)."""
    if cfg is None:
        cfg = AdmmConfig(iterations=iterations, early_stop_residual=0.0, track_rank=False)
    if not isinstance(F_hat_tau, NViewFundamental):
        F_hat_tau = NViewFundamental.from_matrix(F_hat_tau)
    if F_hat_tau.n != 3 or not F_hat_tau.complete:
        raise IncompleteMatrix("consistency score needs a complete 3-view matrix")
    F, _ = solve(F_hat_tau, [(0, 1, 2)], cfg)
    return float(np.linalg.norm(F.data - F_hat_tau.data))
