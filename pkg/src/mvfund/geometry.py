"""Dense small-matrix geometry kernels.

Cameras use the convention ``P = V^{-T} [I | -t]`` where ``t`` is the camera
center and ``V = K^{-T} R^T``. With this convention the fundamental matrix
between views ``i`` and ``j`` is ``F_ij = V_i ([t_i]_x - [t_j]_x) V_j^T`` and
satisfies ``x_i^T F_ij x_j = 0`` for corresponding image points.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DegenerateCloud,
    DegenerateConfiguration,
    DegenerateRays,
    InsufficientViews,
    RankDeficiencyError,
    SingularViewMatrix,
)

# singular value counts as zero below this fraction of the largest one
RANK_TOL = 1e-9
# view matrices with a larger condition number are rejected
MAX_VIEW_COND = 1e12
# per-axis std ratio below which anisotropic normalization is used
ANISOTROPY_RATIO = 0.4


@dataclass(frozen=True)
class ImageMeta:
    view: int
    width: float
    height: float
    center: Optional[tuple] = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if self.center is None:
            object.__setattr__(self, "center", (self.width / 2.0, self.height / 2.0))
        else:
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True)
class Correspondences:
    """Point matches between two views; ``x_a[k]`` matches ``x_b[k]`` (pixels)."""

    view_a: int
    view_b: int
    x_a: np.ndarray
    x_b: np.ndarray

    def __post_init__(self):
        x_a = np.asarray(self.x_a, dtype=float).reshape(-1, 2)
        x_b = np.asarray(self.x_b, dtype=float).reshape(-1, 2)
        if x_a.shape != x_b.shape:
            raise ValueError("x_a and x_b must have the same number of points")
        if not (np.all(np.isfinite(x_a)) and np.all(np.isfinite(x_b))):
            raise ValueError("correspondences must be finite")
        object.__setattr__(self, "x_a", x_a)
        object.__setattr__(self, "x_b", x_b)

    def __len__(self):
        return len(self.x_a)


@dataclass(frozen=True)
class Track:
    """Observations of one scene point: ``xy[k]`` is seen in view ``views[k]``."""

    point_id: int
    views: np.ndarray
    xy: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "views", np.asarray(self.views, dtype=int).reshape(-1))
        object.__setattr__(self, "xy", np.asarray(self.xy, dtype=float).reshape(-1, 2))
        if len(self.views) != len(self.xy):
            raise ValueError("views and xy must have equal length")

    def __len__(self):
        return len(self.views)


def homogenize(x):
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)


def skew(t):
    t = np.asarray(t, dtype=float)
    return np.array([
        [0.0, -t[2], t[1]],
        [t[2], 0.0, -t[0]],
        [-t[1], t[0], 0.0],
    ])


def unskew(M):
    """Axis vector of the skew-symmetric part of ``M``."""
    M = np.asarray(M, dtype=float)
    A = 0.5 * (M - M.T)
    return np.array([A[2, 1], A[0, 2], A[1, 0]])


def _check_view_matrix(V):
    V = np.asarray(V, dtype=float)
    if V.shape != (3, 3):
        raise ValueError(f"view matrix must be 3x3, got {V.shape}")
    c = np.linalg.cond(V)
    if not np.isfinite(c) or c > MAX_VIEW_COND:
        raise SingularViewMatrix(f"view matrix condition number {c:.3g} exceeds {MAX_VIEW_COND:g}")
    return V


def compose_fundamental(V_i, t_i, V_j, t_j):
    V_i = _check_view_matrix(V_i)
    V_j = _check_view_matrix(V_j)
    return V_i @ (skew(t_i) - skew(t_j)) @ V_j.T


def camera_matrix(V, t):
    """3x4 camera ``V^{-T} [I | -t]``."""
    V = _check_view_matrix(V)
    t = np.asarray(t, dtype=float).reshape(3)
    return np.linalg.inv(V).T @ np.hstack([np.eye(3), -t[:, None]])


def camera_params(P):
    """Inverse of :func:`camera_matrix`; valid for cameras with an invertible left 3x3 block."""
    P = np.asarray(P, dtype=float)
    M = P[:, :3]
    if np.linalg.cond(M) > MAX_VIEW_COND:
        raise SingularViewMatrix("camera has a singular left 3x3 block (center at infinity)")
    V = np.linalg.inv(M).T
    t = -V.T @ P[:, 3]
    return V, t


def camera_center(P):
    """Unit-norm homogeneous null vector of a 3x4 camera."""
    _, _, Vt = np.linalg.svd(np.asarray(P, dtype=float))
    C = Vt[-1]
    return C if C[-1] >= 0 else -C


def fundamental_from_cameras(P_i, P_j):
    V_i, t_i = camera_params(P_i)
    V_j, t_j = camera_params(P_j)
    return compose_fundamental(V_i, t_i, V_j, t_j)


def project(P, X):
    """Project points ``X`` (N,3) or homogeneous (N,4) to pixels (N,2)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[-1] == 3:
        X = homogenize(X)
    x = X @ np.asarray(P, dtype=float).T
    return x[:, :2] / x[:, 2:3]


def _sign_fix(v):
    k = np.argmax(np.abs(v))
    return v if v[k] >= 0 else -v


def epipoles(F, tol=RANK_TOL):
    """Left and right unit null vectors ``(e_left, e_right)`` of a rank-2 matrix.

    ``e_left^T F = 0`` lives in the first (row) image, ``F e_right = 0`` in the
    second. Signs are fixed so the largest-magnitude entry is positive.
    """
    U, s, Vt = np.linalg.svd(np.asarray(F, dtype=float))
    if s[0] == 0 or s[1] / s[0] < RANK_TOL:
        raise RankDeficiencyError("matrix has rank < 2")
    if s[2] / s[0] >= tol:
        raise RankDeficiencyError(f"matrix is not rank 2 (sigma3/sigma1 = {s[2] / s[0]:.3g})")
    return _sign_fix(U[:, 2]), _sign_fix(Vt[2])


def svp(A, p):
    """Best rank-``p`` approximation (Frobenius) by SVD truncation.

    Works on stacks of matrices of shape ``(..., m, n)``.
    """
    A = np.asarray(A, dtype=float)
    if p > min(A.shape[-2:]):
        raise ValueError(f"rank {p} exceeds matrix dimension {A.shape[-2:]}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return (U[..., :, :p] * s[..., None, :p]) @ Vt[..., :p, :]


def hartley_normalization(points, mode="auto"):
    """Affine transform giving ``points`` zero mean and unit variance.

    ``isotropic`` uses one scale so the mean per-axis variance is 1;
    ``anisotropic`` makes each axis unit variance; ``auto`` picks anisotropic
    when the per-axis std ratio is below ``ANISOTROPY_RATIO``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise DegenerateCloud("need at least two points")
    mean = pts.mean(axis=0)
    std = pts.std(axis=0)
    scale = max(np.abs(pts).max(), 1.0)
    if np.sqrt(np.sum(std**2)) <= 1e-12 * scale:
        raise DegenerateCloud("all points coincide")
    if mode == "auto":
        ratio = std.min() / std.max()
        mode = "anisotropic" if (ratio < ANISOTROPY_RATIO and std.min() > 1e-12 * scale) else "isotropic"
    if mode == "isotropic":
        s = 1.0 / np.sqrt(np.mean(std**2))
        sx = sy = s
    elif mode == "anisotropic":
        if std.min() <= 1e-12 * scale:
            raise DegenerateCloud("points have zero spread along one axis")
        sx, sy = 1.0 / std
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    return np.array([
        [sx, 0.0, -sx * mean[0]],
        [0.0, sy, -sy * mean[1]],
        [0.0, 0.0, 1.0],
    ])


def normalization_mode(points):
    """Which mode ``hartley_normalization(points, 'auto')`` selects."""
    N = hartley_normalization(points, "auto")
    return "isotropic" if N[0, 0] == N[1, 1] else "anisotropic"


def eight_point(x_a, x_b=None):
    """Normalized eight-point estimate of ``F`` with ``x_a^T F x_b = 0``.

    Accepts either two (N,2) pixel arrays or a :class:`Correspondences`.
    Returns a unit-Frobenius rank-2 matrix, sign fixed by its largest entry.
    """
    if isinstance(x_a, Correspondences):
        x_a, x_b = x_a.x_a, x_a.x_b
    x_a = np.asarray(x_a, dtype=float).reshape(-1, 2)
    x_b = np.asarray(x_b, dtype=float).reshape(-1, 2)
    if len(x_a) < 8 or len(x_a) != len(x_b):
        raise ValueError("eight_point needs at least 8 matched points")
    N_a = hartley_normalization(x_a)
    N_b = hartley_normalization(x_b)
    ya = homogenize(x_a) @ N_a.T
    yb = homogenize(x_b) @ N_b.T
    # row k of A dotted with vec(F) (row-major) equals ya_k^T F yb_k
    A = (ya[:, :, None] * yb[:, None, :]).reshape(-1, 9)
    if len(A) < 9:  # keep the null vector in the reduced SVD
        A = np.vstack([A, np.zeros((9 - len(A), 9))])
    _, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[7] / s[0] < 1e-12:
        raise DegenerateConfiguration(
            f"design matrix has a multi-dimensional null space (sigma8/sigma1 = {s[7] / s[0]:.3g})"
        )
    Fn = svp(Vt[-1].reshape(3, 3), 2)
    F = N_a.T @ Fn @ N_b
    F /= np.linalg.norm(F)
    return _sign_fix(F.ravel()).reshape(3, 3)


def symmetric_epipolar_distance(F, x_i, x_j):
    """Symmetric epipolar distance (px^2) of matches ``x_i`` (view i) and ``x_j`` (view j).

    Vectorized over rows of (N,2) inputs; scalar inputs give a float.
    """
    F = np.asarray(F, dtype=float)
    xi = homogenize(np.asarray(x_i, dtype=float))
    xj = homogenize(np.asarray(x_j, dtype=float))
    lj = xj @ F.T  # F x_j, line in image i
    li = xi @ F  # F^T x_i, line in image j
    r = np.sum(xi * lj, axis=-1)
    ni = np.sum(lj[..., :2] ** 2, axis=-1)
    nj = np.sum(li[..., :2] ** 2, axis=-1)
    r2 = r**2
    with np.errstate(divide="ignore", invalid="ignore"):
        ti = np.where(ni > 0, r2 / np.where(ni > 0, ni, 1.0), np.where(r2 > 0, np.inf, 0.0))
        tj = np.where(nj > 0, r2 / np.where(nj > 0, nj, 1.0), np.where(r2 > 0, np.inf, 0.0))
    d = np.where((ni == 0) & (nj == 0), np.inf, ti + tj)
    return float(d) if np.ndim(d) == 0 else d


def _dlt_rows(cams, obs):
    rows = []
    for P, x in zip(cams, obs):
        P = np.asarray(P, dtype=float)
        P = P / np.linalg.norm(P)
        rows.append(x[0] * P[2] - P[0])
        rows.append(x[1] * P[2] - P[1])
    A = np.array(rows)
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def triangulate_point(cams, obs):
    """Linear (DLT) triangulation; returns a unit homogeneous 4-vector."""
    if len(cams) < 2 or len(cams) != len(obs):
        raise InsufficientViews("triangulation needs at least two views")
    obs = np.asarray(obs, dtype=float).reshape(-1, 2)
    A = _dlt_rows(cams, obs)
    _, s, Vt = np.linalg.svd(A)
    # a two-dimensional null space (sigma3 ~ 0) is degenerate as well
    if s[2] <= 1e-12 * s[0] or s[3] / s[2] > 0.99:
        raise DegenerateRays(f"rays are degenerate (sigma4/sigma3 = {s[3] / max(s[2], 1e-300):.3g})")
    X = Vt[-1]
    return X if X[-1] >= 0 else -X
