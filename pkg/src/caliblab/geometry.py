"""Projective-geometry primitives: points, lines, planar homographies.

Convention throughout: the homography H maps board-plane coordinates
(x, y, 1) to image pixels (u, v, 1) up to scale. Matrices are stored with
Frobenius norm 1 and a canonical sign (h9 >= 0, ties broken by the first
nonzero of h7, h8), which makes equal maps compare entrywise equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateConfiguration, PointAtInfinity

# The DLT solution is unique only while the second-smallest singular value
# of the (normalized) design matrix stays well above roundoff.
DLT_RANK_RTOL = 1e-10

# |h7*x + h8*y + h9| at or below this counts as the line at infinity.
W_EPS = 1e-12


@dataclass(frozen=True)
class Point2:
    """Image point in pixels."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"image point must be finite, got ({self.u}, {self.v})")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass(frozen=True)
class BoardPoint:
    """Point on the calibration-board plane (z = 0 in world coordinates), mm."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"board point must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class Correspondence:
    """One labeled board corner and its observed image position."""

    board: BoardPoint
    image: Point2


@dataclass(frozen=True)
class Line2:
    """Image line a*u + b*v + c = 0 with unit normal (a, b).

    Stored sign-canonical (a > 0, or a == 0 and b > 0) so that identical
    lines have identical coefficients.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        norm = math.hypot(self.a, self.b)
        if norm == 0.0 or not math.isfinite(norm) or not math.isfinite(self.c):
            raise ValueError("line coefficients must be finite with (a, b) != 0")
        a, b, c = self.a / norm, self.b / norm, self.c / norm
        if a < 0.0 or (a == 0.0 and b < 0.0):
            a, b, c = -a, -b, -c
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    def signed_distance(self, p: Point2) -> float:
        return self.a * p.u + self.b * p.v + self.c

    def distance(self, p: Point2) -> float:
        return abs(self.signed_distance(p))


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 plane-to-image projective map, canonicalized on construction."""

    h: np.ndarray

    def __post_init__(self):
        m = np.array(self.h, dtype=float)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("homography must be a finite 3x3 matrix")
        norm = float(np.linalg.norm(m))
        if norm == 0.0:
            raise DegenerateConfiguration("zero homography matrix")
        m = m / norm
        if abs(np.linalg.det(m)) <= 1e-12:
            raise DegenerateConfiguration("homography matrix is singular")
        for pivot in (m[2, 2], m[2, 0], m[2, 1]):
            if pivot != 0.0:
                if pivot < 0.0:
                    m = -m
                break
        m.setflags(write=False)
        object.__setattr__(self, "h", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


def _map_through(matrix: np.ndarray, x: float, y: float) -> tuple[float, float]:
    w = matrix[2, 0] * x + matrix[2, 1] * y + matrix[2, 2]
    if abs(w) <= W_EPS:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity (w = {w:.3e})")
    return (
        (matrix[0, 0] * x + matrix[0, 1] * y + matrix[0, 2]) / w,
        (matrix[1, 0] * x + matrix[1, 1] * y + matrix[1, 2]) / w,
    )


def apply_homography(homography: Homography, p: BoardPoint) -> Point2:
    """Map a board point into the image. Raises PointAtInfinity when the
    denominator h7*x + h8*y + h9 vanishes."""
    return Point2(*_map_through(homography.h, p.x, p.y))


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity that moves the centroid to the origin and the mean distance
    to sqrt(2); returns (transformed points, 3x3 transform)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if d <= 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / d
    t = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return (pts - centroid) * s, t


def estimate_homography(correspondences: Iterable[Correspondence]) -> Homography:
    """Direct linear transform with isotropic normalization of both point sets.

    Builds the 2n x 9 design matrix from normalized coordinates, takes the
    right singular vector of the smallest singular value, and denormalizes.
    Raises DegenerateConfiguration when fewer than four correspondences are
    given or the design matrix is rank deficient (collinear or duplicated
    board points).
    """
    corrs = list(correspondences)
    if len(corrs) < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {len(corrs)}")
    board = np.array([[c.board.x, c.board.y] for c in corrs])
    image = np.array([[c.image.u, c.image.v] for c in corrs])
    bn, tb = _normalize_points(board)
    qn, tq = _normalize_points(image)

    n = len(corrs)
    x, y = bn[:, 0], bn[:, 1]
    u, v = qn[:, 0], qn[:, 1]
    zeros = np.zeros(n)
    ones = np.ones(n)
    design = np.empty((2 * n, 9))
    design[0::2] = np.column_stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u])
    design[1::2] = np.column_stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v])

    _, sing, vt = np.linalg.svd(design)
    if sing[7] <= DLT_RANK_RTOL * sing[0]:
        raise DegenerateConfiguration(
            "design matrix is rank deficient (collinear or duplicated board points)"
        )
    h_norm = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(tq) @ h_norm @ tb)


def symmetric_transfer_error(homography: Homography, correspondences: Sequence[Correspondence]) -> float:
    """Max residual of mapping board points forward (px) and image points
    backward (board units) through the homography."""
    inv = np.linalg.inv(homography.h)
    worst = 0.0
    for c in correspondences:
        fu, fv = _map_through(homography.h, c.board.x, c.board.y)
        bu, bv = _map_through(inv, c.image.u, c.image.v)
        worst = max(
            worst,
            math.hypot(fu - c.image.u, fv - c.image.v),
            math.hypot(bu - c.board.x, bv - c.board.y),
        )
    return worst
