"""Closed-form symmetry axis of a projected board and the principal point
as the least-squares intersection of those axes.

For H = K [r1 r2 t] with square pixels and zero skew, the projected board
has an axis of symmetry that passes through the principal point. Writing
h_a, h_b for the first two columns of H, the axis direction equals the
image-plane component (w1, w2) of the board normal, where
w = cross(h_a, h_b) is the vanishing line of the board plane, and the
vanishing point H (h7, h8, 0)^T of the board's steepest-ascent direction
lies on the axis. Both facts hold exactly for any such H and are verified
against forward-constructed homographies in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllFlagged, AmbiguousDirection, DegenerateView, ParallelLines, TooFewLines
from .geometry import Homography, Line2, Point2

# Guard against the fronto-parallel case, where h7 = h8 = 0 up to DLT
# roundoff. With Frobenius-normalized storage, genuine perspective keeps
# (h7^2 + h8^2) above ~1e-14 while roundoff sits below ~1e-26, so the
# threshold separates the two regimes by many orders of magnitude.
PERSPECTIVE_EPS = 1e-20

# Same idea for the axis direction, measured against its natural bound
# |w| <= |h_a| * |h_b|.
DIRECTION_EPS = 1e-20

DEFAULT_CONDITION_LIMIT = 1e8
DEFAULT_OUTLIER_THRESHOLD_PX = 5.0


@dataclass(frozen=True)
class PrincipalLine:
    """Symmetry axis of one view: the line, a computable on-line anchor
    (the steepest-ascent vanishing point), and the unit direction."""

    line: Line2
    source_view: str | None
    anchor: Point2
    direction: tuple[float, float]

    def __post_init__(self):
        scale = max(1.0, abs(self.anchor.u), abs(self.anchor.v))
        if self.line.distance(self.anchor) > 1e-9 * scale:
            raise ValueError("anchor does not satisfy the line equation")
        dot = self.line.a * self.direction[0] + self.line.b * self.direction[1]
        if abs(dot) > 1e-12:
            raise ValueError("direction is not perpendicular to the line normal")

    @classmethod
    def from_line(cls, line: Line2, source_view: str | None = None) -> "PrincipalLine":
        """Wrap a bare line, anchored at the foot of the perpendicular from
        the origin, directed along (-b, a)."""
        anchor = Point2(-line.c * line.a, -line.c * line.b)
        return cls(line, source_view, anchor, (-line.b, line.a))


@dataclass(frozen=True)
class PPEstimate:
    """Least-squares intersection of a line bundle."""

    pp: Point2
    rms_residual: float
    per_line_residual: tuple[float, ...]
    condition: float


def principal_line(homography: Homography, source_view: str | None = None) -> PrincipalLine:
    """Closed-form symmetry axis of the view described by the homography.

    Raises DegenerateView for a fronto-parallel board (h7 = h8 = 0, no
    perspective) and AmbiguousDirection when the in-image component of the
    board normal vanishes.
    """
    h = homography.h
    h7, h8 = h[2, 0], h[2, 1]
    persp = h7 * h7 + h8 * h8
    norm2 = float(np.sum(h * h))
    if persp <= PERSPECTIVE_EPS * norm2:
        raise DegenerateView("board is parallel to the image plane (h7 = h8 = 0)")

    w = np.cross(h[:, 0], h[:, 1])
    col_bound = float(h[:, 0] @ h[:, 0]) * float(h[:, 1] @ h[:, 1])
    if w[0] * w[0] + w[1] * w[1] <= DIRECTION_EPS * col_bound:
        raise AmbiguousDirection("in-image component of the board normal vanishes")

    # Vanishing point of the board's steepest-ascent direction (h7, h8);
    # its homogeneous weight is h7^2 + h8^2 > 0, so it is always finite.
    vd = h @ np.array([h7, h8, 0.0])
    # Line through vd along (w1, w2), assembled homogeneously to avoid the
    # cancellation of a far-away anchor.
    coeffs = np.cross(vd, np.array([w[0], w[1], 0.0]))
    line = Line2(coeffs[0], coeffs[1], coeffs[2])

    anchor = Point2(vd[0] / vd[2], vd[1] / vd[2])
    dnorm = math.hypot(w[0], w[1])
    return PrincipalLine(line, source_view, anchor, (w[0] / dnorm, w[1] / dnorm))


def estimate_pp(
    lines: list[PrincipalLine],
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
) -> PPEstimate:
    """Point minimizing the sum of squared distances to the given lines.

    With unit-normal lines the per-line residuals are signed distances.
    Raises TooFewLines for fewer than two lines and ParallelLines when the
    2x2 normal matrix is ill-conditioned.
    """
    if len(lines) < 2:
        raise TooFewLines(f"need at least 2 principal lines, got {len(lines)}")
    normals = np.array([[pl.line.a, pl.line.b] for pl in lines])
    offsets = np.array([pl.line.c for pl in lines])
    nmat = normals.T @ normals
    cond = float(np.linalg.cond(nmat))
    if not math.isfinite(cond) or cond >= condition_limit:
        raise ParallelLines(f"line bundle is near parallel (condition {cond:.3e})")
    sol = np.linalg.solve(nmat, -normals.T @ offsets)
    residuals = normals @ sol + offsets
    return PPEstimate(
        pp=Point2(sol[0], sol[1]),
        rms_residual=float(np.sqrt(np.mean(residuals**2))),
        per_line_residual=tuple(float(r) for r in residuals),
        condition=cond,
    )


def flag_outlier_lines(
    lines: list[PrincipalLine],
    threshold_px: float = DEFAULT_OUTLIER_THRESHOLD_PX,
) -> tuple[list[PrincipalLine], list[PrincipalLine]]:
    """Leave-one-out screening of a principal-line bundle.

    Repeatedly estimates the intersection without each line in turn and
    removes the single worst line whose distance to its leave-one-out
    estimate exceeds the threshold, until the bundle is stable. Removing
    one offender at a time keeps a gross outlier from dragging the
    consensus and implicating clean lines.

    Returns (inliers, outliers). Raises TooFewLines for fewer than four
    lines and AllFlagged if screening would leave fewer than three
    mutually consistent lines.
    """
    if len(lines) < 4:
        raise TooFewLines(f"leave-one-out screening needs at least 4 lines, got {len(lines)}")
    inliers = list(lines)
    outliers: list[PrincipalLine] = []
    while len(inliers) >= 4:
        distances = []
        for i, candidate in enumerate(inliers):
            rest = inliers[:i] + inliers[i + 1 :]
            try:
                est = estimate_pp(rest)
            except ParallelLines:
                distances.append(-math.inf)  # cannot judge this line
                continue
            distances.append(candidate.line.distance(est.pp))
        worst = int(np.argmax(distances))
        if distances[worst] <= threshold_px:
            break
        outliers.append(inliers.pop(worst))
    if len(inliers) == 3:
        est = estimate_pp(inliers)
        if max(abs(r) for r in est.per_line_residual) > threshold_px:
            raise AllFlagged(
                "screening would flag more than n - 3 lines; remaining bundle is inconsistent"
            )
    return inliers, outliers
