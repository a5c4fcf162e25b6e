"""Reprojection metrics, pose-transfer cross-validation, and
principal-point trajectory analysis."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .calibrate import (
    CalibrationResult,
    CalibrationView,
    Extrinsics,
    Intrinsics,
    calibrate_algebraic,
    calibrate_geometric,
    refine,
    refit_view_pose,
    view_rmse,
)
from .errors import CaliblabError, MissingPose, TooFewPoints
from .geometry import Point2
from .synth import Dataset, FocalSetting, PoseLabel

THREADS_ENV = "CALIBLAB_THREADS"

reprojection_rmse = view_rmse


@dataclass(frozen=True)
class TrajectoryReport:
    """Direction and monotonicity of a principal-point series.

    The direction is the total-least-squares line through the points,
    reported in [0, 180) degrees from the image u axis toward +v; the
    monotonicity is the Spearman rank correlation between the setting
    index and the signed arc-length projection onto that axis. Because
    the axis representative is only defined up to 180 degrees, the sign
    of the monotonicity is conventional; its magnitude is the statistic.
    """

    direction_deg: float
    monotonicity: float
    total_shift_px: float
    per_step: tuple[tuple[float, float], ...]
    degenerate: bool = False


@dataclass(frozen=True)
class GravityReport:
    """Per-setting offsets of the tipped poses relative to DOWN."""

    offsets: dict[int, dict[PoseLabel, tuple[float, float]]]
    mean_offset_px: dict[PoseLabel, float]
    sideway_ratio: float


@dataclass(frozen=True)
class CrossValSetting:
    setting_index: int
    focal_label_mm: float
    poses: tuple[PoseLabel, ...]
    matrix: np.ndarray  # matrix[a, b] = RMSE of pose b's views under pose a's intrinsics
    self_rmse: dict[PoseLabel, float]


@dataclass(frozen=True)
class CrossValReport:
    method: str
    settings: tuple[CrossValSetting, ...]
    notices: tuple[str, ...] = ()

    def absent_fraction(self) -> float:
        total = 0
        absent = 0
        for s in self.settings:
            total += s.matrix.size
            absent += int(np.sum(~np.isfinite(s.matrix)))
        return absent / total if total else 1.0


def calibrate_views(method: str, views, pl_outlier_px: float) -> CalibrationResult:
    if method == "geometric":
        return calibrate_geometric(views, pl_outlier_px=pl_outlier_px)
    if method == "algebraic":
        return calibrate_algebraic(views)
    if method == "algebraic-refined":
        return refine(calibrate_algebraic(views), views)
    raise ValueError(f"unknown calibration method {method!r}")


def _worker_count(max_workers: int | None) -> int:
    if max_workers is not None:
        return max(1, max_workers)
    env = os.environ.get(THREADS_ENV)
    default = min(4, os.cpu_count() or 1)
    if env:
        try:
            return max(1, min(default, int(env)))
        except ValueError:
            return default
    return default


def _crossval_setting(
    dataset: Dataset,
    setting_index: int,
    setting: FocalSetting,
    poses: list[PoseLabel],
    method: str,
    pl_outlier_px: float,
) -> tuple[CrossValSetting, list[str]]:
    notices: list[str] = []
    n = len(poses)
    matrix = np.full((n, n), np.nan)
    self_rmse: dict[PoseLabel, float] = {}

    intrinsics: dict[PoseLabel, Intrinsics] = {}
    for pose in poses:
        views = dataset.cells.get((pose, setting))
        if not views:
            notices.append(f"setting {setting.label_mm} mm: cell for pose {pose.value} is absent")
            continue
        try:
            result = calibrate_views(method, views, pl_outlier_px)
        except CaliblabError as err:
            notices.append(
                f"setting {setting.label_mm} mm: calibration failed for pose {pose.value}: {err}"
            )
            continue
        intrinsics[pose] = result.intrinsics
        self_rmse[pose] = result.rmse

    for a, pose_a in enumerate(poses):
        intr = intrinsics.get(pose_a)
        if intr is None:
            continue
        for b, pose_b in enumerate(poses):
            views = dataset.cells.get((pose_b, setting))
            if not views:
                continue
            total = 0.0
            count = 0
            try:
                for view in views:
                    _, rmse = refit_view_pose(intr, view)
                    total += rmse
                    count += 1
            except CaliblabError as err:
                notices.append(
                    f"setting {setting.label_mm} mm: pose refit {pose_a.value}->{pose_b.value} failed: {err}"
                )
                continue
            matrix[a, b] = total / count

    return (
        CrossValSetting(
            setting_index=setting_index,
            focal_label_mm=setting.label_mm,
            poses=tuple(poses),
            matrix=matrix,
            self_rmse=self_rmse,
        ),
        notices,
    )


def cross_validate(
    dataset: Dataset,
    method: str = "geometric",
    pl_outlier_px: float = 5.0,
    max_workers: int | None = None,
) -> CrossValReport:
    """Pose-transfer evaluation per focal setting.

    For each setting, intrinsics are calibrated independently per pose;
    entry (a, b) of the matrix is the mean reprojection RMSE of pose b's
    views with pose a's intrinsics frozen and each view's pose refit. The
    diagonal is computed with the same refit procedure, so the comparison
    is fair. Missing or failing cells leave NaN entries and a notice.
    Results are deterministic: per-setting jobs may run on a small thread
    pool (capped by CALIBLAB_THREADS) and are merged by index.
    """
    poses = dataset.poses()
    settings = dataset.settings()
    jobs = list(enumerate(settings))
    workers = _worker_count(max_workers)

    def run(job):
        index, setting = job
        return _crossval_setting(dataset, index, setting, poses, method, pl_outlier_px)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    per_setting = tuple(entry for entry, _ in outcomes)
    notices: list[str] = []
    for _, batch in outcomes:
        notices.extend(batch)
    return CrossValReport(method=method, settings=per_setting, notices=tuple(notices))


def analyze_trajectory(pps: list[Point2]) -> TrajectoryReport:
    """Fit the total-least-squares axis through an ordered principal-point
    series and rank-correlate progress along it with the series order.

    Raises TooFewPoints below three points. If all points coincide within
    1e-9 px the direction is undefined and the report comes back flagged
    degenerate with a NaN direction.
    """
    if len(pps) < 3:
        raise TooFewPoints(f"trajectory analysis needs at least 3 points, got {len(pps)}")
    pts = np.array([[p.u, p.v] for p in pps])
    steps = tuple((float(du), float(dv)) for du, dv in np.diff(pts, axis=0))
    total = float(np.linalg.norm(pts[-1] - pts[0]))
    centered = pts - pts.mean(axis=0)
    if np.max(np.linalg.norm(centered, axis=1)) < 1e-9:
        return TrajectoryReport(
            direction_deg=float("nan"),
            monotonicity=0.0,
            total_shift_px=total,
            per_step=steps,
            degenerate=True,
        )
    _, _, vt = np.linalg.svd(centered)
    direction = vt[0]
    angle = math.degrees(math.atan2(direction[1], direction[0])) % 180.0
    axis = np.array([math.cos(math.radians(angle)), math.sin(math.radians(angle))])
    arc = centered @ axis
    rho = spearmanr(np.arange(len(pps)), arc).statistic
    if not math.isfinite(rho):
        rho = 0.0
    return TrajectoryReport(
        direction_deg=angle,
        monotonicity=float(rho),
        total_shift_px=total,
        per_step=steps,
    )


def analyze_gravity(
    pps: dict[tuple[PoseLabel, int], Point2],
    drift_direction: tuple[float, float],
) -> GravityReport:
    """Offsets of the tipped poses relative to DOWN, per focal setting,
    plus how sideway they sit relative to the focal-drift direction.

    The sideway ratio is mean |perpendicular component| over mean
    |parallel component| across all offsets; it is +inf when the parallel
    component vanishes. Raises MissingPose when a setting lacks DOWN.
    """
    setting_indices = sorted({index for _, index in pps})
    norm = math.hypot(*drift_direction)
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("drift direction must be a nonzero finite vector")
    axis = (drift_direction[0] / norm, drift_direction[1] / norm)
    perp_axis = (-axis[1], axis[0])

    offsets: dict[int, dict[PoseLabel, tuple[float, float]]] = {}
    magnitudes: dict[PoseLabel, list[float]] = {}
    para_parts: list[float] = []
    perp_parts: list[float] = []
    for index in setting_indices:
        down = pps.get((PoseLabel.DOWN, index))
        if down is None:
            raise MissingPose(f"no DOWN principal point for setting index {index}")
        row: dict[PoseLabel, tuple[float, float]] = {}
        for pose in (PoseLabel.N, PoseLabel.W, PoseLabel.E):
            pp = pps.get((pose, index))
            if pp is None:
                continue
            du, dv = pp.u - down.u, pp.v - down.v
            row[pose] = (du, dv)
            magnitudes.setdefault(pose, []).append(math.hypot(du, dv))
            para_parts.append(abs(du * axis[0] + dv * axis[1]))
            perp_parts.append(abs(du * perp_axis[0] + dv * perp_axis[1]))
        offsets[index] = row

    mean_para = float(np.mean(para_parts)) if para_parts else 0.0
    mean_perp = float(np.mean(perp_parts)) if perp_parts else 0.0
    if mean_para < 1e-9:
        ratio = math.inf if mean_perp >= 1e-9 else 0.0
    else:
        ratio = mean_perp / mean_para
    return GravityReport(
        offsets=offsets,
        mean_offset_px={pose: float(np.mean(vals)) for pose, vals in magnitudes.items()},
        sideway_ratio=ratio,
    )
