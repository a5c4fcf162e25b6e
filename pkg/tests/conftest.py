"""Shared fixtures and independent oracle helpers.

The helpers below compute expected values from first principles (plain
pinhole algebra in numpy) so that tests never check the package against
itself where an independent route exists.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from caliblab.calibrate import CalibrationView


def kmat(f: float, u0: float, v0: float) -> np.ndarray:
    return np.array([[f, 0.0, u0], [0.0, f, v0], [0.0, 0.0, 1.0]])


def oracle_rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def oracle_rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def oracle_rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def pinhole_project(f, pp, rot, t, board_xy) -> np.ndarray:
    """Direct pinhole projection of board-plane points (the oracle)."""
    pts = np.column_stack([board_xy, np.zeros(len(board_xy))])
    cam = pts @ np.asarray(rot).T + np.asarray(t)
    return f * cam[:, :2] / cam[:, 2:3] + np.asarray(pp, dtype=float)


def scene_homography(f, pp, rot, t) -> np.ndarray:
    """Raw K [r1 r2 t] matrix for a board-plane view."""
    rot = np.asarray(rot)
    return kmat(f, pp[0], pp[1]) @ np.column_stack([rot[:, 0], rot[:, 1], np.asarray(t)])


def grid_board(cols: int = 9, rows: int = 6, square: float = 25.0) -> np.ndarray:
    xs = np.arange(cols) * square
    ys = np.arange(rows) * square
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def line_close(line, expected, tol: float = 1e-9) -> bool:
    """Compare homogeneous line coefficients up to overall sign."""
    got = np.array([line.a, line.b, line.c], dtype=float)
    exp = np.array(expected, dtype=float)
    exp = exp / math.hypot(exp[0], exp[1])
    return min(np.abs(got - exp).max(), np.abs(got + exp).max()) <= tol


def tilted_scene_views(
    f=3000.0,
    pp=(3024.0, 2012.0),
    tilt_deg=45.0,
    rolls=None,
    distance=800.0,
    sigma=0.0,
    rng=None,
    board=None,
):
    """Protocol views: board tilted by the dihedral angle, rolled about the
    optical axis, centered in front of the camera. Returns the views plus
    the ground-truth (rot, t) pairs."""
    if rolls is None:
        rolls = [k * 45.0 for k in range(8)]
    if board is None:
        board = grid_board()
    center = board.mean(axis=0)
    views, truth = [], []
    for k, roll in enumerate(rolls):
        rot = oracle_rot_z(roll) @ oracle_rot_x(tilt_deg)
        t = distance * np.array([0.0, 0.0, 1.0]) - rot @ np.array([center[0], center[1], 0.0])
        uv = pinhole_project(f, pp, rot, t, board)
        if sigma > 0.0:
            uv = uv + rng.normal(0.0, sigma, uv.shape)
        views.append(CalibrationView.from_points(f"v{k}", board, uv))
        truth.append((rot, t))
    return views, truth


def bias_half_board(board_xy, image_uv, du=3.0, dv=3.0, split="x"):
    """Shift the image positions of one board half, mimicking the skewed
    corner detections of a nonuniformly lit capture."""
    uv = np.array(image_uv, dtype=float)
    axis = 0 if split == "x" else 1
    mask = board_xy[:, axis] > board_xy[:, axis].mean()
    uv[mask, 0] += du
    uv[mask, 1] += dv
    return uv


def protocol_distance(f, fill=0.6, span_mm=(200.0, 125.0), image=(6048.0, 4024.0)):
    """Board distance that fills the given image fraction, as the capture
    protocol prescribes."""
    return f * max(span_mm[0] / image[0], span_mm[1] / image[1]) / fill


@pytest.fixture
def board():
    return grid_board()


@pytest.fixture
def rng():
    return np.random.default_rng(20240815)
