"""Rotation helpers: axis-angle maps, nearest rotation, exact derivatives."""

from __future__ import annotations

import math

import numpy as np


def rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(rvec) -> np.ndarray:
    """Axis-angle vector to rotation matrix (exponential map)."""
    rvec = np.asarray(rvec, dtype=float)
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-12:
        return np.eye(3) + skew(rvec)
    k = rvec / theta
    km = skew(k)
    return np.eye(3) + math.sin(theta) * km + (1.0 - math.cos(theta)) * (km @ km)


def rvec_from_rotation(rot: np.ndarray) -> np.ndarray:
    """Rotation matrix to axis-angle, stable near 0 and pi.

    Goes through the quaternion with the largest-pivot extraction and a
    canonical nonnegative scalar part, so the returned vector has angle in
    [0, pi] and is a deterministic function of the input.
    """
    r = np.asarray(rot, dtype=float)
    t = r[0, 0] + r[1, 1] + r[2, 2]
    if t > max(r[0, 0], r[1, 1], r[2, 2]):
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    if q[0] < 0.0:
        q = -q
    axis_norm = float(np.linalg.norm(q[1:]))
    if axis_norm < 1e-12:
        return np.zeros(3)
    theta = 2.0 * math.atan2(axis_norm, q[0])
    return q[1:] / axis_norm * theta


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Orthogonal polar factor of m with determinant +1."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def rotate_point_jacobian(rvec, points) -> np.ndarray:
    """d(R(rvec) @ p) / d(rvec) for each point p, shape (n, 3, 3).

    Exact derivative of the exponential map; at rvec = 0 the limit is
    -skew(p).
    """
    rvec = np.asarray(rvec, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    theta2 = float(rvec @ rvec)
    if theta2 < 1e-24:
        jac = np.empty((len(pts), 3, 3))
        for n, p in enumerate(pts):
            jac[n] = -skew(p)
        return jac
    r = rodrigues(rvec)
    rotated = pts @ r.T
    eye_minus_r = np.eye(3) - r
    jac = np.empty((len(pts), 3, 3))
    for i in range(3):
        mi = (rvec[i] * skew(rvec) + skew(np.cross(rvec, eye_minus_r[:, i]))) / theta2
        jac[:, :, i] = rotated @ mi.T
    return jac
