"""Rigid transforms and angle helpers shared across the pipeline.

The common ("room") frame is right-handed with z pointing up; the
horizontal plane is x-y. Camera frames follow the usual pinhole
convention: x right, y down, z along the optical axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-9


def wrap_angle(a):
    """Wrap angle(s) in radians to the interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def yaw_matrix(yaw: float) -> np.ndarray:
    """Rotation matrix about the vertical (z) axis."""
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0:
        raise ValueError("rotation axis must be non-zero")
    x, y, z = axis / n
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation mapping points between frames.

    ``apply`` computes ``R @ p + t``. The rotation must be orthonormal
    with determinant +1 (checked to ``ROTATION_TOL``).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        tr = np.asarray(self.translation, dtype=float).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-6:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tr)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, mat) -> "RigidTransform":
        """Build from a 3x4 row-major [R | t] matrix (nested list or flat)."""
        m = np.asarray(mat, dtype=float).reshape(3, 4)
        return cls(m[:, :3], m[:, 3])

    def matrix(self) -> np.ndarray:
        """The 3x4 row-major [R | t] matrix."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def apply(self, points) -> np.ndarray:
        """Transform an (..., 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equivalent to applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def is_orthonormal(self, tol: float = ROTATION_TOL) -> bool:
        r = self.rotation
        return (
            np.max(np.abs(r @ r.T - np.eye(3))) <= tol
            and abs(np.linalg.det(r) - 1.0) <= tol
        )


def rigid_fit(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping paired source points onto target.

    Closed form via SVD of the cross-covariance (Kabsch), reflection-safe.
    """
    src = np.asarray(source, dtype=float)
    dst = np.asarray(target, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValueError("point sets must be matching (n, 3) arrays")
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, cd - rot @ cs)
