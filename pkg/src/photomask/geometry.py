"""Pinhole camera model, rigid SE(3) poses, and target-to-source pixel projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Source-frame depth at or below this counts as behind the camera.
Z_EPS = 1e-9


class BehindCameraError(ValueError):
    """Projected point has (near-)nonpositive depth in the source frame."""


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixel units for a width x height image."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 2 or self.height < 2:
            raise ValueError("image must be at least 2x2 pixels")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def downscaled(self, times: int) -> "Intrinsics":
        """Intrinsics after box-downsampling the image by 2, `times` times.

        Uses the pixel-center convention: fine pixel u covers coarse
        coordinate (u + 0.5) / 2 - 0.5, so principal points shift by a
        quarter pixel per level.  This keeps projections consistent with
        2x2 box-averaged pyramids.
        """
        if times == 0:
            return self
        s = 2**times
        if self.width % s or self.height % s:
            raise ValueError("image size not divisible by 2**times")
        return Intrinsics(
            fx=self.fx / s,
            fy=self.fy / s,
            cx=(self.cx + 0.5) / s - 0.5,
            cy=(self.cy + 0.5) / s - 0.5,
            width=self.width // s,
            height=self.height // s,
        )


class PixelCoord(NamedTuple):
    """Continuous pixel coordinate (compares equal to a plain (u, v) tuple)."""

    u: float
    v: float


def _hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector."""
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def rotation_exp(omega) -> np.ndarray:
    """Rodrigues exponential of an axis-angle 3-vector."""
    omega = np.asarray(omega, dtype=float).reshape(3)
    theta = np.linalg.norm(omega)
    K = _hat(omega)
    if theta < 1e-8:
        # First-order-safe branch; the quadratic term is below double precision.
        return np.eye(3) + K
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1.0 - np.cos(theta)) / theta**2) * (K @ K)


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle 3-vector of a rotation matrix (angle in [0, pi])."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return 0.5 * skew
    if np.pi - theta < 1e-6:
        # Near pi the skew part vanishes; recover the axis from (R + I) / 2.
        A = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diagonal(A)))
        axis = A[:, k] / np.sqrt(max(A[k, k], 1e-300))
        axis = axis / np.linalg.norm(axis)
        if skew[k] < 0:
            axis = -axis
        return theta * axis
    return (theta / (2.0 * np.sin(theta))) * skew


def so3_right_jacobian(omega) -> np.ndarray:
    """Right Jacobian of SO(3): exp(w + d) ~ exp(w) exp((Jr(w) d)^)."""
    omega = np.asarray(omega, dtype=float).reshape(3)
    theta = np.linalg.norm(omega)
    K = _hat(omega)
    if theta < 1e-4:
        c1 = 0.5 - theta**2 / 24.0
        c2 = 1.0 / 6.0 - theta**2 / 120.0
    else:
        c1 = (1.0 - np.cos(theta)) / theta**2
        c2 = (theta - np.sin(theta)) / theta**3
    return np.eye(3) - c1 * K + c2 * (K @ K)


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x_out = rotation @ x_in + translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(float(np.linalg.det(R)) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1 within 1e-9")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an array of 3-vectors with shape (..., 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix."""
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying b first, then a."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(a: Pose) -> Pose:
    RT = a.rotation.T
    return Pose(RT, -RT @ a.translation)


def pose_from_tangent(xi) -> Pose:
    """Pose from a 6-vector (axis-angle, translation)."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    return Pose(rotation_exp(xi[:3]), xi[3:].copy())


def tangent_from_pose(pose: Pose) -> np.ndarray:
    """6-vector (axis-angle, translation) such that pose_from_tangent inverts it."""
    return np.concatenate([rotation_log(pose.rotation), pose.translation])


@dataclass
class DepthMap:
    """Per-pixel metric depth with a validity mask.

    Valid entries are those inside [d_min, d_max]; passing an explicit
    `valid` asserts that its entries respect the caps.
    """

    values: np.ndarray
    valid: np.ndarray | None = None
    d_min: float = 0.1
    d_max: float = 100.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("depth values must be HxW")
        in_caps = (
            np.isfinite(self.values)
            & (self.values >= self.d_min)
            & (self.values <= self.d_max)
        )
        if self.valid is None:
            self.valid = in_caps
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise ValueError("valid mask shape mismatch")
            if np.any(self.valid & ~in_caps):
                raise ValueError("valid pixels must lie inside the depth caps")


def _as_depth_values(depth) -> tuple[np.ndarray, np.ndarray]:
    """(values, valid) from a DepthMap or a bare array (treated all-valid)."""
    if isinstance(depth, DepthMap):
        return depth.values, depth.valid
    values = np.asarray(depth, dtype=float)
    return values, np.ones(values.shape, dtype=bool)


def pixel_grid(k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Integer pixel-center coordinate grids (u, v), each height x width."""
    u = np.arange(k.width, dtype=float)
    v = np.arange(k.height, dtype=float)
    return np.meshgrid(u, v)


def _is_identity(pose: Pose) -> bool:
    return np.array_equal(pose.rotation, np.eye(3)) and not pose.translation.any()


def project_grid(depth_values: np.ndarray, pose: Pose, k: Intrinsics):
    """Project every pixel center through depth and pose into the source view.

    Returns (us, vs, z_src, behind): continuous source coordinates, the
    source-frame depth of each transformed point, and the behind-camera
    flag (z_src <= Z_EPS).  Coordinates at behind pixels are finite junk
    and must be ignored by the caller.
    """
    u, v = pixel_grid(k)
    if _is_identity(pose):
        # exact fast path: the identity maps every pixel to itself
        d = np.asarray(depth_values, dtype=float)
        return u, v, d, d <= Z_EPS
    ray_x = (u - k.cx) / k.fx
    ray_y = (v - k.cy) / k.fy
    d = np.asarray(depth_values, dtype=float)
    X = np.stack([ray_x * d, ray_y * d, d], axis=-1)
    Xs = X @ pose.rotation.T + pose.translation
    z = Xs[..., 2]
    behind = z <= Z_EPS
    z_safe = np.where(behind, 1.0, z)
    us = k.fx * Xs[..., 0] / z_safe + k.cx
    vs = k.fy * Xs[..., 1] / z_safe + k.cy
    return us, vs, z, behind


def project(p_t: PixelCoord, depth: float, pose: Pose, k: Intrinsics) -> PixelCoord:
    """Project one target pixel at the given depth into the source image.

    The result may lie outside the image bounds; bounds checking is the
    caller's job.  Raises BehindCameraError when the transformed point has
    depth <= Z_EPS in the source frame.
    """
    if not depth > 0:
        raise ValueError("depth must be positive")
    u, v = float(p_t[0]), float(p_t[1])
    if _is_identity(pose):
        return PixelCoord(u, v)
    ray = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
    Xs = pose.rotation @ (ray * depth) + pose.translation
    if Xs[2] <= Z_EPS:
        raise BehindCameraError(f"point behind camera (z={Xs[2]:.3e})")
    return PixelCoord(
        float(k.fx * Xs[0] / Xs[2] + k.cx), float(k.fy * Xs[1] / Xs[2] + k.cy)
    )


def in_image_box(us: np.ndarray, vs: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Closed-interval containment test matching bilinear-sampler support."""
    return (us >= 0.0) & (us <= k.width - 1.0) & (vs >= 0.0) & (vs <= k.height - 1.0)


def principled_mask(depth, pose: Pose, k: Intrinsics) -> np.ndarray:
    """True exactly where the projected pixel lands inside the source image.

    Pixels behind the camera or with invalid depth are false.
    """
    values, valid = _as_depth_values(depth)
    us, vs, _, behind = project_grid(values, pose, k)
    return valid & ~behind & in_image_box(us, vs, k)


def save_trajectory(path, poses) -> None:
    """Write poses as one line of 12 floats each (row-major 3x4 [R|t])."""
    with open(path, "w") as fh:
        for pose in poses:
            row = np.hstack([pose.rotation, pose.translation[:, None]]).reshape(12)
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_trajectory(path) -> list[Pose]:
    """Read a 12-floats-per-line [R|t] trajectory file."""
    poses = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            vals = [float(x) for x in line.split()]
            if len(vals) != 12:
                raise ValueError(f"{path}:{line_no}: expected 12 floats, got {len(vals)}")
            M = np.array(vals).reshape(3, 4)
            poses.append(Pose(M[:, :3], M[:, 3]))
    return poses
