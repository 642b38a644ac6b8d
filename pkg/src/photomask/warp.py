"""Differentiable inverse warping with analytic intensity derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    Intrinsics,
    Pose,
    _as_depth_values,
    in_image_box,
    pixel_grid,
    project_grid,
    rotation_log,
    so3_right_jacobian,
)


class OutOfBoundsError(ValueError):
    """Sampling location outside the bilinear sampler's support."""


@dataclass
class WarpResult:
    """Synthesized view, its validity mask, and the sampling locations."""

    image: np.ndarray  # HxWxC
    in_bounds: np.ndarray  # HxW bool, equals geometry.principled_mask
    coords: np.ndarray  # HxWx2 continuous (u, v) in the source image


@dataclass
class WarpJacobians:
    """Derivatives of the warped intensity at the current depth and pose.

    d_pose is taken w.r.t. the 6-vector (axis-angle, translation) whose
    exponential equals the current pose, holding each pixel's bilinear
    interpolation cell fixed.  Both arrays are zero outside in_bounds.
    """

    d_depth: np.ndarray  # HxWxC
    d_pose: np.ndarray  # HxWxCx6
    in_bounds: np.ndarray  # HxW bool


def _sample_with_gradient(img: np.ndarray, us, vs, mask):
    """Bilinear values plus d/du, d/dv per channel; zeros outside mask.

    The border column/row uses a degenerate cell whose missing neighbor
    carries zero weight, so the sampler is total on [0, W-1] x [0, H-1].
    """
    H, W, _ = img.shape
    us = np.where(mask, us, 0.0)
    vs = np.where(mask, vs, 0.0)
    x0 = np.floor(us)
    y0 = np.floor(vs)
    fu = us - x0
    fv = vs - y0
    x0i = np.clip(x0.astype(np.int64), 0, W - 1)
    y0i = np.clip(y0.astype(np.int64), 0, H - 1)
    x1i = np.minimum(x0i + 1, W - 1)
    y1i = np.minimum(y0i + 1, H - 1)

    i00 = img[y0i, x0i]
    i10 = img[y0i, x1i]
    i01 = img[y1i, x0i]
    i11 = img[y1i, x1i]

    fu3 = fu[..., None]
    fv3 = fv[..., None]
    value = (
        (1 - fu3) * (1 - fv3) * i00
        + fu3 * (1 - fv3) * i10
        + (1 - fu3) * fv3 * i01
        + fu3 * fv3 * i11
    )
    d_du = (1 - fv3) * (i10 - i00) + fv3 * (i11 - i01)
    d_dv = (1 - fu3) * (i01 - i00) + fu3 * (i11 - i10)

    m3 = mask[..., None]
    return np.where(m3, value, 0.0), np.where(m3, d_du, 0.0), np.where(m3, d_dv, 0.0)


def bilinear_sample(img, p) -> np.ndarray:
    """Bilinear interpolation of one location; exact at integer coordinates.

    Raises OutOfBoundsError outside [0, W-1] x [0, H-1]; callers warping
    whole images should pre-mask with the principled mask instead.
    """
    arr = np.asarray(img, dtype=float)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    H, W, _ = arr.shape
    u, v = float(p[0]), float(p[1])
    if not (0.0 <= u <= W - 1 and 0.0 <= v <= H - 1):
        raise OutOfBoundsError(f"({u}, {v}) outside [0, {W - 1}] x [0, {H - 1}]")
    value, _, _ = _sample_with_gradient(
        arr, np.full((1, 1), u), np.full((1, 1), v), np.ones((1, 1), dtype=bool)
    )
    out = value[0, 0]
    return float(out[0]) if squeeze else out


def synthesize_view(source, depth, pose: Pose, k: Intrinsics) -> WarpResult:
    """Inverse-warp the source image into the target frame.

    Out-of-bounds pixels carry intensity 0 and in_bounds False; no edge
    clamping is performed.
    """
    src = np.asarray(source, dtype=float)
    if src.ndim == 2:
        src = src[:, :, None]
    if src.shape[0] != k.height or src.shape[1] != k.width:
        raise ValueError("source image does not match the intrinsics size")
    values, valid = _as_depth_values(depth)
    us, vs, _, behind = project_grid(values, pose, k)
    in_bounds = valid & ~behind & in_image_box(us, vs, k)
    image, _, _ = _sample_with_gradient(src, us, vs, in_bounds)
    coords = np.stack([np.where(in_bounds, us, 0.0), np.where(in_bounds, vs, 0.0)], axis=-1)
    return WarpResult(image=image, in_bounds=in_bounds, coords=coords)


def warp_jacobians(source, depth, pose: Pose, k: Intrinsics) -> WarpJacobians:
    """Chain-rule derivatives of the warped intensity.

    d_depth is the per-pixel derivative w.r.t. that pixel's target depth;
    d_pose stacks (axis-angle, translation) derivatives at the current
    pose.  The interpolation-cell assignment is held fixed, matching how
    grid sampling is differentiated.
    """
    src = np.asarray(source, dtype=float)
    if src.ndim == 2:
        src = src[:, :, None]
    values, valid = _as_depth_values(depth)
    us, vs, z, behind = project_grid(values, pose, k)
    in_bounds = valid & ~behind & in_image_box(us, vs, k)
    _, g_u, g_v = _sample_with_gradient(src, us, vs, in_bounds)

    u, v = pixel_grid(k)
    ray = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    X = ray * values[:, :, None]
    Xs = X @ pose.rotation.T + pose.translation
    z_safe = np.where(behind, 1.0, z)

    def coord_derivs(dXs):
        """(du, dv) from a perturbation dXs of the source-frame point."""
        du = k.fx * (dXs[..., 0] * z_safe - Xs[..., 0] * dXs[..., 2]) / z_safe**2
        dv = k.fy * (dXs[..., 1] * z_safe - Xs[..., 1] * dXs[..., 2]) / z_safe**2
        return du, dv

    # depth: dXs/dd = R @ ray
    q = ray @ pose.rotation.T
    du_dd, dv_dd = coord_derivs(q)
    d_depth = g_u * du_dd[..., None] + g_v * dv_dd[..., None]
    d_depth = np.where(in_bounds[..., None], d_depth, 0.0)

    # rotation: d(exp(w) X)/dw = -R [X]x Jr(w);  translation: identity
    omega = rotation_log(pose.rotation)
    Jr = so3_right_jacobian(omega)
    H, W, C = src.shape
    d_pose = np.zeros((H, W, C, 6))
    for j in range(3):
        # column j of d(exp(w)X)/dw is R (Jr[:, j] x X)
        dX = np.cross(Jr[:, j], X)
        dXs = dX @ pose.rotation.T
        du, dv = coord_derivs(dXs)
        d_pose[..., j] = g_u * du[..., None] + g_v * dv[..., None]
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        du, dv = coord_derivs(np.broadcast_to(e, X.shape))
        d_pose[..., 3 + j] = g_u * du[..., None] + g_v * dv[..., None]
    d_pose = np.where(in_bounds[..., None, None], d_pose, 0.0)

    return WarpJacobians(d_depth=d_depth, d_pose=d_pose, in_bounds=in_bounds)
