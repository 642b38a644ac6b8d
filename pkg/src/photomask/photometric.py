"""SSIM+L1 photometric error, edge-aware smoothness, and box-average pyramids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BadShapeError(ValueError):
    """Image dimensions incompatible with the requested pyramid depth."""


class DegenerateDepthError(ValueError):
    """Inverse depth with nonpositive mean cannot be mean-normalized."""


@dataclass(frozen=True)
class PhotometricConfig:
    """Weights and window of the SSIM+L1 dissimilarity."""

    alpha: float = 0.85
    ssim_window: int = 3
    c1: float = 0.01**2
    c2: float = 0.03**2

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("SSIM stabilizers must be positive")


@dataclass
class ErrorMap:
    """Per-pixel photometric error in [0, 1] with a validity mask."""

    values: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.valid is None:
            self.valid = np.ones(self.values.shape, dtype=bool)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
        if self.valid.shape != self.values.shape:
            raise ValueError("valid mask shape mismatch")


def _as_chw(img) -> np.ndarray:
    """Promote HxW arrays to HxWx1; pass HxWxC through."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        return arr[:, :, None]
    if arr.ndim == 3:
        return arr
    raise ValueError("image must be HxW or HxWxC")


def _pad_reflect(x: np.ndarray, p: int) -> np.ndarray:
    """Reflect-pad the two leading axes; singleton axes fall back to edge."""
    mode0 = "reflect" if x.shape[0] > 1 else "edge"
    mode1 = "reflect" if x.shape[1] > 1 else "edge"
    x = np.pad(x, [(p, p)] + [(0, 0)] * (x.ndim - 1), mode=mode0)
    # pad axis 1 separately so singleton axes can use a different mode
    x = np.moveaxis(
        np.pad(np.moveaxis(x, 1, 0), [(p, p)] + [(0, 0)] * (x.ndim - 1), mode=mode1),
        0,
        1,
    )
    return x


def box_filter(x: np.ndarray, window: int) -> np.ndarray:
    """Uniform window mean over the two leading axes with reflective padding."""
    p = window // 2
    xp = _pad_reflect(np.asarray(x, dtype=float), p)
    H, W = x.shape[:2]
    out = np.zeros_like(np.asarray(x, dtype=float))
    for di in range(window):
        for dj in range(window):
            out += xp[di : di + H, dj : dj + W]
    return out / (window * window)


def _fold_axis(gp: np.ndarray, p: int, size: int, reflect: bool) -> np.ndarray:
    """Adjoint of padding along axis 0: fold the p margin rows back inside."""
    out = gp[p : p + size].copy()
    if p == 0:
        return out
    if reflect:
        # np.pad 'reflect': padded row i (< p) mirrors interior row p - i.
        for i in range(p):
            out[p - i] += gp[i]
            out[size - 2 - i] += gp[p + size + i]
    else:
        # 'edge' padding used on singleton axes
        for i in range(p):
            out[0] += gp[i]
            out[size - 1] += gp[p + size + i]
    return out


def box_filter_adjoint(g: np.ndarray, window: int) -> np.ndarray:
    """Exact adjoint of box_filter: <box(x), g> == <x, adjoint(g)> for all x, g."""
    g = np.asarray(g, dtype=float)
    p = window // 2
    H, W = g.shape[:2]
    padded_shape = (H + 2 * p, W + 2 * p) + g.shape[2:]
    gp = np.zeros(padded_shape, dtype=float)
    for di in range(window):
        for dj in range(window):
            gp[di : di + H, dj : dj + W] += g
    gp /= window * window
    # fold axis 1 first, then axis 0 (padding order is irrelevant, folding isn't)
    gp = np.moveaxis(_fold_axis(np.moveaxis(gp, 1, 0), p, W, W > 1), 0, 1)
    return _fold_axis(gp, p, H, H > 1)


def _ssim_terms(a: np.ndarray, b: np.ndarray, cfg: PhotometricConfig):
    """Window statistics shared by the SSIM forward and pullback passes."""
    w = cfg.ssim_window
    mu_a = box_filter(a, w)
    e1 = box_filter(b, w)
    e2 = box_filter(b * b, w)
    e3 = box_filter(a * b, w)
    var_a = box_filter(a * a, w) - mu_a * mu_a
    A1 = 2.0 * mu_a * e1 + cfg.c1
    A2 = 2.0 * (e3 - mu_a * e1) + cfg.c2
    B1 = mu_a * mu_a + e1 * e1 + cfg.c1
    B2 = var_a + (e2 - e1 * e1) + cfg.c2
    return mu_a, e1, A1, A2, B1, B2


def ssim_map(a, b, cfg: PhotometricConfig = PhotometricConfig()) -> np.ndarray:
    """Per-pixel local-window SSIM, averaged over channels."""
    a, b = _as_chw(a), _as_chw(b)
    if a.shape != b.shape:
        raise ValueError("images must have the same shape")
    _, _, A1, A2, B1, B2 = _ssim_terms(a, b, cfg)
    return np.mean((A1 * A2) / (B1 * B2), axis=2)


def photometric_error(a, b, cfg: PhotometricConfig = PhotometricConfig(), valid=None) -> ErrorMap:
    """alpha * (1 - SSIM) / 2 + (1 - alpha) * channel-mean L1, per pixel."""
    a, b = _as_chw(a), _as_chw(b)
    if a.shape != b.shape:
        raise ValueError("images must have the same shape")
    ssim = ssim_map(a, b, cfg)
    l1 = np.mean(np.abs(a - b), axis=2)
    values = cfg.alpha * (1.0 - ssim) / 2.0 + (1.0 - cfg.alpha) * l1
    # guard round-off at the extremes; mathematically the value is in [0, 1]
    np.clip(values, 0.0, 1.0, out=values)
    return ErrorMap(values, valid)


def photometric_error_pullback(a, b, cfg: PhotometricConfig, weight: np.ndarray) -> np.ndarray:
    """Gradient of sum(weight * photometric_error(a, b)) w.r.t. b, shape HxWxC."""
    a, b = _as_chw(a), _as_chw(b)
    C = a.shape[2]
    w = cfg.ssim_window
    weight = np.asarray(weight, dtype=float)

    grad = -(1.0 - cfg.alpha) / C * np.sign(a - b) * weight[:, :, None]

    # SSIM part: cotangent on per-channel SSIM is -alpha/2 * weight / C
    mu_a, e1, A1, A2, B1, B2 = _ssim_terms(a, b, cfg)
    S = (A1 * A2) / (B1 * B2)
    wc = (-cfg.alpha / 2.0 / C) * weight[:, :, None]
    dS_de1 = (2.0 * mu_a * (A2 - A1)) / (B1 * B2) - S * 2.0 * e1 * (1.0 / B1 - 1.0 / B2)
    dS_de2 = -S / B2
    dS_de3 = 2.0 * A1 / (B1 * B2)
    grad += box_filter_adjoint(wc * dS_de1, w)
    grad += 2.0 * b * box_filter_adjoint(wc * dS_de2, w)
    grad += a * box_filter_adjoint(wc * dS_de3, w)
    return grad


def _image_gradient_weights(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    img = _as_chw(image)
    gx = np.exp(-np.mean(np.abs(img[:, 1:] - img[:, :-1]), axis=2))
    gy = np.exp(-np.mean(np.abs(img[1:, :] - img[:-1, :]), axis=2))
    return gx, gy


def smoothness_loss(inv_depth, image) -> float:
    """Edge-aware smoothness of mean-normalized inverse depth.

    Forward differences with the last column/row dropped; the sum is
    averaged over all HxW pixels, so a scalar rescaling of inverse depth
    leaves the loss unchanged.
    """
    d = np.asarray(inv_depth, dtype=float)
    if d.shape != _as_chw(image).shape[:2]:
        raise ValueError("inverse depth and image shapes must match")
    mean = float(np.mean(d))
    if mean <= 0.0:
        raise DegenerateDepthError("mean inverse depth must be positive")
    dn = d / mean
    gx, gy = _image_gradient_weights(image)
    total = np.sum(np.abs(dn[:, 1:] - dn[:, :-1]) * gx)
    total += np.sum(np.abs(dn[1:, :] - dn[:-1, :]) * gy)
    return float(total / d.size)


def smoothness_loss_grad(inv_depth, image) -> tuple[float, np.ndarray]:
    """Smoothness loss and its exact gradient w.r.t. the inverse depth field."""
    d = np.asarray(inv_depth, dtype=float)
    mean = float(np.mean(d))
    if mean <= 0.0:
        raise DegenerateDepthError("mean inverse depth must be positive")
    gx, gy = _image_gradient_weights(image)
    n = d.size

    dx = d[:, 1:] - d[:, :-1]
    dy = d[1:, :] - d[:-1, :]
    total = np.sum(np.abs(dx) * gx) + np.sum(np.abs(dy) * gy)
    loss = total / (n * mean)

    sx = np.sign(dx) * gx
    sy = np.sign(dy) * gy
    grad = np.zeros_like(d)
    grad[:, 1:] += sx
    grad[:, :-1] -= sx
    grad[1:, :] += sy
    grad[:-1, :] -= sy
    grad /= n * mean
    # chain through the 1/mean normalization
    grad -= loss / (n * mean)
    return float(loss), grad


def build_pyramid(img, levels: int) -> list[np.ndarray]:
    """List of images halved per level by 2x2 box averaging (level 0 = input)."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    arr = np.asarray(img, dtype=float)
    H, W = arr.shape[:2]
    s = 2 ** (levels - 1)
    if H % s or W % s:
        raise BadShapeError(f"{H}x{W} image not divisible by 2**{levels - 1}")
    out = [arr]
    for _ in range(levels - 1):
        a = out[-1]
        h, w = a.shape[0] // 2, a.shape[1] // 2
        a = a.reshape((h, 2, w, 2) + a.shape[2:])
        out.append(a.mean(axis=(1, 3)))
    return out
