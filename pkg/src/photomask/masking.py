"""Statistical outlier masking, companion masks, and the weighted multi-scale objective."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import Intrinsics, Pose
from .photometric import (
    ErrorMap,
    PhotometricConfig,
    build_pyramid,
    photometric_error,
    smoothness_loss,
)
from .warp import synthesize_view


class EmptySampleError(ValueError):
    """No valid pixel available to pool photometric statistics over."""


@dataclass(frozen=True)
class OutlierConfig:
    """Thresholds of the statistical outlier mask: keep mu - l*sigma < e < mu + u*sigma."""

    l: float = 1.0
    u: float = 0.5
    sigma_floor: float = 1e-12

    def __post_init__(self):
        if self.l < 0 or self.u < 0:
            raise ValueError("threshold multipliers must be nonnegative")
        if self.sigma_floor <= 0:
            raise ValueError("sigma_floor must be positive")


@dataclass(frozen=True)
class LossConfig:
    """Weights of the total objective.

    eta and lam balance photometric against smoothness terms; f and e are
    the per-scale decay factors of the two terms; scales is the pyramid
    depth.
    """

    eta: float = 1.0
    lam: float = 1e-3
    e: float = 0.5
    f: float = 0.25
    scales: int = 4

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not (0 < self.e <= 1 and 0 < self.f <= 1):
            raise ValueError("scale decays must lie in (0, 1]")
        if self.scales < 1:
            raise ValueError("scales must be >= 1")


@dataclass(frozen=True)
class MaskFlags:
    """Which masks participate in the element-wise conjunction."""

    outlier: bool = True
    principled: bool = True
    auto: bool = True
    min_reprojection: bool = True


@dataclass(frozen=True)
class ErrorStats:
    """Mean and population standard deviation of pooled photometric errors."""

    mu: float
    sigma: float


@dataclass
class SampleBundle:
    """One target frame, its source frames, intrinsics, and per-scale pyramids.

    Optional ground-truth fields (populated by scenesim) let the optimizer
    and ablation runner evaluate recovered depth without extra plumbing.
    """

    target: np.ndarray
    sources: list[np.ndarray]
    intrinsics: Intrinsics
    scales: int = 4
    target_pyramid: list[np.ndarray] = field(default_factory=list)
    source_pyramids: list[list[np.ndarray]] = field(default_factory=list)
    intrinsics_pyramid: list[Intrinsics] = field(default_factory=list)
    source_ids: list[int] | None = None
    gt_depth: np.ndarray | None = None
    gt_poses: list[Pose] | None = None
    labels: np.ndarray | None = None
    legend: dict[int, str] | None = None

    def __post_init__(self):
        if not self.sources:
            raise ValueError("a bundle needs at least one source frame")
        if not self.target_pyramid:
            self.target_pyramid = build_pyramid(self.target, self.scales)
            self.source_pyramids = [build_pyramid(s, self.scales) for s in self.sources]
            self.intrinsics_pyramid = [
                self.intrinsics.downscaled(r) for r in range(self.scales)
            ]


def error_stats(errors: list[ErrorMap]) -> ErrorStats:
    """Pool valid pixels of all source error maps into one mean and sigma."""
    pooled = [e.values[e.valid] for e in errors]
    if not pooled or sum(p.size for p in pooled) == 0:
        raise EmptySampleError("no valid pixels to pool statistics over")
    values = np.concatenate(pooled)
    return ErrorStats(mu=float(np.mean(values)), sigma=float(np.std(values)))


def outlier_mask(err: ErrorMap, stats: ErrorStats, cfg: OutlierConfig = OutlierConfig()) -> np.ndarray:
    """True strictly inside (mu - l*sigma, mu + u*sigma).

    A (near-)zero sigma means a constant error map, which has no outliers:
    the mask degenerates to all-true instead of emptying under the strict
    inequalities.
    """
    if stats.sigma < cfg.sigma_floor:
        return np.ones(err.values.shape, dtype=bool)
    lo = stats.mu - cfg.l * stats.sigma
    hi = stats.mu + cfg.u * stats.sigma
    return (err.values > lo) & (err.values < hi)


def auto_mask(err_recon: ErrorMap, err_direct: ErrorMap) -> np.ndarray:
    """True where warped reconstruction strictly beats the unwarped comparison."""
    if err_recon.values.shape != err_direct.values.shape:
        raise ValueError("error map shapes must match")
    return err_recon.values < err_direct.values


def min_reprojection_mask(errors: list[ErrorMap]) -> list[np.ndarray]:
    """Per source, true where its error attains the per-pixel minimum.

    Ties keep every minimizer; invalid pixels never win the minimum and
    are false in their own mask.
    """
    if not errors:
        raise ValueError("need at least one error map")
    stack = np.stack([np.where(e.valid, e.values, np.inf) for e in errors])
    best = stack.min(axis=0)
    return [e.valid & (stack[i] <= best) for i, e in enumerate(errors)]


def combine_masks(masks: list[np.ndarray]) -> np.ndarray:
    """Element-wise logical conjunction."""
    if not masks:
        raise ValueError("need at least one mask")
    out = np.asarray(masks[0], dtype=bool).copy()
    for m in masks[1:]:
        out &= m
    return out


def scale_weights(cfg: LossConfig) -> list[float]:
    """Per-scale photometric weights [f**0, f**1, ...]."""
    return [cfg.f**r for r in range(cfg.scales)]


@dataclass
class ScaleSourceTerm:
    """Diagnostics of one (scale, source) photometric term."""

    scale: int
    source: int
    photometric: float  # masked mean error (0 when fully masked)
    kept: int
    kept_fraction: float
    fully_masked: bool


@dataclass
class LossResult:
    """Total objective value plus everything needed to inspect it."""

    value: float
    photometric: float
    smoothness: float
    masks: list[list[np.ndarray]]  # [scale][source] combined boolean masks
    errors: list[list[ErrorMap]]  # [scale][source] photometric error maps
    stats: list[ErrorStats | None]  # per-scale pooled statistics
    smoothness_per_scale: list[float]
    terms: list[ScaleSourceTerm]

    def breakdown(self) -> list[dict]:
        """Rows of {scale, source, photometric, kept_fraction, smoothness}."""
        return [
            {
                "scale": t.scale,
                "source": t.source,
                "photometric": t.photometric,
                "kept_fraction": t.kept_fraction,
                "smoothness": self.smoothness_per_scale[t.scale],
            }
            for t in self.terms
        ]

    @property
    def fully_masked(self) -> list[tuple[int, int]]:
        return [(t.scale, t.source) for t in self.terms if t.fully_masked]


def per_source_masks(
    errors: list[ErrorMap],
    direct_errors: list[ErrorMap],
    flags: MaskFlags,
    ocfg: OutlierConfig,
) -> list[np.ndarray]:
    """Combined mask per source from the enabled mask family.

    `errors` must carry the principled mask as their validity; statistics
    are pooled over those valid pixels only, and one (mu, sigma) pair
    bounds every source's outlier mask.
    """
    parts: list[list[np.ndarray]] = [[] for _ in errors]
    if flags.principled:
        for i, e in enumerate(errors):
            parts[i].append(e.valid)
    if flags.outlier:
        try:
            stats = error_stats(errors)
        except EmptySampleError:
            stats = None
        for i, e in enumerate(errors):
            parts[i].append(
                outlier_mask(e, stats, ocfg)
                if stats is not None
                else np.zeros(e.values.shape, dtype=bool)
            )
    if flags.auto:
        for i, e in enumerate(errors):
            parts[i].append(auto_mask(e, direct_errors[i]))
    if flags.min_reprojection:
        for i, m in enumerate(min_reprojection_mask(errors)):
            parts[i].append(m)
    return [
        combine_masks(p) if p else np.ones(errors[i].values.shape, dtype=bool)
        for i, p in enumerate(parts)
    ]


def total_loss(
    bundle: SampleBundle,
    inv_depths: list[np.ndarray],
    poses: list[Pose],
    cfg: LossConfig = LossConfig(),
    ocfg: OutlierConfig = OutlierConfig(),
    flags: MaskFlags = MaskFlags(),
    pcfg: PhotometricConfig = PhotometricConfig(),
    masks_override: list[list[np.ndarray]] | None = None,
    scale_subset: list[int] | None = None,
) -> LossResult:
    """Masked multi-scale photometric objective plus weighted smoothness.

    inv_depths holds one inverse-depth field per scale (finest first).
    Masks are recomputed from the current errors unless masks_override
    pins them (used for frozen-mask gradient checks).  A fully masked
    (scale, source) term contributes zero and is reported via a
    RuntimeWarning diagnostic instead of dividing by zero.  Terms are
    summed in scale-major, source-minor order.
    """
    if len(inv_depths) != cfg.scales:
        raise ValueError("need one inverse-depth field per scale")
    if len(poses) != len(bundle.sources):
        raise ValueError("need one pose per source")
    scales = range(cfg.scales) if scale_subset is None else scale_subset

    weights = scale_weights(cfg)
    photo_total = 0.0
    smooth_total = 0.0
    all_masks: list[list[np.ndarray]] = [[] for _ in range(cfg.scales)]
    all_errors: list[list[ErrorMap]] = [[] for _ in range(cfg.scales)]
    all_stats: list[ErrorStats | None] = [None] * cfg.scales
    smooth_per_scale = [0.0] * cfg.scales
    terms: list[ScaleSourceTerm] = []

    for r in scales:
        tgt = bundle.target_pyramid[r]
        k_r = bundle.intrinsics_pyramid[r]
        depth_r = 1.0 / np.asarray(inv_depths[r], dtype=float)
        errors: list[ErrorMap] = []
        direct: list[ErrorMap] = []
        for s, _ in enumerate(bundle.sources):
            src = bundle.source_pyramids[s][r]
            res = synthesize_view(src, depth_r, poses[s], k_r)
            errors.append(photometric_error(tgt, res.image, pcfg, valid=res.in_bounds))
            if flags.auto and masks_override is None:
                direct.append(photometric_error(tgt, src, pcfg))
        if masks_override is None:
            masks = per_source_masks(errors, direct, flags, ocfg)
            try:
                all_stats[r] = error_stats(errors)
            except EmptySampleError:
                all_stats[r] = None
        else:
            masks = masks_override[r]

        for s, mask in enumerate(masks):
            kept = int(np.count_nonzero(mask))
            if kept == 0:
                warnings.warn(
                    f"fully-masked photometric term at scale {r}, source {s}",
                    RuntimeWarning,
                    stacklevel=2,
                )
                mean_err = 0.0
            else:
                mean_err = float(np.sum(errors[s].values[mask]) / kept)
                photo_total += weights[r] * mean_err
            terms.append(
                ScaleSourceTerm(
                    scale=r,
                    source=s,
                    photometric=mean_err,
                    kept=kept,
                    kept_fraction=kept / mask.size,
                    fully_masked=kept == 0,
                )
            )
        all_masks[r] = masks
        all_errors[r] = errors

        if cfg.lam != 0.0:
            smooth_per_scale[r] = smoothness_loss(inv_depths[r], tgt)
            smooth_total += cfg.e**r * smooth_per_scale[r]

    value = cfg.eta * photo_total + cfg.lam * smooth_total
    return LossResult(
        value=float(value),
        photometric=float(cfg.eta * photo_total),
        smoothness=float(cfg.lam * smooth_total),
        masks=all_masks,
        errors=all_errors,
        stats=all_stats,
        smoothness_per_scale=smooth_per_scale,
        terms=terms,
    )
