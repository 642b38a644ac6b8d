"""Depth metrics with median scaling, per-motion-region metrics, and snippet ATE."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DepthMap, Pose


class EmptyRegionError(ValueError):
    """No pixel left to evaluate after masking and depth caps."""


class TooShortError(ValueError):
    """Trajectory shorter than the snippet length."""


@dataclass(frozen=True)
class DepthEvalConfig:
    """Evaluation protocol knobs.

    crop, when given, is (top, bottom, left, right) as fractions of the
    image size; pixels outside the rectangle are ignored.  scaling_region
    selects which pixels feed the median ratio in region evaluation.
    """

    cap: float = 80.0
    min_depth: float = 1e-3
    median_scaling: bool = True
    scaling_region: str = "all"  # "all" | "background_only"
    crop: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if not 0 < self.min_depth < self.cap:
            raise ValueError("need 0 < min_depth < cap")
        if self.scaling_region not in ("all", "background_only"):
            raise ValueError("scaling_region must be 'all' or 'background_only'")


@dataclass
class MetricsReport:
    """Standard depth error/accuracy metrics over one pixel set."""

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    pixel_count: int

    def as_dict(self) -> dict:
        return {
            "abs_rel": self.abs_rel,
            "sq_rel": self.sq_rel,
            "rmse": self.rmse,
            "rmse_log": self.rmse_log,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
            "pixel_count": self.pixel_count,
        }


@dataclass
class RegionReport:
    """Per-label metrics with pixel counts and percentages."""

    labels: dict[str, MetricsReport]
    counts: dict[str, int]
    percents: dict[str, float]
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "regions": {
                name: {
                    **self.labels[name].as_dict(),
                    "amount": self.counts[name],
                    "percent": self.percents[name],
                }
                for name in self.labels
            },
            "notes": list(self.notes),
        }


def _depth_arrays(depth) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(depth, DepthMap):
        return depth.values, depth.valid
    arr = np.asarray(depth, dtype=float)
    return arr, np.isfinite(arr) & (arr > 0)


def _crop_mask(shape, crop) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    H, W = shape
    top = int(round(crop[0] * H))
    bottom = int(round(crop[1] * H))
    left = int(round(crop[2] * W))
    right = int(round(crop[3] * W))
    mask[top:bottom, left:right] = True
    return mask


def median_scale(pred, gt, mask) -> float:
    """Ratio of medians aligning prediction to ground truth over a mask."""
    p = pred[mask]
    g = gt[mask]
    if p.size == 0:
        raise EmptyRegionError("no pixels to compute the scaling median over")
    return float(np.median(g) / np.median(p))


def depth_metrics(
    pred,
    gt,
    mask: np.ndarray | None = None,
    cfg: DepthEvalConfig = DepthEvalConfig(),
    scale: float | None = None,
) -> MetricsReport:
    """Abs Rel / Sq Rel / RMSE / RMSE log and delta accuracies.

    Ground-truth pixels outside [min_depth, cap] are excluded before
    scaling; predictions are clamped into the caps after scaling.  An
    explicit `scale` overrides (and disables) internal median scaling,
    which is how externally-fixed scale factors are applied.
    """
    pred_v, pred_ok = _depth_arrays(pred)
    gt_v, gt_ok = _depth_arrays(gt)
    if pred_v.shape != gt_v.shape:
        raise ValueError("prediction and ground truth shapes differ")
    m = gt_ok & pred_ok & (gt_v >= cfg.min_depth) & (gt_v <= cfg.cap)
    if mask is not None:
        m = m & np.asarray(mask, dtype=bool)
    if cfg.crop is not None:
        m = m & _crop_mask(gt_v.shape, cfg.crop)
    if not np.any(m):
        raise EmptyRegionError("empty evaluation region")

    p = pred_v[m]
    g = gt_v[m]
    if scale is not None:
        p = p * scale
    elif cfg.median_scaling:
        p = p * (np.median(g) / np.median(p))
    p = np.clip(p, cfg.min_depth, cfg.cap)

    thresh = np.maximum(p / g, g / p)
    sq = (p - g) ** 2
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(p - g) / g)),
        sq_rel=float(np.mean(sq / g)),
        rmse=float(np.sqrt(np.mean(sq))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25**2)),
        delta3=float(np.mean(thresh < 1.25**3)),
        pixel_count=int(p.size),
    )


_METRIC_FIELDS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


def region_metrics(
    samples: list[tuple],
    legend: dict[int, str],
    cfg: DepthEvalConfig = DepthEvalConfig(),
    background_label: str = "background",
) -> RegionReport:
    """Pixel-count-weighted per-label metrics over many samples.

    Each sample is (pred, gt, label_map).  Per-sample metrics are
    combined by weighting with that sample's pixel count for the label;
    samples without the label contribute nothing.  With median scaling
    and scaling_region='background_only', the per-sample scale comes from
    background pixels alone and is then applied to every region.
    """
    names = [legend[k] for k in sorted(legend)]
    by_index = {k: legend[k] for k in sorted(legend)}
    contributions: dict[str, list[tuple[int, np.ndarray]]] = {n: [] for n in names}
    notes: list[str] = []

    for pred, gt, labels in samples:
        labels = np.asarray(labels)
        scale = None
        if cfg.median_scaling:
            pred_v, pred_ok = _depth_arrays(pred)
            gt_v, gt_ok = _depth_arrays(gt)
            window = gt_ok & pred_ok & (gt_v >= cfg.min_depth) & (gt_v <= cfg.cap)
            if cfg.crop is not None:
                window &= _crop_mask(gt_v.shape, cfg.crop)
            if cfg.scaling_region == "background_only":
                bg_indices = [k for k, v in by_index.items() if v == background_label]
                region = window & np.isin(labels, bg_indices)
                if not np.any(region):
                    region = window
                    notes.append("background absent in a sample; scaled on all pixels")
            else:
                region = window
            if not np.any(region):
                raise EmptyRegionError("no pixels to compute the scaling median over")
            scale = median_scale(pred_v, gt_v, region)

        for index, name in by_index.items():
            sel = labels == index
            if not np.any(sel):
                continue
            try:
                rep = depth_metrics(pred, gt, mask=sel, cfg=cfg, scale=scale if cfg.median_scaling else None)
            except EmptyRegionError:
                continue
            contributions[name].append(
                (rep.pixel_count, np.array([getattr(rep, f) for f in _METRIC_FIELDS]))
            )

    labels_out: dict[str, MetricsReport] = {}
    counts = {n: sum(w for w, _ in contributions[n]) for n in names}
    total = sum(counts.values())
    percents: dict[str, float] = {}
    for name in names:
        parts = contributions[name]
        if not parts:
            notes.append(f"label '{name}' absent in every sample; omitted")
            continue
        if len(parts) == 1:
            vals = parts[0][1]  # exact passthrough for a single sample
        else:
            vals = sum(w * v for w, v in parts) / counts[name]
        labels_out[name] = MetricsReport(
            *[float(x) for x in vals], pixel_count=counts[name]
        )
        percents[name] = 100.0 * counts[name] / total
    return RegionReport(
        labels=labels_out,
        counts={n: counts[n] for n in labels_out},
        percents=percents,
        notes=notes,
    )


def _anchored_positions(poses: list[Pose], start: int, count: int) -> np.ndarray:
    """Window positions expressed in the first pose's camera frame."""
    R0 = poses[start].rotation
    t0 = poses[start].translation
    return np.stack(
        [R0.T @ (poses[start + j].translation - t0) for j in range(count)]
    )


def ate_snippets(
    pred_traj: list[Pose], gt_traj: list[Pose], snippet: int = 5
) -> tuple[float, float]:
    """Absolute trajectory error over sliding fixed-length snippets.

    Each window is rigidly anchored at its first pose, the prediction is
    aligned with a single least-squares scale factor, and the mean
    translational error over the window is recorded.  Returns the mean
    and population standard deviation across windows, in meters.
    """
    if len(pred_traj) != len(gt_traj):
        raise ValueError("trajectories must have equal length")
    if len(gt_traj) < snippet:
        raise TooShortError(f"need at least {snippet} frames, got {len(gt_traj)}")
    window_errors = []
    for start in range(len(gt_traj) - snippet + 1):
        q = _anchored_positions(gt_traj, start, snippet)
        p = _anchored_positions(pred_traj, start, snippet)
        denom = float(np.sum(p * p))
        s = float(np.sum(p * q)) / denom if denom > 1e-30 else 1.0
        window_errors.append(float(np.mean(np.linalg.norm(s * p - q, axis=1))))
    arr = np.asarray(window_errors)
    return float(arr.mean()), float(arr.std())
