"""Synthetic scenes with ground-truth depth, motion labels, and occlusion.

Scenes are a textured fronto-parallel background plane plus planar
sprite objects that may move between frames, rendered by per-pixel ray
casting.  They reproduce the failure modes of photometric supervision
(occlusion, co- and contra-directional object motion) with exact ground
truth, so mask behavior and depth recovery are verifiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as pio
from .geometry import (
    DepthMap,
    Intrinsics,
    Pose,
    Z_EPS,
    compose,
    invert,
    pixel_grid,
    save_trajectory,
)
from .masking import SampleBundle

# Motion-pattern vocabulary; presets use a subset per scenario.
LABELS = ("background", "co_dir", "contra_dir", "slow", "static_object")

PRESET_NAMES = ("static", "co_dir", "contra_dir", "occlusion", "mixed")

# Depth z-test slack when deciding visibility in a source frame.
OCCLUSION_TOLERANCE = 0.01

# Value bands keep object/background contrast >= 0.22 so that occluded or
# mismatched pixels always produce a clearly nonzero photometric error.
_BG_BAND = (0.10, 0.40)
_OBJ_BAND = (0.62, 0.90)


class BadSpecError(ValueError):
    """Scene specification violates a geometric precondition."""


class UnknownPresetError(ValueError):
    """Preset name not in PRESET_NAMES."""


@dataclass(frozen=True)
class BackgroundSpec:
    """Textured plane at constant world depth."""

    distance: float
    texture_seed: int
    texture_frequency: float = 1.0


@dataclass(frozen=True)
class SceneObject:
    """Fronto-parallel planar sprite (constant depth per frame).

    size is the diameter for disks and (width, height) for rectangles,
    in meters; velocity is meters per frame in world coordinates; center
    is the world (x, y) position of the sprite at the target frame.
    """

    shape: str  # "rectangle" | "disk"
    size: tuple[float, float]
    depth: float
    center: tuple[float, float]
    velocity: tuple[float, float, float]
    label: str

    def __post_init__(self):
        if self.shape not in ("rectangle", "disk"):
            raise BadSpecError(f"unknown shape {self.shape!r}")
        if self.label not in LABELS:
            raise BadSpecError(f"unknown motion label {self.label!r}")


@dataclass(frozen=True)
class SceneSpec:
    """Complete description of a renderable scene."""

    background: BackgroundSpec
    objects: tuple[SceneObject, ...]
    camera_motion: Pose  # camera-to-world step applied per +1 frame
    intrinsics: Intrinsics
    frames: tuple[int, ...] = (-1, 0, 1)

    def __post_init__(self):
        if 0 not in self.frames:
            raise BadSpecError("frames must include the target index 0")
        if self.background.distance <= 0:
            raise BadSpecError("background distance must be positive")
        for obj in self.objects:
            if obj.depth <= 0:
                raise BadSpecError("object depth must be positive")
            if obj.depth >= self.background.distance:
                raise BadSpecError("objects must lie in front of the background")

    def to_dict(self) -> dict:
        return {
            "background": {
                "distance": self.background.distance,
                "texture_seed": self.background.texture_seed,
                "texture_frequency": self.background.texture_frequency,
            },
            "objects": [
                {
                    "shape": o.shape,
                    "size": list(o.size),
                    "depth": o.depth,
                    "center": list(o.center),
                    "velocity": list(o.velocity),
                    "label": o.label,
                }
                for o in self.objects
            ],
            "camera_motion": np.hstack(
                [self.camera_motion.rotation, self.camera_motion.translation[:, None]]
            ).reshape(12).tolist(),
            "intrinsics": {
                "fx": self.intrinsics.fx,
                "fy": self.intrinsics.fy,
                "cx": self.intrinsics.cx,
                "cy": self.intrinsics.cy,
                "width": self.intrinsics.width,
                "height": self.intrinsics.height,
            },
            "frames": list(self.frames),
        }

    @staticmethod
    def from_dict(payload: dict) -> "SceneSpec":
        bg = payload["background"]
        cam = np.asarray(payload["camera_motion"], dtype=float).reshape(3, 4)
        return SceneSpec(
            background=BackgroundSpec(
                distance=float(bg["distance"]),
                texture_seed=int(bg["texture_seed"]),
                texture_frequency=float(bg["texture_frequency"]),
            ),
            objects=tuple(
                SceneObject(
                    shape=o["shape"],
                    size=tuple(float(x) for x in o["size"]),
                    depth=float(o["depth"]),
                    center=tuple(float(x) for x in o["center"]),
                    velocity=tuple(float(x) for x in o["velocity"]),
                    label=o["label"],
                )
                for o in payload["objects"]
            ),
            camera_motion=Pose(cam[:, :3], cam[:, 3]),
            intrinsics=Intrinsics(**payload["intrinsics"]),
            frames=tuple(int(f) for f in payload["frames"]),
        )


def save_spec(path, spec: SceneSpec) -> None:
    pio.write_json(path, spec.to_dict())


def load_spec(path) -> SceneSpec:
    return SceneSpec.from_dict(pio.read_json(path))


@dataclass
class RenderedSample:
    """All frames of one scene plus full ground truth."""

    spec: SceneSpec
    images: dict[int, np.ndarray]  # frame -> HxWx3 in [0, 1]
    depths: dict[int, DepthMap]  # frame -> camera-frame depth
    cam_poses: dict[int, Pose]  # frame -> camera-to-world
    rel_poses: dict[int, Pose]  # source frame -> T mapping target coords into it
    occlusion: dict[int, np.ndarray]  # source frame -> HxW bool (invisible there)
    labels: np.ndarray  # HxW int motion-pattern indices at the target frame
    legend: dict[int, str]
    hit_points: dict[int, np.ndarray] = field(default_factory=dict)  # frame -> HxWx3 world


class _Texture:
    """Band-limited procedural texture: 4 seeded sinusoids per axis.

    Values are normalized into [lo, hi] analytically (by the summed
    amplitude), so the field is a pure deterministic function of world
    coordinates regardless of where it is sampled.
    """

    _BASE_FREQS = np.array([0.22, 0.5, 1.05, 2.2])
    _AMPLITUDES = np.array([1.0, 0.75, 0.55, 0.4])

    def __init__(self, seed: int, frequency: float, band: tuple[float, float], channels: int = 3):
        rng = np.random.default_rng(seed)
        self.freq_x = self._BASE_FREQS * frequency * rng.uniform(0.85, 1.15, 4)
        self.freq_y = self._BASE_FREQS * frequency * rng.uniform(0.85, 1.15, 4)
        self.phase_x = rng.uniform(0.0, 2.0 * np.pi, (4, channels))
        self.phase_y = rng.uniform(0.0, 2.0 * np.pi, (4, channels))
        self.lo, self.hi = band
        self.channels = channels
        self.total = 2.0 * float(self._AMPLITUDES.sum())

    def sample(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)[..., None]
        y = np.asarray(y, dtype=float)[..., None]
        s = np.zeros(x.shape[:-1] + (self.channels,))
        for i in range(4):
            s += self._AMPLITUDES[i] * np.sin(
                2.0 * np.pi * self.freq_x[i] * x + self.phase_x[i]
            )
            s += self._AMPLITUDES[i] * np.sin(
                2.0 * np.pi * self.freq_y[i] * y + self.phase_y[i]
            )
        return self.lo + (self.hi - self.lo) * (s + self.total) / (2.0 * self.total)


def _camera_pose(step: Pose, tau: int) -> Pose:
    """Camera-to-world pose after tau steps (tau may be negative)."""
    out = Pose.identity()
    move = step if tau >= 0 else invert(step)
    for _ in range(abs(tau)):
        out = compose(out, move)
    return out


def _object_textures(spec: SceneSpec) -> list[_Texture]:
    return [
        _Texture(
            spec.background.texture_seed + 1009 * (i + 1),
            spec.background.texture_frequency * 1.6,
            _OBJ_BAND,
        )
        for i in range(len(spec.objects))
    ]


def _render_frame(spec: SceneSpec, tau: int, bg_tex: _Texture, obj_tex: list[_Texture]):
    """Ray-cast one frame: returns (image, depth, hit_index, world_points).

    hit_index is -1 for background, else the object index; world_points
    are the first-hit positions used for occlusion testing.
    """
    k = spec.intrinsics
    cam = _camera_pose(spec.camera_motion, tau)
    u, v = pixel_grid(k)
    dirs_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=-1)
    dirs_w = dirs_cam @ cam.rotation.T
    origin = cam.translation
    dz = dirs_w[..., 2]
    dz_safe = np.where(np.abs(dz) < 1e-12, 1e-12, dz)

    t_bg = (spec.background.distance - origin[2]) / dz_safe
    xw = origin[0] + t_bg * dirs_w[..., 0]
    yw = origin[1] + t_bg * dirs_w[..., 1]
    image = bg_tex.sample(xw, yw)
    best_t = t_bg.copy()
    hit = np.full(u.shape, -1, dtype=np.int64)
    points = np.stack([xw, yw, np.full_like(xw, spec.background.distance)], axis=-1)

    for i, obj in enumerate(spec.objects):
        z_plane = obj.depth + tau * obj.velocity[2]
        if z_plane <= 0:
            raise BadSpecError(f"object {i} crosses the camera plane at frame {tau}")
        t_obj = (z_plane - origin[2]) / dz_safe
        ox = origin[0] + t_obj * dirs_w[..., 0]
        oy = origin[1] + t_obj * dirs_w[..., 1]
        cx_t = obj.center[0] + tau * obj.velocity[0]
        cy_t = obj.center[1] + tau * obj.velocity[1]
        lx = ox - cx_t
        ly = oy - cy_t
        if obj.shape == "rectangle":
            inside = (np.abs(lx) <= obj.size[0] / 2.0) & (np.abs(ly) <= obj.size[1] / 2.0)
        else:
            radius = obj.size[0] / 2.0
            inside = lx * lx + ly * ly <= radius * radius
        closer = inside & (t_obj > 1e-6) & (t_obj < best_t)
        if not np.any(closer):
            continue
        # sprite texture rides along with the object (rigid appearance)
        value = obj_tex[i].sample(lx, ly)
        image = np.where(closer[..., None], value, image)
        best_t = np.where(closer, t_obj, best_t)
        hit = np.where(closer, i, hit)
        obj_pts = np.stack([ox, oy, np.full_like(ox, z_plane)], axis=-1)
        points = np.where(closer[..., None], obj_pts, points)

    return image, best_t, hit, points


def _occlusion_mask(
    spec: SceneSpec,
    source: int,
    target_points: np.ndarray,
    target_hit: np.ndarray,
    source_depth: np.ndarray,
) -> np.ndarray:
    """Z-test: re-project target hits into the source and compare depths.

    Object points are advected with their object's velocity so the test
    asks whether the physically corresponding surface point is visible.
    Out-of-view points are not marked occluded (the principled mask owns
    them); points behind the source camera are.
    """
    k = spec.intrinsics
    pts = target_points.copy()
    for i, obj in enumerate(spec.objects):
        sel = target_hit == i
        if np.any(sel):
            shift = source * np.asarray(obj.velocity)
            pts[sel] += shift
    cam_s = _camera_pose(spec.camera_motion, source)
    local = invert(cam_s).apply(pts)
    z = local[..., 2]
    occluded = z <= Z_EPS
    z_safe = np.where(z <= Z_EPS, 1.0, z)
    us = k.fx * local[..., 0] / z_safe + k.cx
    vs = k.fy * local[..., 1] / z_safe + k.cy
    ui = np.round(us).astype(np.int64)
    vi = np.round(vs).astype(np.int64)
    inside = (ui >= 0) & (ui <= k.width - 1) & (vi >= 0) & (vi <= k.height - 1) & ~occluded
    ui_c = np.clip(ui, 0, k.width - 1)
    vi_c = np.clip(vi, 0, k.height - 1)
    blocked = z > source_depth[vi_c, ui_c] * (1.0 + OCCLUSION_TOLERANCE)
    return occluded | (inside & blocked)


def render(spec: SceneSpec) -> RenderedSample:
    """Deterministic pinhole rendering of every frame with full ground truth."""
    bg_tex = _Texture(
        spec.background.texture_seed, spec.background.texture_frequency, _BG_BAND
    )
    obj_tex = _object_textures(spec)

    images: dict[int, np.ndarray] = {}
    depths: dict[int, DepthMap] = {}
    cam_poses: dict[int, Pose] = {}
    hit_points: dict[int, np.ndarray] = {}
    hits: dict[int, np.ndarray] = {}
    for tau in spec.frames:
        image, depth, hit, points = _render_frame(spec, tau, bg_tex, obj_tex)
        images[tau] = image
        depths[tau] = DepthMap(depth)
        cam_poses[tau] = _camera_pose(spec.camera_motion, tau)
        hit_points[tau] = points
        hits[tau] = hit

    rel_poses = {
        s: compose(invert(cam_poses[s]), cam_poses[0]) for s in spec.frames if s != 0
    }
    occlusion = {
        s: _occlusion_mask(spec, s, hit_points[0], hits[0], depths[s].values)
        for s in spec.frames
        if s != 0
    }

    labels = hits[0] + 1  # 0 = background, i + 1 = object i
    legend = {0: "background"}
    for i, obj in enumerate(spec.objects):
        legend[i + 1] = obj.label

    return RenderedSample(
        spec=spec,
        images=images,
        depths=depths,
        cam_poses=cam_poses,
        rel_poses=rel_poses,
        occlusion=occlusion,
        labels=labels,
        legend=legend,
        hit_points=hit_points,
    )


def preset(name: str, texture_seed: int | None = None) -> SceneSpec:
    """Deterministic 128x96, 3-frame scene exercising the named phenomenon.

    texture_seed overrides the preset's fixed seed, giving independent
    texture draws of the same geometry (used for multi-seed studies).
    """
    k = Intrinsics(fx=128.0, fy=128.0, cx=63.5, cy=47.5, width=128, height=96)
    identity = np.eye(3)

    if name == "static":
        # Pure lateral motion with depths 8, 4, and 8/3 m: every surface
        # shifts by a multiple of 8 px per frame, so ground-truth warping
        # is lossless at all four pyramid scales.
        spec = SceneSpec(
            background=BackgroundSpec(8.0, texture_seed if texture_seed is not None else 101),
            objects=(
                SceneObject("disk", (1.1, 1.1), 4.0, (0.9, 0.3), (0.0, 0.0, 0.0), "static_object"),
                SceneObject("rectangle", (0.75, 0.55), 8.0 / 3.0, (-0.7, -0.45), (0.0, 0.0, 0.0), "static_object"),
            ),
            camera_motion=Pose(identity, (0.5, 0.0, 0.0)),
            intrinsics=k,
        )
    elif name == "co_dir":
        spec = SceneSpec(
            background=BackgroundSpec(9.0, texture_seed if texture_seed is not None else 202),
            objects=(
                SceneObject("rectangle", (1.5, 1.1), 6.5, (0.15, 0.1), (0.076, 0.0, 0.209), "co_dir"),
                SceneObject("disk", (0.9, 0.9), 3.5, (-1.1, -0.3), (0.0, 0.0, 0.0), "static_object"),
            ),
            camera_motion=Pose(identity, (0.08, 0.0, 0.22)),
            intrinsics=k,
        )
    elif name == "contra_dir":
        spec = SceneSpec(
            background=BackgroundSpec(8.0, texture_seed if texture_seed is not None else 303),
            objects=(
                SceneObject("rectangle", (1.5, 1.0), 5.5, (0.4, 0.05), (-0.10, 0.0, -0.45), "contra_dir"),
                SceneObject("disk", (0.8, 0.8), 3.2, (-1.0, -0.4), (0.0, 0.0, 0.0), "static_object"),
            ),
            camera_motion=Pose(identity, (0.35, 0.0, 0.12)),
            intrinsics=k,
        )
    elif name == "occlusion":
        spec = SceneSpec(
            background=BackgroundSpec(10.0, texture_seed if texture_seed is not None else 404),
            objects=(
                SceneObject("disk", (1.0, 1.0), 2.5, (0.25, 0.1), (0.0, 0.0, 0.0), "static_object"),
            ),
            camera_motion=Pose(identity, (0.05, 0.0, 0.30)),
            intrinsics=k,
        )
    elif name == "mixed":
        spec = SceneSpec(
            background=BackgroundSpec(9.0, texture_seed if texture_seed is not None else 505),
            objects=(
                SceneObject("rectangle", (1.4, 1.0), 6.0, (0.7, 0.15), (0.285, 0.0, 0.1425), "co_dir"),
                SceneObject("rectangle", (1.3, 0.9), 5.0, (-0.5, 0.0), (-0.05, 0.0, -0.2), "contra_dir"),
                SceneObject("disk", (0.9, 0.9), 4.0, (1.2, -0.4), (0.06, 0.0, 0.03), "slow"),
                SceneObject("disk", (0.7, 0.7), 3.0, (-1.3, -0.5), (0.0, 0.0, 0.0), "static_object"),
            ),
            camera_motion=Pose(identity, (0.3, 0.0, 0.15)),
            intrinsics=k,
        )
    else:
        raise UnknownPresetError(f"unknown preset {name!r}; known: {PRESET_NAMES}")
    return spec


def bundle_from_scene(sample: RenderedSample, scales: int = 4) -> SampleBundle:
    """SampleBundle over the target frame with ground truth attached."""
    sources = [s for s in sample.spec.frames if s != 0]
    return SampleBundle(
        target=sample.images[0],
        sources=[sample.images[s] for s in sources],
        intrinsics=sample.spec.intrinsics,
        scales=scales,
        source_ids=sources,
        gt_depth=sample.depths[0].values,
        gt_poses=[sample.rel_poses[s] for s in sources],
        labels=sample.labels,
        legend=sample.legend,
    )


def boundary_band(labels: np.ndarray, radius: int = 1) -> np.ndarray:
    """Pixels within `radius` of a label discontinuity (rasterization band)."""
    edge = np.zeros(labels.shape, dtype=bool)
    edge[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    edge[:, :-1] |= labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= labels[1:, :] != labels[:-1, :]
    edge[:-1, :] |= labels[1:, :] != labels[:-1, :]
    band = edge
    for _ in range(radius - 1):
        grown = band.copy()
        grown[1:, :] |= band[:-1, :]
        grown[:-1, :] |= band[1:, :]
        grown[:, 1:] |= band[:, :-1]
        grown[:, :-1] |= band[:, 1:]
        band = grown
    return band


def export_sample(sample: RenderedSample, out_dir) -> list[str]:
    """Write images, depth (PFM + 16-bit PNG), labels, occlusion, and poses.

    Returns the list of written file names (relative to out_dir).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    for tau in sample.spec.frames:
        name = f"frame_{tau}.png"
        pio.write_image_png(out / name, sample.images[tau])
        written.append(name)
        pfm = f"depth_{tau}.pfm"
        pio.write_pfm(out / pfm, sample.depths[tau].values)
        written.append(pfm)
        png16 = f"depth_{tau}.png"
        pio.write_depth_png(out / png16, sample.depths[tau].values, sample.depths[tau].valid)
        written.append(png16)

    pio.write_label_png(out / "labels.png", sample.labels, sample.legend)
    written += ["labels.png", "labels_legend.json"]

    for s, occ in sorted(sample.occlusion.items()):
        name = f"occlusion_{s}.png"
        pio.write_mask_png(out / name, occ)
        written.append(name)

    save_trajectory(out / "poses.txt", [sample.cam_poses[t] for t in sample.spec.frames])
    written.append("poses.txt")
    save_spec(out / "scene_spec.json", sample.spec)
    written.append("scene_spec.json")
    return written
