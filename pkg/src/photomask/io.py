"""File formats: PFM and millimeter-scaled PNG depth, images, labels, masks."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

# 16-bit depth PNG convention: stored value = meters * 256, 0 = invalid.
DEPTH_PNG_SCALE = 256.0

# Fixed palette for label PNGs; index 0 (background) is dark gray.
_LABEL_COLORS = [
    (64, 64, 64),
    (230, 80, 60),
    (60, 130, 230),
    (70, 200, 90),
    (240, 200, 60),
    (180, 90, 220),
    (70, 210, 210),
    (240, 140, 40),
]


def write_pfm(path, values: np.ndarray) -> None:
    """Write a grayscale little-endian PFM (rows stored bottom-to-top)."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("PFM writer expects an HxW array")
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{arr.shape[1]} {arr.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM; handles both endianness markers."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM (header {header!r})")
        dims = fh.readline().split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(fh.read(width * height * 4), dtype=dtype)
    return np.flipud(data.reshape(height, width)).astype(float)


def write_depth_png(path, values: np.ndarray, valid: np.ndarray | None = None) -> None:
    """16-bit PNG with value = meters * 256; invalid pixels stored as 0."""
    arr = np.asarray(values, dtype=float)
    raw = np.round(arr * DEPTH_PNG_SCALE)
    raw = np.clip(raw, 0, 65535).astype(np.uint16)
    if valid is not None:
        raw = np.where(np.asarray(valid, dtype=bool), raw, 0).astype(np.uint16)
    Image.fromarray(raw, mode="I;16").save(path)


def read_depth_png(path) -> tuple[np.ndarray, np.ndarray]:
    """(meters, valid) from a 16-bit depth PNG; 0 decodes as invalid."""
    raw = np.asarray(Image.open(path), dtype=np.uint32)
    valid = raw > 0
    return raw.astype(float) / DEPTH_PNG_SCALE, valid


def read_depth_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Dispatch on extension: .pfm or 16-bit .png depth."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        values = read_pfm(path)
        return values, np.isfinite(values) & (values > 0)
    if path.suffix.lower() == ".png":
        return read_depth_png(path)
    raise ValueError(f"unsupported depth format: {path.suffix}")


def write_image_png(path, image: np.ndarray) -> None:
    """8-bit PNG from intensities in [0, 1] (HxW grayscale or HxWx3 RGB)."""
    arr = np.asarray(image, dtype=float)
    raw = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if raw.ndim == 3 and raw.shape[2] == 1:
        raw = raw[:, :, 0]
    Image.fromarray(raw).save(path)


def read_image_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=float) / 255.0
    return arr


def write_mask_png(path, mask: np.ndarray) -> None:
    """8-bit PNG, 255 = kept, 0 = masked out."""
    raw = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(raw, mode="L").save(path)


def read_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) >= 128


def write_label_png(path, labels: np.ndarray, legend: dict[int, str]) -> None:
    """8-bit indexed PNG plus a sidecar JSON legend next to it."""
    arr = np.asarray(labels)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("label indices must fit in uint8")
    img = Image.fromarray(arr.astype(np.uint8), mode="P")
    palette = []
    for i in range(256):
        palette.extend(_LABEL_COLORS[i % len(_LABEL_COLORS)])
    img.putpalette(palette)
    img.save(path)
    legend_path = Path(path).with_name(Path(path).stem + "_legend.json")
    with open(legend_path, "w") as fh:
        json.dump({str(k): v for k, v in sorted(legend.items())}, fh, indent=2)
        fh.write("\n")


def read_label_png(path) -> tuple[np.ndarray, dict[int, str]]:
    arr = np.asarray(Image.open(path), dtype=np.int64)
    legend_path = Path(path).with_name(Path(path).stem + "_legend.json")
    with open(legend_path) as fh:
        legend = {int(k): v for k, v in json.load(fh).items()}
    return arr, legend


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
