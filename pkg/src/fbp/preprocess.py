"""Image decoding and the squaring/alignment/normalization pipeline.

Images are float32 arrays laid out channels x height x width with pixel
values in [0, 255]; 1 channel for grayscale, 3 for RGB. Every squaring mode
ends at 3x224x224, which ``normalize`` then standardizes per image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigurationError, DataError, ShapeError

TARGET_SIDE = 224

SQUARE_MODES = ("crop", "warp", "padding")
ALIGN_MODES = ("none", "eyes")


@dataclass(frozen=True)
class FaceAnnotation:
    """Externally detected face geometry; any field may be absent."""

    image_id: str
    bbox: tuple[float, float, float, float] | None = None  # left, top, width, height
    landmarks: np.ndarray | None = None  # (68, 2) x/y pixel coordinates
    left_eye: tuple[float, float] | None = None
    right_eye: tuple[float, float] | None = None

    def has_eyes(self) -> bool:
        return self.left_eye is not None and self.right_eye is not None


@dataclass(frozen=True)
class PreprocessConfig:
    mode: str = "crop"
    align: str = "none"

    def __post_init__(self) -> None:
        if self.mode not in SQUARE_MODES:
            raise ConfigurationError(f"unknown squaring mode {self.mode!r}")
        if self.align not in ALIGN_MODES:
            raise ConfigurationError(f"unknown alignment mode {self.align!r}")


def load_annotations(path) -> dict[str, FaceAnnotation]:
    """Read the JSON sidecar mapping image id to detected face geometry."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    out: dict[str, FaceAnnotation] = {}
    for image_id, fields in raw.items():
        landmarks = None
        if fields.get("landmarks") is not None:
            landmarks = np.asarray(fields["landmarks"], dtype=np.float64)
            if landmarks.shape != (68, 2):
                raise DataError(
                    f"annotation for {image_id!r} has {landmarks.shape[0] if landmarks.ndim else 0}"
                    " landmarks, expected exactly 68"
                )
        bbox = fields.get("bbox")
        out[image_id] = FaceAnnotation(
            image_id=image_id,
            bbox=tuple(float(v) for v in bbox) if bbox is not None else None,
            landmarks=landmarks,
            left_eye=tuple(fields["left_eye"]) if fields.get("left_eye") else None,
            right_eye=tuple(fields["right_eye"]) if fields.get("right_eye") else None,
        )
    return out


def load_image(path) -> np.ndarray:
    """Decode a PNG/JPEG into (C, H, W) float32 in [0, 255]; grayscale stays 1-channel."""
    with Image.open(path) as img:
        if img.mode in ("L", "I", "I;16", "F"):
            arr = np.asarray(img.convert("L"), dtype=np.float32)
            return arr[None, :, :]
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
        return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ShapeError(f"image must be (1|3, H, W), got shape {img.shape}")
    return img


def gray_to_rgb(img: np.ndarray) -> np.ndarray:
    """Replicate a single gray channel into three; 3-channel input is returned as is."""
    img = _check_image(img)
    if img.shape[0] == 3:
        return img
    return np.repeat(img, 3, axis=0)


def resize_bilinear(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resample; source coordinate (dst + 0.5) * scale - 0.5, clamped."""
    img = _check_image(img)
    _, h, w = img.shape
    sy = np.clip((np.arange(new_h) + 0.5) * (h / new_h) - 0.5, 0.0, h - 1.0)
    sx = np.clip((np.arange(new_w) + 0.5) * (w / new_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0).astype(np.float32)[None, :, None]
    fx = (sx - x0).astype(np.float32)[None, None, :]
    rows0, rows1 = img[:, y0], img[:, y1]
    top = rows0[:, :, x0] * (1 - fx) + rows0[:, :, x1] * fx
    bot = rows1[:, :, x0] * (1 - fx) + rows1[:, :, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


def _center_square(h: int, w: int) -> tuple[int, int, int]:
    side = min(h, w)
    return (h - side) // 2, (w - side) // 2, side


def square_crop(img: np.ndarray, ann: FaceAnnotation | None) -> np.ndarray:
    """Crop the face region expanded to a square, then resize to 224.

    The square is centered on the bounding box center with side max(bbox w, h),
    clamped to stay inside the image. Without a usable bounding box the
    centered square of side min(H, W) is used instead.
    """
    img = _check_image(img)
    _, h, w = img.shape
    if ann is None or ann.bbox is None:
        top, left, side = _center_square(h, w)
    else:
        l, t, bw, bh = ann.bbox
        x0, x1 = np.clip([l, l + bw], 0.0, float(w))
        y0, y1 = np.clip([t, t + bh], 0.0, float(h))
        if x1 - x0 < 1.0 or y1 - y0 < 1.0:
            top, left, side = _center_square(h, w)
        else:
            side = int(round(min(max(x1 - x0, y1 - y0), float(min(h, w)))))
            side = max(side, 1)
            cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
            left = int(np.clip(round(cx - side / 2.0), 0, w - side))
            top = int(np.clip(round(cy - side / 2.0), 0, h - side))
    crop = img[:, top:top + side, left:left + side]
    return resize_bilinear(crop, TARGET_SIDE, TARGET_SIDE)


def square_warp(img: np.ndarray) -> np.ndarray:
    """Anisotropic resize straight to 224x224."""
    return resize_bilinear(_check_image(img), TARGET_SIDE, TARGET_SIDE)


def square_pad(img: np.ndarray) -> np.ndarray:
    """Scale the longer side to 224 and zero-pad the shorter side symmetrically.

    When the padding is odd the trailing side receives the extra pixel.
    """
    img = _check_image(img)
    c, h, w = img.shape
    if h >= w:
        new_h, new_w = TARGET_SIDE, max(1, round(w * TARGET_SIDE / h))
    else:
        new_h, new_w = max(1, round(h * TARGET_SIDE / w)), TARGET_SIDE
    resized = resize_bilinear(img, new_h, new_w)
    out = np.zeros((c, TARGET_SIDE, TARGET_SIDE), dtype=np.float32)
    top = (TARGET_SIDE - new_h) // 2
    left = (TARGET_SIDE - new_w) // 2
    out[:, top:top + new_h, left:left + new_w] = resized
    return out


def eye_angle(ann: FaceAnnotation) -> float:
    """Inclination of the eye line to the horizontal, radians."""
    lx, ly = ann.left_eye
    rx, ry = ann.right_eye
    return math.atan2(ry - ly, rx - lx)


def rotate_points(points: np.ndarray, angle: float, center: tuple[float, float]) -> np.ndarray:
    """Rotate (N, 2) x/y points by ``angle`` radians about ``center``."""
    pts = np.asarray(points, dtype=np.float64) - center
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + center


def rotate_annotation(ann: FaceAnnotation, angle: float, center: tuple[float, float]) -> FaceAnnotation:
    """Annotation geometry after rotating the image content by ``angle``."""
    bbox = ann.bbox
    if bbox is not None:
        l, t, bw, bh = bbox
        corners = np.array([[l, t], [l + bw, t], [l, t + bh], [l + bw, t + bh]])
        moved = rotate_points(corners, angle, center)
        x0, y0 = moved.min(axis=0)
        x1, y1 = moved.max(axis=0)
        bbox = (float(x0), float(y0), float(x1 - x0), float(y1 - y0))
    move = lambda p: tuple(rotate_points(np.array([p]), angle, center)[0])
    return FaceAnnotation(
        image_id=ann.image_id,
        bbox=bbox,
        landmarks=rotate_points(ann.landmarks, angle, center) if ann.landmarks is not None else None,
        left_eye=move(ann.left_eye) if ann.left_eye is not None else None,
        right_eye=move(ann.right_eye) if ann.right_eye is not None else None,
    )


def rotate_align(img: np.ndarray, ann: FaceAnnotation | None) -> np.ndarray:
    """Rotate the image about its center so the eye line becomes horizontal.

    Inverse-mapping bilinear sampling with zero fill. Missing eye centers
    skip the alignment and return the image unchanged.
    """
    img = _check_image(img)
    if ann is None or not ann.has_eyes():
        return img
    theta = eye_angle(ann)
    if abs(theta) < 1e-12:
        return img
    _, h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # content rotates by -theta, so sample the source at R(theta) (dst - c) + c
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    dx, dy = xs - cx, ys - cy
    sx = cos_t * dx - sin_t * dy + cx
    sy = sin_t * dx + cos_t * dy + cy
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = (sx - x0).astype(np.float32)
    fy = (sy - y0).astype(np.float32)
    out = np.zeros_like(img)
    for yi, xi, wgt in (
        (y0, x0, (1 - fy) * (1 - fx)),
        (y0, x0 + 1, (1 - fy) * fx),
        (y0 + 1, x0, fy * (1 - fx)),
        (y0 + 1, x0 + 1, fy * fx),
    ):
        valid = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yc = np.clip(yi, 0, h - 1)
        xc = np.clip(xi, 0, w - 1)
        out += img[:, yc, xc] * (wgt * valid)
    return out


def normalize(img: np.ndarray) -> np.ndarray:
    """Standardize by the scalar mean and population std over all pixels.

    Degenerate images (std below 1e-8) map to all zeros.
    """
    img = _check_image(img)
    mean = float(img.mean(dtype=np.float64))
    std = float(img.std(dtype=np.float64))
    if std < 1e-8:
        return np.zeros_like(img)
    return ((img - mean) / std).astype(np.float32)


def preprocess(
    img: np.ndarray,
    ann: FaceAnnotation | None = None,
    config: PreprocessConfig = PreprocessConfig(),
) -> np.ndarray:
    """Full input pipeline: gray replication, optional eye alignment, squaring,
    per-image standardization. Returns a normalized 3x224x224 tensor."""
    img = gray_to_rgb(_check_image(img))
    if config.align == "eyes" and ann is not None and ann.has_eyes():
        theta = eye_angle(ann)
        _, h, w = img.shape
        img = rotate_align(img, ann)
        ann = rotate_annotation(ann, -theta, ((w - 1) / 2.0, (h - 1) / 2.0))
    if config.mode == "crop":
        img = square_crop(img, ann)
    elif config.mode == "warp":
        img = square_warp(img)
    else:
        img = square_pad(img)
    return normalize(img)
