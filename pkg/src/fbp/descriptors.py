"""Classical baseline descriptors: HOG, uniform LBP histograms, raw grayscale.

All three operate on 224x224 grayscale images with values in [0, 255].
Output lengths are fixed by the geometry: HOG 27*27*36 = 26244,
LBP 14*14*59 = 11564, gray 224*224 = 50176.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError
from .features import FeatureVector

SIDE = 224

HOG_ORIENTATIONS = 9
HOG_CELL = 8          # pixels per cell side
HOG_BLOCK = 2         # cells per block side, stride 1 cell
HOG_CLIP = 0.2        # L2-Hys clipping level
HOG_DIM = (SIDE // HOG_CELL - 1) ** 2 * HOG_BLOCK * HOG_BLOCK * HOG_ORIENTATIONS

LBP_BLOCK = 16        # pixels per histogram block side
LBP_BINS = 59         # 58 uniform patterns + 1 catch-all
LBP_DIM = (SIDE // LBP_BLOCK) ** 2 * LBP_BINS

GRAY_DIM = SIDE * SIDE

DESCRIPTOR_KINDS = ("hog", "lbp", "gray")

# ITU-R 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class DescriptorConfig:
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in DESCRIPTOR_KINDS:
            raise ConfigurationError(f"unknown descriptor kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return {"hog": HOG_DIM, "lbp": LBP_DIM, "gray": GRAY_DIM}[self.kind]


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    """Collapse (3, H, W) to (H, W) with ITU-R 601 luma; gray passes through."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0]
    if img.ndim == 3 and img.shape[0] == 3:
        return np.tensordot(_LUMA, img.astype(np.float64), axes=1).astype(np.float32)
    raise ShapeError(f"expected (H, W) or (1|3, H, W), got shape {img.shape}")


def _check_gray_224(img: np.ndarray) -> np.ndarray:
    gray = rgb_to_gray(img)
    if gray.shape != (SIDE, SIDE):
        raise ShapeError(f"descriptor input must be {SIDE}x{SIDE}, got {gray.shape}")
    return gray.astype(np.float64)


def hog(img: np.ndarray) -> FeatureVector:
    """Dalal-Triggs style HOG: centered-difference gradients, 9 unsigned
    orientation bins with linear vote interpolation, 8x8 cells, 2x2-cell
    blocks at 1-cell stride, L2-Hys normalization."""
    g = _check_gray_224(img)
    gx = np.zeros_like(g)
    gy = np.zeros_like(g)
    gx[:, 1:-1] = g[:, 2:] - g[:, :-2]
    gy[1:-1, :] = g[2:, :] - g[:-2, :]
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0

    pos = ang / (180.0 / HOG_ORIENTATIONS)
    b0 = np.floor(pos).astype(np.intp) % HOG_ORIENTATIONS
    frac = pos - np.floor(pos)
    b1 = (b0 + 1) % HOG_ORIENTATIONS

    n_cells = SIDE // HOG_CELL
    ys, xs = np.divmod(np.arange(SIDE * SIDE), SIDE)
    cell = (ys // HOG_CELL) * n_cells + xs // HOG_CELL
    idx0 = cell * HOG_ORIENTATIONS + b0.ravel()
    idx1 = cell * HOG_ORIENTATIONS + b1.ravel()
    n_hist = n_cells * n_cells * HOG_ORIENTATIONS
    hist = np.bincount(idx0, weights=(mag * (1.0 - frac)).ravel(), minlength=n_hist)
    hist += np.bincount(idx1, weights=(mag * frac).ravel(), minlength=n_hist)
    cells = hist.reshape(n_cells, n_cells, HOG_ORIENTATIONS)

    n_blocks = n_cells - 1
    blocks = np.concatenate(
        [
            cells[:n_blocks, :n_blocks],
            cells[:n_blocks, 1:],
            cells[1:, :n_blocks],
            cells[1:, 1:],
        ],
        axis=2,
    )  # (27, 27, 36), cells row-major within each block
    eps = 1e-10
    norm = np.sqrt((blocks ** 2).sum(axis=2, keepdims=True) + eps * eps)
    blocks = np.clip(blocks / norm, 0.0, HOG_CLIP)
    norm = np.sqrt((blocks ** 2).sum(axis=2, keepdims=True) + eps * eps)
    blocks = blocks / norm
    return FeatureVector(values=blocks.ravel().astype(np.float32), source="hog")


def _uniform_lut() -> np.ndarray:
    def transitions(code: int) -> int:
        bits = [(code >> i) & 1 for i in range(8)]
        return sum(bits[i] != bits[(i + 1) % 8] for i in range(8))

    uniform = [c for c in range(256) if transitions(c) <= 2]
    lut = np.full(256, LBP_BINS - 1, dtype=np.intp)
    for bin_index, code in enumerate(uniform):
        lut[code] = bin_index
    return lut


_LBP_LUT = _uniform_lut()

# clockwise from the top-left neighbor; first neighbor is the most
# significant bit of the 8-bit code
_LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def lbp(img: np.ndarray) -> FeatureVector:
    """Uniform LBP (radius 1, 8 neighbors, neighbor >= center) histogrammed
    over 16x16 pixel blocks; 59 bins per block."""
    g = _check_gray_224(img)
    center = g[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.intp)
    for bit, (dy, dx) in enumerate(_LBP_OFFSETS):
        neighbor = g[1 + dy:SIDE - 1 + dy, 1 + dx:SIDE - 1 + dx]
        codes |= (neighbor >= center).astype(np.intp) << (7 - bit)
    bins = _LBP_LUT[codes]

    n_blocks = SIDE // LBP_BLOCK
    interior = np.arange(1, SIDE - 1)  # image-frame coordinates of coded pixels
    by = interior // LBP_BLOCK
    block = by[:, None] * n_blocks + by[None, :]
    combined = block.ravel() * LBP_BINS + bins.ravel()
    hist = np.bincount(combined, minlength=n_blocks * n_blocks * LBP_BINS)
    return FeatureVector(values=hist.astype(np.float32), source="lbp")


def gray_flatten(img: np.ndarray) -> FeatureVector:
    """Row-major flatten of the grayscale image, standardized per image."""
    g = _check_gray_224(img).ravel()
    std = g.std()
    values = np.zeros_like(g) if std < 1e-8 else (g - g.mean()) / std
    return FeatureVector(values=values.astype(np.float32), source="gray")


def extract_descriptor(img: np.ndarray, kind: str) -> FeatureVector:
    config = DescriptorConfig(kind)
    fn = {"hog": hog, "lbp": lbp, "gray": gray_flatten}[config.kind]
    return fn(img)
