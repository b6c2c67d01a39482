"""Feature fusion and on-disk feature matrices.

Tapped activations are flattened row-major and concatenated in declared tap
order into one flat vector per image. Extraction is the expensive stage, so
matrices are persisted in the FMX1 binary format and reloaded for training
and evaluation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ShapeError
from .nn import WeightStore, forward_taps, tap_shape


# fusion presets: low+high taps for the 500-image rating corpus, the two
# deepest conv taps for the harder web-scraped corpus
SCUT_TAPS: tuple[str, ...] = ("conv4_1", "conv5_1")
HOTORNOT_TAPS: tuple[str, ...] = ("conv5_2", "conv5_3")


@dataclass(frozen=True)
class FeatureVector:
    """Flat feature vector with provenance of how it was produced."""

    values: np.ndarray
    source: str
    post_relu: bool = False

    def __post_init__(self) -> None:
        if self.values.ndim != 1 or self.values.size == 0:
            raise ShapeError("feature vector must be a non-empty 1-D array")

    @property
    def dim(self) -> int:
        return int(self.values.size)


def fuse_taps(taps: Mapping[str, np.ndarray], post_relu: bool = True) -> FeatureVector:
    """Flatten each tap row-major and concatenate in the declared tap order."""
    if not taps:
        raise ConfigurationError("at least one tap is required for fusion")
    flat = [np.asarray(t, dtype=np.float32).ravel() for t in taps.values()]
    return FeatureVector(
        values=np.concatenate(flat),
        source="taps:" + "+".join(taps),
        post_relu=post_relu,
    )


def fused_dim(taps: Sequence[str]) -> int:
    """Feature length produced by fusing the named taps (224x224 input)."""
    return sum(int(np.prod(tap_shape(t))) for t in taps)


def layer_sweep_features(
    images: Sequence[np.ndarray],
    weights: WeightStore,
    layers: Sequence[str],
    pre_relu: bool = False,
) -> dict[str, list[FeatureVector]]:
    """Single-tap feature vectors per layer, one forward pass per image."""
    if not layers:
        return {}
    out: dict[str, list[FeatureVector]] = {layer: [] for layer in layers}
    for img in images:
        taps = forward_taps(img, weights, list(layers), pre_relu=pre_relu)
        for layer in layers:
            out[layer].append(
                fuse_taps({layer: taps[layer]}, post_relu=not pre_relu)
            )
    return out


FMX_MAGIC = b"FMX1"


def feature_matrix_bytes(matrix: np.ndarray, ids: Sequence[str]) -> bytes:
    """Serialize a feature matrix: magic, u32 rows/cols, float32 data, id list."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    if matrix.shape[0] != len(ids):
        raise ShapeError(f"{matrix.shape[0]} rows but {len(ids)} ids")
    payload = json.dumps(list(ids)).encode("utf-8")
    return b"".join(
        (
            FMX_MAGIC,
            struct.pack("<II", matrix.shape[0], matrix.shape[1]),
            matrix.tobytes(),
            struct.pack("<I", len(payload)),
            payload,
        )
    )


def parse_feature_matrix(blob: bytes) -> tuple[np.ndarray, list[str]]:
    if blob[:4] != FMX_MAGIC:
        raise DataError("bad magic in feature matrix")
    if len(blob) < 12:
        raise DataError("truncated feature matrix")
    rows, cols = struct.unpack_from("<II", blob, 4)
    end = 12 + 4 * rows * cols
    if len(blob) < end + 4:
        raise DataError("truncated feature matrix")
    matrix = np.frombuffer(blob[12:end], dtype="<f4").reshape(rows, cols).copy()
    (n_json,) = struct.unpack_from("<I", blob, end)
    ids = json.loads(blob[end + 4:end + 4 + n_json].decode("utf-8"))
    if len(ids) != rows:
        raise DataError(f"id list length {len(ids)} does not match {rows} rows")
    return matrix, [str(i) for i in ids]


def write_feature_matrix(path, matrix: np.ndarray, ids: Sequence[str]) -> None:
    with open(path, "wb") as fh:
        fh.write(feature_matrix_bytes(matrix, ids))


def read_feature_matrix(path) -> tuple[np.ndarray, list[str]]:
    try:
        with open(path, "rb") as fh:
            return parse_feature_matrix(fh.read())
    except DataError as exc:
        raise DataError(f"{exc} ({path})") from None


def feature_mapping(matrix: np.ndarray, ids: Sequence[str]) -> dict[str, np.ndarray]:
    """Row view per image id, the shape run_experiment consumes."""
    return {image_id: matrix[i] for i, image_id in enumerate(ids)}
