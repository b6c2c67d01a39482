"""Minimal CNN forward-pass engine for the VGG16 convolutional stack.

Activations and kernels are plain float32 numpy arrays: activations are laid
out channels x height x width, conv kernels out-channels x in-channels x 3 x 3.
Weights are loaded from the BWF1 binary format documented next to
``load_weights``. The engine only runs as deep as the requested taps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ShapeError,
    WeightFormatError,
    WeightValidationError,
)

# Canonical VGG16 conv plan: (in_channels, out_channels) per conv layer.
CONV_CHANNELS: dict[str, tuple[int, int]] = {
    "conv1_1": (3, 64),
    "conv1_2": (64, 64),
    "conv2_1": (64, 128),
    "conv2_2": (128, 128),
    "conv3_1": (128, 256),
    "conv3_2": (256, 256),
    "conv3_3": (256, 256),
    "conv4_1": (256, 512),
    "conv4_2": (512, 512),
    "conv4_3": (512, 512),
    "conv5_1": (512, 512),
    "conv5_2": (512, 512),
    "conv5_3": (512, 512),
}

# Execution order of the convolutional stack (no fully-connected layers).
LAYER_SEQUENCE: tuple[str, ...] = (
    "conv1_1", "conv1_2", "pool1",
    "conv2_1", "conv2_2", "pool2",
    "conv3_1", "conv3_2", "conv3_3", "pool3",
    "conv4_1", "conv4_2", "conv4_3", "pool4",
    "conv5_1", "conv5_2", "conv5_3", "pool5",
)

TAP_NAMES: frozenset[str] = frozenset(LAYER_SEQUENCE)

INPUT_SHAPE = (3, 224, 224)


def tap_shape(name: str) -> tuple[int, int, int]:
    """Activation shape produced at a named tap for a 3x224x224 input."""
    if name not in TAP_NAMES:
        raise ConfigurationError(f"unknown tap name {name!r}")
    side = 224
    channels = 3
    for layer in LAYER_SEQUENCE:
        if layer.startswith("pool"):
            side //= 2
        else:
            channels = CONV_CHANNELS[layer][1]
        if layer == name:
            return (channels, side, side)
    raise AssertionError("unreachable")


@dataclass
class VggConfig:
    """Requested taps plus whether conv taps are read before the ReLU."""

    taps: tuple[str, ...]
    pre_relu: bool = False

    def __post_init__(self) -> None:
        unknown = [t for t in self.taps if t not in TAP_NAMES]
        if unknown:
            raise ConfigurationError(f"unknown tap name(s): {', '.join(unknown)}")


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 convolution with stride 1 and zero padding 1 (spatial size kept).

    ``out[o, y, x] = bias[o] + sum_{c,dy,dx} x[c, y+dy-1, x+dx-1] * weight[o, c, dy, dx]``
    with out-of-bounds input reads taken as zero.
    """
    x = np.asarray(x, dtype=np.float32)
    weight = np.asarray(weight, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be CxHxW, got shape {x.shape}")
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d weight must be OxCx3x3, got shape {weight.shape}")
    c, h, w = x.shape
    o = weight.shape[0]
    if weight.shape[1] != c:
        raise ShapeError(
            f"channel mismatch: input has {c} channels, weight expects {weight.shape[1]}"
        )
    if bias.shape != (o,):
        raise ShapeError(f"bias must have length {o}, got shape {bias.shape}")

    padded = np.zeros((c, h + 2, w + 2), dtype=np.float32)
    padded[:, 1:-1, 1:-1] = x
    # im2col: one (C*9, H*W) matrix and a single GEMM per call.
    cols = np.empty((c, 9, h, w), dtype=np.float32)
    k = 0
    for dy in range(3):
        for dx in range(3):
            cols[:, k] = padded[:, dy:dy + h, dx:dx + w]
            k += 1
    out = weight.reshape(o, c * 9) @ cols.reshape(c * 9, h * w)
    out += bias[:, None]
    return out.reshape(o, h, w)


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(0, x)."""
    return np.maximum(np.asarray(x, dtype=np.float32), np.float32(0))


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling with stride 2; spatial extents must be even."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ShapeError(f"maxpool2 input must be CxHxW, got shape {x.shape}")
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial extents, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


@dataclass
class WeightStore:
    """Named tensors loaded from (or destined for) a BWF1 file.

    Immutable by convention after load; safe to share across concurrent
    forward passes.
    """

    entries: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 1
    provenance: str = ""

    def conv_pair(self, layer: str) -> tuple[np.ndarray, np.ndarray]:
        return self.entries[f"{layer}.weight"], self.entries[f"{layer}.bias"]

    def has_layer(self, layer: str) -> bool:
        return f"{layer}.weight" in self.entries and f"{layer}.bias" in self.entries


BWF_MAGIC = b"BWF1"
BWF_VERSION = 1


def _validate_entries(entries: dict[str, np.ndarray]) -> None:
    for name, arr in entries.items():
        layer, _, kind = name.rpartition(".")
        if layer not in CONV_CHANNELS or kind not in ("weight", "bias"):
            raise WeightValidationError(f"tensor {name!r} is not a canonical VGG16 layer")
        c_in, c_out = CONV_CHANNELS[layer]
        if kind == "weight" and arr.shape != (c_out, c_in, 3, 3):
            raise WeightValidationError(
                f"layer {layer}: weight shape {arr.shape} does not match "
                f"canonical ({c_out}, {c_in}, 3, 3)"
            )
        if kind == "bias" and arr.shape != (c_out,):
            raise WeightValidationError(
                f"layer {layer}: bias shape {arr.shape} does not match canonical ({c_out},)"
            )


def load_weights(path) -> WeightStore:
    """Read a BWF1 weight file and validate it against the VGG16 plan.

    Format (all integers little-endian u32, floats little-endian f32):
      magic "BWF1" | version=1 | tensor count |
      per tensor: name length, UTF-8 name, ndim, ndim extents, row-major data |
      provenance length, UTF-8 provenance.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise WeightFormatError(f"truncated weight file {path}")
        out = blob[off:off + n]
        off += n
        return out

    def take_u32() -> int:
        return struct.unpack("<I", take(4))[0]

    if take(4) != BWF_MAGIC:
        raise WeightFormatError(f"bad magic in weight file {path}")
    version = take_u32()
    if version != BWF_VERSION:
        raise WeightFormatError(f"unsupported weight format version {version}")
    count = take_u32()
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = take(take_u32()).decode("utf-8")
        ndim = take_u32()
        extents = tuple(take_u32() for _ in range(ndim))
        if any(e < 1 for e in extents):
            raise WeightFormatError(f"tensor {name!r} has a non-positive extent")
        n_values = int(np.prod(extents, dtype=np.int64)) if extents else 1
        data = np.frombuffer(take(4 * n_values), dtype="<f4").copy()
        entries[name] = data.reshape(extents)
    provenance = take(take_u32()).decode("utf-8")
    if off != len(blob):
        raise WeightFormatError(f"trailing bytes after provenance in {path}")
    _validate_entries(entries)
    return WeightStore(entries=entries, version=version, provenance=provenance)


def save_weights(store: WeightStore, path) -> None:
    """Write a WeightStore as BWF1, byte-for-byte readable by load_weights."""
    with open(path, "wb") as fh:
        fh.write(BWF_MAGIC)
        fh.write(struct.pack("<II", BWF_VERSION, len(store.entries)))
        for name, arr in store.entries.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            arr32 = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(struct.pack("<I", arr32.ndim))
            fh.write(struct.pack(f"<{arr32.ndim}I", *arr32.shape))
            fh.write(arr32.tobytes())
        encoded = store.provenance.encode("utf-8")
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)


def forward_taps(
    image: np.ndarray,
    weights: WeightStore,
    taps: list[str] | tuple[str, ...],
    pre_relu: bool = False,
) -> dict[str, np.ndarray]:
    """Run the conv stack and return the requested intermediate activations.

    Execution stops after the deepest requested tap. Conv taps are read after
    the ReLU unless ``pre_relu`` is set; pool taps are the pool outputs.
    """
    unknown = [t for t in taps if t not in TAP_NAMES]
    if unknown:
        raise ConfigurationError(f"unknown tap name(s): {', '.join(unknown)}")
    if not taps:
        return {}
    image = np.asarray(image, dtype=np.float32)
    if image.shape != INPUT_SHAPE:
        raise ShapeError(f"input must be {INPUT_SHAPE}, got {image.shape}")

    depth = max(LAYER_SEQUENCE.index(t) for t in taps)
    needed = [l for l in LAYER_SEQUENCE[:depth + 1] if l in CONV_CHANNELS]
    missing = [l for l in needed if not weights.has_layer(l)]
    if missing:
        raise WeightValidationError(f"weights missing for layer(s): {', '.join(missing)}")

    wanted = set(taps)
    captured: dict[str, np.ndarray] = {}
    x = image
    for layer in LAYER_SEQUENCE[:depth + 1]:
        if layer.startswith("pool"):
            x = maxpool2(x)
            record = x
        else:
            w, b = weights.conv_pair(layer)
            pre = conv2d(x, w, b)
            x = relu(pre)
            record = pre if pre_relu else x
        if layer in wanted:
            captured[layer] = record
    return {t: captured[t] for t in taps}
