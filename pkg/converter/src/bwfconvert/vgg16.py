"""Canonical VGG16 conv plan and source-name mapping presets.

The plan is the format contract for BWF1 consumers: all 13 conv layers, each
a (weight, bias) pair with 3x3 kernels and the fixed channel progression.
"""

from __future__ import annotations

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

CANONICAL_LAYERS: tuple[str, ...] = tuple(CONV_CHANNELS)


def weight_shape(layer: str) -> tuple[int, int, int, int]:
    c_in, c_out = CONV_CHANNELS[layer]
    return (c_out, c_in, 3, 3)


def bias_shape(layer: str) -> tuple[int]:
    return (CONV_CHANNELS[layer][1],)


# torchvision's vgg16 stores convs at these nn.Sequential indices
_TORCHVISION_FEATURE_INDICES = (0, 2, 5, 7, 10, 12, 14, 17, 19, 21, 24, 26, 28)

TORCHVISION_MAPPING: dict[str, str] = {}
for _idx, _layer in zip(_TORCHVISION_FEATURE_INDICES, CANONICAL_LAYERS):
    TORCHVISION_MAPPING[f"features.{_idx}.weight"] = f"{_layer}.weight"
    TORCHVISION_MAPPING[f"features.{_idx}.bias"] = f"{_layer}.bias"


def identity_mapping() -> dict[str, str]:
    """Sources already keyed by the canonical tensor names."""
    out = {}
    for layer in CANONICAL_LAYERS:
        out[f"{layer}.weight"] = f"{layer}.weight"
        out[f"{layer}.bias"] = f"{layer}.bias"
    return out
