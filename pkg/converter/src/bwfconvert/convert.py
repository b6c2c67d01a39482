"""Turn pretrained VGG16 conv checkpoints into BWF1 files.

Supported sources: numpy ``.npz`` archives and PyTorch state dicts. All 13
conv layers must be present with canonical shapes; anything else is fatal.
The source's channel convention is recorded in the provenance string, never
silently applied: the consumer owns input normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bwf import write_bwf
from .vgg16 import (
    CANONICAL_LAYERS,
    TORCHVISION_MAPPING,
    bias_shape,
    identity_mapping,
    weight_shape,
)

SOURCE_FORMATS = ("npz", "torch")


class ConversionError(ValueError):
    pass


@dataclass(frozen=True)
class ConversionManifest:
    source_format: str
    source_path: str
    channel_order: str = "unspecified"
    mapping: dict[str, str] | None = None  # source key -> canonical name

    def __post_init__(self) -> None:
        if self.source_format not in SOURCE_FORMATS:
            raise ConversionError(
                f"unknown source format {self.source_format!r}; "
                f"expected one of {', '.join(SOURCE_FORMATS)}"
            )


def load_mapping_file(path) -> dict[str, str]:
    mapping = json.loads(Path(path).read_text())
    if not isinstance(mapping, dict):
        raise ConversionError(f"mapping file {path} must hold a JSON object")
    return {str(k): str(v) for k, v in mapping.items()}


def _default_mapping(source_format: str) -> dict[str, str]:
    return TORCHVISION_MAPPING if source_format == "torch" else identity_mapping()


def _load_source(manifest: ConversionManifest) -> dict[str, np.ndarray]:
    path = Path(manifest.source_path)
    if not path.exists():
        raise ConversionError(f"source checkpoint {path} does not exist")
    if manifest.source_format == "npz":
        with np.load(path) as archive:
            return {k: np.asarray(archive[k]) for k in archive.files}
    import torch  # deferred: only the torch route needs it

    state = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    return {k: v.detach().cpu().numpy() for k, v in state.items()}


def collect_tensors(manifest: ConversionManifest) -> dict[str, np.ndarray]:
    """Gather, rename and shape-check all 26 canonical tensors."""
    source = _load_source(manifest)
    mapping = manifest.mapping or _default_mapping(manifest.source_format)

    renamed: dict[str, np.ndarray] = {}
    for source_key, canonical in mapping.items():
        if source_key in source:
            renamed[canonical] = np.asarray(source[source_key])

    tensors: dict[str, np.ndarray] = {}
    for layer in CANONICAL_LAYERS:
        for kind, expected in (
            ("weight", weight_shape(layer)),
            ("bias", bias_shape(layer)),
        ):
            name = f"{layer}.{kind}"
            if name not in renamed:
                raise ConversionError(f"source is missing {name}")
            arr = renamed[name]
            if tuple(arr.shape) != expected:
                raise ConversionError(
                    f"{name}: source shape {tuple(arr.shape)} does not match "
                    f"canonical {expected}"
                )
            tensors[name] = arr.astype(np.float32, copy=False)
    return tensors


def convert(manifest: ConversionManifest, out_path) -> int:
    """Write the BWF1 file; returns the number of tensors written."""
    tensors = collect_tensors(manifest)
    provenance = (
        f"converted from {manifest.source_format} checkpoint "
        f"{Path(manifest.source_path).name}; channel_order={manifest.channel_order}"
    )
    write_bwf(out_path, tensors, provenance)
    return len(tensors)


def generate_random(seed: int, out_path) -> int:
    """Canonical-shape weights with seeded, small-magnitude values.

    Kernel scale follows 1/sqrt(fan-in) so stacked activations stay bounded,
    which keeps randomly-initialized end-to-end runs numerically sane.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for layer in CANONICAL_LAYERS:
        c_out, c_in, kh, kw = weight_shape(layer)
        std = np.sqrt(2.0 / (c_in * kh * kw))
        tensors[f"{layer}.weight"] = (
            rng.standard_normal((c_out, c_in, kh, kw)) * std
        ).astype(np.float32)
        tensors[f"{layer}.bias"] = (rng.standard_normal(c_out) * 0.01).astype(np.float32)
    write_bwf(out_path, tensors, f"random weights, seed={seed}")
    return len(tensors)
