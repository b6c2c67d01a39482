"""BWF1 writer.

Layout (u32 little-endian integers, little-endian float32 payloads):
  magic "BWF1" | version=1 | tensor count |
  per tensor: name length, UTF-8 name, ndim, ndim extents, row-major data |
  provenance length, UTF-8 provenance.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

MAGIC = b"BWF1"
VERSION = 1


def write_bwf(path, tensors: Mapping[str, np.ndarray], provenance: str) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
        encoded = provenance.encode("utf-8")
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
