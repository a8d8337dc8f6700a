"""Byte-level NCFS reader and NCEM writer.

The bridge talks to the classification toolkit strictly through these two
file formats, so the codecs here are implemented against the byte layout,
not against the toolkit's code.

NCFS (little-endian): magic "NCFS", version u32=1, T u32, H u32, W u32,
T*H*W pixel bytes (frame-major, row-major), then T pairs of u64 window
bounds. NCEM (little-endian): magic "NCEM", version u32=1, role u8
(0=text, 1=visual), rows u32, cols u32, label-block-length u32, that many
UTF-8 bytes of newline-separated row labels, then rows*cols float32 values
row-major.
"""

from __future__ import annotations

import struct

import numpy as np

_NCFS_HEADER = struct.Struct("<4sIIII")
_NCEM_HEADER = struct.Struct("<4sIBIII")

ROLE_TEXT = 0
ROLE_VISUAL = 1


class FormatError(ValueError):
    """Malformed NCFS/NCEM bytes."""


def read_ncfs(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Decode frame-stack bytes into (T x H x W uint8 pixels, T x 2 bounds)."""
    if len(data) < _NCFS_HEADER.size:
        raise FormatError("shorter than an NCFS header")
    magic, version, timesteps, height, width = _NCFS_HEADER.unpack_from(data)
    if magic != b"NCFS":
        raise FormatError(f"expected magic b'NCFS', got {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported NCFS version {version}")
    n_pixels = timesteps * height * width
    expected = _NCFS_HEADER.size + n_pixels + 16 * timesteps
    if len(data) != expected:
        raise FormatError(f"expected {expected} bytes for the declared shape, got {len(data)}")
    pixels = (
        np.frombuffer(data, dtype=np.uint8, count=n_pixels, offset=_NCFS_HEADER.size)
        .reshape(timesteps, height, width)
        .copy()
    )
    bounds = np.asarray(
        struct.unpack_from(f"<{2 * timesteps}Q", data, _NCFS_HEADER.size + n_pixels),
        dtype=np.uint64,
    ).reshape(timesteps, 2)
    return pixels, bounds


def write_ncem(values: np.ndarray, role: int, labels: list[str] | None = None) -> bytes:
    """Encode a row-major float32 matrix as NCEM bytes."""
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise FormatError("NCEM payload must be a 2-D matrix")
    if not np.isfinite(values).all():
        raise FormatError("NCEM payload must be finite")
    if labels is not None and len(labels) != values.shape[0]:
        raise FormatError(f"{len(labels)} labels for {values.shape[0]} rows")
    label_block = "\n".join(labels).encode("utf-8") if labels else b""
    header = _NCEM_HEADER.pack(
        b"NCEM", 1, role, values.shape[0], values.shape[1], len(label_block)
    )
    return header + label_block + values.tobytes()
