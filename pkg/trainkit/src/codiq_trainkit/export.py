"""CDQW weight export: the binary contract shared with the scoring engine.

Layout (little-endian): magic "CDQW", u32 version = 1, u32 flags
(bit0 exact-erf GELU, bit1 mean aggregation), u32 d_in, u32 d_hidden, then
float32 tensors w1 (row-major d_hidden x d_in), b1, ln_gamma, ln_beta, w2,
b2, and a trailing CRC32 over all preceding bytes.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .model import TrainedWeights

MAGIC = b"CDQW"
VERSION = 1
FLAG_EXACT_ERF_GELU = 1
FLAG_MEAN_AGGREGATION = 2


def encode_weights(weights: TrainedWeights) -> bytes:
    body = bytearray()
    body += MAGIC
    body += struct.pack(
        "<IIII",
        VERSION,
        FLAG_EXACT_ERF_GELU | FLAG_MEAN_AGGREGATION,
        weights.d_in,
        weights.d_hidden,
    )
    for arr in (weights.w1, weights.b1, weights.ln_gamma, weights.ln_beta, weights.w2):
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    body += struct.pack("<f", weights.b2)
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    return bytes(body)


def export_weights(weights: TrainedWeights, path) -> None:
    """Write the container and self-verify the CRC of what landed on disk."""
    blob = encode_weights(weights)
    Path(path).write_bytes(blob)
    written = Path(path).read_bytes()
    if len(written) != len(blob):
        raise OSError(f"{path}: short write ({len(written)} of {len(blob)} bytes)")
    stored_crc = struct.unpack("<I", written[-4:])[0]
    if zlib.crc32(written[:-4]) & 0xFFFFFFFF != stored_crc:
        raise OSError(f"{path}: CRC self-verification failed after write")


def load_exported(path) -> TrainedWeights:
    """Re-read a CDQW file (trainkit side; mirrors the engine's loader)."""
    blob = Path(path).read_bytes()
    if len(blob) < 24 or blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a CDQW file")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ValueError(f"{path}: CRC mismatch")
    version, flags, d_in, d_hidden = struct.unpack("<IIII", blob[4:20])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if not flags & FLAG_EXACT_ERF_GELU:
        raise ValueError(f"{path}: file does not declare exact-erf GELU")
    counts = [d_hidden * d_in, d_hidden, d_hidden, d_hidden, d_hidden, 1]
    offset = 20
    tensors = []
    for count in counts:
        tensors.append(np.frombuffer(blob, dtype="<f4", count=count, offset=offset).copy())
        offset += 4 * count
    w1, b1, ln_gamma, ln_beta, w2, b2 = tensors
    return TrainedWeights(
        w1=w1.reshape(d_hidden, d_in),
        b1=b1,
        ln_gamma=ln_gamma,
        ln_beta=ln_beta,
        w2=w2,
        b2=float(b2[0]),
    )
