"""Difficulty scoring from solver hidden-state features.

A small MLP (projection, LayerNorm, exact-erf GELU, sigmoid head) maps a
hidden-state vector to the probability the solver answers correctly; lower
scores proxy higher difficulty. Features are sampled from the generation
window on a quadratic schedule that front-loads the onset of reasoning, and
per-question scores are the mean over the sampled positions.

Weights travel in the little-endian CDQW container so the training toolkit
and this scorer agree bit-for-bit: magic ``CDQW``, u32 format version (1),
u32 flags (bit0 exact-erf GELU, bit1 mean aggregation), u32 d_in, u32
d_hidden, then float32 tensors w1 (row-major d_hidden x d_in), b1, ln_gamma,
ln_beta, w2, b2, and a trailing CRC32 of all preceding bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import normalize_group_rank
from .errors import DomainError, SchemaError

CDQW_MAGIC = b"CDQW"
CDQW_VERSION = 1
FLAG_EXACT_ERF_GELU = 1
FLAG_MEAN_AGGREGATION = 2

LAYERNORM_EPS = 1e-5
DEFAULT_GROUP_EPSILON = 1e-3

LONG_WINDOW = 1024  # windows longer than this sample 10 positions, else 8


def sample_count_for_window(window_length: int) -> int:
    if window_length < 1:
        raise DomainError(f"window_length must be >= 1, got {window_length}")
    return 10 if window_length > LONG_WINDOW else 8


def sampling_positions(window_length: int, k: int) -> list[int]:
    """Quadratic sampling schedule over a generation window.

    Positions are floor(|W| * (i / (K-1))^2) for i = 0..K-1. The raw
    formula yields |W| for the last index — one past the final 0-indexed
    position — so every position is clamped to |W| - 1, which preserves the
    schedule's shape without out-of-range access.
    """
    if k < 2:
        raise DomainError(f"k must be >= 2, got {k}")
    if window_length < 1:
        raise DomainError(f"window_length must be >= 1, got {window_length}")
    positions = []
    for i in range(k):
        raw = int(window_length * (i / (k - 1)) ** 2)
        positions.append(min(raw, window_length - 1))
    return positions


@dataclass(frozen=True)
class ValueNetWeights:
    """Parameter tensors of the scoring MLP; treat arrays as immutable."""

    d_in: int
    d_hidden: int
    w1: np.ndarray
    b1: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    w2: np.ndarray
    b2: float

    def __post_init__(self):
        if self.d_in < 1 or self.d_hidden < 1:
            raise DomainError("dimensions must be >= 1")
        shapes = {
            "w1": (self.d_hidden, self.d_in),
            "b1": (self.d_hidden,),
            "ln_gamma": (self.d_hidden,),
            "ln_beta": (self.d_hidden,),
            "w2": (self.d_hidden,),
        }
        for name, expected in shapes.items():
            arr = getattr(self, name)
            if arr.shape != expected:
                raise DomainError(f"{name} has shape {arr.shape}, expected {expected}")
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite values")
        if not np.isfinite(self.b2):
            raise DomainError("b2 is non-finite")

    @classmethod
    def from_arrays(cls, w1, b1, ln_gamma, ln_beta, w2, b2) -> "ValueNetWeights":
        w1 = np.asarray(w1, dtype=np.float32)
        return cls(
            d_in=w1.shape[1],
            d_hidden=w1.shape[0],
            w1=w1,
            b1=np.asarray(b1, dtype=np.float32),
            ln_gamma=np.asarray(ln_gamma, dtype=np.float32),
            ln_beta=np.asarray(ln_beta, dtype=np.float32),
            w2=np.asarray(w2, dtype=np.float32),
            b2=float(b2),
        )

    @classmethod
    def zeros(cls, d_in: int, d_hidden: int) -> "ValueNetWeights":
        return cls.from_arrays(
            np.zeros((d_hidden, d_in)),
            np.zeros(d_hidden),
            np.zeros(d_hidden),
            np.zeros(d_hidden),
            np.zeros(d_hidden),
            0.0,
        )


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact erf-form GELU (matches the weight-file's bit0 convention)."""
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def forward(weights: ValueNetWeights, feature: np.ndarray) -> float:
    """Score one hidden-state vector; result lies strictly in (0, 1).

    Dropout exists only at training time; inference is the plain
    projection -> LayerNorm -> GELU -> sigmoid-head composition, computed
    in float64 for determinism.
    """
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != (weights.d_in,):
        raise DomainError(f"feature has shape {x.shape}, expected ({weights.d_in},)")
    if not np.all(np.isfinite(x)):
        raise DomainError("feature contains non-finite values")
    h = weights.w1.astype(np.float64) @ x + weights.b1.astype(np.float64)
    mean = h.mean()
    var = h.var()
    h = (h - mean) / np.sqrt(var + LAYERNORM_EPS)
    h = h * weights.ln_gamma.astype(np.float64) + weights.ln_beta.astype(np.float64)
    h = gelu(h)
    logit = float(weights.w2.astype(np.float64) @ h + weights.b2)
    return 1.0 / (1.0 + np.exp(-logit))


@dataclass(frozen=True)
class FeatureWindow:
    """The K hidden-state vectors sampled from one question's window."""

    vectors: np.ndarray  # shape (k, d_in)
    window_length: int
    k: int

    def __post_init__(self):
        expected_k = sample_count_for_window(self.window_length)
        if self.k != expected_k:
            raise DomainError(
                f"window_length {self.window_length} requires k={expected_k}, got {self.k}"
            )
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.k:
            raise DomainError(
                f"vectors must have shape (k={self.k}, d_in), got {self.vectors.shape}"
            )

    @classmethod
    def from_vectors(cls, vectors, window_length: int) -> "FeatureWindow":
        arr = np.asarray(vectors, dtype=np.float32)
        return cls(vectors=arr, window_length=window_length, k=arr.shape[0])


def score_question(weights: ValueNetWeights, window: FeatureWindow) -> float:
    """Mean of the per-position forward scores for one question."""
    scores = [forward(weights, window.vectors[i]) for i in range(window.k)]
    return float(np.mean(scores))


def group_vn_scores(
    scores, epsilon: float = DEFAULT_GROUP_EPSILON
) -> list[float]:
    """Convert continuous correctness scores into grouped difficulty ranks.

    Questions are sorted by descending correctness (ascending difficulty) and
    adjacent scores within ``epsilon`` share a group; groups then map through
    the (j-1)/(G-1) rule, a lone group yielding the neutral 0.5. The output
    follows the ranks, so it is unchanged by transforms that preserve the
    epsilon-tie structure (exact rank data in particular).
    """
    values = [float(s) for s in scores]
    if not values:
        raise DomainError("scores must be non-empty")
    if any(not np.isfinite(v) for v in values):
        raise DomainError("scores contain non-finite values")
    order = sorted(range(len(values)), key=lambda i: -values[i])
    groups: list[list[int]] = [[order[0]]]
    for prev, cur in zip(order, order[1:]):
        if abs(values[prev] - values[cur]) <= epsilon:
            groups[-1].append(cur)
        else:
            groups.append([cur])
    g_count = len(groups)
    out = [0.0] * len(values)
    for j, group in enumerate(groups, start=1):
        value = 0.5 if g_count == 1 else normalize_group_rank(j, g_count)
        for idx in group:
            out[idx] = value
    return out


def save_weights(weights: ValueNetWeights, path) -> None:
    """Write a CDQW container; bit-exact round trip with :func:`load_weights`."""
    body = bytearray()
    body += CDQW_MAGIC
    body += struct.pack(
        "<III",
        CDQW_VERSION,
        FLAG_EXACT_ERF_GELU | FLAG_MEAN_AGGREGATION,
        weights.d_in,
    )
    body += struct.pack("<I", weights.d_hidden)
    for arr in (weights.w1, weights.b1, weights.ln_gamma, weights.ln_beta, weights.w2):
        body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    body += struct.pack("<f", weights.b2)
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_weights(path) -> ValueNetWeights:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24 or blob[:4] != CDQW_MAGIC:
        raise SchemaError(f"{path}: not a CDQW weight file")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise SchemaError(f"{path}: CRC mismatch, file is corrupt or truncated")
    version, flags, d_in, d_hidden = struct.unpack("<IIII", blob[4:20])
    if version != CDQW_VERSION:
        raise SchemaError(f"{path}: unsupported format version {version}")
    if not flags & FLAG_EXACT_ERF_GELU or not flags & FLAG_MEAN_AGGREGATION:
        raise SchemaError(
            f"{path}: flags {flags:#x} request conventions this scorer does not implement"
        )
    counts = [d_hidden * d_in, d_hidden, d_hidden, d_hidden, d_hidden, 1]
    expected = 20 + 4 * sum(counts) + 4
    if len(blob) != expected:
        raise SchemaError(f"{path}: size {len(blob)} != expected {expected}")
    offset = 20
    tensors = []
    for count in counts:
        tensors.append(np.frombuffer(blob, dtype="<f4", count=count, offset=offset).copy())
        offset += 4 * count
    w1, b1, ln_gamma, ln_beta, w2, b2 = tensors
    return ValueNetWeights(
        d_in=d_in,
        d_hidden=d_hidden,
        w1=w1.reshape(d_hidden, d_in),
        b1=b1,
        ln_gamma=ln_gamma,
        ln_beta=ln_beta,
        w2=w2,
        b2=float(b2[0]),
    )


def write_feature_file(path, items) -> int:
    """Write features as JSONL: {"id", "window_length", "features"} per line."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for qid, window in items:
            fh.write(
                json.dumps(
                    {
                        "id": qid,
                        "window_length": window.window_length,
                        "features": window.vectors.astype(float).tolist(),
                    }
                )
                + "\n"
            )
            count += 1
    return count


def read_feature_file(path, d_in: int | None = None) -> list[tuple[str, FeatureWindow]]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                window = FeatureWindow.from_vectors(obj["features"], obj["window_length"])
                qid = str(obj["id"])
            except (ValueError, KeyError, TypeError, DomainError) as exc:
                raise SchemaError(str(exc), line=lineno) from exc
            if d_in is not None and window.vectors.shape[1] != d_in:
                raise SchemaError(
                    f"feature width {window.vectors.shape[1]} != d_in {d_in}", line=lineno
                )
            items.append((qid, window))
    return items
