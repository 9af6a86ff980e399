"""Feature extraction: quadratic position sampling and pass averaging.

Output is the engine's feature JSONL contract, one object per question:
{"id", "window_length", "features": [[f32 ...] x K]}. A sidecar
``<name>.meta.json`` records the extraction settings (layer, passes, model)
without polluting the feature stream.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

LONG_WINDOW = 1024
DEFAULT_MAX_WINDOW = 4096
DEFAULT_PASSES = 5


def sample_count_for_window(window_length: int) -> int:
    if window_length < 1:
        raise ValueError(f"window_length must be >= 1, got {window_length}")
    return 10 if window_length > LONG_WINDOW else 8


def sampling_positions(window_length: int, k: int) -> list[int]:
    """floor(|W| * (i/(K-1))^2) for i in 0..K-1, end clamped into the window.

    Mirrors the engine's schedule exactly (same clamp rule); the feature
    file is the contract, so both sides compute identical positions.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if window_length < 1:
        raise ValueError(f"window_length must be >= 1, got {window_length}")
    return [
        min(int(window_length * (i / (k - 1)) ** 2), window_length - 1)
        for i in range(k)
    ]


def extract_question_features(
    runtime, text: str, passes: int = DEFAULT_PASSES, max_window: int = DEFAULT_MAX_WINDOW
) -> tuple[int, np.ndarray]:
    """(window_length, K x d_model features) for one question.

    Pass lengths can differ, so the schedule is computed on the shortest
    pass window and features are averaged across passes per position.
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    states = [runtime.hidden_states(text, max_window, pass_index=p) for p in range(passes)]
    for s in states:
        if s.shape[1] != states[0].shape[1]:
            raise ValueError("runtime returned inconsistent hidden sizes across passes")
    window_length = min(s.shape[0] for s in states)
    k = sample_count_for_window(window_length)
    positions = sampling_positions(window_length, k)
    stacked = np.stack([s[positions] for s in states])  # (passes, K, d)
    return window_length, stacked.mean(axis=0).astype(np.float32)


def read_questions(path) -> list[tuple[str, str]]:
    """(id, text) pairs from a JSONL question file."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["id"]), str(obj["text"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def extract_features(
    runtime,
    questions,
    out_path,
    passes: int = DEFAULT_PASSES,
    max_window: int = DEFAULT_MAX_WINDOW,
    d_in: int | None = None,
    meta: dict | None = None,
) -> int:
    """Extract every question into the feature JSONL at ``out_path``."""
    if d_in is not None and runtime.d_model != d_in:
        raise ValueError(
            f"runtime hidden size {runtime.d_model} != configured d_in {d_in}"
        )
    count = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for qid, text in questions:
            window_length, features = extract_question_features(
                runtime, text, passes=passes, max_window=max_window
            )
            fh.write(
                json.dumps(
                    {
                        "id": qid,
                        "window_length": window_length,
                        "features": [[float(v) for v in row] for row in features],
                    }
                )
                + "\n"
            )
            count += 1
    sidecar = {
        "layer": "final",
        "passes": passes,
        "max_window": max_window,
        "d_model": runtime.d_model,
    }
    sidecar.update(meta or {})
    Path(str(out_path) + ".meta.json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )
    return count


def read_feature_rows(path) -> list[tuple[str, int, np.ndarray]]:
    """(id, window_length, K x d features) rows from a feature JSONL file."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rows.append(
                    (
                        str(obj["id"]),
                        int(obj["window_length"]),
                        np.asarray(obj["features"], dtype=np.float32),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return rows
