"""Labeled training data: per-position examples and the stratified split."""

from __future__ import annotations

import json
from dataclasses import dataclass
from random import Random

import numpy as np

TEST_FRACTION = 0.15


@dataclass(frozen=True)
class TrainingExample:
    """One sampled hidden-state position with its question's label."""

    feature: np.ndarray
    label: int
    source: str
    split: str  # train | test

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train/test, got {self.split}")


def read_labels(path) -> dict[str, tuple[int, str]]:
    """id -> (label, source) from a JSONL label file."""
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                labels[str(obj["id"])] = (int(obj["label"]), str(obj.get("source", "unknown")))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return labels


def build_examples(
    feature_rows,
    labels: dict[str, tuple[int, str]],
    split_seed: int = 0,
    test_fraction: float = TEST_FRACTION,
) -> list[TrainingExample]:
    """Per-position examples, split 85:15 stratified by label.

    Each sampled position becomes one example carrying its question's label;
    the split is assigned per QUESTION (so a question's positions never
    straddle the split) with a seeded shuffle inside each label class.
    """
    by_label: dict[int, list[tuple[str, np.ndarray]]] = {0: [], 1: []}
    for qid, _, features in feature_rows:
        if qid not in labels:
            raise ValueError(f"no label for question {qid!r}")
        label, _ = labels[qid]
        by_label[label].append((qid, features))

    test_ids = set()
    rng = Random(split_seed)
    for label, rows in sorted(by_label.items()):
        ids = [qid for qid, _ in rows]
        rng.shuffle(ids)
        n_test = round(len(ids) * test_fraction)
        test_ids.update(ids[:n_test])

    examples = []
    for qid, _, features in feature_rows:
        label, source = labels[qid]
        split = "test" if qid in test_ids else "train"
        for row in features:
            examples.append(
                TrainingExample(
                    feature=np.asarray(row, dtype=np.float32),
                    label=label,
                    source=source,
                    split=split,
                )
            )
    return examples


def split_arrays(examples) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """{"train": (X, y), "test": (X, y)} as float32 / float32 arrays."""
    out = {}
    for split in ("train", "test"):
        subset = [e for e in examples if e.split == split]
        if subset:
            X = np.stack([e.feature for e in subset]).astype(np.float32)
            y = np.array([e.label for e in subset], dtype=np.float32)
        else:
            X = np.zeros((0, 0), dtype=np.float32)
            y = np.zeros((0,), dtype=np.float32)
        out[split] = (X, y)
    return out


def positive_class_weight(y: np.ndarray) -> float:
    """Negative-to-positive ratio used to reweight the rare class."""
    positives = float((y == 1).sum())
    negatives = float((y == 0).sum())
    if positives == 0 or negatives == 0:
        raise ValueError("both classes must be present to train")
    return negatives / positives
