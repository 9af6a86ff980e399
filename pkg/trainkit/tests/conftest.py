from __future__ import annotations

import numpy as np

from codiq_trainkit.extract import sample_count_for_window


def blob_feature_rows(
    n_questions=40, d=32, separation=8.0, noise=0.5, seed=0, pos_fraction=0.4,
    window_length=256,
):
    """Question-level feature rows around two linearly separable centers.

    Every sampled position of a question carries that question's class
    center plus noise, mirroring what extraction produces.
    """
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    k = sample_count_for_window(window_length)
    rows = []
    labels = {}
    n_pos = int(n_questions * pos_fraction)
    for i in range(n_questions):
        label = 1 if i < n_pos else 0
        center = direction * (separation / 2 if label else -separation / 2)
        features = (center + noise * rng.standard_normal((k, d))).astype(np.float32)
        qid = f"q{i:04d}"
        rows.append((qid, window_length, features))
        labels[qid] = (label, "synthetic")
    return rows, labels
