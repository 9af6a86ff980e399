from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from codiq_trainkit.extract import (
    extract_features,
    extract_question_features,
    read_feature_rows,
    read_questions,
    sample_count_for_window,
    sampling_positions,
)
from codiq_trainkit.runtime import StubRuntime, build_runtime, RuntimeUnavailable


def test_sample_count_rule():
    assert sample_count_for_window(512) == 8
    assert sample_count_for_window(1024) == 8
    assert sample_count_for_window(1025) == 10


def test_sampling_positions_documented_prefix():
    assert sampling_positions(4096, 10)[:4] == [0, 50, 202, 455]


def test_sampling_positions_matches_engine_schedule():
    from codiq.valuenet import sampling_positions as engine_positions

    for window, k in ((4096, 10), (512, 8), (1, 2), (1025, 10), (77, 8)):
        assert sampling_positions(window, k) == engine_positions(window, k)


def test_extract_window_512_uses_8_positions():
    runtime = StubRuntime(d_model=16, length=512)
    window_length, features = extract_question_features(runtime, "q", passes=2)
    assert window_length == 512
    assert features.shape == (8, 16)


def test_extract_long_window_uses_10_positions():
    runtime = StubRuntime(d_model=16, length=2048)
    window_length, features = extract_question_features(runtime, "q", passes=1)
    assert (window_length, features.shape[0]) == (2048, 10)
    # The cap applies even when the runtime could generate longer.
    window_length, _ = extract_question_features(
        runtime, "q", passes=1, max_window=1000
    )
    assert window_length == 1000


def test_extract_averages_passes():
    class ConstantRuntime:
        d_model = 4

        def hidden_states(self, text, max_window, pass_index=0):
            return np.full((128, 4), float(pass_index), dtype=np.float32)

    _, features = extract_question_features(ConstantRuntime(), "q", passes=5)
    assert np.allclose(features, 2.0)  # mean of 0..4


def test_extract_feature_files_are_byte_stable(tmp_path):
    questions = [("a", "first question"), ("b", "second question text")]
    paths = []
    for name in ("one.jsonl", "two.jsonl"):
        out = tmp_path / name
        count = extract_features(StubRuntime(d_model=8), questions, out, passes=3)
        assert count == 2
        paths.append(out)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    meta = json.loads(Path(str(paths[0]) + ".meta.json").read_text())
    assert meta["passes"] == 3 and meta["layer"] == "final"


def test_extract_output_is_engine_readable(tmp_path):
    from codiq.valuenet import read_feature_file

    out = tmp_path / "features.jsonl"
    extract_features(StubRuntime(d_model=8), [("a", "question one")], out)
    items = read_feature_file(out, d_in=8)
    assert items[0][0] == "a"
    rows = read_feature_rows(out)
    assert np.array_equal(rows[0][2], items[0][1].vectors)


def test_extract_dimension_mismatch():
    with pytest.raises(ValueError):
        extract_features(StubRuntime(d_model=8), [("a", "q")], "/dev/null", d_in=16)


def test_read_questions(tmp_path):
    path = tmp_path / "questions.jsonl"
    path.write_text(json.dumps({"id": "x", "text": "what?"}) + "\n")
    assert read_questions(path) == [("x", "what?")]
    path.write_text("{bad\n")
    with pytest.raises(ValueError):
        read_questions(path)


def test_build_runtime():
    runtime = build_runtime("stub", d_model=12)
    assert runtime.d_model == 12
    with pytest.raises(RuntimeUnavailable):
        build_runtime("llamafile")
