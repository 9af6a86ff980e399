"""Acceptance suite: one test per acceptance criterion, at stated tolerances.

Run with ``pytest -s tests/test_acceptance.py`` to see one PASS line per
criterion (a failed criterion shows up as the test failure itself).
"""

from __future__ import annotations

import itertools
import json
import random
import time
from pathlib import Path

import numpy as np
import pytest

from codiq.cluster import kmeans
from codiq.core import normalize_group_rank
from codiq.corpus import corpus_stats, curriculum_split, fleiss_kappa, read_corpus
from codiq.errors import ProtocolError, ValidationError
from codiq.gateway import ScriptedGateway
from codiq.judges import rank_difficulty, verify_solvability
from codiq.pipeline import PipelineConfig, evolve
from codiq.reward import RewardInput, generator_reward
from codiq.valuenet import forward, load_weights, sampling_positions, save_weights

from conftest import LevelRankGateway, make_question, rank_json, verdict_json
from test_cluster import brute_force_sse
from test_corpus import record as corpus_record
from test_pipeline import ROUND_TOKENS, SEED_RANK_TOKENS, evolution_script
from test_valuenet import oracle_forward

FIXTURES = Path(__file__).parent / "fixtures"


def _ok(name: str) -> None:
    print(f"[PASS] {name}")


def test_rank_normalization_oracle():
    start = time.perf_counter()
    for g in range(2, 11):
        for j in range(1, g + 1):
            assert normalize_group_rank(j, g) == (j - 1) / (g - 1)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _ok(f"Rank normalization oracle: exact for all G in [2,10], j in [1,G] ({elapsed:.3f}s)")


def test_generator_reward_grid():
    def oracle(valid, conf, delta):
        if not valid or delta < 0:
            return 0.0
        c = max(0.5, conf)
        return 0.6 * c if delta == 0 else 0.2 * c + 0.8 * (0.8 + 0.2 * delta)

    deltas = [-1 + 0.25 * i for i in range(9)]
    for conf, delta, valid in itertools.product((0.0, 0.5, 1.0), deltas, (True, False)):
        got = generator_reward(RewardInput(valid=valid, confidence=conf, delta_d=delta))
        assert got == pytest.approx(oracle(valid, conf, delta), abs=1e-12)
    assert generator_reward(RewardInput(False, 1.0, 1.0)) == 0.0
    assert generator_reward(RewardInput(True, 1.0, 1.0)) == pytest.approx(1.0, abs=1e-12)
    _ok("Generator reward grid: 3x9x2 hand-derived values at 1e-12, anchors included")


def test_sampling_schedule():
    for window, k in ((4096, 10), (512, 8), (1, 2)):
        got = sampling_positions(window, k)
        expected = [min(int(window * (i / (k - 1)) ** 2), window - 1) for i in range(k)]
        assert got == expected
        assert got[0] == 0
        assert all(a <= b for a, b in zip(got, got[1:]))
    _ok("Sampling schedule: matches the quadratic formula with end clamp; monotone, p0=0")


def test_evolution_loop_conformance():
    start = time.perf_counter()
    seed = make_question()
    config = PipelineConfig(max_rounds=8)

    t = evolve(ScriptedGateway(evolution_script(["ok"] * 8)), seed, config)
    assert (len(t.rounds), t.termination) == (8, "max_rounds_reached")

    for r in (2, 5):
        script = evolution_script(["ok"] * (r - 1) + ["decrease"])
        t = evolve(ScriptedGateway(script), seed, config)
        assert (len(t.rounds), t.termination) == (r - 1, "non_monotonic_difficulty")

        script = evolution_script(["ok"] * (r - 1) + ["unsolvable"])
        t = evolve(ScriptedGateway(script), seed, config)
        assert (len(t.rounds), t.termination) == (r - 1, "unsolvable")
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    _ok(f"Evolution-loop conformance: 8/r-1/r-1 retained rounds, causes match, "
        f"zero network ({elapsed:.3f}s)")


def test_budget_prefix_property():
    seed = make_question()
    trajectories = {}
    for budget in (8_000, 16_000, 32_000):
        gw = ScriptedGateway(evolution_script(["ok"] * 8))
        trajectories[budget] = evolve(
            gw, seed, PipelineConfig(max_rounds=8, budget_tokens=budget)
        )
    lengths = [len(trajectories[b].rounds) for b in (8_000, 16_000, 32_000)]
    assert lengths == sorted(lengths)
    for small, large in ((8_000, 16_000), (16_000, 32_000)):
        a, b = trajectories[small], trajectories[large]
        assert [r.question.text for r in a.rounds] == [
            r.question.text for r in b.rounds
        ][: len(a.rounds)]
    for t in trajectories.values():
        assert t.total_tokens == t.seed_assessment_tokens + sum(
            r.tokens_generation + r.tokens_verification for r in t.rounds
        )
        assert t.total_tokens == SEED_RANK_TOKENS + len(t.rounds) * ROUND_TOKENS
    _ok("Budget prefix: 8k/16k/32k trajectories nest as prefixes; ledger sums exact")


def _rank(entries, n=5):
    questions = [make_question(qid=f"q{i}", text=f"problem {i}") for i in range(n)]
    gw = ScriptedGateway(entries)
    return rank_difficulty(gw, questions, permutation=list(range(n)))


def _verify(entries):
    gw = ScriptedGateway(entries)
    return verify_solvability(gw, make_question()).verdict


def test_protocol_robustness_20_fixtures():
    ranking = rank_json([[1, 3], [0], [2, 4]])
    expected_scores = (0.5, 0.0, 1.0, 0.0, 1.0)
    ok = verdict_json(True, 0.9)

    checks = [
        ("rank: plain JSON",
         lambda: _rank([{"tag": "rank", "response": ranking}]).scores == expected_scores),
        ("rank: fenced JSON",
         lambda: _rank([{"tag": "rank", "response": f"```json\n{ranking}\n```"}]).scores
         == expected_scores),
        ("rank: prose-wrapped JSON",
         lambda: _rank([{"tag": "rank", "response": f"Here you go:\n{ranking}\nHope it helps."}]).scores
         == expected_scores),
        ("rank: nested JSON in prelude",
         lambda: _rank([{"tag": "rank", "response": '{"note": {"x": 1}} final: ' + ranking}]).scores
         == expected_scores),
        ("rank: result/reason length mismatch -> validation_error",
         lambda: _raises(ValidationError,
                         lambda: _rank([{"tag": "rank", "response": rank_json([[0, 1, 2, 3, 4]], ["a", "b"])}]))),
        ("rank: duplicate index -> validation_error",
         lambda: _raises(ValidationError,
                         lambda: _rank([{"tag": "rank", "response": rank_json([[0, 0, 1, 2, 3]])}]))),
        ("rank: missing index -> validation_error",
         lambda: _raises(ValidationError,
                         lambda: _rank([{"tag": "rank", "response": rank_json([[0, 1, 2, 3]])}]))),
        ("rank: empty group -> validation_error",
         lambda: _raises(ValidationError,
                         lambda: _rank([{"tag": "rank", "response": rank_json([[0, 1, 2, 3, 4], []])}]))),
        ("rank: unparseable x3 -> protocol_error",
         lambda: _raises(ProtocolError,
                         lambda: _rank([{"tag": "rank", "response": "no json"}] * 3))),
        ("rank: retry recovers on second attempt",
         lambda: _rank([{"tag": "rank", "response": "garbage {"},
                        {"tag": "rank", "response": ranking}]).scores == expected_scores),
        ("rank: singleton -> 0.5",
         lambda: _rank([{"tag": "rank", "response": rank_json([[0]])}], n=1).scores == (0.5,)),
        ("verify: verbatim documented example -> (true, 0.95)",
         lambda: _verbatim_example()),
        ("verify: fenced JSON with prose",
         lambda: _verify([{"tag": "verify",
                           "response": f"analysis...\n```json\n{ok}\n```"}]).solvable is True),
        ("verify: confidence 1.7 clamps to 1.0",
         lambda: _verify([{"tag": "verify",
                           "response": verdict_json(False, 1.7)}]).confidence == 1.0),
        ("verify: confidence -0.2 clamps to 0.0",
         lambda: _verify([{"tag": "verify",
                           "response": verdict_json(False, -0.2)}]).confidence == 0.0),
        ("verify: solvable with missing_info downgrades",
         lambda: _verify([{"tag": "verify",
                           "response": verdict_json(True, 0.9, "ok", ["radius"])}]).solvable is False),
        ("verify: missing fields -> validation_error",
         lambda: _raises(ValidationError,
                         lambda: _verify([{"tag": "verify", "response": '{"solvable": true}'}]))),
        ("verify: wrong field type -> validation_error",
         lambda: _raises(ValidationError,
                         lambda: _verify([{"tag": "verify",
                                           "response": json.dumps({"solvable": "yes", "confidence": 1,
                                                                   "reason": "r", "missing_info": []})}]))),
        ("verify: skips candidate objects lacking the contract fields",
         lambda: _verify([{"tag": "verify", "response": '{"a": 1} ' + ok}]).solvable is True),
        ("verify: unparseable x3 -> protocol_error",
         lambda: _raises(ProtocolError,
                         lambda: _verify([{"tag": "verify", "response": "???"}] * 3))),
    ]
    assert len(checks) == 20
    for name, check in checks:
        assert check(), name
    _ok("Protocol robustness: 20 fixtures show the documented parse/retry/error behavior")


def _raises(exc_type, fn) -> bool:
    try:
        fn()
    except exc_type:
        return True
    return False


def _verbatim_example() -> bool:
    text = (
        '{"solvable": true, "confidence": 0.95, "reason": "All necessary parameters '
        'provided, problem is well-defined", "missing_info": []}'
    )
    verdict = _verify([{"tag": "verify", "response": text}])
    return verdict.solvable is True and verdict.confidence == 0.95


def test_deshuffle_equivariance_200_permutations():
    levels = [2, 0, 1, 0, 2, 1, 3]
    questions = [
        make_question(qid=f"q{i}", text=f"problem {i} level={lv}")
        for i, lv in enumerate(levels)
    ]
    gw = LevelRankGateway()
    identity = rank_difficulty(gw, questions, permutation=list(range(len(levels))))
    rng = random.Random(2026)
    for _ in range(200):
        perm = list(range(len(levels)))
        rng.shuffle(perm)
        outcome = rank_difficulty(gw, questions, permutation=perm)
        assert outcome.scores == identity.scores
    _ok("De-shuffle equivariance: 200 random permutations reproduce identity scores")


def test_valuenet_forward_oracle_and_cdqw(tmp_path):
    weights = load_weights(FIXTURES / "valuenet_2x2.cdqw")
    x = [0.6, -0.4]
    assert forward(weights, np.array(x)) == pytest.approx(
        oracle_forward(weights, x), abs=1e-6
    )
    from codiq.valuenet import ValueNetWeights

    zeros = ValueNetWeights.zeros(4, 3)
    assert forward(zeros, np.zeros(4)) == 0.5

    copy_path = tmp_path / "roundtrip.cdqw"
    save_weights(weights, copy_path)
    assert copy_path.read_bytes() == (FIXTURES / "valuenet_2x2.cdqw").read_bytes()
    _ok("ValueNet: 2x2 fixture matches hand oracle at 1e-6; zero net -> 0.5; "
        "CDQW round-trip bit-identical")


def test_clustering_bruteforce_oracle():
    rng = np.random.default_rng(77)
    datasets = [
        np.array([[0.0], [0.1], [10.0], [10.1]]),
        rng.normal(size=(5, 2)),
        rng.normal(size=(7, 1)),
        rng.normal(size=(8, 3)),
        np.array([[0, 0], [0, 1], [1, 0], [4, 4], [4, 5], [8, 8], [8, 9], [0.5, 0.5]]),
    ]
    for X in datasets:
        X = np.asarray(X, dtype=float)
        for k in (1, 2, 3):
            results = [kmeans(X, k, seed=s) for s in range(10)]
            for r in results:
                assert all(
                    a >= b - 1e-9 for a, b in zip(r.sse_trace, r.sse_trace[1:])
                ), "SSE trace must be non-increasing"
            best = min(r.sse for r in results)
            assert best == pytest.approx(brute_force_sse(X, k), rel=1e-9, abs=1e-12)
    _ok("Clustering: best-of-10-seeds k-means SSE equals brute-force optimum; "
        "SSE traces monotone on every run")


def test_fleiss_kappa_fixtures():
    perfect = [[3, 0], [0, 3], [3, 0], [0, 3]]
    assert fleiss_kappa(perfect, 3) == pytest.approx(1.0, abs=1e-9)
    assert fleiss_kappa([[1, 1], [1, 1]], 2) == pytest.approx(-1.0, abs=1e-9)
    _ok("Fleiss kappa: perfect agreement -> 1.0, two-item split -> -1.0 (1e-9)")


def test_curriculum_split_480_sequences():
    records = [corpus_record(f"s{i}", 2 + i % 4) for i in range(480)]
    split = curriculum_split(records, rng_seed=11)
    assert (len(split.l1), len(split.l2), len(split.l3)) == (960, 960, 480)
    again = curriculum_split(records, rng_seed=11)
    assert [q.id for q in split.l2] == [q.id for q in again.l2]
    _ok("Curriculum split: 480 sequences -> counts (960, 960, 480); picks reproducible")


def test_stats_fixture_reproduces_bench_row():
    stats = corpus_stats(read_corpus(FIXTURES / "bench_corpus.jsonl"))
    assert stats.total.max_tokens == 726
    assert stats.total.min_tokens == 9
    assert stats.total.avg_tokens == 128.2
    assert stats.total.sequences == 200
    _ok("Stats fixture: bench corpus reproduces the 726/9/128.2 row exactly")
