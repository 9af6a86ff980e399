from __future__ import annotations

import random

import pytest

from codiq.core import (
    DifficultyAssessment,
    Origin,
    Question,
    RoundRecord,
    SolvabilityVerdict,
    Trajectory,
    fuse_scores,
    normalize_group_rank,
)
from codiq.errors import DomainError

from conftest import make_question


def test_normalize_group_rank_examples():
    assert normalize_group_rank(1, 3) == 0.0
    assert normalize_group_rank(3, 3) == 1.0
    assert normalize_group_rank(2, 3) == 0.5


def test_normalize_group_rank_matches_formula_exactly():
    for g in range(2, 11):
        for j in range(1, g + 1):
            assert normalize_group_rank(j, g) == (j - 1) / (g - 1)


def test_normalize_group_rank_domain_errors():
    with pytest.raises(DomainError):
        normalize_group_rank(1, 1)
    with pytest.raises(DomainError):
        normalize_group_rank(0, 3)
    with pytest.raises(DomainError):
        normalize_group_rank(4, 3)


def test_normalize_group_rank_strictly_increasing_in_j():
    for g in range(2, 11):
        values = [normalize_group_rank(j, g) for j in range(1, g + 1)]
        assert all(a < b for a, b in zip(values, values[1:]))


def test_fuse_scores_examples():
    assert fuse_scores(0.0, 0.0) == 0.0
    assert fuse_scores(1.0, 0.0) == 0.5
    assert fuse_scores(0.732, 0.833) == pytest.approx(0.7825, abs=1e-15)


def test_fuse_scores_symmetric_and_bounded():
    rng = random.Random(7)
    for _ in range(200):
        a, b = rng.random(), rng.random()
        fused = fuse_scores(a, b)
        assert fused == fuse_scores(b, a)
        assert min(a, b) <= fused <= max(a, b)


def test_fuse_scores_domain_errors():
    with pytest.raises(DomainError):
        fuse_scores(-0.1, 0.5)
    with pytest.raises(DomainError):
        fuse_scores(0.5, 1.1)


def test_question_invariants():
    with pytest.raises(DomainError):
        make_question(text="")
    with pytest.raises(DomainError):
        make_question(domain="physics")
    with pytest.raises(DomainError):
        Question("q", "math", "x", Origin("d", -1), 3)
    assert make_question(round_index=0).is_seed
    assert not make_question(round_index=2).is_seed


def test_difficulty_assessment_consistency():
    d = DifficultyAssessment.from_parts(dr_llm=0.5, dr_vn=1.0)
    assert d.dr_avg == 0.75
    assert d.score == 0.75
    assert DifficultyAssessment.from_parts(dr_llm=0.4).score == 0.4
    assert DifficultyAssessment().score is None
    with pytest.raises(DomainError):
        DifficultyAssessment(dr_llm=0.5, dr_vn=1.0, dr_avg=0.8)
    with pytest.raises(DomainError):
        DifficultyAssessment(dr_llm=0.5, dr_vn=1.0)  # avg missing
    with pytest.raises(DomainError):
        DifficultyAssessment(dr_llm=1.5)
    with pytest.raises(DomainError):
        DifficultyAssessment(dr_avg=0.5)


def test_verdict_invariants():
    with pytest.raises(DomainError):
        SolvabilityVerdict(True, 0.9, "ok", ("radius",))
    with pytest.raises(DomainError):
        SolvabilityVerdict(True, 1.2, "ok")
    v = SolvabilityVerdict(False, 0.8, "missing data", ("radius",))
    assert v.missing_info == ("radius",)


def _round(i, score, tokens=(10, 20)):
    return RoundRecord(
        question=make_question(qid=f"q0/r{i}", text=f"harder {i}", round_index=i),
        difficulty=DifficultyAssessment.from_parts(dr_llm=score),
        verdict=SolvabilityVerdict(True, 0.9, "ok"),
        tokens_generation=tokens[0],
        tokens_verification=tokens[1],
    )


def test_trajectory_round_index_contiguity():
    with pytest.raises(DomainError):
        Trajectory(
            seed=make_question(),
            rounds=(_round(2, 1.0),),
            termination="max_rounds_reached",
            total_tokens=30,
        )


def test_trajectory_token_ledger_is_exact():
    rounds = (_round(1, 0.5), _round(2, 1.0))
    Trajectory(
        seed=make_question(),
        rounds=rounds,
        termination="max_rounds_reached",
        total_tokens=65,
        seed_assessment=DifficultyAssessment.from_parts(dr_llm=0.5),
        seed_assessment_tokens=5,
    )
    with pytest.raises(DomainError):
        Trajectory(
            seed=make_question(),
            rounds=rounds,
            termination="max_rounds_reached",
            total_tokens=64,
            seed_assessment_tokens=5,
        )


def test_trajectory_monotonicity_enforced_only_when_promised():
    decreasing = (_round(1, 1.0), _round(2, 0.5))
    with pytest.raises(DomainError):
        Trajectory(
            seed=make_question(),
            rounds=decreasing,
            termination="max_rounds_reached",
            total_tokens=60,
        )
    t = Trajectory(
        seed=make_question(),
        rounds=decreasing,
        termination="max_rounds_reached",
        total_tokens=60,
        monotonicity_enforced=False,
    )
    assert len(t.rounds) == 2


def test_trajectory_solvability_flag():
    unverified = RoundRecord(
        question=make_question(qid="q0/r1", text="harder", round_index=1),
        difficulty=DifficultyAssessment.from_parts(dr_llm=1.0),
        verdict=None,
        tokens_generation=1,
        tokens_verification=1,
    )
    with pytest.raises(DomainError):
        Trajectory(
            seed=make_question(),
            rounds=(unverified,),
            termination="max_rounds_reached",
            total_tokens=2,
        )
    t = Trajectory(
        seed=make_question(),
        rounds=(unverified,),
        termination="max_rounds_reached",
        total_tokens=2,
        solvability_enforced=False,
    )
    assert t.rounds[0].verdict is None


def test_trajectory_questions_property():
    t = Trajectory(
        seed=make_question(),
        rounds=(_round(1, 1.0),),
        termination="unsolvable",
        total_tokens=30,
    )
    assert [q.origin.round_index for q in t.questions] == [0, 1]
