"""Regenerate the checked-in test fixtures (deterministic).

Usage: python3 tests/fixtures/make_fixtures.py
"""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

from codiq.core import DifficultyAssessment, Origin, Question, Trajectory
from codiq.corpus import CorpusRecord, write_corpus
from codiq.valuenet import ValueNetWeights, save_weights

HERE = Path(__file__).parent

STAMP = datetime(2026, 1, 1, tzinfo=timezone.utc)

# 200 questions whose lengths hit min 9, max 726, mean 128.2 exactly:
# 726 + 9 + 197 * 125 + 280 = 25640 and 25640 / 200 = 128.2.
BENCH_LENGTHS = [726, 9] + [125] * 197 + [280]

FIXTURE_NET = dict(
    w1=[[0.5, -0.25], [1.0, 0.75]],
    b1=[0.1, -0.2],
    ln_gamma=[1.2, 0.8],
    ln_beta=[0.05, -0.05],
    w2=[0.9, -1.1],
    b2=0.3,
)


def bench_corpus(path: Path) -> None:
    records = []
    for i, length in enumerate(BENCH_LENGTHS):
        domain = "math" if i < 100 else "code"
        seed = Question(
            id=f"bench-{i:03d}",
            domain=domain,
            text=f"bench question {i} " + "#" * 8,
            origin=Origin("bench", 0),
            token_length=length,
        )
        trajectory = Trajectory(
            seed=seed,
            rounds=(),
            termination="budget_exhausted",
            total_tokens=0,
            seed_assessment=DifficultyAssessment.from_parts(dr_llm=0.5),
            termination_detail="fixture: seed-only record",
        )
        records.append(
            CorpusRecord(
                trajectory=trajectory,
                seed_dataset="bench",
                category=domain,
                created_at=STAMP,
            )
        )
    write_corpus(records, path)


def main() -> None:
    assert sum(BENCH_LENGTHS) == 25640 and len(BENCH_LENGTHS) == 200
    bench_corpus(HERE / "bench_corpus.jsonl")
    save_weights(
        ValueNetWeights.from_arrays(**FIXTURE_NET), HERE / "valuenet_2x2.cdqw"
    )
    print("fixtures written:", HERE)


if __name__ == "__main__":
    main()
