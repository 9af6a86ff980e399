"""Trajectory persistence, corpus statistics, curriculum splits, and rater agreement.

The corpus file is JSONL, one record per line, schema version 1 (see
docs/corpus-schema.md). Scores are rendered to at most six decimal places;
on load the fused score is validated against its parts at that grain and
then recomputed exactly, so the in-memory invariant stays machine-checked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from random import Random
from typing import Sequence

from .core import (
    DOMAINS,
    DifficultyAssessment,
    Origin,
    Question,
    RoundRecord,
    SolvabilityVerdict,
    Trajectory,
)
from .errors import DomainError, SchemaError

SCHEMA_VERSION = 1

# Max discrepancy between a stored fused score and the mean of its stored
# parts, given 6-decimal rendering of all three.
_AVG_TOLERANCE = 1e-6 + 1e-12


@dataclass(frozen=True)
class CorpusRecord:
    trajectory: Trajectory
    seed_dataset: str
    category: str
    created_at: datetime

    def __post_init__(self):
        if self.category not in DOMAINS:
            raise DomainError(f"category must be one of {DOMAINS}")
        for q in self.trajectory.questions:
            if q.domain != self.category:
                raise DomainError(
                    f"question {q.id} domain {q.domain!r} != category {self.category!r}"
                )


def _round_score(value: float | None) -> float | None:
    return None if value is None else round(value, 6)


def question_to_dict(q: Question) -> dict:
    return {
        "id": q.id,
        "domain": q.domain,
        "text": q.text,
        "origin": {"seed_dataset": q.origin.seed_dataset, "round_index": q.origin.round_index},
        "token_length": q.token_length,
    }


def _question_from_dict(obj: dict) -> Question:
    origin = obj["origin"]
    return Question(
        id=str(obj["id"]),
        domain=obj["domain"],
        text=obj["text"],
        origin=Origin(str(origin["seed_dataset"]), int(origin["round_index"])),
        token_length=int(obj["token_length"]),
    )


def _difficulty_to_dict(d: DifficultyAssessment) -> dict:
    return {
        "dr_llm": _round_score(d.dr_llm),
        "dr_vn": _round_score(d.dr_vn),
        "dr_avg": _round_score(d.dr_avg),
    }


def _difficulty_from_dict(obj: dict) -> DifficultyAssessment:
    dr_llm = obj.get("dr_llm")
    dr_vn = obj.get("dr_vn")
    dr_avg = obj.get("dr_avg")
    if dr_avg is not None:
        if dr_llm is None or dr_vn is None:
            raise DomainError("dr_avg present without both parts")
        if abs(dr_avg - (dr_llm + dr_vn) / 2.0) > _AVG_TOLERANCE:
            raise DomainError(
                f"dr_avg {dr_avg} is not the mean of ({dr_llm}, {dr_vn})"
            )
    elif dr_llm is not None and dr_vn is not None:
        raise DomainError("dr_avg missing although both parts are present")
    # Recompute rather than trust the stored fusion.
    return DifficultyAssessment.from_parts(dr_llm=dr_llm, dr_vn=dr_vn)


def _verdict_to_dict(v: SolvabilityVerdict | None) -> dict | None:
    if v is None:
        return None
    return {
        "solvable": v.solvable,
        "confidence": _round_score(v.confidence),
        "reason": v.reason,
        "missing_info": list(v.missing_info),
    }


def _verdict_from_dict(obj: dict | None) -> SolvabilityVerdict | None:
    if obj is None:
        return None
    return SolvabilityVerdict(
        solvable=bool(obj["solvable"]),
        confidence=float(obj["confidence"]),
        reason=str(obj["reason"]),
        missing_info=tuple(str(m) for m in obj["missing_info"]),
    )


def trajectory_to_dict(t: Trajectory) -> dict:
    return {
        "seed": question_to_dict(t.seed),
        "seed_assessment": _difficulty_to_dict(t.seed_assessment),
        "seed_assessment_tokens": t.seed_assessment_tokens,
        "rounds": [
            {
                "question": question_to_dict(r.question),
                "difficulty": _difficulty_to_dict(r.difficulty),
                "verdict": _verdict_to_dict(r.verdict),
                "tokens_generation": r.tokens_generation,
                "tokens_verification": r.tokens_verification,
            }
            for r in t.rounds
        ],
        "termination": t.termination,
        "termination_detail": t.termination_detail,
        "total_tokens": t.total_tokens,
        "solvability_enforced": t.solvability_enforced,
        "monotonicity_enforced": t.monotonicity_enforced,
    }


def trajectory_from_dict(obj: dict) -> Trajectory:
    rounds = tuple(
        RoundRecord(
            question=_question_from_dict(r["question"]),
            difficulty=_difficulty_from_dict(r["difficulty"]),
            verdict=_verdict_from_dict(r["verdict"]),
            tokens_generation=int(r["tokens_generation"]),
            tokens_verification=int(r["tokens_verification"]),
        )
        for r in obj["rounds"]
    )
    return Trajectory(
        seed=_question_from_dict(obj["seed"]),
        rounds=rounds,
        termination=obj["termination"],
        total_tokens=int(obj["total_tokens"]),
        seed_assessment=_difficulty_from_dict(obj["seed_assessment"]),
        seed_assessment_tokens=int(obj["seed_assessment_tokens"]),
        solvability_enforced=bool(obj["solvability_enforced"]),
        monotonicity_enforced=bool(obj["monotonicity_enforced"]),
        termination_detail=obj.get("termination_detail"),
    )


def record_to_dict(record: CorpusRecord) -> dict:
    return {
        "v": SCHEMA_VERSION,
        "seed_dataset": record.seed_dataset,
        "category": record.category,
        "created_at": record.created_at.isoformat(),
        "trajectory": trajectory_to_dict(record.trajectory),
    }


def record_from_dict(obj: dict) -> CorpusRecord:
    if obj.get("v") != SCHEMA_VERSION:
        raise DomainError(f"unsupported schema version {obj.get('v')!r}")
    return CorpusRecord(
        trajectory=trajectory_from_dict(obj["trajectory"]),
        seed_dataset=str(obj["seed_dataset"]),
        category=obj["category"],
        created_at=datetime.fromisoformat(obj["created_at"]),
    )


def write_corpus(records: Sequence[CorpusRecord], path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False) + "\n")
    return len(records)


def read_corpus(path) -> list[CorpusRecord]:
    """Load and fully re-validate a corpus file.

    Every type invariant is re-checked on construction; a malformed line
    raises a SchemaError naming its 1-based line number.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except SchemaError:
                raise
            except (ValueError, KeyError, TypeError, DomainError) as exc:
                raise SchemaError(str(exc), line=lineno) from exc
    return records


@dataclass(frozen=True)
class DatasetStats:
    dataset: str
    sequences: int
    questions: int
    min_tokens: int
    max_tokens: int
    avg_tokens: float
    avg_rounds: float


@dataclass(frozen=True)
class CorpusStats:
    datasets: tuple[DatasetStats, ...]
    total: DatasetStats | None

    def to_dict(self) -> dict:
        def row(s: DatasetStats) -> dict:
            return {
                "dataset": s.dataset,
                "sequences": s.sequences,
                "questions": s.questions,
                "min_tokens": s.min_tokens,
                "max_tokens": s.max_tokens,
                "avg_tokens": s.avg_tokens,
                "avg_rounds": s.avg_rounds,
            }

        return {
            "datasets": [row(s) for s in self.datasets],
            "total": row(self.total) if self.total else None,
        }


def _stats_for(dataset: str, records: Sequence[CorpusRecord]) -> DatasetStats:
    lengths = [q.token_length for r in records for q in r.trajectory.questions]
    rounds = [len(r.trajectory.rounds) for r in records]
    return DatasetStats(
        dataset=dataset,
        sequences=len(records),
        questions=len(lengths),
        min_tokens=min(lengths),
        max_tokens=max(lengths),
        avg_tokens=sum(lengths) / len(lengths),
        avg_rounds=sum(rounds) / len(rounds),
    )


def corpus_stats(records: Sequence[CorpusRecord]) -> CorpusStats:
    """Per-dataset token-length and round statistics plus an all-dataset total.

    Token lengths cover every question in a sequence, seed included; the
    average round count is over retained rounds.
    """
    if not records:
        return CorpusStats(datasets=(), total=None)
    by_dataset: dict[str, list[CorpusRecord]] = {}
    for record in records:
        by_dataset.setdefault(record.seed_dataset, []).append(record)
    datasets = tuple(
        _stats_for(name, group) for name, group in sorted(by_dataset.items())
    )
    return CorpusStats(datasets=datasets, total=_stats_for("total", records))


@dataclass(frozen=True)
class CurriculumSplit:
    """Three curriculum levels drawn from each eligible sequence.

    Level 1 holds the seeds, level 2 one seeded-random intermediate pick per
    sequence, level 3 the final questions; levels 1 and 2 are stored after
    duplication, so their lengths realize the configured count ratio.
    """

    l1: tuple[Question, ...]
    l2: tuple[Question, ...]
    l3: tuple[Question, ...]
    duplication: dict[str, int]
    source_sequences: int
    skipped: int

    def __post_init__(self):
        for name in ("l1", "l2", "l3"):
            expected = self.source_sequences * self.duplication[name]
            got = len(getattr(self, name))
            if got != expected:
                raise DomainError(f"{name} has {got} items, expected {expected}")


def curriculum_split(
    records: Sequence[CorpusRecord],
    rng_seed: int,
    duplication: tuple[int, int, int] = (2, 2, 1),
) -> CurriculumSplit:
    """Stratify sequences into curriculum levels with a 2:2:1 count ratio.

    Sequences shorter than three questions cannot yield an intermediate pick
    and are skipped (counted, not an error). The level-2 pick is drawn from
    the intermediate positions with a seeded RNG, so splits are reproducible.
    """
    rng = Random(rng_seed)
    l1: list[Question] = []
    l2: list[Question] = []
    l3: list[Question] = []
    skipped = 0
    for record in records:
        sequence = record.trajectory.questions
        if len(sequence) < 3:
            skipped += 1
            continue
        l1.append(sequence[0])
        l2.append(rng.choice(sequence[1:-1]))
        l3.append(sequence[-1])
    d1, d2, d3 = duplication
    return CurriculumSplit(
        l1=tuple(l1 * d1),
        l2=tuple(l2 * d2),
        l3=tuple(l3 * d3),
        duplication={"l1": d1, "l2": d2, "l3": d3},
        source_sequences=len(l1),
        skipped=skipped,
    )


def fleiss_kappa(ratings: Sequence[Sequence[int]], raters_per_item: int) -> float:
    """Chance-corrected agreement across raters assigning items to categories.

    ``ratings`` is an N x C matrix of per-category rater counts; every row
    must sum to ``raters_per_item``. When expected agreement is 1 the
    statistic is undefined unless observed agreement is also 1 (then 1.0).
    """
    n_items = len(ratings)
    if n_items < 1:
        raise DomainError("need at least one item")
    n_categories = len(ratings[0])
    if n_categories < 2:
        raise DomainError("need at least two categories")
    if raters_per_item < 2:
        raise DomainError("need at least two raters per item")
    p_item = []
    category_totals = [0] * n_categories
    for i, row in enumerate(ratings):
        if len(row) != n_categories:
            raise DomainError(f"row {i} has {len(row)} categories, expected {n_categories}")
        if any(c < 0 for c in row):
            raise DomainError(f"row {i} has a negative count")
        if sum(row) != raters_per_item:
            raise DomainError(
                f"row {i} sums to {sum(row)}, expected {raters_per_item}"
            )
        p_item.append(
            (sum(c * c for c in row) - raters_per_item)
            / (raters_per_item * (raters_per_item - 1))
        )
        for j, c in enumerate(row):
            category_totals[j] += c
    p_bar = sum(p_item) / n_items
    total = n_items * raters_per_item
    p_expected = sum((c / total) ** 2 for c in category_totals)
    if math.isclose(p_expected, 1.0, abs_tol=1e-12):
        if math.isclose(p_bar, 1.0, abs_tol=1e-12):
            return 1.0
        raise DomainError("expected agreement is 1 but observed is not; kappa undefined")
    return (p_bar - p_expected) / (1.0 - p_expected)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)
