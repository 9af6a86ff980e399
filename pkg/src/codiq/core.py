"""Domain types shared by every module, plus difficulty normalization and fusion.

All types here are immutable value objects: they validate their invariants on
construction and are safe to share between concurrent trajectory workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError

DOMAINS = ("math", "code")

TERMINATIONS = (
    "max_rounds_reached",
    "non_monotonic_difficulty",
    "unsolvable",
    "budget_exhausted",
    "provider_error",
)


def normalize_group_rank(group_index: int, group_count: int) -> float:
    """Map a 1-based difficulty-group position to a normalized score in [0, 1].

    Groups are ordered easiest to hardest; the easiest group maps to 0.0 and
    the hardest to 1.0 via (j - 1) / (G - 1), computed in double precision.
    Undefined for a single group (G < 2): callers apply the midpoint rule
    themselves where a degenerate ranking is legitimate.
    """
    if group_count < 2:
        raise DomainError(f"group_count must be >= 2, got {group_count}")
    if not 1 <= group_index <= group_count:
        raise DomainError(
            f"group_index {group_index} outside [1, {group_count}]"
        )
    return (group_index - 1) / (group_count - 1)


def fuse_scores(dr_llm: float, dr_vn: float) -> float:
    """Fuse the two difficulty estimates into their arithmetic mean."""
    for name, value in (("dr_llm", dr_llm), ("dr_vn", dr_vn)):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {value}")
    return (dr_llm + dr_vn) / 2.0


def _check_unit(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class Origin:
    """Provenance of a question: which seed set it came from and which
    evolution round produced it (0 for seeds)."""

    seed_dataset: str
    round_index: int

    def __post_init__(self):
        if self.round_index < 0:
            raise DomainError(f"round_index must be >= 0, got {self.round_index}")


@dataclass(frozen=True)
class Question:
    """One problem statement with domain tag, provenance, and token length."""

    id: str
    domain: str
    text: str
    origin: Origin
    token_length: int

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise DomainError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if not self.text:
            raise DomainError("question text must be non-empty")
        if self.token_length < 0:
            raise DomainError("token_length must be >= 0")

    @property
    def is_seed(self) -> bool:
        return self.origin.round_index == 0


@dataclass(frozen=True)
class DifficultyAssessment:
    """Normalized difficulty scores from the two estimators and their fusion.

    ``dr_avg`` is present exactly when both parts are, and always equals their
    arithmetic mean; use :meth:`from_parts` to construct consistently.
    """

    dr_llm: float | None = None
    dr_vn: float | None = None
    dr_avg: float | None = None

    def __post_init__(self):
        for name in ("dr_llm", "dr_vn", "dr_avg"):
            value = getattr(self, name)
            if value is not None:
                _check_unit(name, value)
        both = self.dr_llm is not None and self.dr_vn is not None
        if both:
            if self.dr_avg is None:
                raise DomainError("dr_avg must be present when both parts are")
            if self.dr_avg != fuse_scores(self.dr_llm, self.dr_vn):
                raise DomainError("dr_avg must equal (dr_llm + dr_vn) / 2 exactly")
        elif self.dr_avg is not None:
            raise DomainError("dr_avg requires both dr_llm and dr_vn")

    @classmethod
    def from_parts(
        cls, dr_llm: float | None = None, dr_vn: float | None = None
    ) -> "DifficultyAssessment":
        avg = None
        if dr_llm is not None and dr_vn is not None:
            avg = fuse_scores(dr_llm, dr_vn)
        return cls(dr_llm=dr_llm, dr_vn=dr_vn, dr_avg=avg)

    @property
    def score(self) -> float | None:
        """The value the pipeline compares rounds by: the fused score when
        both estimators ran, otherwise whichever one did."""
        if self.dr_avg is not None:
            return self.dr_avg
        if self.dr_llm is not None:
            return self.dr_llm
        return self.dr_vn


@dataclass(frozen=True)
class SolvabilityVerdict:
    """Verifier output: verdict, confidence, short reason, and what is missing.

    A solvable verdict never carries missing information; the judges module
    downgrades violating model output before this type is constructed.
    """

    solvable: bool
    confidence: float
    reason: str
    missing_info: tuple[str, ...] = ()

    def __post_init__(self):
        _check_unit("confidence", self.confidence)
        if self.solvable and self.missing_info:
            raise DomainError("a solvable verdict cannot list missing_info")


@dataclass(frozen=True)
class RoundRecord:
    """One retained evolution round: the question, its scores, its verdict,
    and the tokens spent producing and checking it.

    ``tokens_verification`` covers the whole checking phase for the round:
    the difficulty-ranking call plus the solvability call when enforcement is
    on. ``verdict`` is None only when solvability verification was disabled.
    """

    question: Question
    difficulty: DifficultyAssessment
    verdict: SolvabilityVerdict | None
    tokens_generation: int
    tokens_verification: int

    def __post_init__(self):
        if self.tokens_generation < 0 or self.tokens_verification < 0:
            raise DomainError("token counts must be >= 0")
        if self.question.origin.round_index < 1:
            raise DomainError("a round question must have round_index >= 1")
        if self.difficulty.score is None:
            raise DomainError("a retained round carries at least one difficulty score")


@dataclass(frozen=True)
class Trajectory:
    """A seed plus its ordered retained variants, with termination cause.

    ``total_tokens`` equals ``seed_assessment_tokens`` plus the sum of every
    retained round's generation and verification tokens, exactly — tokens
    spent on a discarded round are not part of the ledger. The two
    ``*_enforced`` flags record which rules were active during the run, so
    the corresponding invariants (passing verdicts present; non-decreasing
    difficulty) are only checked when they were actually promised.
    """

    seed: Question
    rounds: tuple[RoundRecord, ...]
    termination: str
    total_tokens: int
    seed_assessment: DifficultyAssessment = field(default_factory=DifficultyAssessment)
    seed_assessment_tokens: int = 0
    solvability_enforced: bool = True
    monotonicity_enforced: bool = True
    termination_detail: str | None = None

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise DomainError(
                f"termination must be one of {TERMINATIONS}, got {self.termination!r}"
            )
        if not self.seed.is_seed:
            raise DomainError("trajectory seed must have round_index 0")
        if self.seed_assessment_tokens < 0:
            raise DomainError("seed_assessment_tokens must be >= 0")
        for k, rec in enumerate(self.rounds):
            if rec.question.origin.round_index != k + 1:
                raise DomainError(
                    f"round {k} has round_index {rec.question.origin.round_index},"
                    f" expected {k + 1}"
                )
            if rec.question.domain != self.seed.domain:
                raise DomainError("every round must share the seed's domain")
        if self.solvability_enforced:
            for rec in self.rounds:
                if rec.verdict is None or not rec.verdict.solvable:
                    raise DomainError(
                        "solvability was enforced but a retained round lacks a"
                        " passing verdict"
                    )
        if self.monotonicity_enforced:
            scores = [r.difficulty.score for r in self.rounds]
            for a, b in zip(scores, scores[1:]):
                if b < a:
                    raise DomainError(
                        "monotonicity was enforced but retained difficulty decreases"
                    )
        spent = self.seed_assessment_tokens + sum(
            r.tokens_generation + r.tokens_verification for r in self.rounds
        )
        if self.total_tokens != spent:
            raise DomainError(
                f"total_tokens {self.total_tokens} != ledger sum {spent}"
            )

    @property
    def questions(self) -> tuple[Question, ...]:
        """Seed followed by every retained variant, in evolution order."""
        return (self.seed,) + tuple(r.question for r in self.rounds)
