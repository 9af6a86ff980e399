"""Reward signals: the rule-based generator reward and the judged curriculum reward.

The generator reward scores one evolution step from its validity, verifier
confidence, and difficulty change; the curriculum reward aggregates four
judged quality dimensions into one scalar for answer-quality training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import Question
from .errors import DomainError, JsonNotFound, ProtocolError, ValidationError
from .gateway import Gateway, truncate_to_tokens
from .judges import iter_json_candidates
from .prompts import load_template, render

DEFAULT_CURRICULUM_WEIGHTS = (0.20, 0.35, 0.25, 0.20)

QUESTION_TOKEN_LIMIT = 4096
ANSWER_TOKEN_LIMIT = 16384

JUDGE_SCORE_FIELDS = (
    "problem_resolution",
    "reasoning_correctness",
    "information_completeness",
    "accuracy",
    "confidence",
)


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class RewardInput:
    """One evolution step as seen by the generator reward.

    ``delta_d`` is the difference of two normalized ranks, hence in [-1, 1].
    """

    valid: bool
    confidence: float
    delta_d: float

    def __post_init__(self):
        _check_unit("confidence", self.confidence)
        if not -1.0 <= self.delta_d <= 1.0:
            raise DomainError(f"delta_d must lie in [-1, 1], got {self.delta_d}")


def generator_reward(reward_input: RewardInput) -> float:
    """Difficulty-aware rule reward in [0, 1].

    With conf = max(0.5, confidence):
      invalid or a difficulty drop -> 0
      unchanged difficulty         -> 0.6 * conf
      increased difficulty         -> 0.2 * conf + 0.8 * (0.8 + 0.2 * delta)

    Invalid covers unsolvable questions, repetitive outputs, and negative
    difficulty changes alike.
    """
    if not reward_input.valid or reward_input.delta_d < 0:
        return 0.0
    conf = max(0.5, reward_input.confidence)
    if reward_input.delta_d == 0:
        return 0.6 * conf
    return 0.2 * conf + 0.8 * (0.8 + 0.2 * reward_input.delta_d)


@dataclass(frozen=True)
class JudgeScores:
    """Four judged quality dimensions plus the judge's own confidence."""

    s_pr: float
    s_rc: float
    s_ic: float
    s_acc: float
    judge_confidence: float

    def __post_init__(self):
        for name in ("s_pr", "s_rc", "s_ic", "s_acc", "judge_confidence"):
            _check_unit(name, getattr(self, name))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.s_pr, self.s_rc, self.s_ic, self.s_acc)


def curriculum_reward(
    scores: JudgeScores, weights: Sequence[float] = DEFAULT_CURRICULUM_WEIGHTS
) -> float:
    """Weighted aggregation of the four dimensions; weights must sum to 1."""
    if len(weights) != 4:
        raise DomainError(f"expected 4 weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise DomainError("weights must be non-negative")
    total = sum(weights)
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"weights must sum to 1, got {total}")
    return sum(w * s for w, s in zip(weights, scores.as_tuple()))


def _parse_judge_scores(text: str) -> JudgeScores:
    candidates = list(iter_json_candidates(text))
    if not candidates:
        raise JsonNotFound("no parseable JSON object in judge output")
    chosen = None
    for obj in candidates:
        if isinstance(obj, dict) and all(key in obj for key in JUDGE_SCORE_FIELDS):
            chosen = obj
            break
    if chosen is None:
        raise ValidationError(f"judge JSON lacks required fields {JUDGE_SCORE_FIELDS}")
    values = []
    for key in JUDGE_SCORE_FIELDS:
        value = chosen[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{key!r} must be a number, got {value!r}")
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{key!r} out of range: {value}")
        values.append(float(value))
    return JudgeScores(*values)


def judge_answer(
    gateway: Gateway,
    question: Question,
    answer: str,
    *,
    attempts: int = 3,
    template_path: str | None = None,
) -> JudgeScores:
    """Score an answer on the four dimensions via the reward-judge role.

    Over-length inputs are truncated by the gateway estimator (4096 tokens for
    the question, 16384 for the answer) before prompting. Protocol and
    range failures are retried with the same prompt up to ``attempts`` times.
    """
    template = load_template("answer_judge", template_path)
    prompt = render(template, "question", truncate_to_tokens(question.text, QUESTION_TOKEN_LIMIT))
    prompt = render(prompt, "answer", truncate_to_tokens(answer, ANSWER_TOKEN_LIMIT))
    last_error: Exception | None = None
    for _ in range(attempts):
        response = gateway.chat("reward_judge", prompt)
        try:
            return _parse_judge_scores(response.text)
        except (JsonNotFound, ValidationError) as exc:
            last_error = exc
            continue
    raise ProtocolError(f"no valid judge scores after {attempts} attempts: {last_error}")
