"""LLM-judged protocols: listwise difficulty ranking and solvability checks.

Both protocols demand "ONLY a valid JSON object" from the model, but real
models wrap output in prose and code fences, so extraction scans balanced-
brace candidates and prefers the longest one that parses. Parse failures are
retried with the same prompt; structurally wrong answers are not.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from typing import Sequence

from .core import Question, SolvabilityVerdict, normalize_group_rank
from .errors import DomainError, JsonNotFound, ProtocolError, ValidationError
from .gateway import Gateway
from .prompts import load_template, render

JUDGE_ATTEMPTS = 3

VERDICT_FIELDS = ("solvable", "confidence", "reason", "missing_info")

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n?(.*?)```", re.DOTALL)


def _strip_fences(text: str) -> str:
    return _FENCE_RE.sub(lambda m: m.group(1), text)


def _balanced_spans(text: str) -> list[tuple[int, int]]:
    """All (start, end) spans of brace-balanced substrings, string-aware."""
    spans = []
    stack: list[int] = []
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            stack.append(i)
        elif ch == "}" and stack:
            spans.append((stack.pop(), i + 1))
    return spans


def iter_json_candidates(text: str):
    """Yield parsed JSON objects found in ``text``, longest candidates first."""
    cleaned = _strip_fences(text)
    spans = sorted(_balanced_spans(cleaned), key=lambda s: s[0] - s[1])
    for start, end in spans:
        try:
            yield json.loads(cleaned[start:end])
        except ValueError:
            continue


def extract_json_object(text: str):
    """Parse the first (longest) balanced JSON candidate in ``text``.

    Code fences are stripped before scanning; preferring longer candidates
    avoids capturing sub-objects embedded in the intended one.
    """
    for obj in iter_json_candidates(text):
        return obj
    raise JsonNotFound("no parseable JSON object found in model output")


def budget_for_rank(score: float, k_min: int, k_max: int) -> int:
    """Map a normalized difficulty score to a sample budget in [k_min, k_max]."""
    if k_min > k_max:
        raise DomainError(f"k_min {k_min} > k_max {k_max}")
    if not 0.0 <= score <= 1.0:
        raise DomainError(f"score must lie in [0, 1], got {score}")
    return round(k_min + score * (k_max - k_min))


@dataclass(frozen=True)
class RankingResult:
    """Grouped ranking over question indices, easiest group first."""

    groups: tuple[tuple[int, ...], ...]
    reasons: tuple[str, ...]

    def validate(self, n: int) -> None:
        if len(self.groups) != len(self.reasons):
            raise ValidationError(
                f"result has {len(self.groups)} groups but {len(self.reasons)} reasons"
            )
        if any(len(g) == 0 for g in self.groups):
            raise ValidationError("ranking contains an empty group")
        seen = [i for g in self.groups for i in g]
        if sorted(seen) != list(range(n)):
            raise ValidationError(
                f"ranking indices are not a permutation of 0..{n - 1}: {seen}"
            )


@dataclass(frozen=True)
class RankingOutcome:
    result: RankingResult
    scores: tuple[float, ...]
    tokens: int


@dataclass(frozen=True)
class VerificationOutcome:
    verdict: SolvabilityVerdict
    tokens: int


def scores_from_groups(groups: Sequence[Sequence[int]], n: int) -> list[float]:
    """Per-question normalized scores from an easiest-first grouping.

    A single group leaves the ranking undefined; every question gets the
    neutral midpoint 0.5 so a downstream monotonicity comparison is not
    forced either way.
    """
    scores = [0.0] * n
    g_count = len(groups)
    for j, group in enumerate(groups, start=1):
        value = 0.5 if g_count == 1 else normalize_group_rank(j, g_count)
        for idx in group:
            scores[idx] = value
    return scores


def _parse_ranking(text: str, n: int) -> RankingResult:
    # A response without a parseable {result, reason} object is a protocol
    # failure (retried); structurally wrong content is a validation error.
    obj = None
    for candidate in iter_json_candidates(text):
        if isinstance(candidate, dict) and "result" in candidate and "reason" in candidate:
            obj = candidate
            break
    if obj is None:
        raise JsonNotFound("no JSON object with 'result' and 'reason' fields")
    raw_groups = obj["result"]
    raw_reasons = obj["reason"]
    if not isinstance(raw_groups, list) or not isinstance(raw_reasons, list):
        raise ValidationError("'result' and 'reason' must be arrays")
    groups = []
    for g in raw_groups:
        if not isinstance(g, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in g):
            raise ValidationError(f"group {g!r} is not a list of integer indices")
        groups.append(tuple(g))
    reasons = tuple(str(r) for r in raw_reasons)
    result = RankingResult(groups=tuple(groups), reasons=reasons)
    result.validate(n)
    return result


def render_question_list(questions: Sequence[Question]) -> str:
    return "\n".join(f"Question {i}: {q.text}" for i, q in enumerate(questions))


def shuffle_permutation(n: int, shuffle_seed: int) -> list[int]:
    """Seeded permutation used to shuffle questions before ranking."""
    perm = list(range(n))
    random.Random(shuffle_seed).shuffle(perm)
    return perm


def rank_difficulty(
    gateway: Gateway,
    questions: Sequence[Question],
    shuffle_seed: int = 0,
    *,
    permutation: Sequence[int] | None = None,
    attempts: int = JUDGE_ATTEMPTS,
    template_path: str | None = None,
) -> RankingOutcome:
    """Listwise-rank ``questions`` into difficulty groups and score them.

    The questions are permuted by a seeded shuffle before prompting (to
    mitigate positional bias), and the model's grouped ranking is mapped back
    through the inverse permutation, so the returned groups and scores are in
    the caller's original order. ``permutation`` overrides the seeded shuffle
    for callers that need an explicit one.
    """
    if not questions:
        raise DomainError("cannot rank an empty question list")
    n = len(questions)
    perm = list(permutation) if permutation is not None else shuffle_permutation(n, shuffle_seed)
    if sorted(perm) != list(range(n)):
        raise DomainError(f"permutation must cover 0..{n - 1}")
    shuffled = [questions[p] for p in perm]

    template = load_template("ranking", template_path)
    prompt = render(template, "questions", render_question_list(shuffled))

    tokens = 0
    last_error: Exception | None = None
    for _ in range(attempts):
        response = gateway.chat("rank", prompt)
        tokens += response.total_tokens
        try:
            shuffled_result = _parse_ranking(response.text, n)
        except JsonNotFound as exc:
            last_error = exc
            continue
        # Map shuffled indices back to the caller's order.
        groups = tuple(tuple(perm[i] for i in g) for g in shuffled_result.groups)
        result = RankingResult(groups=groups, reasons=shuffled_result.reasons)
        shuffled_scores = scores_from_groups(shuffled_result.groups, n)
        original_scores = [0.0] * n
        for k, s in enumerate(shuffled_scores):
            original_scores[perm[k]] = s
        return RankingOutcome(result=result, scores=tuple(original_scores), tokens=tokens)
    raise ProtocolError(
        f"no valid ranking JSON after {attempts} attempts: {last_error}"
    )


def _clamp(value: float) -> float:
    return min(1.0, max(0.0, value))


def _parse_verdict(text: str) -> SolvabilityVerdict:
    candidates = list(iter_json_candidates(text))
    if not candidates:
        raise JsonNotFound("no parseable JSON object in verifier output")
    chosen = None
    for obj in candidates:
        if isinstance(obj, dict) and all(key in obj for key in VERDICT_FIELDS):
            chosen = obj
            break
    if chosen is None:
        raise ValidationError(
            f"verifier JSON lacks required fields {VERDICT_FIELDS}"
        )
    solvable = chosen["solvable"]
    confidence = chosen["confidence"]
    reason = chosen["reason"]
    missing = chosen["missing_info"]
    if not isinstance(solvable, bool):
        raise ValidationError(f"'solvable' must be a boolean, got {solvable!r}")
    if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
        raise ValidationError(f"'confidence' must be a number, got {confidence!r}")
    if not isinstance(reason, str):
        raise ValidationError(f"'reason' must be a string, got {reason!r}")
    if not isinstance(missing, list) or not all(isinstance(m, str) for m in missing):
        raise ValidationError(f"'missing_info' must be a list of strings, got {missing!r}")
    if solvable and missing:
        # Contract violation by the model: never accept it as solvable.
        solvable = False
        reason = f"{reason} [downgraded: solvable verdict listed missing_info]"
    return SolvabilityVerdict(
        solvable=solvable,
        confidence=_clamp(float(confidence)),
        reason=reason,
        missing_info=tuple(missing),
    )


def verify_solvability(
    gateway: Gateway,
    question: Question,
    *,
    attempts: int = JUDGE_ATTEMPTS,
    template_path: str | None = None,
) -> VerificationOutcome:
    """Ask the verifier role whether ``question`` is well-posed and solvable."""
    template = load_template("solvability", template_path)
    prompt = render(template, "question", question.text)
    tokens = 0
    last_error: Exception | None = None
    for _ in range(attempts):
        response = gateway.chat("verify", prompt)
        tokens += response.total_tokens
        try:
            verdict = _parse_verdict(response.text)
        except JsonNotFound as exc:
            last_error = exc
            continue
        return VerificationOutcome(verdict=verdict, tokens=tokens)
    raise ProtocolError(
        f"no valid verdict JSON after {attempts} attempts: {last_error}"
    )
