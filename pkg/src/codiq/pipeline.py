"""The evolution loop: prompt, score, verify, terminate, and assemble trajectories.

Each trajectory is a strictly sequential state machine over one seed:

    d_0 <- Difficulty(Q_0)
    for i = 1..max_rounds:
        Q_i <- generator(Q_{i-1})
        d_i <- Difficulty(Q_i)          # shared listwise ranking context
        if not Valid(Q_i) or d_i < d_{i-1}: discard Q_i and stop
        retain Q_i

Difficulty of a candidate is its normalized rank from one listwise ranking
over the retained trajectory plus the candidate, so successive scores are
comparable. Equal difficulty does not terminate; only a strict decrease
does. A cumulative token budget covers seed assessment, generation, ranking,
and verification; the round that pushes spend past the budget is discarded
and the trajectory ends there.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import (
    DifficultyAssessment,
    Origin,
    Question,
    RoundRecord,
    Trajectory,
)
from .errors import (
    CodiqError,
    ConfigError,
    ProtocolError,
    ProviderError,
    ValidationError,
)
from .gateway import Gateway, estimate_tokens
from .judges import rank_difficulty, verify_solvability
from .prompts import load_template, render
from .valuenet import FeatureWindow, ValueNetWeights, group_vn_scores, score_question

PROMPT_MODES = ("direct", "codiq")

FeatureProvider = Callable[[Question], FeatureWindow]


@dataclass(frozen=True)
class PipelineConfig:
    max_rounds: int = 8
    prompt_mode: str = "direct"
    budget_tokens: int | None = None  # None = unlimited
    solvability_threshold: float = 0.7
    enforce_solvability: bool = True
    enforce_monotonicity: bool = True
    shuffle_seed: int = 0
    use_llm_rank: bool = True
    use_valuenet: bool = False

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if self.prompt_mode not in PROMPT_MODES:
            raise ConfigError(f"prompt_mode must be one of {PROMPT_MODES}")
        if self.budget_tokens is not None and self.budget_tokens <= 0:
            raise ConfigError("budget_tokens must be > 0 when finite")
        if not 0.0 <= self.solvability_threshold <= 1.0:
            raise ConfigError("solvability_threshold must lie in [0, 1]")
        if not self.use_llm_rank and not self.use_valuenet:
            raise ConfigError("at least one difficulty estimator must be enabled")


def build_upgrade_prompt(
    previous: Question, mode: str, template_path: str | None = None
) -> str:
    """Substitute the previous question into the selected upgrade template."""
    if mode not in PROMPT_MODES:
        raise ConfigError(f"unknown prompt mode {mode!r}")
    template = load_template(f"upgrade_{mode}", template_path)
    return render(template, "original_problem", previous.text)


class _Evolver:
    """Mutable per-trajectory state; one instance per evolve() call."""

    def __init__(
        self,
        gateway: Gateway,
        seed: Question,
        config: PipelineConfig,
        weights: ValueNetWeights | None,
        feature_provider: FeatureProvider | None,
        templates: dict[str, str] | None,
    ):
        if config.use_valuenet and (weights is None or feature_provider is None):
            raise ConfigError(
                "use_valuenet requires both weights and a feature provider"
            )
        self.gateway = gateway
        self.seed = seed
        self.config = config
        self.weights = weights
        self.feature_provider = feature_provider
        self.templates = templates or {}
        self.rounds: list[RoundRecord] = []
        self.seed_assessment = DifficultyAssessment()
        self.seed_tokens = 0
        self.spent = 0  # cumulative, including in-progress rounds
        self._vn_cache: dict[str, float] = {}

    def _vn_score(self, question: Question) -> float:
        if question.id not in self._vn_cache:
            window = self.feature_provider(question)
            self._vn_cache[question.id] = score_question(self.weights, window)
        return self._vn_cache[question.id]

    def _assess(self, context: Sequence[Question]) -> tuple[DifficultyAssessment, int]:
        """Score the last question of ``context`` inside a shared ranking context."""
        dr_llm = None
        dr_vn = None
        tokens = 0
        if self.config.use_llm_rank:
            outcome = rank_difficulty(
                self.gateway,
                context,
                shuffle_seed=self.config.shuffle_seed,
                template_path=self.templates.get("ranking"),
            )
            dr_llm = outcome.scores[-1]
            tokens += outcome.tokens
        if self.config.use_valuenet:
            raw = [self._vn_score(q) for q in context]
            dr_vn = group_vn_scores(raw)[-1]
        return DifficultyAssessment.from_parts(dr_llm=dr_llm, dr_vn=dr_vn), tokens

    def _finish(self, termination: str, detail: str | None = None) -> Trajectory:
        total = self.seed_tokens + sum(
            r.tokens_generation + r.tokens_verification for r in self.rounds
        )
        return Trajectory(
            seed=self.seed,
            rounds=tuple(self.rounds),
            termination=termination,
            total_tokens=total,
            seed_assessment=self.seed_assessment,
            seed_assessment_tokens=self.seed_tokens,
            solvability_enforced=self.config.enforce_solvability,
            monotonicity_enforced=self.config.enforce_monotonicity,
            termination_detail=detail,
        )

    def _over_budget(self) -> bool:
        budget = self.config.budget_tokens
        return budget is not None and self.spent > budget

    def run(self) -> Trajectory:
        config = self.config
        try:
            self.seed_assessment, self.seed_tokens = self._assess([self.seed])
        except (ProviderError, ProtocolError, ValidationError) as exc:
            return self._finish("provider_error", detail=str(exc))
        self.spent = self.seed_tokens
        if self._over_budget():
            return self._finish("budget_exhausted", detail="seed assessment")

        previous = self.seed
        d_prev = self.seed_assessment.score
        for i in range(1, config.max_rounds + 1):
            try:
                prompt = build_upgrade_prompt(
                    previous, config.prompt_mode,
                    self.templates.get(f"upgrade_{config.prompt_mode}"),
                )
                generated = self.gateway.chat("generate", prompt)
                candidate_text = generated.text.strip()
                self.spent += generated.total_tokens

                # Degenerate output is invalid before any judging happens.
                if not candidate_text or candidate_text == previous.text:
                    return self._finish("unsolvable", detail="repetitive output")

                candidate = Question(
                    id=f"{self.seed.id}/r{i}",
                    domain=self.seed.domain,
                    text=candidate_text,
                    origin=Origin(self.seed.origin.seed_dataset, i),
                    token_length=estimate_tokens(candidate_text),
                )

                context = [self.seed] + [r.question for r in self.rounds] + [candidate]
                difficulty, rank_tokens = self._assess(context)
                self.spent += rank_tokens

                verdict = None
                verify_tokens = 0
                if config.enforce_solvability:
                    verification = verify_solvability(
                        self.gateway,
                        candidate,
                        template_path=self.templates.get("solvability"),
                    )
                    verdict = verification.verdict
                    verify_tokens = verification.tokens
                    self.spent += verify_tokens
            except (ProviderError, ProtocolError, ValidationError) as exc:
                return self._finish("provider_error", detail=str(exc))

            if config.enforce_solvability and not (
                verdict.solvable and verdict.confidence >= config.solvability_threshold
            ):
                return self._finish("unsolvable", detail=verdict.reason)
            if config.enforce_monotonicity and difficulty.score < d_prev:
                return self._finish("non_monotonic_difficulty")
            if self._over_budget():
                return self._finish("budget_exhausted")

            self.rounds.append(
                RoundRecord(
                    question=candidate,
                    difficulty=difficulty,
                    verdict=verdict,
                    tokens_generation=generated.total_tokens,
                    tokens_verification=rank_tokens + verify_tokens,
                )
            )
            previous = candidate
            d_prev = difficulty.score
        return self._finish("max_rounds_reached")


def evolve(
    gateway: Gateway,
    seed: Question,
    config: PipelineConfig,
    *,
    weights: ValueNetWeights | None = None,
    feature_provider: FeatureProvider | None = None,
    templates: dict[str, str] | None = None,
) -> Trajectory:
    """Evolve one seed into a trajectory of progressively harder variants.

    Provider failures terminate the trajectory with cause ``provider_error``
    and keep the rounds retained so far; configuration problems raise before
    any remote call is made.
    """
    if not seed.is_seed:
        raise ConfigError("evolve requires a seed question (round_index 0)")
    return _Evolver(gateway, seed, config, weights, feature_provider, templates).run()


@dataclass(frozen=True)
class RoundStat:
    round_index: int
    attempted: int
    retained: int
    solvable: int
    mean_difficulty: float | None
    solvable_rate: float | None


@dataclass(frozen=True)
class BatchSummary:
    seeds: int
    mean_rounds: float
    mean_tokens: float
    terminations: dict[str, int]
    per_round: tuple[RoundStat, ...]

    def to_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "mean_rounds": self.mean_rounds,
            "mean_tokens": self.mean_tokens,
            "terminations": dict(self.terminations),
            "per_round": [
                {
                    "round": s.round_index,
                    "attempted": s.attempted,
                    "retained": s.retained,
                    "solvable": s.solvable,
                    "mean_difficulty": s.mean_difficulty,
                    "solvable_rate": s.solvable_rate,
                }
                for s in self.per_round
            ],
        }


# Terminations that imply the next round after the retained ones was attempted.
_ATTEMPTED_TERMINATIONS = {"unsolvable", "non_monotonic_difficulty", "budget_exhausted"}


def summarize(trajectories: Sequence[Trajectory], max_rounds: int) -> BatchSummary:
    """Per-round retained-difficulty and solvable-rate curves plus batch means."""
    n = len(trajectories)
    terminations: dict[str, int] = {}
    for t in trajectories:
        terminations[t.termination] = terminations.get(t.termination, 0) + 1
    stats = []
    for i in range(1, max_rounds + 1):
        attempted = retained = solvable = 0
        difficulties = []
        for t in trajectories:
            k = len(t.rounds)
            if k >= i:
                attempted += 1
                retained += 1
                rec = t.rounds[i - 1]
                difficulties.append(rec.difficulty.score)
                if rec.verdict is not None and rec.verdict.solvable:
                    solvable += 1
            elif k == i - 1 and t.termination in _ATTEMPTED_TERMINATIONS:
                attempted += 1
                # A non-monotonic candidate passed verification before discard.
                if t.termination == "non_monotonic_difficulty" and t.solvability_enforced:
                    solvable += 1
        stats.append(
            RoundStat(
                round_index=i,
                attempted=attempted,
                retained=retained,
                solvable=solvable,
                mean_difficulty=(
                    sum(difficulties) / len(difficulties) if difficulties else None
                ),
                solvable_rate=(solvable / attempted if attempted else None),
            )
        )
    return BatchSummary(
        seeds=n,
        mean_rounds=(sum(len(t.rounds) for t in trajectories) / n if n else 0.0),
        mean_tokens=(sum(t.total_tokens for t in trajectories) / n if n else 0.0),
        terminations=terminations,
        per_round=tuple(stats),
    )


def run_batch(
    gateway: Gateway,
    seeds: Sequence[Question],
    config: PipelineConfig,
    parallelism: int = 1,
    *,
    weights: ValueNetWeights | None = None,
    feature_provider: FeatureProvider | None = None,
    templates: dict[str, str] | None = None,
) -> tuple[list[Trajectory], BatchSummary]:
    """Evolve every seed independently; failures never abort the batch.

    Trajectories run concurrently up to ``parallelism``, sharing only the
    gateway and immutable configuration.
    """
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if config.use_valuenet and (weights is None or feature_provider is None):
        raise ConfigError("use_valuenet requires both weights and a feature provider")

    def worker(seed: Question) -> Trajectory:
        try:
            return evolve(
                gateway,
                seed,
                config,
                weights=weights,
                feature_provider=feature_provider,
                templates=templates,
            )
        except CodiqError as exc:
            return Trajectory(
                seed=seed,
                rounds=(),
                termination="provider_error",
                total_tokens=0,
                solvability_enforced=config.enforce_solvability,
                monotonicity_enforced=config.enforce_monotonicity,
                termination_detail=str(exc),
            )

    if not seeds:
        return [], summarize([], config.max_rounds)
    if parallelism == 1:
        trajectories = [worker(seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            trajectories = list(pool.map(worker, seeds))
    return trajectories, summarize(trajectories, config.max_rounds)
