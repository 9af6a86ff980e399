"""codiq: evolve seed questions into verified, progressively harder variants.

The engine couples an iterative generator loop with two difficulty
estimators (an LLM listwise ranker and a hidden-state value network), a
solvability verifier, rule-based rewards, corpus persistence with curriculum
stratification, and failure-mode clustering.
"""

from .core import (
    DifficultyAssessment,
    Origin,
    Question,
    RoundRecord,
    SolvabilityVerdict,
    Trajectory,
    fuse_scores,
    normalize_group_rank,
)
from .errors import (
    CodiqError,
    ConfigError,
    DomainError,
    JsonNotFound,
    ProtocolError,
    ProviderError,
    SchemaError,
    ValidationError,
)
from .gateway import (
    ChatRequest,
    ChatResponse,
    HttpGateway,
    RoleConfig,
    ScriptedGateway,
    estimate_tokens,
)
from .judges import (
    RankingResult,
    budget_for_rank,
    extract_json_object,
    rank_difficulty,
    verify_solvability,
)
from .pipeline import PipelineConfig, build_upgrade_prompt, evolve, run_batch
from .reward import (
    JudgeScores,
    RewardInput,
    curriculum_reward,
    generator_reward,
    judge_answer,
)

__version__ = "0.1.0"

__all__ = [
    "CodiqError",
    "ConfigError",
    "ChatRequest",
    "ChatResponse",
    "DifficultyAssessment",
    "DomainError",
    "HttpGateway",
    "JsonNotFound",
    "JudgeScores",
    "Origin",
    "PipelineConfig",
    "ProtocolError",
    "ProviderError",
    "Question",
    "RankingResult",
    "RewardInput",
    "RoleConfig",
    "RoundRecord",
    "SchemaError",
    "ScriptedGateway",
    "SolvabilityVerdict",
    "Trajectory",
    "ValidationError",
    "budget_for_rank",
    "build_upgrade_prompt",
    "curriculum_reward",
    "estimate_tokens",
    "evolve",
    "extract_json_object",
    "fuse_scores",
    "generator_reward",
    "judge_answer",
    "normalize_group_rank",
    "rank_difficulty",
    "run_batch",
    "verify_solvability",
]
