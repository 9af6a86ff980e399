"""Operator CLI: evolve seeds, run the judges, score features, and report.

Exit codes are uniform across subcommands: 0 ok, 1 usage or configuration
error, 2 upstream (provider) failure. Commands accepting ``--mock SCRIPT``
replay a JSONL script instead of talking to any endpoint.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import cluster as cluster_mod
from . import corpus as corpus_mod
from .core import Origin, Question
from .errors import CodiqError, ConfigError, SchemaError
from .gateway import (
    ENV_STEMS,
    REQUEST_TAGS,
    DEFAULT_TEMPERATURES,
    HttpGateway,
    RoleConfig,
    ScriptedGateway,
    estimate_tokens,
)
from .judges import rank_difficulty, verify_solvability
from .pipeline import PROMPT_MODES, PipelineConfig, run_batch
from .reward import (
    DEFAULT_CURRICULUM_WEIGHTS,
    JudgeScores,
    RewardInput,
    curriculum_reward,
    generator_reward,
)
from .valuenet import group_vn_scores, load_weights, read_feature_file, score_question

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UPSTREAM = 2

_ROLE_KEYS = ("url", "key", "model", "temperature", "max_tokens")
_CONFIG_ROLES = {"generator": "generate", "ranker": "rank", "verifier": "verify", "judge": "reward_judge"}
_PROMPT_KEYS = ("ranking", "solvability", "upgrade_direct", "upgrade_codiq", "answer_judge")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that uses exit code 1 for usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def load_run_config(path) -> dict[str, str]:
    """Parse a key = value config file; unknown keys are rejected."""
    known = {f"{role}.{key}" for role in _CONFIG_ROLES for key in _ROLE_KEYS}
    known |= {f"prompts.{key}" for key in _PROMPT_KEYS}
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip().strip('"')
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            entries[key] = value
    return entries


def _http_gateway(entries: dict[str, str], tags=REQUEST_TAGS) -> HttpGateway:
    """Build the HTTP gateway; config-file entries win over environment."""
    roles = {}
    for name, tag in _CONFIG_ROLES.items():
        if tag not in tags:
            continue
        stem = ENV_STEMS[tag]
        url = entries.get(f"{name}.url") or os.environ.get(f"CODIQ_{stem}_URL", "")
        if not url:
            raise ConfigError(
                f"no endpoint for role {tag!r}: set {name}.url or CODIQ_{stem}_URL"
            )
        roles[tag] = RoleConfig(
            url=url,
            api_key=entries.get(f"{name}.key")
            or os.environ.get(f"CODIQ_{stem}_KEY", ""),
            model=entries.get(f"{name}.model")
            or os.environ.get(f"CODIQ_{stem}_MODEL", "default"),
            temperature=float(
                entries.get(f"{name}.temperature")
                or os.environ.get(f"CODIQ_{stem}_TEMPERATURE", DEFAULT_TEMPERATURES[tag])
            ),
            max_tokens=int(entries.get(f"{name}.max_tokens") or 4096),
        )
    return HttpGateway(roles)


def _templates(entries: dict[str, str]) -> dict[str, str]:
    return {
        key: entries[f"prompts.{key}"]
        for key in _PROMPT_KEYS
        if f"prompts.{key}" in entries
    }


def _gateway(args, tags=REQUEST_TAGS):
    entries = load_run_config(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "mock", None):
        return ScriptedGateway.from_file(args.mock), _templates(entries)
    return _http_gateway(entries, tags), _templates(entries)


def load_seeds(path, dataset: str | None = None) -> list[Question]:
    """Read seed questions from JSONL lines of {id, domain, text}."""
    default_dataset = dataset or Path(path).stem
    seeds = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                text = obj["text"]
                seeds.append(
                    Question(
                        id=str(obj["id"]),
                        domain=obj["domain"],
                        text=text,
                        origin=Origin(
                            str(obj.get("dataset", default_dataset)), 0
                        ),
                        token_length=int(
                            obj.get("token_length", estimate_tokens(text))
                        ),
                    )
                )
            except (ValueError, KeyError, TypeError, CodiqError) as exc:
                raise SchemaError(str(exc), line=lineno) from exc
    return seeds


@dataclass(frozen=True)
class RunConfig:
    """Everything an evolve run needs, validated before any network call."""

    pipeline: PipelineConfig
    parallelism: int
    seeds_path: str
    out_path: str
    summary_path: str
    curves_path: str | None
    dataset: str | None
    mock_path: str | None
    config_path: str | None

    def __post_init__(self):
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")


def _run_config(args) -> RunConfig:
    pipeline = PipelineConfig(
        max_rounds=args.max_rounds,
        prompt_mode=args.prompt,
        budget_tokens=args.budget,
        enforce_solvability=not args.no_solvability,
        enforce_monotonicity=not args.no_monotonicity,
        shuffle_seed=args.shuffle_seed,
    )
    return RunConfig(
        pipeline=pipeline,
        parallelism=args.parallel,
        seeds_path=args.seeds,
        out_path=args.out,
        summary_path=args.summary or args.out + ".summary.json",
        curves_path=args.curves,
        dataset=args.dataset,
        mock_path=args.mock,
        config_path=args.config,
    )


def cmd_evolve(args) -> int:
    run = _run_config(args)
    seeds = load_seeds(run.seeds_path, run.dataset)
    gateway, templates = _gateway(args)
    trajectories, summary = run_batch(
        gateway,
        seeds,
        run.pipeline,
        parallelism=run.parallelism,
        templates=templates,
    )
    records = [
        corpus_mod.CorpusRecord(
            trajectory=t,
            seed_dataset=t.seed.origin.seed_dataset,
            category=t.seed.domain,
            created_at=corpus_mod.utc_now(),
        )
        for t in trajectories
    ]
    corpus_mod.write_corpus(records, run.out_path)
    with open(run.summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary.to_dict(), fh, indent=2)
        fh.write("\n")
    if run.curves_path:
        with open(run.curves_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["round", "attempted", "retained", "solvable", "solvable_rate", "mean_difficulty"]
            )
            for s in summary.per_round:
                writer.writerow(
                    [s.round_index, s.attempted, s.retained, s.solvable,
                     s.solvable_rate, s.mean_difficulty]
                )
    print(
        f"evolved {len(trajectories)} seed(s): mean rounds {summary.mean_rounds:.2f},"
        f" mean tokens {summary.mean_tokens:.1f} -> {run.out_path}"
    )
    if seeds and all(t.termination == "provider_error" for t in trajectories):
        return EXIT_UPSTREAM
    return EXIT_OK


def cmd_rank(args) -> int:
    questions = load_seeds(args.questions)
    if not questions:
        raise ConfigError("no questions to rank")
    gateway, templates = _gateway(args, tags=("rank",))
    outcome = rank_difficulty(
        gateway,
        questions,
        shuffle_seed=args.shuffle_seed,
        template_path=templates.get("ranking"),
    )
    payload = {
        "groups": [list(g) for g in outcome.result.groups],
        "reasons": list(outcome.result.reasons),
        "scores": list(outcome.scores),
        "tokens": outcome.tokens,
    }
    _emit(payload, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.text:
        questions = [
            Question(
                id="inline",
                domain=args.domain,
                text=args.text,
                origin=Origin("inline", 0),
                token_length=estimate_tokens(args.text),
            )
        ]
    else:
        questions = load_seeds(args.questions)
    gateway, templates = _gateway(args, tags=("verify",))
    results = []
    for q in questions:
        outcome = verify_solvability(
            gateway, q, template_path=templates.get("solvability")
        )
        v = outcome.verdict
        results.append(
            {
                "id": q.id,
                "solvable": v.solvable,
                "confidence": v.confidence,
                "reason": v.reason,
                "missing_info": list(v.missing_info),
            }
        )
    _emit(results, args.out)
    return EXIT_OK


def cmd_score(args) -> int:
    weights = load_weights(args.weights)
    items = read_feature_file(args.features, d_in=weights.d_in)
    scores = [(qid, score_question(weights, window)) for qid, window in items]
    rows = [{"id": qid, "score": s} for qid, s in scores]
    if args.grouped and rows:
        for row, dr_vn in zip(rows, group_vn_scores([s for _, s in scores])):
            row["dr_vn"] = dr_vn
    _emit(rows, args.out)
    return EXIT_OK


def _stats_table(stats: corpus_mod.CorpusStats) -> str:
    header = f"{'Dataset':<20} {'Sequences':>9} {'Min':>6} {'Max':>6} {'Avg':>8} {'AvgRound':>8}"
    lines = [header, "-" * len(header)]
    for s in list(stats.datasets) + ([stats.total] if stats.total else []):
        lines.append(
            f"{s.dataset:<20} {s.sequences:>9} {s.min_tokens:>6} {s.max_tokens:>6}"
            f" {s.avg_tokens:>8.1f} {s.avg_rounds:>8.1f}"
        )
    return "\n".join(lines) + "\n"


def cmd_stats(args) -> int:
    records = corpus_mod.read_corpus(args.corpus)
    stats = corpus_mod.corpus_stats(records)
    if args.json:
        _emit(stats.to_dict(), args.out)
    else:
        text = _stats_table(stats)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    return EXIT_OK


def cmd_split(args) -> int:
    records = corpus_mod.read_corpus(args.corpus)
    split = corpus_mod.curriculum_split(records, rng_seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ("l1", "l2", "l3"):
        with open(out_dir / f"{name}.jsonl", "w", encoding="utf-8") as fh:
            for q in getattr(split, name):
                fh.write(json.dumps(corpus_mod.question_to_dict(q)) + "\n")
    print(
        json.dumps(
            {
                "l1": len(split.l1),
                "l2": len(split.l2),
                "l3": len(split.l3),
                "source_sequences": split.source_sequences,
                "skipped": split.skipped,
            }
        )
    )
    return EXIT_OK


def cmd_cluster(args) -> int:
    docs = cluster_mod.read_failure_docs(args.failures)
    report = cluster_mod.cluster_failures(
        docs,
        k=args.k,
        seed=args.seed,
        distance_threshold=args.distance_threshold,
        min_size=args.min_size,
    )
    _emit(report.to_dict(), args.out)
    if args.table:
        rows = cluster_mod.failure_distribution(docs, report)
        sys.stdout.write(cluster_mod.distribution_table(rows))
    return EXIT_OK


def cmd_kappa(args) -> int:
    with open(args.ratings, encoding="utf-8") as fh:
        payload = json.load(fh)
    value = corpus_mod.fleiss_kappa(payload["ratings"], payload["raters_per_item"])
    print(round(value, 10))
    return EXIT_OK


def cmd_reward(args) -> int:
    if args.judge_scores is not None:
        scores = JudgeScores(*args.judge_scores[:4], judge_confidence=1.0)
        weights = tuple(args.weights) if args.weights else DEFAULT_CURRICULUM_WEIGHTS
        value = curriculum_reward(scores, weights)
    else:
        if args.conf is None or args.delta is None:
            raise ConfigError("generator reward needs --conf and --delta")
        value = generator_reward(
            RewardInput(valid=args.valid, confidence=args.conf, delta_d=args.delta)
        )
    print(round(value, 10))
    return EXIT_OK


def _emit(payload, out_path) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _add_gateway_args(p, mock=True):
    p.add_argument("--config", help="key = value config file (wins over env)")
    if mock:
        p.add_argument("--mock", help="scripted-gateway JSONL file; no network")


def build_parser() -> _Parser:
    parser = _Parser(prog="codiq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="evolve seed questions into harder variants")
    p.add_argument("--seeds", required=True, help="seed questions JSONL")
    p.add_argument("--out", required=True, help="output corpus JSONL")
    p.add_argument("--summary", help="batch summary JSON (default: <out>.summary.json)")
    p.add_argument("--curves", help="per-round difficulty/solvable-rate CSV")
    p.add_argument("--prompt", choices=PROMPT_MODES, default="direct")
    p.add_argument("--max-rounds", type=int, default=8)
    p.add_argument("--budget", type=int, default=None, help="cumulative token budget")
    p.add_argument("--no-solvability", action="store_true",
                   help="disable solvability verification (ablation)")
    p.add_argument("--no-monotonicity", action="store_true",
                   help="disable the difficulty-decrease stopping rule")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--shuffle-seed", type=int, default=0)
    p.add_argument("--dataset", help="seed dataset name (default: seeds file stem)")
    _add_gateway_args(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("rank", help="listwise-rank questions by difficulty")
    p.add_argument("--questions", required=True)
    p.add_argument("--shuffle-seed", type=int, default=0)
    p.add_argument("--out")
    _add_gateway_args(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("verify", help="check question solvability")
    p.add_argument("--questions")
    p.add_argument("--text", help="verify a single inline question")
    p.add_argument("--domain", choices=("math", "code"), default="math")
    p.add_argument("--out")
    _add_gateway_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("score", help="score feature files with a weight file")
    p.add_argument("--features", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--grouped", action="store_true", help="add grouped DR-VN ranks")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("stats", help="corpus statistics report")
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="curriculum-level stratification")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("cluster", help="cluster failure reasons")
    p.add_argument("--failures", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--distance-threshold", type=float, default=0.5)
    p.add_argument("--min-size", type=int)
    p.add_argument("--table", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("kappa", help="Fleiss' kappa over a ratings matrix")
    p.add_argument("--ratings", required=True,
                   help='JSON file: {"ratings": [[...]], "raters_per_item": n}')
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("reward", help="compute reward values")
    p.add_argument("--conf", type=float)
    p.add_argument("--delta", type=float)
    valid = p.add_mutually_exclusive_group()
    valid.add_argument("--valid", dest="valid", action="store_true", default=True)
    valid.add_argument("--invalid", dest="valid", action="store_false")
    p.add_argument("--judge-scores", type=float, nargs=4, metavar="S",
                   help="curriculum reward from four judged scores")
    p.add_argument("--weights", type=float, nargs=4, metavar="W")
    p.set_defaults(func=cmd_reward)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, OSError) as exc:
        print(f"codiq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CodiqError as exc:
        print(f"codiq: upstream error: {exc}", file=sys.stderr)
        return EXIT_UPSTREAM


if __name__ == "__main__":
    sys.exit(main())
