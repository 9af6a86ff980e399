"""Command-line entry points: codiq-extract, codiq-train, codiq-export."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

import numpy as np
import torch

from .data import build_examples, read_labels
from .export import export_weights
from .extract import extract_features, read_feature_rows, read_questions
from .model import TrainedWeights, snapshot
from .runtime import RuntimeUnavailable, build_runtime
from .train import TrainConfig, train


def main_extract(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="codiq-extract",
        description="Extract hidden-state features into the engine's feature JSONL.",
    )
    parser.add_argument("--questions", required=True, help="JSONL of {id, text}")
    parser.add_argument("--out", required=True)
    parser.add_argument("--runtime", choices=("stub", "hf"), default="stub")
    parser.add_argument("--model", help="model name/path for --runtime hf")
    parser.add_argument("--d-model", type=int, default=64, help="stub hidden size")
    parser.add_argument("--passes", type=int, default=5)
    parser.add_argument("--max-window", type=int, default=4096)
    parser.add_argument("--thinking", action="store_true",
                        help="leave the model's thinking mode enabled")
    args = parser.parse_args(argv)
    try:
        if args.runtime == "hf":
            if not args.model:
                parser.error("--runtime hf requires --model")
            runtime = build_runtime("hf", model_name=args.model,
                                    non_thinking=not args.thinking)
        else:
            runtime = build_runtime("stub", d_model=args.d_model,
                                    non_thinking=not args.thinking)
        count = extract_features(
            runtime,
            read_questions(args.questions),
            args.out,
            passes=args.passes,
            max_window=args.max_window,
            meta={"runtime": args.runtime, "model": args.model},
        )
    except (RuntimeUnavailable, ValueError, OSError) as exc:
        print(f"codiq-extract: error: {exc}", file=sys.stderr)
        return 1
    print(f"extracted {count} question(s) -> {args.out}")
    return 0


def main_train(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="codiq-train", description="Train the value network on feature files."
    )
    parser.add_argument("--features", required=True)
    parser.add_argument("--labels", required=True, help="JSONL of {id, label, source?}")
    parser.add_argument("--out-checkpoint", required=True, help="torch checkpoint path")
    parser.add_argument("--metrics", help="write held-out metrics JSON here")
    parser.add_argument("--d-in", type=int, default=4096)
    parser.add_argument("--d-hidden", type=int, default=512)
    parser.add_argument("--batch-size", type=int, default=512)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--weight-decay", type=float, default=1e-2)
    parser.add_argument("--dropout", type=float, default=0.3)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--lr-gamma", type=float, default=0.8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        rows = read_feature_rows(args.features)
        examples = build_examples(rows, read_labels(args.labels), split_seed=args.seed)
        config = TrainConfig(
            d_in=args.d_in,
            d_hidden=args.d_hidden,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            weight_decay=args.weight_decay,
            dropout=args.dropout,
            max_epochs=args.epochs,
            lr_gamma=args.lr_gamma,
            seed=args.seed,
        )
        result = train(examples, config)
    except (ValueError, FloatingPointError, OSError) as exc:
        print(f"codiq-train: error: {exc}", file=sys.stderr)
        return 1
    torch.save(
        {"weights": {k: v for k, v in asdict(result.weights).items()},
         "config": asdict(config), "metrics": result.metrics},
        args.out_checkpoint,
    )
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            json.dump(
                {"metrics": result.metrics, "pos_weight": result.pos_weight,
                 "history": result.history},
                fh, indent=2,
            )
            fh.write("\n")
    summary = ", ".join(f"{k}={v:.4f}" for k, v in sorted(result.metrics.items()))
    print(f"trained {config.max_epochs} epoch(s): {summary}")
    return 0


def main_export(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="codiq-export",
        description="Convert a codiq-train checkpoint into a CDQW weight file.",
    )
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        payload = torch.load(args.checkpoint, weights_only=False)
        raw = payload["weights"]
        weights = TrainedWeights(
            w1=np.asarray(raw["w1"], dtype=np.float32),
            b1=np.asarray(raw["b1"], dtype=np.float32),
            ln_gamma=np.asarray(raw["ln_gamma"], dtype=np.float32),
            ln_beta=np.asarray(raw["ln_beta"], dtype=np.float32),
            w2=np.asarray(raw["w2"], dtype=np.float32),
            b2=float(raw["b2"]),
        )
        export_weights(weights, args.out)
    except (KeyError, ValueError, OSError) as exc:
        print(f"codiq-export: error: {exc}", file=sys.stderr)
        return 1
    print(f"exported CDQW weights -> {args.out}")
    return 0


__all__ = ["main_extract", "main_train", "main_export", "snapshot"]
