"""Training loop: AdamW + StepLR with class-weighted binary cross-entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from sklearn.metrics import (
    accuracy_score,
    average_precision_score,
    f1_score,
    precision_score,
    recall_score,
    roc_auc_score,
)
from torch import nn

from .data import positive_class_weight, split_arrays
from .model import TrainedWeights, ValueNet, predict_scores, snapshot


@dataclass(frozen=True)
class TrainConfig:
    d_in: int = 4096
    d_hidden: int = 512
    batch_size: int = 512
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    dropout: float = 0.3
    max_epochs: int = 30
    lr_gamma: float = 0.8
    lr_step_epochs: int = 10
    seed: int = 0
    device: str = "cpu"


@dataclass
class TrainResult:
    weights: TrainedWeights
    metrics: dict[str, float]
    history: list[dict[str, float]] = field(default_factory=list)
    pos_weight: float = 1.0


def evaluate(weights: TrainedWeights, X: np.ndarray, y: np.ndarray) -> dict[str, float]:
    scores = predict_scores(weights, X)
    predicted = (scores >= 0.5).astype(int)
    return {
        "accuracy": float(accuracy_score(y, predicted)),
        "precision": float(precision_score(y, predicted, zero_division=0)),
        "recall": float(recall_score(y, predicted, zero_division=0)),
        "f1": float(f1_score(y, predicted, zero_division=0)),
        "roc_auc": float(roc_auc_score(y, scores)),
        "pr_auc": float(average_precision_score(y, scores)),
    }


def train(examples, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Fit the value network on per-position examples; report held-out metrics.

    The loss is BCE-with-logits whose positive-class weight is the
    negative-to-positive ratio of the training split. The learning rate
    follows a step schedule (gamma per ``lr_step_epochs``). Raises on
    single-class data or a non-finite loss.
    """
    arrays = split_arrays(examples)
    X_train, y_train = arrays["train"]
    X_test, y_test = arrays["test"]
    if len(X_train) == 0:
        raise ValueError("no training examples")
    if X_train.shape[1] != config.d_in:
        raise ValueError(
            f"feature width {X_train.shape[1]} != configured d_in {config.d_in}"
        )
    pos_weight = positive_class_weight(y_train)

    torch.manual_seed(config.seed)
    device = torch.device(config.device)
    model = ValueNet(config.d_in, config.d_hidden, dropout=config.dropout).to(device)
    criterion = nn.BCEWithLogitsLoss(pos_weight=torch.tensor(pos_weight, device=device))
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=config.lr_step_epochs, gamma=config.lr_gamma
    )

    features = torch.from_numpy(X_train).to(device)
    targets = torch.from_numpy(y_train).to(device)
    n = len(features)
    generator = torch.Generator().manual_seed(config.seed)

    history = []
    for epoch in range(config.max_epochs):
        model.train()
        order = torch.randperm(n, generator=generator)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = criterion(model(features[batch]), targets[batch])
            if not math.isfinite(loss.item()):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * len(batch)
        history.append(
            {"epoch": epoch, "loss": epoch_loss / n, "lr": scheduler.get_last_lr()[0]}
        )
        scheduler.step()

    weights = snapshot(model)
    metrics = evaluate(weights, X_test, y_test) if len(X_test) else {}
    return TrainResult(
        weights=weights, metrics=metrics, history=history, pos_weight=pos_weight
    )
