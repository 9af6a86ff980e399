"""The value-network MLP and its numpy inference mirror.

Architecture: projection -> LayerNorm -> exact-erf GELU -> dropout (train
only) -> scalar regression head. The numpy mirror computes the same
composition in float64 and is what trainkit uses for scoring, so it matches
the engine's loader bit-for-bit on the shared weight file.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.special import erf
from torch import nn


class ValueNet(nn.Module):
    def __init__(self, d_in: int = 4096, d_hidden: int = 512, dropout: float = 0.3):
        super().__init__()
        self.proj = nn.Linear(d_in, d_hidden)
        self.norm = nn.LayerNorm(d_hidden)  # eps 1e-5
        self.act = nn.GELU()  # exact erf form
        self.drop = nn.Dropout(dropout)
        self.head = nn.Linear(d_hidden, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.drop(self.act(self.norm(self.proj(x))))
        return self.head(h).squeeze(-1)


@dataclass(frozen=True)
class TrainedWeights:
    """Float32 parameter snapshot in the shared tensor layout."""

    w1: np.ndarray  # (d_hidden, d_in)
    b1: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    w2: np.ndarray
    b2: float

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_hidden(self) -> int:
        return self.w1.shape[0]


def snapshot(model: ValueNet) -> TrainedWeights:
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    return TrainedWeights(
        w1=state["proj.weight"].astype(np.float32),
        b1=state["proj.bias"].astype(np.float32),
        ln_gamma=state["norm.weight"].astype(np.float32),
        ln_beta=state["norm.bias"].astype(np.float32),
        w2=state["head.weight"][0].astype(np.float32),
        b2=float(state["head.bias"][0]),
    )


def restore(weights: TrainedWeights, dropout: float = 0.3) -> ValueNet:
    model = ValueNet(weights.d_in, weights.d_hidden, dropout=dropout)
    state = {
        "proj.weight": torch.from_numpy(weights.w1.copy()),
        "proj.bias": torch.from_numpy(weights.b1.copy()),
        "norm.weight": torch.from_numpy(weights.ln_gamma.copy()),
        "norm.bias": torch.from_numpy(weights.ln_beta.copy()),
        "head.weight": torch.from_numpy(weights.w2.copy()).unsqueeze(0),
        "head.bias": torch.tensor([weights.b2], dtype=torch.float32),
    }
    model.load_state_dict(state)
    return model


def predict_scores(weights: TrainedWeights, X: np.ndarray) -> np.ndarray:
    """Correctness probabilities in float64 (dropout disabled)."""
    X = np.asarray(X, dtype=np.float64)
    h = X @ weights.w1.astype(np.float64).T + weights.b1.astype(np.float64)
    mean = h.mean(axis=1, keepdims=True)
    var = h.var(axis=1, keepdims=True)
    h = (h - mean) / np.sqrt(var + 1e-5)
    h = h * weights.ln_gamma.astype(np.float64) + weights.ln_beta.astype(np.float64)
    h = 0.5 * h * (1.0 + erf(h / np.sqrt(2.0)))
    logits = h @ weights.w2.astype(np.float64) + weights.b2
    return 1.0 / (1.0 + np.exp(-logits))
