"""Classical classifiers over graph-level features."""

from __future__ import annotations

import json

import numpy as np

from .forest import FOREST_KINDS, ForestModel, predict_forest, train_forest
from .linear import (
    LINEAR_KINDS,
    LinearModel,
    logistic_loss_grad,
    passive_aggressive_update,
    predict_linear,
    train_logistic,
    train_passive_aggressive,
    train_ridge,
    train_sgd_hinge,
)

BASELINE_KINDS = FOREST_KINDS + LINEAR_KINDS

__all__ = [
    "BASELINE_KINDS", "FOREST_KINDS", "LINEAR_KINDS", "ForestModel", "LinearModel", "dump_model", "load_model",
    "logistic_loss_grad", "passive_aggressive_update", "predict", "predict_forest", "predict_linear",
    "train_baseline", "train_forest", "train_logistic", "train_passive_aggressive", "train_ridge",
    "train_sgd_hinge",
]


def train_baseline(kind: str, X, y, seed: int = 0):
    """Train any of the six baselines with its default hyperparameters (labels 1 = fake)."""
    if kind in FOREST_KINDS:
        return train_forest(X, y, kind=kind, seed=seed)
    if kind == "ridge":
        return train_ridge(X, y)
    if kind == "logistic":
        return train_logistic(X, y)
    if kind == "passive_aggressive":
        return train_passive_aggressive(X, y, seed=seed)
    if kind == "sgd_hinge":
        return train_sgd_hinge(X, y, seed=seed)
    raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINE_KINDS}")


def predict(model, X) -> tuple[np.ndarray, np.ndarray]:
    """Labels (1 = fake, 0 = real) and probabilities ``[p_real, p_fake]``."""
    if isinstance(model, ForestModel):
        return predict_forest(model, X)
    labels, p_fake = predict_linear(model, X)
    return (labels > 0).astype(np.int64), np.column_stack([1.0 - p_fake, p_fake])


def dump_model(model) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def load_model(text: str):
    d = json.loads(text)
    if d["kind"] in FOREST_KINDS:
        return ForestModel.from_dict(d)
    return LinearModel.from_dict(d)
