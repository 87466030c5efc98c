"""Combining the propagation and text modalities.

Early fusion concatenates a 32-dim GNN representation with a 32-dim
projection of a frozen text embedding and trains one classifier end to end.
Late fusion averages per-modality probabilities, or feeds out-of-fold
probabilities to a logistic meta-classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import nn
from .baselines.linear import LinearModel, predict_linear, train_logistic
from .evaluation import stratified_split
from .gnn import GnnConfig, GraphBatch, GraphSample, gnn_embed, init_gnn_params, make_batch
from .nn import ParamStore, Tensor

FUSION_MODES = ("early", "late_mean", "late_classifier")


class FusionError(ValueError):
    pass


@dataclass
class PredictionSet:
    """Probabilities ``[p_real, p_fake]`` per article from one source.

    ``fold[i]`` is the inner fold whose held-out part produced row ``i`` for
    out-of-fold sets, and -1 for predictions of a model trained on all data.
    """

    source: str
    ids: list[str]
    probs: np.ndarray
    fold: np.ndarray = field(default=None)

    def __post_init__(self):
        self.probs = np.atleast_2d(np.asarray(self.probs, dtype=np.float64))
        if self.probs.shape != (len(self.ids), 2):
            raise FusionError(f"{self.source}: expected {len(self.ids)}x2 probabilities, got {self.probs.shape}")
        if np.any(self.probs < 0) or not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise FusionError(f"{self.source}: probabilities must be non-negative and sum to 1")
        if self.fold is None:
            self.fold = np.full(len(self.ids), -1, dtype=np.int64)
        if len(set(self.ids)) != len(self.ids):
            raise FusionError(f"{self.source}: duplicate article ids")

    @property
    def out_of_fold(self) -> bool:
        return len(self.fold) > 0 and bool(np.all(self.fold >= 0))

    def aligned(self, ids: Sequence[str]) -> np.ndarray:
        pos = {a: i for i, a in enumerate(self.ids)}
        if set(ids) != set(pos):
            missing = sorted(set(ids) ^ set(pos))
            raise FusionError(f"{self.source}: coverage mismatch ({len(missing)} ids differ, e.g. {missing[:5]})")
        return self.probs[[pos[a] for a in ids]]

    def to_csv(self) -> str:
        lines = ["article_id,fold,source,p_fake,p_real"]
        for a, f, p in zip(self.ids, self.fold, self.probs):
            lines.append(f"{a},{int(f)},{self.source},{float(p[1])!r},{float(p[0])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "PredictionSet":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        source = rows[0][2] if rows else ""
        return cls(source, [r[0] for r in rows],
                   np.array([[float(r[4]), float(r[3])] for r in rows]).reshape(-1, 2),
                   np.array([int(r[1]) for r in rows], dtype=np.int64))


def late_fusion_mean(sets: Sequence[PredictionSet]) -> PredictionSet:
    if not sets:
        raise FusionError("no prediction sets to fuse")
    ids = list(sets[0].ids)
    mean = np.mean([s.aligned(ids) for s in sets], axis=0)
    return PredictionSet("late_mean", ids, mean)


BaseTrainer = Callable[[list, np.ndarray, list], np.ndarray]


def fold_assignment(ids: Sequence[str], labels, folds: int, seed: int) -> np.ndarray:
    if folds < 2:
        raise FusionError("need at least two folds")
    parts = stratified_split(list(ids), labels, [1.0 / folds] * folds, seed)
    where = {a: k for k, part in enumerate(parts) for a in part}
    return np.array([where[a] for a in ids], dtype=np.int64)


def oof_predictions(ids: Sequence[str], labels, base_trainer: BaseTrainer, folds: int = 3, seed: int = 0,
                    source: str = "base") -> PredictionSet:
    """Out-of-fold probabilities: each article is scored by the model trained
    on the folds that do not contain it.

    ``base_trainer(train_ids, train_labels, predict_ids)`` returns
    ``[p_real, p_fake]`` rows for ``predict_ids``.
    """
    ids = list(ids)
    labels = np.asarray(labels, dtype=np.int64)
    fold = fold_assignment(ids, labels, folds, seed)
    probs = np.zeros((len(ids), 2))
    for k in range(folds):
        held = np.nonzero(fold == k)[0]
        train = np.nonzero(fold != k)[0]
        if len(set(labels[train].tolist())) < 2:
            raise FusionError(f"fold {k}: training part lacks a class; use more data or fewer folds")
        probs[held] = base_trainer([ids[i] for i in train], labels[train], [ids[i] for i in held])
    return PredictionSet(source, ids, probs, fold)


@dataclass
class MetaModel:
    linear: LinearModel
    sources: list[str]


def stack_features(sets: Sequence[PredictionSet], ids: Sequence[str]) -> np.ndarray:
    return np.hstack([s.aligned(ids) for s in sets])


def late_fusion_stack_train(oof: Sequence[PredictionSet] | np.ndarray, labels, ids: Sequence[str] | None = None) -> MetaModel:
    """Logistic meta-classifier over concatenated out-of-fold probabilities."""
    if isinstance(oof, np.ndarray):
        X, sources = oof, [f"base{i}" for i in range(oof.shape[1] // 2)]
    else:
        for s in oof:
            if not s.out_of_fold:
                raise FusionError(f"{s.source}: meta-learner must be trained on out-of-fold predictions")
        ids = list(oof[0].ids) if ids is None else list(ids)
        X, sources = stack_features(oof, ids), [s.source for s in oof]
    if not np.all(np.isfinite(X)):
        raise FusionError("NaN in out-of-fold predictions")
    return MetaModel(train_logistic(X, labels), sources)


def stack_predict(meta: MetaModel, base: Sequence[PredictionSet] | np.ndarray, ids: Sequence[str] | None = None) -> np.ndarray:
    if not isinstance(base, np.ndarray):
        ids = list(base[0].ids) if ids is None else list(ids)
        base = stack_features(base, ids)
    _, p_fake = predict_linear(meta.linear, base)
    return np.column_stack([1.0 - p_fake, p_fake])


# --- early fusion ---------------------------------------------------------

@dataclass
class FusedModel:
    config: GnnConfig
    params: ParamStore
    in_dim: int
    text_dim: int
    fit_result: nn.FitResult | None = None


def fused_model_init(config: GnnConfig, in_dim: int, text_dim: int, seed: int) -> FusedModel:
    rng = np.random.default_rng(seed)
    p = ParamStore()
    init_gnn_params(p, config, in_dim, rng)
    p.add("text.proj.w", nn.glorot_uniform(rng, text_dim, config.head_dim))
    p.add("text.proj.b", np.zeros((1, config.head_dim)))
    p.add("text.in_mean", np.zeros((1, text_dim)))
    p.add("text.in_scale", np.ones((1, text_dim)))
    p.frozen.update({"text.in_mean", "text.in_scale"})
    p.add("fuse.w", nn.glorot_uniform(rng, 2 * config.head_dim, 2))
    p.add("fuse.b", np.zeros((1, 2)))
    return FusedModel(config, p, in_dim, text_dim)


def fused_forward(model: FusedModel, batch: GraphBatch, text: np.ndarray) -> tuple[Tensor, Tensor]:
    """Logits and the concatenated (graph || text) representation."""
    text = np.atleast_2d(np.asarray(text, dtype=np.float64))
    if text.shape != (len(batch.labels), model.text_dim):
        raise FusionError(f"expected {len(batch.labels)}x{model.text_dim} text embeddings, got {text.shape}")
    if batch.x.shape[1] != model.in_dim:
        raise FusionError(f"model expects {model.in_dim} node features, got {batch.x.shape[1]}")
    p = model.params
    g = gnn_embed(p, model.config, batch)
    z = Tensor((text - p["text.in_mean"].value) / p["text.in_scale"].value)
    t = nn.relu(nn.affine(z, p["text.proj.w"], p["text.proj.b"]))
    rep = nn.concat_cols(g, t)
    return nn.affine(rep, p["fuse.w"], p["fuse.b"]), rep


def early_fusion_train(train: Sequence[GraphSample], train_text: np.ndarray, val: Sequence[GraphSample],
                       val_text: np.ndarray, config: GnnConfig | None = None, seed: int = 0) -> FusedModel:
    config = config or GnnConfig()
    train, val = list(train), list(val)
    train_text = np.asarray(train_text, dtype=np.float64)
    val_text = np.asarray(val_text, dtype=np.float64)
    if len(train_text) != len(train) or len(val_text) != len(val):
        raise FusionError("every article needs both a graph and a text embedding")
    if not train:
        raise FusionError("empty training set")
    model = fused_model_init(config, train[0].x.shape[1], train_text.shape[1], seed)
    sd = train_text.std(axis=0)
    model.params["text.in_mean"].value = train_text.mean(axis=0, keepdims=True)
    model.params["text.in_scale"].value = np.where(sd > 0, sd, 1.0)[None, :]
    cw = config.class_weights

    def batch_loss(idx):
        batch = make_batch([train[i] for i in idx])
        logits, _ = fused_forward(model, batch, train_text[idx])
        return nn.cross_entropy(logits, batch.labels, cw)

    val_pos = {id(s): i for i, s in enumerate(val)}

    def val_logits(batch_samples):
        batch = make_batch(batch_samples)
        return fused_forward(model, batch, val_text[[val_pos[id(s)] for s in batch_samples]])

    def val_loss():
        num = den = 0.0
        cwa = np.asarray(cw)
        for start in range(0, len(val), 256):
            chunk = val[start:start + 256]
            logits, _ = val_logits(chunk)
            labels = np.array([s.label for s in chunk])
            loss, _ = nn.softmax_cross_entropy(logits.value, labels, cw)
            num += loss * cwa[labels].sum()
            den += cwa[labels].sum()
        return num / den

    model.fit_result = nn.fit(model.params, batch_loss, len(train), val_loss, epochs=config.epochs,
                              lr=config.lr, batch_size=config.batch_size, seed=seed)
    return model


def early_fusion_predict(model: FusedModel, samples: Sequence[GraphSample], text: np.ndarray):
    """Probabilities ``[p_real, p_fake]`` and 64-dim fused representations."""
    samples = list(samples)
    text = np.atleast_2d(np.asarray(text, dtype=np.float64))
    probs, reps = [], []
    for start in range(0, len(samples), 256):
        batch = make_batch(samples[start:start + 256])
        logits, rep = fused_forward(model, batch, text[start:start + 256])
        probs.append(nn.softmax(logits.value))
        reps.append(rep.value)
    return np.vstack(probs), np.vstack(reps)
