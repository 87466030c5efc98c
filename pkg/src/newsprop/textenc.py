"""Article text: tokenisation, truncation, PV-DBOW document vectors and an
MLP classifier over document embeddings."""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import nn
from .nn import ParamStore, Tensor, TrainSettings

_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    return [t for t in _SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class TruncationStrategy:
    kind: str  # first_n | last_n | first_last
    first: int = 512
    last: int = 0

    def __post_init__(self):
        if self.kind not in ("first_n", "last_n", "first_last"):
            raise ValueError(f"unknown truncation {self.kind!r}")
        sizes = {"first_n": (self.first,), "last_n": (self.last,), "first_last": (self.first, self.last)}
        if any(s <= 0 for s in sizes[self.kind]):
            raise ValueError("truncation window sizes must be positive")

    @classmethod
    def first_n(cls, n: int = 512) -> "TruncationStrategy":
        return cls("first_n", first=n)

    @classmethod
    def last_n(cls, n: int = 512) -> "TruncationStrategy":
        return cls("last_n", last=n)

    @classmethod
    def first_last(cls, a: int = 256, b: int = 256) -> "TruncationStrategy":
        return cls("first_last", first=a, last=b)

    @classmethod
    def parse(cls, spec: str) -> "TruncationStrategy":
        """Parse ``first_n:512``, ``last_n:512`` or ``first_last:256:256``."""
        kind, *nums = spec.strip().split(":")
        nums = [int(x) for x in nums]
        if kind == "first_n":
            return cls.first_n(*nums)
        if kind == "last_n":
            return cls.last_n(*nums)
        if kind == "first_last":
            return cls.first_last(*nums)
        raise ValueError(f"unknown truncation {spec!r}")

    def __str__(self) -> str:
        if self.kind == "first_n":
            return f"first_n:{self.first}"
        if self.kind == "last_n":
            return f"last_n:{self.last}"
        return f"first_last:{self.first}:{self.last}"


def truncate(seq: Sequence[str], strategy: TruncationStrategy) -> list[str]:
    seq = list(seq)
    if strategy.kind == "first_n":
        return seq[:strategy.first]
    if strategy.kind == "last_n":
        return seq[-strategy.last:] if len(seq) > strategy.last else seq
    if len(seq) <= strategy.first + strategy.last:
        return seq
    return seq[:strategy.first] + seq[len(seq) - strategy.last:]


# --- PV-DBOW --------------------------------------------------------------

@dataclass
class PvDbowModel:
    doc_vectors: np.ndarray
    word_vectors: np.ndarray
    vocab: dict[str, int]
    dim: int
    negative: int
    epochs: int
    seed: int
    lr: float
    noise_cdf: np.ndarray
    loss_trace: list[float] = field(default_factory=list)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _dbow_pass(dv, word_vectors, ids, rng, cdf, k, lr, update_words):
    """One gradient step of a document vector against its words and k noise
    words per word; returns the summed logistic loss."""
    negs = np.searchsorted(cdf, rng.random((len(ids), k)) * cdf[-1], side="right")
    targets = np.concatenate([ids, negs.ravel()])
    labels = np.zeros(len(targets))
    labels[:len(ids)] = 1.0
    wv = word_vectors[targets]
    scores = wv @ dv
    loss = -(_log_sigmoid(scores[:len(ids)]).sum() + _log_sigmoid(-scores[len(ids):]).sum())
    g = (labels - _sigmoid(scores)) * lr
    dv_new = dv + g @ wv
    if update_words:
        np.add.at(word_vectors, targets, g[:, None] * dv)
    return dv_new, loss


def train_pvdbow(
    corpus: Sequence[Sequence[str]],
    dim: int = 64,
    epochs: int = 20,
    seed: int = 0,
    negative: int = 5,
    lr: float = 0.025,
    min_lr: float = 0.0001,
) -> PvDbowModel:
    """Train document vectors to score their own words above ``negative``
    noise words drawn from the unigram^0.75 distribution."""
    if not corpus:
        raise ValueError("empty corpus")
    counts: dict[str, int] = {}
    for doc in corpus:
        for tok in doc:
            counts[tok] = counts.get(tok, 0) + 1
    words = sorted(counts)
    vocab = {w: i for i, w in enumerate(words)}
    freq = np.array([counts[w] for w in words], dtype=np.float64)
    cdf = np.cumsum(freq ** 0.75) if len(words) else np.array([1.0])

    rng = np.random.default_rng(seed)
    docs = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(corpus), dim))
    word_vectors = np.zeros((max(len(words), 1), dim))
    id_lists = [np.array([vocab[t] for t in doc], dtype=np.int64) for doc in corpus]
    n_tokens = max(sum(len(x) for x in id_lists), 1)
    trace = []
    for epoch in range(epochs):
        alpha = lr - (lr - min_lr) * epoch / max(epochs, 1)
        total = 0.0
        for d in rng.permutation(len(corpus)):
            ids = id_lists[d]
            if len(ids) == 0:
                continue
            docs[d], loss = _dbow_pass(docs[d], word_vectors, ids, rng, cdf, negative, alpha, True)
            total += loss
        trace.append(total / n_tokens)
    return PvDbowModel(docs, word_vectors, vocab, dim, negative, epochs, seed, lr, cdf, trace)


def embed_document(model: PvDbowModel, seq: Sequence[str], epochs: int | None = None) -> np.ndarray:
    """Infer a vector for an unseen document with word vectors frozen.

    Unknown tokens are ignored; an empty (or all-unknown) document maps to
    the zero vector. The result depends only on the model and the tokens.
    """
    ids = np.array([model.vocab[t] for t in seq if t in model.vocab], dtype=np.int64)
    if len(ids) == 0:
        return np.zeros(model.dim)
    epochs = model.epochs if epochs is None else epochs
    rng = np.random.default_rng([model.seed, zlib.crc32(" ".join(seq).encode("utf-8"))])
    dv = rng.uniform(-0.5 / model.dim, 0.5 / model.dim, size=model.dim)
    min_lr = 0.0001
    for epoch in range(epochs):
        alpha = model.lr - (model.lr - min_lr) * epoch / max(epochs, 1)
        dv, _ = _dbow_pass(dv, model.word_vectors, ids, rng, model.noise_cdf, model.negative, alpha, False)
    return dv


# --- text classifier ------------------------------------------------------

@dataclass
class TextModel:
    params: ParamStore
    fit_result: nn.FitResult | None = None

    @property
    def dim(self) -> int:
        return self.params["text.w1"].value.shape[0]


def text_model_init(dim: int, seed: int, hidden: int = 32) -> TextModel:
    rng = np.random.default_rng(seed)
    p = ParamStore()
    p.add("text.w1", nn.glorot_uniform(rng, dim, hidden))
    p.add("text.b1", np.zeros((1, hidden)))
    p.add("text.w2", nn.glorot_uniform(rng, hidden, 2))
    p.add("text.b2", np.zeros((1, 2)))
    # input standardisation, stored with the weights but never trained
    p.add("text.in_mean", np.zeros((1, dim)))
    p.add("text.in_scale", np.ones((1, dim)))
    p.frozen.update({"text.in_mean", "text.in_scale"})
    return TextModel(p)


def _text_forward(model: TextModel, x: np.ndarray) -> tuple[Tensor, Tensor]:
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"text model expects {model.dim}-dim embeddings, got {x.shape}")
    p = model.params
    z = Tensor((x - p["text.in_mean"].value) / p["text.in_scale"].value)
    hidden = nn.relu(nn.affine(z, p["text.w1"], p["text.b1"]))
    return nn.affine(hidden, p["text.w2"], p["text.b2"]), hidden


def train_text_classifier(
    embeddings: np.ndarray,
    labels,
    val_embeddings: np.ndarray | None = None,
    val_labels=None,
    settings: TrainSettings | None = None,
    seed: int = 0,
) -> TextModel:
    """MLP dim -> 32 (ReLU) -> 2 over document embeddings; labels are 1 = fake."""
    settings = settings or TrainSettings()
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if val_embeddings is None:
        xv, yv = x, y
    else:
        xv, yv = np.asarray(val_embeddings, dtype=np.float64), np.asarray(val_labels, dtype=np.int64)
    model = text_model_init(x.shape[1], seed)
    sd = x.std(axis=0)
    model.params["text.in_mean"].value = x.mean(axis=0, keepdims=True)
    model.params["text.in_scale"].value = np.where(sd > 0, sd, 1.0)[None, :]
    cw = settings.class_weights

    def batch_loss(idx):
        logits, _ = _text_forward(model, x[idx])
        return nn.cross_entropy(logits, y[idx], cw)

    def val_loss():
        logits, _ = _text_forward(model, xv)
        return nn.softmax_cross_entropy(logits.value, yv, cw)[0]

    model.fit_result = nn.fit(model.params, batch_loss, len(x), val_loss, epochs=settings.epochs,
                              lr=settings.lr, batch_size=settings.batch_size, seed=seed)
    return model


def predict_text(model: TextModel, embeddings: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return class probabilities ``[p_real, p_fake]`` and the 32-dim hidden layer."""
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    logits, hidden = _text_forward(model, x)
    return nn.softmax(logits.value), hidden.value
