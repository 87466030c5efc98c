"""End-to-end experiment plumbing shared by the command line and the tests.

A corpus is featurized once. The outer stratified split fixes the test set;
each run then draws its own (train, validation) pair, optionally oversamples
the training part, fits scalers on it and trains the requested models.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import baselines
from .cascade import build_propagation_graph
from .dataset_io import EmbeddingTable, LabeledDataset
from .evaluation import (
    MetricsReport,
    SplitSpec,
    evaluate_probs,
    random_oversample,
    repeated_subsampling,
    resolve_class_weights,
    stratified_split,
)
from .featurize import (
    GRAPH_LOG_COLUMNS,
    NODE_LOG_COLUMNS,
    SentimentLexicon,
    apply_scaler,
    extract_graph_features,
    extract_node_features,
    fit_scaler,
)
from .fusion import (
    PredictionSet,
    early_fusion_predict,
    early_fusion_train,
    late_fusion_mean,
    late_fusion_stack_train,
    oof_predictions,
    stack_predict,
)
from .gnn import GnnConfig, GraphSample, adjacency_from_edges, predict_gnn, train_gnn
from .nn import TrainSettings
from .textenc import TruncationStrategy, embed_document, predict_text, tokenize, train_pvdbow, train_text_classifier, truncate

log = logging.getLogger(__name__)

MODEL_NAMES = ("gnn", "text", "early", "late_mean", "late_classifier") + tuple(
    f"baseline_{k}" for k in baselines.BASELINE_KINDS)


@dataclass
class Corpus:
    ids: list[str]
    labels: np.ndarray              # 1 = fake
    edges: dict[str, list[tuple[int, int]]]   # parent -> child, node 0 is the news root
    node_rows: dict[str, np.ndarray]
    graph_rows: dict[str, np.ndarray]
    tokens: dict[str, list[str]]

    def __post_init__(self):
        self._pos = {a: i for i, a in enumerate(self.ids)}

    def label_of(self, ids: Sequence[str]) -> np.ndarray:
        return self.labels[[self._pos[a] for a in ids]]


def prepare_corpus(dataset: LabeledDataset, window: float = 600.0, lexicon: SentimentLexicon | None = None,
                   filter_empty_text: bool = False) -> Corpus:
    if filter_empty_text:
        dataset = dataset.without_empty_text()
    lexicon = lexicon or SentimentLexicon.default()
    ids, labels, edges, node_rows, graph_rows, tokens = [], [], {}, {}, {}, {}
    for art in dataset.articles:
        g = build_propagation_graph(art, dataset.tweets.get(art.article_id, ()), window)
        aid = art.article_id
        ids.append(aid)
        labels.append(1 if art.is_fake else 0)
        edges[aid] = list(g.edges)
        node_rows[aid] = extract_node_features(g, lexicon)
        graph_rows[aid] = extract_graph_features(g)
        tokens[aid] = tokenize(art.text)
    return Corpus(ids, np.array(labels, dtype=np.int64), edges, node_rows, graph_rows, tokens)


@dataclass
class ExperimentSettings:
    split: SplitSpec = field(default_factory=SplitSpec)
    gnn: GnnConfig = field(default_factory=GnnConfig)
    text: TrainSettings = field(default_factory=lambda: TrainSettings(epochs=50, lr=0.005))
    embed_dim: int = 64
    embed_epochs: int = 20
    truncation: str = "first_n:512"
    fusion_folds: int = 3


# --- splits ---------------------------------------------------------------

@dataclass
class RunSplit:
    index: int
    train: list[str]   # may repeat ids after oversampling
    val: list[str]
    test: list[str]


def outer_split(corpus: Corpus, spec: SplitSpec, seed: int) -> tuple[list[str], list[str]]:
    if spec.train_test_ratio >= 1.0:
        return list(corpus.ids), []
    train, test = stratified_split(corpus.ids, corpus.labels, [spec.train_test_ratio, 1 - spec.train_test_ratio], seed)
    return train, test


def make_runs(corpus: Corpus, spec: SplitSpec, seed: int) -> list[RunSplit]:
    train_all, test = outer_split(corpus, spec, seed)
    lab = corpus.label_of(train_all)
    if spec.val_protocol == "repeated_subsampling":
        pairs = repeated_subsampling(train_all, lab, spec.k, spec.val_frac, seed + 1)
    else:
        pairs = [tuple(stratified_split(train_all, lab, [1 - spec.val_frac, spec.val_frac], seed + 1))]
    runs = []
    for i, (tr, va) in enumerate(pairs):
        if spec.oversample_train:
            tr, _ = random_oversample(tr, corpus.label_of(tr), seed + 1000 + i)
        runs.append(RunSplit(i, list(tr), list(va), list(test)))
    return runs


# --- text embeddings ------------------------------------------------------

def embed_corpus(corpus: Corpus, train_ids: Sequence[str], settings: ExperimentSettings, seed: int) -> EmbeddingTable:
    """PV-DBOW fitted on the training documents, then inferred for every article."""
    strategy = TruncationStrategy.parse(settings.truncation)
    docs = {a: truncate(corpus.tokens[a], strategy) for a in corpus.ids}
    train_docs = [docs[a] for a in dict.fromkeys(train_ids) if docs[a]]
    if not train_docs:
        raise ValueError("no training article has text")
    model = train_pvdbow(train_docs, dim=settings.embed_dim, epochs=settings.embed_epochs, seed=seed)
    return EmbeddingTable(settings.embed_dim, {a: embed_document(model, docs[a]) for a in corpus.ids})


# --- per-run state --------------------------------------------------------

class RunContext:
    """Scaled inputs of one run plus a cache of trained unimodal models."""

    def __init__(self, corpus: Corpus, run: RunSplit, embeddings: EmbeddingTable | None,
                 settings: ExperimentSettings, seed: int):
        self.corpus, self.run, self.settings = corpus, run, settings
        self.seed = seed + run.index
        self.embeddings = embeddings
        train_labels = corpus.label_of(run.train)
        cw = resolve_class_weights(settings.split.class_weights, train_labels)
        self.gnn_config = replace(settings.gnn, class_weights=cw)
        self.text_settings = replace(settings.text, class_weights=cw)
        self.node_scaler = fit_scaler(np.vstack([corpus.node_rows[a] for a in run.train]), NODE_LOG_COLUMNS)
        self.graph_scaler = fit_scaler(np.vstack([corpus.graph_rows[a] for a in run.train]), GRAPH_LOG_COLUMNS)
        self._samples: dict[str, GraphSample] = {}
        self.models: dict[str, object] = {}

    def samples(self, ids: Sequence[str]) -> list[GraphSample]:
        out = []
        for a in ids:
            if a not in self._samples:
                x = apply_scaler(self.node_scaler, self.corpus.node_rows[a])
                adj = adjacency_from_edges(len(x), self.corpus.edges[a])
                self._samples[a] = GraphSample(adj, x, int(self.corpus.label_of([a])[0]), a)
            out.append(self._samples[a])
        return out

    def graph_matrix(self, ids: Sequence[str]) -> np.ndarray:
        return apply_scaler(self.graph_scaler, np.vstack([self.corpus.graph_rows[a] for a in ids]))

    def text_matrix(self, ids: Sequence[str]) -> np.ndarray:
        if self.embeddings is None:
            raise ValueError("text embeddings are required for this model")
        return self.embeddings.matrix(list(ids))

    def labels(self, ids: Sequence[str]) -> np.ndarray:
        return self.corpus.label_of(ids)

    # unimodal trainers, reusable on any subset -------------------------

    def train_gnn_on(self, ids, seed):
        return train_gnn(self.samples(ids), self.gnn_config, seed, self.samples(self.run.val))

    def train_text_on(self, ids, seed):
        return train_text_classifier(self.text_matrix(ids), self.labels(ids), self.text_matrix(self.run.val),
                                     self.labels(self.run.val), self.text_settings, seed)

    def gnn_model(self):
        if "gnn" not in self.models:
            self.models["gnn"] = self.train_gnn_on(self.run.train, self.seed)
        return self.models["gnn"]

    def text_model(self):
        if "text" not in self.models:
            self.models["text"] = self.train_text_on(self.run.train, self.seed)
        return self.models["text"]


def predict_model(ctx: RunContext, name: str, ids: Sequence[str] | None = None) -> PredictionSet:
    """Train (or reuse) model ``name`` on the run's training part and score ``ids`` (default: test)."""
    ids = list(ctx.run.test if ids is None else ids)
    if name == "gnn":
        probs, _ = predict_gnn(ctx.gnn_model(), ctx.samples(ids))
    elif name == "text":
        probs, _ = predict_text(ctx.text_model(), ctx.text_matrix(ids))
    elif name.startswith("baseline_"):
        kind = name[len("baseline_"):]
        if name not in ctx.models:
            ctx.models[name] = baselines.train_baseline(kind, ctx.graph_matrix(ctx.run.train),
                                                        ctx.labels(ctx.run.train), ctx.seed)
        _, probs = baselines.predict(ctx.models[name], ctx.graph_matrix(ids))
    elif name == "early":
        if name not in ctx.models:
            tr, va = ctx.run.train, ctx.run.val
            ctx.models[name] = early_fusion_train(ctx.samples(tr), ctx.text_matrix(tr), ctx.samples(va),
                                                  ctx.text_matrix(va), ctx.gnn_config, ctx.seed)
        probs, _ = early_fusion_predict(ctx.models[name], ctx.samples(ids), ctx.text_matrix(ids))
    elif name == "late_mean":
        probs = late_fusion_mean([predict_model(ctx, "gnn", ids), predict_model(ctx, "text", ids)]).aligned(ids)
    elif name == "late_classifier":
        if name not in ctx.models:
            ctx.models[name] = _train_stack(ctx)
        meta = ctx.models[name]
        probs = stack_predict(meta, [predict_model(ctx, s, ids) for s in meta.sources], ids)
    else:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    return PredictionSet(name, ids, probs)


def _train_stack(ctx: RunContext):
    """Meta-learner over 3-fold out-of-fold GNN and text probabilities of the
    (deduplicated) training part."""
    ids = list(dict.fromkeys(ctx.run.train))
    labels = ctx.labels(ids)
    folds, seed = ctx.settings.fusion_folds, ctx.seed

    def gnn_trainer(tr, _, pred):
        return predict_gnn(ctx.train_gnn_on(tr, seed), ctx.samples(pred))[0]

    def text_trainer(tr, _, pred):
        return predict_text(ctx.train_text_on(tr, seed), ctx.text_matrix(pred))[0]

    oof = [oof_predictions(ids, labels, gnn_trainer, folds, seed, "gnn"),
           oof_predictions(ids, labels, text_trainer, folds, seed, "text")]
    return late_fusion_stack_train(oof, labels, ids)


@dataclass
class ExperimentResult:
    predictions: dict[str, list[PredictionSet]]
    reports: dict[str, MetricsReport]
    contexts: list[RunContext]


def run_experiment(corpus: Corpus, models: Sequence[str], settings: ExperimentSettings | None = None,
                   seed: int = 0, embeddings: EmbeddingTable | None = None) -> ExperimentResult:
    settings = settings or ExperimentSettings()
    runs = make_runs(corpus, settings.split, seed)
    if not runs[0].test:
        raise ValueError("train_test_ratio 1.0 leaves no test set to evaluate")
    needs_text = any(m in ("text", "early", "late_mean", "late_classifier") for m in models)
    if needs_text and embeddings is None:
        embeddings = embed_corpus(corpus, outer_split(corpus, settings.split, seed)[0], settings, seed)
    preds: dict[str, list[PredictionSet]] = {m: [] for m in models}
    contexts = []
    for run in runs:
        ctx = RunContext(corpus, run, embeddings, settings, seed)
        for m in models:
            preds[m].append(predict_model(ctx, m))
            log.info("run %d %s done", run.index, m)
        contexts.append(ctx)
    reports = {}
    for m in models:
        reports[m] = MetricsReport([evaluate_probs(corpus.label_of(p.ids), p.probs) for p in preds[m]])
    return ExperimentResult(preds, reports, contexts)
