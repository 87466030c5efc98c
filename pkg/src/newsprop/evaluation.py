"""Splitting protocols, oversampling, class weights and classification metrics.

Fake news is the positive class: label 1 = fake, 0 = real.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

METRICS = ("accuracy", "precision", "recall", "f1", "auc")


@dataclass
class SplitSpec:
    train_test_ratio: float = 0.8
    val_protocol: str = "holdout"   # holdout | repeated_subsampling
    k: int = 10
    val_frac: float = 0.1
    oversample_train: bool = False
    class_weights: str = "uniform"  # uniform | balanced | "<w_fake>,<w_real>"

    def __post_init__(self):
        if not 0 < self.train_test_ratio <= 1 or not 0 < self.val_frac < 1:
            raise ValueError("split fractions must lie in (0, 1)")
        if self.val_protocol not in ("holdout", "repeated_subsampling"):
            raise ValueError(f"unknown validation protocol {self.val_protocol!r}")
        if self.k < 1:
            raise ValueError("k must be positive")
        resolve_class_weights(self.class_weights, [0, 1])

    @property
    def runs(self) -> int:
        return self.k if self.val_protocol == "repeated_subsampling" else 1


def resolve_class_weights(spec: str, labels) -> tuple[float, float]:
    """Loss weights indexed by label, i.e. ``(w_real, w_fake)``."""
    spec = str(spec).strip()
    if spec in ("uniform", "none", ""):
        return (1.0, 1.0)
    labels = np.asarray(labels)
    if spec == "balanced":
        n = len(labels)
        counts = [max(int((labels == c).sum()), 1) for c in (0, 1)]
        return (n / (2 * counts[0]), n / (2 * counts[1]))
    try:
        w_fake, w_real = (float(v) for v in spec.split(","))
    except ValueError:
        raise ValueError(f"class weights must be uniform, balanced or 'w_fake,w_real', got {spec!r}") from None
    if w_fake <= 0 or w_real <= 0:
        raise ValueError("class weights must be positive")
    return (w_real, w_fake)


def stratified_split(ids: Sequence, labels, fractions: Sequence[float], seed: int) -> list[list]:
    """Partition ``ids`` into parts of the given fractions, per class.

    Each part keeps the class ratio of the whole to within one sample. Parts
    list ids in their input order.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("fractions must be non-negative and sum to 1")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    part_of = np.empty(len(ids), dtype=np.int64)
    cum = np.concatenate([[0.0], np.cumsum(fractions)])
    cum[-1] = 1.0
    for c in np.unique(labels):
        members = np.nonzero(labels == c)[0]
        members = members[rng.permutation(len(members))]
        cuts = np.floor(cum * len(members) + 0.5).astype(np.int64)
        for p in range(len(fractions)):
            part_of[members[cuts[p]:cuts[p + 1]]] = p
    return [[ids[i] for i in range(len(ids)) if part_of[i] == p] for p in range(len(fractions))]


def repeated_subsampling(train_ids: Sequence, labels, k: int = 10, val_frac: float = 0.1,
                         seed: int = 0) -> list[tuple[list, list]]:
    """``k`` independent stratified (train, validation) splits of ``train_ids``."""
    seeds = np.random.SeedSequence(seed).generate_state(k)
    out = []
    for s in seeds:
        tr, va = stratified_split(train_ids, labels, [1.0 - val_frac, val_frac], int(s))
        out.append((tr, va))
    return out


def random_oversample(ids: Sequence, labels, seed: int) -> tuple[list, np.ndarray]:
    """Duplicate randomly drawn minority-class ids until both classes are equally large."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    counts = {c: int((labels == c).sum()) for c in (0, 1)}
    if counts[0] == counts[1] or min(counts.values()) == 0:
        return list(ids), labels.copy()
    minority = 0 if counts[0] < counts[1] else 1
    pool = np.nonzero(labels == minority)[0]
    extra = rng.choice(pool, size=abs(counts[0] - counts[1]), replace=True)
    idx = np.concatenate([np.arange(len(ids)), extra])
    return [ids[i] for i in idx], labels[idx]


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def compute_metrics(labels, predicted) -> tuple[ConfusionCounts, dict[str, float]]:
    y = np.asarray(labels).astype(np.int64)
    p = np.asarray(predicted).astype(np.int64)
    if y.shape != p.shape:
        raise ValueError("labels and predictions differ in length")
    tp = int(np.sum((y == 1) & (p == 1)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = int(np.sum((y == 1) & (p == 0)))
    tn = int(np.sum((y == 0) & (p == 0)))
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return ConfusionCounts(tp, fp, fn, tn), {
        "accuracy": _ratio(tp + tn, len(y)),
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


def roc_auc(labels, scores) -> float:
    """P(score of a random positive > score of a random negative), ties counting half."""
    y = np.asarray(labels).astype(np.int64)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate_probs(labels, probs) -> dict[str, float]:
    """All metrics from ``[p_real, p_fake]`` rows; predicted fake when p_fake > 0.5."""
    probs = np.atleast_2d(probs)
    _, m = compute_metrics(labels, (probs[:, 1] > 0.5).astype(np.int64))
    m["auc"] = roc_auc(labels, probs[:, 1])
    return m


@dataclass
class MetricsReport:
    runs: list[dict[str, float]]

    @property
    def mean(self) -> dict[str, float]:
        return {k: float(np.mean([r[k] for r in self.runs])) for k in METRICS if k in self.runs[0]}

    @property
    def std(self) -> dict[str, float]:
        return {k: float(np.std([r[k] for r in self.runs])) for k in METRICS if k in self.runs[0]}

    def to_dict(self) -> dict:
        return {"runs": self.runs, "mean": self.mean, "std": self.std, "n_runs": len(self.runs)}


def format_table(reports: dict[str, MetricsReport]) -> str:
    """Plain-text table of mean +- std per model."""
    header = f"{'model':<28}" + "".join(f"{m:>21}" for m in METRICS)
    lines = [header, "-" * len(header)]
    for name in sorted(reports):
        r = reports[name]
        mean, std = r.mean, r.std
        cells = "".join(f"{mean[m]:>11.4f} +- {std[m]:.4f}" if m in mean else f"{'-':>21}" for m in METRICS)
        lines.append(f"{name:<28}{cells}  (runs={len(r.runs)})")
    return "\n".join(lines) + "\n"


def reports_to_json(reports: dict[str, MetricsReport]) -> str:
    return json.dumps({k: reports[k].to_dict() for k in sorted(reports)}, indent=2, sort_keys=True) + "\n"


def spec_to_dict(spec: SplitSpec) -> dict:
    return asdict(spec)
