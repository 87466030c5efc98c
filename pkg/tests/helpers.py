"""Shared builders and independent dense / brute-force oracles for the tests."""

from __future__ import annotations

import itertools

import numpy as np

from newsprop.dataset_io import TweetRecord


def tweet(tid, ts, author="u", *, rt_of=None, mentions=(), article="A", text="", verified=False,
          followers=10, friends=5, hashtags=0, created=0):
    return TweetRecord(
        tweet_id=tid, article_id=article, author_id=author, timestamp=ts, text=text,
        is_retweet=rt_of is not None, verified=verified, followers=followers, friends=friends,
        mentions=tuple(mentions), hashtag_count=hashtags, account_created=created,
        declared_source_id=rt_of,
    )


def random_tree_edges(rng, n):
    """Parent->child edges of a random rooted tree on n nodes."""
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def random_edges(rng, n, p=0.2):
    """Random undirected simple graph as a list of (u, v) with u < v."""
    return [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]


def dense_adjacency(n, edges, bidirectional=True):
    a = np.zeros((n, n))
    for u, v in edges:
        a[v, u] += 1.0
        if bidirectional:
            a[u, v] += 1.0
    return a   # a[i, j] = weight of edge j -> i


def dense_gcn(x, a, theta):
    a_hat = a + np.eye(len(a))
    d = a_hat.sum(axis=1)
    dm = np.diag(1.0 / np.sqrt(d))
    return dm @ a_hat @ dm @ x @ theta


def dense_gat(x, a, theta, att, slope=0.2):
    """Returns (output, alpha) with alpha[i, j] the attention of target i on j."""
    h = x @ theta
    n, k = h.shape
    mask = (a > 0) | np.eye(n, dtype=bool)
    logits = np.full((n, n), -np.inf)
    for i in range(n):
        for j in range(n):
            if mask[i, j]:
                z = float(np.concatenate([h[i], h[j]]) @ att.ravel())
                logits[i, j] = z if z > 0 else slope * z
    logits -= logits.max(axis=1, keepdims=True)
    alpha = np.where(mask, np.exp(logits), 0.0)
    alpha /= alpha.sum(axis=1, keepdims=True)
    return alpha @ h, alpha


def pair_auc(labels, scores):
    """AUC by enumerating every positive/negative pair."""
    pos = [s for y, s in zip(labels, scores) if y == 1]
    neg = [s for y, s in zip(labels, scores) if y == 0]
    total = 0.0
    for p, q in itertools.product(pos, neg):
        total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def loop_metrics(labels, predicted):
    tp = fp = fn = tn = 0
    for y, p in zip(labels, predicted):
        if y == 1 and p == 1:
            tp += 1
        elif y == 0 and p == 1:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return (tp, fp, fn, tn), {"accuracy": (tp + tn) / len(labels), "precision": prec, "recall": rec, "f1": f1}


def dense_graphconv(x, a, theta1, theta2):
    return x @ theta1 + a @ x @ theta2


def dense_pool(h, mode):
    return {"sum": h.sum(axis=0), "mean": h.mean(axis=0), "max": h.max(axis=0)}[mode]


SMALL_PIPELINE_INI = """\
[run]
seed = 7

[synth]
n_articles = 40
max_cascade = 30
doc_length_mean = 40

[textenc]
dim = 8
epochs = 3
classifier_epochs = 5

[gnn]
num_layers = 2
hidden_dim = 8
epochs = 3
batch_size = 16

[baselines]
kind = extra_trees

[eval]
val_protocol = repeated_subsampling
k = 2
"""

PIPELINE_STEPS = [
    ["synth"], ["build-graphs"], ["features"], ["embed-text"],
    ["train", "--model", "gnn"], ["train", "--model", "baseline"], ["train", "--model", "text"],
    ["fuse", "--mode", "early"], ["fuse", "--mode", "late-mean"], ["fuse", "--mode", "late-classifier"],
    ["evaluate"], ["report"],
]


def run_pipeline(config_path, out_dir):
    """Run every CLI stage in order; returns the list of exit codes."""
    from newsprop.cli import main

    codes = []
    for step in PIPELINE_STEPS:
        codes.append(main(step + ["--config", str(config_path), "--out", str(out_dir)]))
    return codes


def tree_bytes(root, patterns):
    """Relative path -> bytes for all files under ``root`` matching any glob pattern."""
    out = {}
    for pattern in patterns:
        for p in sorted(root.glob(pattern)):
            if p.is_file():
                out[str(p.relative_to(root))] = p.read_bytes()
    return out
