"""Handcrafted node-level and graph-level propagation features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .cascade import NEWS_ROOT, RETWEET, PropagationGraph
from .textenc import tokenize

NODE_FEATURES = (
    "verified", "friends", "followers", "hashtag_count", "mention_count",
    "sentiment_compound", "pos_word_freq", "neg_word_freq", "account_age_days",
    "dt_source_seconds", "dt_parent_seconds", "mean_dt_successors_seconds",
)
GRAPH_FEATURES = (
    "num_nodes", "num_tweets", "avg_num_retweets", "retweet_perc", "num_users",
    "total_propagation_time", "avg_num_followers", "avg_num_friends",
    "perc_posts_1_hour", "users_10h", "avg_time_diff",
)
# heavy-tailed counts, log1p-transformed before standardisation
NODE_LOG_COLUMNS = (1, 2)
GRAPH_LOG_COLUMNS = (6, 7)

COMPOUND_ALPHA = 15.0


class SentimentLexicon:
    def __init__(self, entries: dict[str, float]):
        clean = {}
        for tok, val in entries.items():
            tok = tok.lower()
            if tok in clean:
                raise ValueError(f"duplicate lexicon token {tok!r}")
            val = float(val)
            if not math.isfinite(val):
                raise ValueError(f"non-finite valence for {tok!r}")
            clean[tok] = val
        self.entries = clean

    def __len__(self) -> int:
        return len(self.entries)

    def negated(self) -> "SentimentLexicon":
        return SentimentLexicon({k: -v for k, v in self.entries.items()})

    @classmethod
    def load(cls, path) -> "SentimentLexicon":
        return cls(_parse_lexicon(Path(path).read_text(encoding="utf-8"), str(path)))

    @classmethod
    def default(cls) -> "SentimentLexicon":
        text = resources.files("newsprop").joinpath("data/lexicon.tsv").read_text(encoding="utf-8")
        return cls(_parse_lexicon(text, "lexicon.tsv"))


def _parse_lexicon(text: str, where: str) -> dict[str, float]:
    entries: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            tok, val = line.split("\t")[:2]
            val = float(val)
        except ValueError:
            raise ValueError(f"{where}:{lineno}: expected '<token>\\t<valence>'") from None
        tok = tok.strip().lower()
        if tok in entries:
            raise ValueError(f"{where}:{lineno}: duplicate token {tok!r}")
        entries[tok] = val
    return entries


def sentiment_score(text: str, lexicon: SentimentLexicon) -> float:
    """Sum of token valences squashed to [-1, 1] as s / sqrt(s^2 + 15)."""
    s = sum(lexicon.entries.get(t, 0.0) for t in tokenize(text))
    if s == 0.0:
        return 0.0
    return s / math.sqrt(s * s + COMPOUND_ALPHA)


def _word_freqs(tokens: list[str], lexicon: SentimentLexicon) -> tuple[float, float]:
    if not tokens:
        return 0.0, 0.0
    vals = [lexicon.entries.get(t, 0.0) for t in tokens]
    n = len(tokens)
    return sum(v > 0 for v in vals) / n, sum(v < 0 for v in vals) / n


def extract_node_features(graph: PropagationGraph, lexicon: SentimentLexicon) -> np.ndarray:
    """One row of NODE_FEATURES per node, in node order; the news root row is zero."""
    out = np.zeros((graph.num_nodes, len(NODE_FEATURES)))
    tweets = [n.tweet for n in graph.nodes if n.tweet is not None]
    if not tweets:
        return out
    t_first = min(t.timestamp for t in tweets)
    kids = graph.children()
    for node in graph.nodes:
        if node.kind == NEWS_ROOT:
            continue
        t = node.tweet
        parent = graph.nodes[node.parent]
        tokens = tokenize(t.text)
        pos, neg = _word_freqs(tokens, lexicon)
        child_ts = [graph.nodes[c].tweet.timestamp for c in kids[node.node_index]]
        out[node.node_index] = (
            float(t.verified),
            t.friends,
            t.followers,
            t.hashtag_count,
            len(t.mentions),
            sentiment_score(t.text, lexicon),
            pos,
            neg,
            (t.timestamp - t.account_created) / 86400.0,
            t.timestamp - t_first,
            0.0 if parent.tweet is None else t.timestamp - parent.tweet.timestamp,
            float(np.mean([c - t.timestamp for c in child_ts])) if child_ts else 0.0,
        )
    return out


def extract_graph_features(graph: PropagationGraph) -> np.ndarray:
    """GRAPH_FEATURES for one propagation graph; the news root is not counted."""
    nodes = graph.tweet_nodes()
    if not nodes:
        return np.zeros(len(GRAPH_FEATURES))
    tweets = [n.tweet for n in nodes]
    n_nodes = len(nodes)
    retweets = [n for n in nodes if n.kind == RETWEET]
    n_tweets = n_nodes - len(retweets)
    times = np.array([t.timestamp for t in tweets], dtype=np.float64)
    t_first = times.min()

    users: dict[str, tuple[int, int]] = {}
    for t in tweets:
        users.setdefault(t.author_id, (t.followers, t.friends))
    early_users = {t.author_id for t in tweets if t.timestamp - t_first <= 36000}

    # retweet delay measured from the tweet that started its cascade
    by_id = {t.tweet_id: t for t in tweets}
    delays = [r.tweet.timestamp - by_id[r.tweet.declared_source_id].timestamp for r in retweets]

    return np.array([
        n_nodes,
        n_tweets,
        len(retweets) / n_tweets if n_tweets else 0.0,
        len(retweets) / n_nodes,
        len(users),
        times.max() - t_first,
        float(np.mean([u[0] for u in users.values()])),
        float(np.mean([u[1] for u in users.values()])),
        float(np.mean(times - t_first <= 3600)),
        len(early_users),
        float(np.mean(delays)) if delays else 0.0,
    ], dtype=np.float64)


@dataclass
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray
    log_columns: tuple[int, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"mean": [float(x) for x in self.mean], "std": [float(x) for x in self.std],
                "log_columns": list(self.log_columns)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64),
                   tuple(d.get("log_columns", ())))


def _log_transform(rows: np.ndarray, cols: Sequence[int]) -> np.ndarray:
    if not cols:
        return rows
    rows = rows.copy()
    c = list(cols)
    rows[:, c] = np.log1p(np.maximum(rows[:, c], 0.0))
    return rows


def fit_scaler(rows, log_columns: Sequence[int] = ()) -> FeatureScaler:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[0] == 0:
        raise ValueError("cannot fit a scaler on zero rows")
    rows = _log_transform(rows, log_columns)
    std = rows.std(axis=0)
    return FeatureScaler(rows.mean(axis=0), np.where(std > 0, std, 1.0), tuple(log_columns))


def apply_scaler(scaler: FeatureScaler, rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if rows.shape[1] != len(scaler.mean):
        raise ValueError(f"scaler expects {len(scaler.mean)} columns, got {rows.shape[1]}")
    return (_log_transform(rows, scaler.log_columns) - scaler.mean) / scaler.std
