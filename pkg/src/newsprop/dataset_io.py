"""On-disk formats for articles, tweets, text embeddings and feature tables.

news.jsonl and tweets.jsonl hold one JSON object per line. Embeddings are a
tab-separated table with a ``dim=<d>`` header. Feature tables are CSV with
``article_id,label,f1..fk`` columns and floats written with 17 significant
digits so they read back bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LABELS = ("fake", "real")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class NewsArticle:
    article_id: str
    label: str
    text: str = ""
    publish_time: float | None = None

    @property
    def is_fake(self) -> bool:
        return self.label == "fake"


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    article_id: str
    author_id: str
    timestamp: float
    text: str
    is_retweet: bool
    verified: bool
    followers: int
    friends: int
    mentions: tuple[str, ...]
    hashtag_count: int
    account_created: float
    declared_source_id: str | None = None

    def to_json(self) -> dict:
        out = {
            "tweet_id": self.tweet_id,
            "article_id": self.article_id,
            "author_id": self.author_id,
            "timestamp": self.timestamp,
            "text": self.text,
            "is_retweet": self.is_retweet,
        }
        if self.declared_source_id is not None:
            out["declared_source_id"] = self.declared_source_id
        out.update(
            verified=self.verified,
            followers=self.followers,
            friends=self.friends,
            mentions=list(self.mentions),
            hashtag_count=self.hashtag_count,
            account_created=self.account_created,
        )
        return out


@dataclass(frozen=True)
class LabeledDataset:
    articles: tuple[NewsArticle, ...]
    tweets: dict[str, tuple[TweetRecord, ...]]
    empty_text: frozenset[str] = field(default_factory=frozenset)

    def __len__(self) -> int:
        return len(self.articles)

    @property
    def ids(self) -> list[str]:
        return [a.article_id for a in self.articles]

    def article(self, article_id: str) -> NewsArticle:
        for a in self.articles:
            if a.article_id == article_id:
                return a
        raise KeyError(article_id)

    def without_empty_text(self) -> "LabeledDataset":
        kept = tuple(a for a in self.articles if a.article_id not in self.empty_text)
        return LabeledDataset(
            kept, {a.article_id: self.tweets[a.article_id] for a in kept}, frozenset()
        )


@dataclass
class EmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray]

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        missing = [i for i in ids if i not in self.entries]
        if missing:
            raise DatasetError(f"no embedding for articles: {', '.join(missing[:10])}")
        if not ids:
            return np.zeros((0, self.dim))
        return np.vstack([self.entries[i] for i in ids])


_NEWS_REQUIRED = ("article_id", "label")
_TWEET_REQUIRED = (
    "tweet_id", "article_id", "author_id", "timestamp", "text", "is_retweet",
    "verified", "followers", "friends", "mentions", "hashtag_count", "account_created",
)


def _read_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed line ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DatasetError(f"{path}:{lineno}: malformed line (expected an object)")
            yield lineno, obj


def _require(obj: dict, keys: Sequence[str], where: str) -> None:
    absent = [k for k in keys if k not in obj or obj[k] is None]
    if absent:
        raise DatasetError(f"{where}: missing required field(s) {', '.join(absent)}")


def _nonneg_int(value, name: str, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0 or value != int(value):
        raise DatasetError(f"{where}: {name} must be a non-negative integer")
    return int(value)


def parse_article(obj: dict, where: str = "article") -> NewsArticle:
    _require(obj, _NEWS_REQUIRED, where)
    label = obj["label"]
    if label not in LABELS:
        raise DatasetError(f"{where}: label must be one of {LABELS}, got {label!r}")
    text = obj.get("text") or ""
    if not isinstance(text, str):
        raise DatasetError(f"{where}: text must be a string")
    return NewsArticle(str(obj["article_id"]), label, text, obj.get("publish_time"))


def parse_tweet(obj: dict, where: str = "tweet") -> TweetRecord:
    _require(obj, _TWEET_REQUIRED, where)
    ts = obj["timestamp"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts < 0 or not math.isfinite(ts):
        raise DatasetError(f"{where}: timestamp must be a finite number >= 0")
    mentions = obj["mentions"]
    if not isinstance(mentions, list):
        raise DatasetError(f"{where}: mentions must be a list")
    mentions = tuple(str(m) for m in mentions)
    if len(set(mentions)) != len(mentions):
        raise DatasetError(f"{where}: duplicate entries in mentions")
    is_retweet = bool(obj["is_retweet"])
    source = obj.get("declared_source_id")
    if is_retweet and not source:
        raise DatasetError(f"{where}: retweet without declared_source_id")
    return TweetRecord(
        tweet_id=str(obj["tweet_id"]),
        article_id=str(obj["article_id"]),
        author_id=str(obj["author_id"]),
        timestamp=ts,
        text=str(obj["text"]),
        is_retweet=is_retweet,
        verified=bool(obj["verified"]),
        followers=_nonneg_int(obj["followers"], "followers", where),
        friends=_nonneg_int(obj["friends"], "friends", where),
        mentions=mentions,
        hashtag_count=_nonneg_int(obj["hashtag_count"], "hashtag_count", where),
        account_created=float(obj["account_created"]),
        declared_source_id=str(source) if source else None,
    )


def load_dataset(news_path, tweets_path) -> LabeledDataset:
    """Load articles and tweets and group tweets under their article.

    Articles with empty text stay in the dataset and are listed in
    ``empty_text``; use :meth:`LabeledDataset.without_empty_text` to drop them.
    """
    news_path, tweets_path = Path(news_path), Path(tweets_path)
    articles: list[NewsArticle] = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(news_path):
        art = parse_article(obj, f"{news_path}:{lineno}")
        if art.article_id in seen:
            raise DatasetError(f"{news_path}:{lineno}: duplicate article_id {art.article_id!r}")
        seen.add(art.article_id)
        articles.append(art)

    groups: dict[str, list[TweetRecord]] = defaultdict(list)
    orphans: list[str] = []
    tweet_ids: set[str] = set()
    for lineno, obj in _read_jsonl(tweets_path):
        tw = parse_tweet(obj, f"{tweets_path}:{lineno}")
        if tw.tweet_id in tweet_ids:
            raise DatasetError(f"{tweets_path}:{lineno}: duplicate tweet_id {tw.tweet_id!r}")
        tweet_ids.add(tw.tweet_id)
        if tw.article_id not in seen:
            orphans.append(f"{tw.tweet_id} (article {tw.article_id}, line {lineno})")
            continue
        groups[tw.article_id].append(tw)
    if orphans:
        raise DatasetError(f"orphan tweet(s) referencing unknown articles: {'; '.join(orphans[:20])}")

    empty = frozenset(a.article_id for a in articles if not a.text.strip())
    tweets = {a.article_id: tuple(groups.get(a.article_id, ())) for a in articles}
    return LabeledDataset(tuple(articles), tweets, empty)


def write_dataset(dataset: LabeledDataset, news_path, tweets_path) -> None:
    with open(news_path, "w", encoding="utf-8") as fh:
        for a in dataset.articles:
            obj = {"article_id": a.article_id, "label": a.label, "text": a.text}
            if a.publish_time is not None:
                obj["publish_time"] = a.publish_time
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    with open(tweets_path, "w", encoding="utf-8") as fh:
        for a in dataset.articles:
            for t in dataset.tweets[a.article_id]:
                fh.write(json.dumps(t.to_json(), ensure_ascii=False) + "\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def load_embedding_table(path) -> EmbeddingTable:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise DatasetError(f"{path}:1: expected header 'dim=<d>'")
        try:
            dim = int(header[4:])
        except ValueError:
            raise DatasetError(f"{path}:1: bad dimension {header[4:]!r}") from None
        if dim <= 0:
            raise DatasetError(f"{path}:1: dimension must be positive")
        entries: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            key, vals = parts[0], parts[1:]
            if len(vals) != dim:
                raise DatasetError(f"{path}:{lineno}: row {key!r} has {len(vals)} values, expected {dim}")
            if key in entries:
                raise DatasetError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                vec = np.array([float(v) for v in vals])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: row {key!r} has a non-numeric value") from None
            if not np.all(np.isfinite(vec)):
                raise DatasetError(f"{path}:{lineno}: row {key!r} contains NaN or inf")
            entries[key] = vec
    return EmbeddingTable(dim, entries)


def write_embedding_table(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={table.dim}\n")
        for key, vec in table.entries.items():
            if len(vec) != table.dim:
                raise DatasetError(f"row {key!r} has length {len(vec)}, expected {table.dim}")
            fh.write(key + "\t" + "\t".join(_fmt(v) for v in vec) + "\n")


def write_feature_table(rows, path, names: Sequence[str] | None = None) -> None:
    """Write ``(article_id, vector, label)`` rows as CSV."""
    rows = list(rows)
    widths = {len(r[1]) for r in rows}
    if len(widths) > 1:
        raise DatasetError(f"ragged feature rows (lengths {sorted(widths)})")
    k = widths.pop() if widths else (len(names) if names else 0)
    if names is None:
        names = [f"f{i + 1}" for i in range(k)]
    elif len(names) != k:
        raise DatasetError(f"{len(names)} column names for {k} features")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["article_id", "label", *names])
        for article_id, vec, label in rows:
            w.writerow([article_id, label, *(_fmt(v) for v in vec)])


def read_feature_table(path) -> tuple[list[str], list[tuple[str, np.ndarray, str]]]:
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:2] != ["article_id", "label"]:
            raise DatasetError(f"{path}: header must start with article_id,label")
        names = header[2:]
        rows = []
        for lineno, row in enumerate(r, start=2):
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} columns")
            rows.append((row[0], np.array([float(v) for v in row[2:]]), row[1]))
    return names, rows
