"""Propagation graph reconstruction.

Twitter reports only the original tweet as the source of a retweet, so the
immediate source of each retweet is recovered from the time-ordered cascade:
a predecessor whose author mentions the retweeter wins, otherwise the most
recent predecessor inside a time window, otherwise the original tweet. Each
cascade hangs off a single news root node.
"""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .dataset_io import NewsArticle, TweetRecord

log = logging.getLogger(__name__)

DEFAULT_WINDOW_SECONDS = 600

NEWS_ROOT, TWEET, RETWEET = "news_root", "tweet", "retweet"


class CascadeError(ValueError):
    pass


@dataclass(frozen=True)
class CascadeNode:
    node_index: int
    kind: str
    tweet: TweetRecord | None = None
    parent: int | None = None


@dataclass
class PropagationGraph:
    article_id: str
    nodes: list[CascadeNode]
    edges: list[tuple[int, int]]
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for p, c in self.edges:
            out[p].append(c)
        return out

    def tweet_nodes(self) -> list[CascadeNode]:
        return [n for n in self.nodes if n.kind != NEWS_ROOT]


def sort_cascade(records: Sequence[TweetRecord]) -> list[TweetRecord]:
    return sorted(records, key=lambda r: (r.timestamp, r.tweet_id))


def resolve_immediate_source(
    retweet: TweetRecord, predecessors: Sequence[TweetRecord], window_seconds: float
) -> str:
    """Return the tweet_id of the retweet's immediate source.

    ``predecessors`` is the time-sorted part of the cascade published before
    ``retweet``, starting with the original tweet.
    """
    if not predecessors:
        raise CascadeError("cascade without source tweet")
    for pred in reversed(predecessors):
        if retweet.author_id in pred.mentions:
            return pred.tweet_id
    for pred in reversed(predecessors):
        if retweet.timestamp - pred.timestamp <= window_seconds:
            return pred.tweet_id
    return predecessors[0].tweet_id


def build_propagation_graph(
    article: NewsArticle | str,
    tweets: Sequence[TweetRecord],
    window_seconds: float = DEFAULT_WINDOW_SECONDS,
) -> PropagationGraph:
    article_id = article if isinstance(article, str) else article.article_id
    sources = [t for t in tweets if not t.is_retweet]
    source_ids = {t.tweet_id for t in sources}
    by_source: dict[str, list[TweetRecord]] = defaultdict(list)
    unmatched = early = 0
    for t in tweets:
        if not t.is_retweet:
            continue
        if t.declared_source_id not in source_ids:
            unmatched += 1
            continue
        by_source[t.declared_source_id].append(t)

    nodes = [CascadeNode(0, NEWS_ROOT)]
    edges: list[tuple[int, int]] = []
    for src in sort_cascade(sources):
        src_index = len(nodes)
        nodes.append(CascadeNode(src_index, TWEET, src, 0))
        edges.append((0, src_index))
        index_of = {src.tweet_id: src_index}
        ordered = [src]
        for rt in sort_cascade(by_source.get(src.tweet_id, ())):
            if rt.timestamp < src.timestamp:
                early += 1
                continue
            parent_id = resolve_immediate_source(rt, ordered, window_seconds)
            idx = len(nodes)
            nodes.append(CascadeNode(idx, RETWEET, rt, index_of[parent_id]))
            edges.append((index_of[parent_id], idx))
            index_of[rt.tweet_id] = idx
            ordered.append(rt)

    skipped = {"unmatched_source": unmatched, "retweet_before_source": early}
    if unmatched or early:
        log.warning("article %s: skipped %d unmatched and %d early retweets", article_id, unmatched, early)
    return PropagationGraph(article_id, nodes, edges, skipped)


def check_tree(graph: PropagationGraph) -> list[str]:
    """Return a list of violated tree invariants (empty when the graph is valid)."""
    problems = []
    n = graph.num_nodes
    if sum(1 for x in graph.nodes if x.kind == NEWS_ROOT) != 1 or graph.nodes[0].kind != NEWS_ROOT:
        problems.append("expected exactly one news root at index 0")
    if len(graph.edges) != n - 1:
        problems.append(f"|E|={len(graph.edges)} but |V|-1={n - 1}")
    kids = graph.children()
    seen, stack = {0}, [0]
    while stack:
        for c in kids[stack.pop()]:
            if c in seen:
                problems.append(f"node {c} reached twice")
                continue
            seen.add(c)
            stack.append(c)
    if len(seen) != n:
        problems.append(f"{n - len(seen)} node(s) unreachable from root")
    for p, c in graph.edges:
        parent, child = graph.nodes[p], graph.nodes[c]
        if child.parent != p:
            problems.append(f"edge ({p},{c}) disagrees with node parent")
        if parent.tweet is not None and child.tweet is not None and child.tweet.timestamp < parent.tweet.timestamp:
            problems.append(f"child {c} precedes parent {p}")
    return problems


_NODE_FIELDS = ["node_index", "kind", "tweet_id", "author_id", "timestamp", "parent"]


def write_graph(graph: PropagationGraph, edges_path, nodes_path) -> None:
    with open(edges_path, "w", encoding="utf-8") as fh:
        for p, c in graph.edges:
            fh.write(f"{p} {c}\n")
    with open(nodes_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_NODE_FIELDS)
        for node in graph.nodes:
            t = node.tweet
            w.writerow([
                node.node_index, node.kind,
                t.tweet_id if t else "", t.author_id if t else "",
                repr(t.timestamp) if t else "",
                "" if node.parent is None else node.parent,
            ])


def read_edges(path) -> tuple[int, list[tuple[int, int]]]:
    """Read an edge-list dump; returns (num_nodes, edges)."""
    edges = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            p, c = line.split()
            edges.append((int(p), int(c)))
    return len(edges) + 1, edges
