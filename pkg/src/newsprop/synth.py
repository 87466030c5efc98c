"""Seeded synthetic articles with tweet cascades.

Fake and real articles draw their cascades and texts from class-specific
parameters. Every class parameter is interpolated between the midpoint of
the two classes (separation 0, no signal) and its own value (separation 1),
separately for the propagation side and for the article text.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .dataset_io import LabeledDataset, NewsArticle, TweetRecord, write_dataset

_T0 = 1_500_000_000  # first possible publish time


@dataclass(frozen=True)
class CascadeParams:
    tweets_mean: float          # Poisson mean of source tweets per article
    branching_mean: float       # Poisson mean of retweets per tweet/retweet
    retweet_delay: float        # mean exponential delay (s) of a retweet after its parent
    tweet_delay: float          # mean exponential delay (s) of a source tweet after publication
    verified_prob: float
    followers_mu: float         # log-normal parameters of follower counts
    followers_sigma: float
    friends_mu: float
    friends_sigma: float
    mention_prob: float         # chance a parent's author mentions the retweeter
    pos_word_prob: float        # per-token chance of a positive / negative lexicon word in tweets
    neg_word_prob: float
    hashtag_mean: float
    account_age_days: float     # mean exponential account age at publication


FAKE_DEFAULT = CascadeParams(
    tweets_mean=6.0, branching_mean=0.8, retweet_delay=900.0, tweet_delay=3600.0,
    verified_prob=0.12, followers_mu=5.8, followers_sigma=1.5, friends_mu=5.8, friends_sigma=1.2,
    mention_prob=0.3, pos_word_prob=0.12, neg_word_prob=0.16, hashtag_mean=1.2, account_age_days=800.0,
)
REAL_DEFAULT = CascadeParams(
    tweets_mean=8.0, branching_mean=0.5, retweet_delay=3000.0, tweet_delay=5400.0,
    verified_prob=0.18, followers_mu=6.4, followers_sigma=1.5, friends_mu=6.0, friends_sigma=1.2,
    mention_prob=0.3, pos_word_prob=0.15, neg_word_prob=0.12, hashtag_mean=1.0, account_age_days=1100.0,
)


@dataclass(frozen=True)
class SynthConfig:
    n_articles: int = 600
    fake_fraction: float = 0.4
    separation: float = 1.0
    graph_separation: float | None = None   # defaults to ``separation``
    text_separation: float | None = None    # defaults to ``separation``
    seed: int = 7
    fake: CascadeParams = FAKE_DEFAULT
    real: CascadeParams = REAL_DEFAULT
    vocab_size: int = 400
    doc_length_mean: float = 120.0
    text_contrast: float = 0.35    # log-odds scale of class-specific word preferences
    max_cascade: int = 150
    tweet_words: int = 10

    def __post_init__(self):
        if not 0 < self.fake_fraction < 1:
            raise ValueError("fake_fraction must lie in (0, 1)")
        for s in (self.separation, self.graph_sep, self.text_sep):
            if not 0 <= s <= 1:
                raise ValueError("separations must lie in [0, 1]")
        for p in (self.fake, self.real):
            if min(p.retweet_delay, p.tweet_delay, p.tweets_mean, p.account_age_days) <= 0:
                raise ValueError("rates and means must be positive")

    @property
    def graph_sep(self) -> float:
        return self.separation if self.graph_separation is None else self.graph_separation

    @property
    def text_sep(self) -> float:
        return self.separation if self.text_separation is None else self.text_separation

    def class_params(self, label: str) -> CascadeParams:
        """Parameters of ``label`` pulled toward the class midpoint by the graph separation."""
        own = self.fake if label == "fake" else self.real
        s = self.graph_sep
        vals = {}
        for f in fields(CascadeParams):
            a, b = getattr(self.fake, f.name), getattr(self.real, f.name)
            mid = 0.5 * (a + b)
            vals[f.name] = mid + s * (getattr(own, f.name) - mid)
        return CascadeParams(**vals)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("fake", "real")}
        out["fake"] = {f.name: getattr(self.fake, f.name) for f in fields(CascadeParams)}
        out["real"] = {f.name: getattr(self.real, f.name) for f in fields(CascadeParams)}
        return out


def load_synth_config(path=None, **overrides) -> SynthConfig:
    """Read a ``[synth]`` / ``[synth.fake]`` / ``[synth.real]`` INI file.

    Without a path the shipped default file is used.
    """
    cp = configparser.ConfigParser()
    if path is None:
        cp.read_string(resources.files("newsprop").joinpath("data/synth_default.ini").read_text(encoding="utf-8"))
    else:
        cp.read(path, encoding="utf-8")
    kw: dict = {}
    if cp.has_section("synth"):
        types = {f.name: f.type for f in fields(SynthConfig)}
        for key, raw in cp.items("synth"):
            if key not in types or key in ("fake", "real"):
                raise ValueError(f"unknown synth option {key!r}")
            kw[key] = _coerce(raw, types[key])
    for label in ("fake", "real"):
        sec = f"synth.{label}"
        base = FAKE_DEFAULT if label == "fake" else REAL_DEFAULT
        if cp.has_section(sec):
            kw[label] = replace(base, **{k: float(v) for k, v in cp.items(sec)})
    kw.update(overrides)
    return SynthConfig(**kw)


def _coerce(raw: str, typ) -> object:
    raw = raw.strip()
    typ = str(typ)
    if raw.lower() in ("none", ""):
        return None
    if typ.startswith("int"):
        return int(raw)
    return float(raw)


# --- generation -----------------------------------------------------------

_POS_WORDS = ("good", "great", "love", "happy", "hope", "true", "best", "support", "proud", "honest")
_NEG_WORDS = ("bad", "terrible", "hate", "fake", "lie", "fraud", "scandal", "shocking", "disaster", "corrupt")


@dataclass
class _Author:
    author_id: str
    verified: bool
    followers: int
    friends: int
    account_created: int


def _new_author(rng, p: CascadeParams, author_id: str, publish: int) -> _Author:
    age = rng.exponential(p.account_age_days) * 86400.0
    return _Author(
        author_id,
        bool(rng.random() < p.verified_prob),
        int(rng.lognormal(p.followers_mu, p.followers_sigma)),
        int(rng.lognormal(p.friends_mu, p.friends_sigma)),
        int(publish - age),
    )


def _tweet_text(rng, p: CascadeParams, n_words: int, vocab: list[str]) -> tuple[str, int]:
    words = []
    for _ in range(n_words):
        u = rng.random()
        if u < p.pos_word_prob:
            words.append(_POS_WORDS[rng.integers(len(_POS_WORDS))])
        elif u < p.pos_word_prob + p.neg_word_prob:
            words.append(_NEG_WORDS[rng.integers(len(_NEG_WORDS))])
        else:
            words.append(vocab[rng.integers(len(vocab))])
    hashtags = int(rng.poisson(p.hashtag_mean))
    words.extend(f"#tag{rng.integers(50)}" for _ in range(hashtags))
    return " ".join(words), hashtags


def generate_cascade(label: str, params: CascadeParams, rng: np.random.Generator, article_id: str = "a",
                     publish_time: int = _T0, max_nodes: int = 150, tweet_words: int = 10,
                     return_parents: bool = False):
    """Source tweets arrive after publication; each post spawns a Poisson
    number of retweets with exponential delays after it.

    Returns the TweetRecords (and, with ``return_parents``, the generating
    parent tweet_id of each retweet).
    """
    vocab = [f"w{i}" for i in range(200)]
    posts: list[dict] = []
    authors: list[_Author] = []
    parents: dict[str, str] = {}

    def author_for():
        if authors and rng.random() < 0.05:
            return authors[rng.integers(len(authors))]
        a = _new_author(rng, params, f"{article_id}-u{len(authors)}", publish_time)
        authors.append(a)
        return a

    def make_post(ts, source, parent):
        a = author_for()
        text, tags = _tweet_text(rng, params, tweet_words, vocab)
        post = {"tweet_id": f"{article_id}-t{len(posts):04d}", "author": a, "timestamp": ts, "text": text,
                "hashtags": tags, "source": source, "mentions": []}
        posts.append(post)
        if parent is not None:
            parents[post["tweet_id"]] = parent["tweet_id"]
            if rng.random() < params.mention_prob and a.author_id not in parent["mentions"] \
                    and a.author_id != parent["author"].author_id:
                parent["mentions"].append(a.author_id)
        return post

    n_sources = int(rng.poisson(params.tweets_mean))
    for _ in range(n_sources):
        if len(posts) >= max_nodes:
            break
        root = make_post(publish_time + int(round(rng.exponential(params.tweet_delay))), None, None)
        frontier = [root]
        while frontier and len(posts) < max_nodes:
            node = frontier.pop(0)
            for _ in range(int(rng.poisson(params.branching_mean))):
                if len(posts) >= max_nodes:
                    break
                ts = node["timestamp"] + int(round(rng.exponential(params.retweet_delay)))
                frontier.append(make_post(ts, root, node))

    records = []
    for post in posts:
        a = post["author"]
        records.append(TweetRecord(
            tweet_id=post["tweet_id"], article_id=article_id, author_id=a.author_id,
            timestamp=post["timestamp"], text=post["text"], is_retweet=post["source"] is not None,
            verified=a.verified, followers=a.followers, friends=a.friends,
            mentions=tuple(post["mentions"]), hashtag_count=post["hashtags"],
            account_created=a.account_created,
            declared_source_id=post["source"]["tweet_id"] if post["source"] is not None else None,
        ))
    return (records, parents) if return_parents else records


def word_distributions(config: SynthConfig) -> dict[str, np.ndarray]:
    """Per-class unigram distributions over ``vocab_size`` words.

    Both classes share a Zipf background; each word leans toward one class
    with log-odds ``text_separation * text_contrast``.
    """
    v = config.vocab_size
    rng = np.random.default_rng(1_000_003)  # vocabulary structure is fixed, not data-seeded
    background = 1.0 / np.arange(1, v + 1) ** 0.8
    lean = rng.choice([-1.0, 1.0], size=v)
    shift = 0.5 * config.text_sep * config.text_contrast * lean
    out = {}
    for label, sign in (("fake", 1.0), ("real", -1.0)):
        w = background * np.exp(sign * shift)
        out[label] = w / w.sum()
    return out


def article_words(config: SynthConfig) -> list[str]:
    return [f"n{i}" for i in range(config.vocab_size)]


def generate(config: SynthConfig) -> LabeledDataset:
    rng = np.random.default_rng(config.seed)
    n_fake = int(math.floor(config.n_articles * config.fake_fraction + 0.5))
    labels = np.array(["fake"] * n_fake + ["real"] * (config.n_articles - n_fake))
    labels = labels[rng.permutation(len(labels))]
    dists = word_distributions(config)
    words = article_words(config)
    params = {lab: config.class_params(lab) for lab in ("fake", "real")}
    articles, tweets = [], {}
    for i, label in enumerate(labels):
        aid = f"a{i:05d}"
        publish = _T0 + int(rng.integers(0, 365 * 86400))
        length = max(10, int(rng.poisson(config.doc_length_mean)))
        text = " ".join(words[k] for k in rng.choice(config.vocab_size, size=length, p=dists[label]))
        articles.append(NewsArticle(aid, str(label), text, publish))
        tweets[aid] = tuple(generate_cascade(str(label), params[label], rng, aid, publish,
                                             config.max_cascade, config.tweet_words))
    return LabeledDataset(tuple(articles), tweets, frozenset())


def generate_dataset(config: SynthConfig) -> tuple[str, str]:
    """The news.jsonl and tweets.jsonl contents for ``config``."""
    ds = generate(config)
    news = []
    for a in ds.articles:
        news.append(json.dumps({"article_id": a.article_id, "label": a.label, "text": a.text,
                                "publish_time": a.publish_time}))
    tw = [json.dumps(t.to_json()) for a in ds.articles for t in ds.tweets[a.article_id]]
    return "\n".join(news) + "\n", ("\n".join(tw) + "\n") if tw else ""


def write_synthetic(config: SynthConfig, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    news, tweets = out_dir / "news.jsonl", out_dir / "tweets.jsonl"
    write_dataset(generate(config), news, tweets)
    return news, tweets
