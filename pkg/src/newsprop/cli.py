"""Command-line pipeline: synth, build-graphs, features, embed-text, train,
fuse, evaluate and report.

Every stage reads an INI config (``--config``), writes its artifacts under
``--out`` and leaves a JSON manifest in ``<out>/manifests``.
"""

from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import json
import logging
import platform
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__, baselines
from .cascade import CascadeError, build_propagation_graph, read_edges, write_graph
from .dataset_io import (
    DatasetError,
    load_dataset,
    load_embedding_table,
    read_feature_table,
    write_embedding_table,
    write_feature_table,
)
from .evaluation import MetricsReport, SplitSpec, evaluate_probs, format_table, reports_to_json
from .experiment import Corpus, ExperimentSettings, RunContext, embed_corpus, make_runs, outer_split, predict_model
from .featurize import GRAPH_FEATURES, NODE_FEATURES, SentimentLexicon, extract_graph_features, extract_node_features
from .fusion import FusionError, PredictionSet
from .gnn import GnnConfig
from .nn import TrainSettings, save_params
from .synth import load_synth_config, write_synthetic
from .textenc import tokenize

log = logging.getLogger("newsprop")


class PipelineError(Exception):
    """Validation failure reported with exit code 1."""


# --- configuration --------------------------------------------------------

@dataclass
class RunConfig:
    seed: int | None = None
    out: str = "run"
    news: str = ""
    tweets: str = ""
    embeddings: str = ""
    filter_empty_text: bool = False
    window_seconds: float = 600.0
    lexicon: str = ""
    gnn: GnnConfig = field(default_factory=GnnConfig)
    baseline: str = "random_forest"
    split: SplitSpec = field(default_factory=SplitSpec)
    text_epochs: int = 50
    text_lr: float = 0.005
    embed_dim: int = 64
    embed_epochs: int = 20
    truncation: str = "first_n:512"
    inner_folds: int = 3
    source: str = ""

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def dataset_paths(self) -> tuple[Path, Path]:
        news = Path(self.news) if self.news else self.out_dir / "data" / "news.jsonl"
        tweets = Path(self.tweets) if self.tweets else self.out_dir / "data" / "tweets.jsonl"
        return news, tweets

    def settings(self) -> ExperimentSettings:
        return ExperimentSettings(self.split, self.gnn, TrainSettings(self.text_epochs, self.text_lr),
                                  self.embed_dim, self.embed_epochs, self.truncation, self.inner_folds)

    def snapshot(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("gnn", "split", "source")}
        d["gnn"] = asdict(self.gnn)
        d["split"] = asdict(self.split)
        d["gnn"]["class_weights"] = list(d["gnn"]["class_weights"])
        return d


# section -> {key: (RunConfig attribute or nested "gnn."/"split." field, type)}
_KEYS = {
    "run": {"seed": ("seed", int), "out": ("out", str)},
    "dataset": {"news": ("news", str), "tweets": ("tweets", str), "embeddings": ("embeddings", str),
                "filter_empty_text": ("filter_empty_text", "bool")},
    "cascade": {"window_seconds": ("window_seconds", float)},
    "featurize": {"lexicon": ("lexicon", str)},
    "textenc": {"dim": ("embed_dim", int), "epochs": ("embed_epochs", int), "truncation": ("truncation", str),
                "classifier_epochs": ("text_epochs", int), "classifier_lr": ("text_lr", float)},
    "gnn": {"layer_kind": ("gnn.layer_kind", str), "num_layers": ("gnn.num_layers", int),
            "hidden_dim": ("gnn.hidden_dim", int), "pooling": ("gnn.pooling", str),
            "head_dim": ("gnn.head_dim", int), "slope": ("gnn.slope", float), "epochs": ("gnn.epochs", int),
            "lr": ("gnn.lr", float), "batch_size": ("gnn.batch_size", int)},
    "baselines": {"kind": ("baseline", str)},
    "eval": {"train_test_ratio": ("split.train_test_ratio", float), "val_protocol": ("split.val_protocol", str),
             "k": ("split.k", int), "val_frac": ("split.val_frac", float),
             "oversample_train": ("split.oversample_train", "bool"), "class_weights": ("split.class_weights", str)},
    "fusion": {"inner_folds": ("inner_folds", int)},
}
_FOREIGN_SECTIONS = ("synth", "synth.fake", "synth.real")


def load_run_config(path: str | None, seed: int | None = None, out: str | None = None,
                    filter_empty_text: bool = False) -> RunConfig:
    cfg = RunConfig()
    gnn, split = {}, {}
    if path:
        if not Path(path).is_file():
            raise PipelineError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise PipelineError(f"cannot parse config: {exc}") from None
        for section in cp.sections():
            if section in _FOREIGN_SECTIONS:
                continue
            if section not in _KEYS:
                raise PipelineError(f"unknown config section [{section}]")
            for key in cp[section]:
                if key not in _KEYS[section]:
                    raise PipelineError(f"unknown option {key!r} in [{section}]")
                target, typ = _KEYS[section][key]
                raw = cp[section][key]
                try:
                    value = cp.getboolean(section, key) if typ == "bool" else typ(raw)
                except ValueError:
                    raise PipelineError(f"[{section}] {key}: bad value {raw!r}") from None
                if target.startswith("gnn."):
                    gnn[target[4:]] = value
                elif target.startswith("split."):
                    split[target[6:]] = value
                else:
                    setattr(cfg, target, value)
        cfg.source = str(path)
    try:
        cfg.gnn = GnnConfig(**gnn)
        cfg.split = SplitSpec(**split)
    except ValueError as exc:
        raise PipelineError(str(exc)) from None
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out = out
    cfg.filter_empty_text = cfg.filter_empty_text or filter_empty_text
    if cfg.seed is None:
        raise PipelineError("a seed is required (--seed or [run] seed)")
    if cfg.baseline not in baselines.BASELINE_KINDS:
        raise PipelineError(f"unknown baseline {cfg.baseline!r}; choose from {baselines.BASELINE_KINDS}")
    return cfg


# --- manifests and artifact checks ---------------------------------------

def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _versions() -> dict:
    return {"newsprop": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def write_manifest(cfg: RunConfig, stage: str, started: str, artifacts: list, metrics: dict | None = None,
                   extra: dict | None = None) -> Path:
    path = cfg.out_dir / "manifests" / f"{stage}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {
        "stage": stage,
        "seed": cfg.seed,
        "config": cfg.snapshot(),
        "versions": _versions(),
        "started": started,
        "finished": _now(),
        "artifacts": sorted(str(Path(a).relative_to(cfg.out_dir)) for a in artifacts),
        "metrics": metrics or {},
    }
    if extra:
        body.update(extra)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def require(cfg: RunConfig, stage: str, what: str) -> None:
    if not (cfg.out_dir / "manifests" / f"{stage}.json").is_file():
        raise PipelineError(f"missing {what} artifact (run `{stage}` first)")


def _load_dataset(cfg: RunConfig):
    news, tweets = cfg.dataset_paths()
    for p in (news, tweets):
        if not p.is_file():
            raise PipelineError(f"dataset file not found: {p}")
    ds = load_dataset(news, tweets)
    return ds.without_empty_text() if cfg.filter_empty_text else ds


def _lexicon(cfg: RunConfig) -> SentimentLexicon:
    if cfg.lexicon:
        if not Path(cfg.lexicon).is_file():
            raise PipelineError(f"lexicon file not found: {cfg.lexicon}")
        return SentimentLexicon.load(cfg.lexicon)
    return SentimentLexicon.default()


def load_corpus_artifacts(cfg: RunConfig) -> Corpus:
    """Rebuild the featurized corpus from the graph and feature artifacts."""
    out = cfg.out_dir
    _, rows = read_feature_table(out / "features" / "graph_features.csv")
    ids = [r[0] for r in rows]
    labels = np.array([1 if r[2] == "fake" else 0 for r in rows], dtype=np.int64)
    edges, node_rows = {}, {}
    for aid in ids:
        _, edges[aid] = read_edges(out / "graphs" / f"{aid}.edges")
        _, nrows = read_feature_table(out / "features" / "nodes" / f"{aid}.csv")
        node_rows[aid] = np.vstack([r[1] for r in nrows])
    return Corpus(ids, labels, edges, node_rows, {r[0]: r[1] for r in rows}, {a: [] for a in ids})


def _embeddings(cfg: RunConfig, corpus: Corpus):
    path = cfg.out_dir / "embeddings.tsv"
    if not path.is_file():
        raise PipelineError("missing embeddings artifact (run `embed-text` first)")
    table = load_embedding_table(path)
    missing = [a for a in corpus.ids if a not in table.entries]
    if missing:
        raise PipelineError(f"{len(missing)} articles lack a text embedding, e.g. {missing[:5]}")
    return table


# --- stages ---------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> None:
    started = _now()
    try:
        scfg = load_synth_config(cfg.source or None, seed=cfg.seed)
    except (ValueError, configparser.Error) as exc:
        raise PipelineError(f"synth config: {exc}") from None
    news, tweets = write_synthetic(scfg, cfg.out_dir / "data")
    write_manifest(cfg, "synth", started, [news, tweets], extra={"synth": scfg.to_dict()})
    print(f"wrote {scfg.n_articles} articles to {news.parent}")


def cmd_build_graphs(cfg: RunConfig, args) -> None:
    started = _now()
    ds = _load_dataset(cfg)
    gdir = cfg.out_dir / "graphs"
    gdir.mkdir(parents=True, exist_ok=True)
    skipped = {}
    written = []
    for art in ds.articles:
        g = build_propagation_graph(art, ds.tweets.get(art.article_id, ()), cfg.window_seconds)
        e, n = gdir / f"{art.article_id}.edges", gdir / f"{art.article_id}.nodes.csv"
        write_graph(g, e, n)
        written += [e, n]
        if sum(g.skipped.values()):
            skipped[art.article_id] = g.skipped
    write_manifest(cfg, "build-graphs", started, written, extra={"skipped": skipped})
    print(f"built {len(ds.articles)} propagation graphs")


def cmd_features(cfg: RunConfig, args) -> None:
    require(cfg, "build-graphs", "graphs")
    started = _now()
    ds = _load_dataset(cfg)
    lex = _lexicon(cfg)
    ndir = cfg.out_dir / "features" / "nodes"
    ndir.mkdir(parents=True, exist_ok=True)
    graph_rows, written = [], []
    for art in ds.articles:
        g = build_propagation_graph(art, ds.tweets.get(art.article_id, ()), cfg.window_seconds)
        x = extract_node_features(g, lex)
        path = ndir / f"{art.article_id}.csv"
        write_feature_table([(str(i), row, art.label) for i, row in enumerate(x)], path, NODE_FEATURES)
        written.append(path)
        graph_rows.append((art.article_id, extract_graph_features(g), art.label))
    gpath = cfg.out_dir / "features" / "graph_features.csv"
    write_feature_table(graph_rows, gpath, GRAPH_FEATURES)
    write_manifest(cfg, "features", started, written + [gpath])
    print(f"wrote features for {len(graph_rows)} articles")


def cmd_embed_text(cfg: RunConfig, args) -> None:
    started = _now()
    out = cfg.out_dir / "embeddings.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    if cfg.embeddings:
        if not Path(cfg.embeddings).is_file():
            raise PipelineError(f"embedding table not found: {cfg.embeddings}")
        table = load_embedding_table(cfg.embeddings)
        source = cfg.embeddings
    else:
        ds = _load_dataset(cfg)
        corpus = Corpus(ds.ids, np.array([1 if a.is_fake else 0 for a in ds.articles], dtype=np.int64),
                        {}, {}, {}, {a.article_id: tokenize(a.text) for a in ds.articles})
        train_ids, _ = outer_split(corpus, cfg.split, cfg.seed)
        table = embed_corpus(corpus, train_ids, cfg.settings(), cfg.seed)
        source = "pvdbow"
    write_embedding_table(table, out)
    write_manifest(cfg, "embed-text", started, [out], extra={"embedding_source": source})
    print(f"wrote {len(table.entries)} {table.dim}-dim embeddings")


def _train_and_record(cfg: RunConfig, stage: str, name: str, corpus: Corpus, embeddings) -> None:
    started = _now()
    settings = cfg.settings()
    runs = make_runs(corpus, settings.split, cfg.seed)
    if not runs[0].test:
        raise PipelineError("train_test_ratio 1.0 leaves no test set")
    ckdir = cfg.out_dir / "checkpoints"
    pdir = cfg.out_dir / "predictions"
    ckdir.mkdir(parents=True, exist_ok=True)
    pdir.mkdir(parents=True, exist_ok=True)
    lines = ["run,article_id,fold,source,p_fake,p_real"]
    written, per_run = [], []
    for run in runs:
        ctx = RunContext(corpus, run, embeddings, settings, cfg.seed)
        pred = predict_model(ctx, name)
        lines += [f"{run.index},{row}" for row in pred.to_csv().splitlines()[1:]]
        per_run.append(evaluate_probs(corpus.label_of(pred.ids), pred.probs))
        written += _save_checkpoints(ctx, name, ckdir, run.index)
    ppath = pdir / f"{name}.csv"
    ppath.write_text("\n".join(lines) + "\n", encoding="utf-8")
    report = MetricsReport(per_run)
    write_manifest(cfg, stage, started, written + [ppath], metrics={name: report.to_dict()})
    print(format_table({name: report}), end="")


def _save_checkpoints(ctx: RunContext, name: str, ckdir: Path, run: int) -> list[Path]:
    out = []
    for key, model in sorted(ctx.models.items()):
        if key != name and name not in ("late_mean", "late_classifier"):
            continue
        stem = f"{name}-run{run}" if key == name else f"{name}-{key}-run{run}"
        if hasattr(model, "params"):
            path = ckdir / f"{stem}.ckpt"
            save_params(model.params, path)
        elif hasattr(model, "linear"):
            path = ckdir / f"{stem}.json"
            path.write_text(json.dumps({"sources": model.sources, "model": model.linear.to_dict()}, sort_keys=True)
                            + "\n", encoding="utf-8")
        else:
            path = ckdir / f"{stem}.json"
            path.write_text(baselines.dump_model(model) + "\n", encoding="utf-8")
        out.append(path)
    return out


def cmd_train(cfg: RunConfig, args) -> None:
    require(cfg, "features", "features")
    corpus = load_corpus_artifacts(cfg)
    if args.model == "gnn":
        _train_and_record(cfg, "train-gnn", "gnn", corpus, None)
    elif args.model == "baseline":
        _train_and_record(cfg, "train-baseline", f"baseline_{cfg.baseline}", corpus, None)
    else:
        _train_and_record(cfg, "train-text", "text", corpus, _embeddings(cfg, corpus))


def cmd_fuse(cfg: RunConfig, args) -> None:
    require(cfg, "features", "features")
    corpus = load_corpus_artifacts(cfg)
    mode = args.mode.replace("-", "_")
    _train_and_record(cfg, f"fuse-{args.mode}", mode, corpus, _embeddings(cfg, corpus))


def _read_predictions(path: Path) -> dict[int, PredictionSet]:
    rows = [line.split(",") for line in path.read_text(encoding="utf-8").strip().splitlines()[1:]]
    out = {}
    for run in sorted({int(r[0]) for r in rows}):
        body = "article_id,fold,source,p_fake,p_real\n" + "\n".join(",".join(r[1:]) for r in rows if int(r[0]) == run)
        out[run] = PredictionSet.from_csv(body)
    return out


def cmd_evaluate(cfg: RunConfig, args) -> None:
    require(cfg, "features", "features")
    started = _now()
    pdir = cfg.out_dir / "predictions"
    files = sorted(pdir.glob("*.csv")) if pdir.is_dir() else []
    if not files:
        raise PipelineError("missing predictions artifact (run `train` or `fuse` first)")
    _, rows = read_feature_table(cfg.out_dir / "features" / "graph_features.csv")
    label = {r[0]: 1 if r[2] == "fake" else 0 for r in rows}
    reports = {}
    for f in files:
        runs = _read_predictions(f)
        reports[f.stem] = MetricsReport([evaluate_probs([label[a] for a in p.ids], p.probs)
                                         for _, p in sorted(runs.items())])
    jpath, tpath = cfg.out_dir / "evaluation.json", cfg.out_dir / "evaluation.txt"
    jpath.write_text(reports_to_json(reports), encoding="utf-8")
    tpath.write_text(format_table(reports), encoding="utf-8")
    write_manifest(cfg, "evaluate", started, [jpath, tpath],
                   metrics={k: v.to_dict() for k, v in sorted(reports.items())})
    print(tpath.read_text(encoding="utf-8"), end="")


def cmd_report(cfg: RunConfig, args) -> None:
    """Tables rebuilt from the manifests alone; timestamps are left out so the
    report is reproducible."""
    mdir = cfg.out_dir / "manifests"
    manifests = [json.loads(p.read_text(encoding="utf-8")) for p in sorted(mdir.glob("*.json"))] if mdir.is_dir() else []
    manifests = [m for m in manifests if m.get("stage") != "report"]
    if not manifests:
        raise PipelineError("no manifests found; nothing to report")
    started = _now()
    metrics: dict[str, dict] = {}
    stages = []
    for m in manifests:
        config = {k: v for k, v in m["config"].items() if k != "out"}  # location is not part of the experiment
        stages.append({"stage": m["stage"], "seed": m["seed"], "config": config, "versions": m["versions"],
                       "artifacts": m["artifacts"]})
        if m["stage"] != "evaluate":
            metrics.update(m.get("metrics", {}))
    reports = {k: MetricsReport(v["runs"]) for k, v in metrics.items()}
    jpath, tpath = cfg.out_dir / "report.json", cfg.out_dir / "report.txt"
    jpath.write_text(json.dumps({"stages": stages, "metrics": {k: reports[k].to_dict() for k in sorted(reports)}},
                                indent=2, sort_keys=True) + "\n", encoding="utf-8")
    text = format_table(reports) if reports else "no model metrics recorded\n"
    tpath.write_text(text, encoding="utf-8")
    write_manifest(cfg, "report", started, [jpath, tpath])
    print(text, end="")


# --- entry point ----------------------------------------------------------

COMMANDS = {
    "synth": cmd_synth,
    "build-graphs": cmd_build_graphs,
    "features": cmd_features,
    "embed-text": cmd_embed_text,
    "train": cmd_train,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--out", help="output directory (overrides [run] out)")
    common.add_argument("--filter-empty-text", action="store_true", help="drop articles without text")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="newsprop", description="Fake news detection from propagation graphs and text.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "train":
            p.add_argument("--model", choices=("gnn", "baseline", "text"), required=True)
        elif name == "fuse":
            p.add_argument("--mode", choices=("early", "late-mean", "late-classifier"), required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, args.seed, args.out, args.filter_empty_text)
        COMMANDS[args.command](cfg, args)
    except (PipelineError, DatasetError, CascadeError, FusionError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"newsprop {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
