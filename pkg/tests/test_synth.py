import json
from dataclasses import replace

import numpy as np
import pytest

from newsprop.cascade import build_propagation_graph, check_tree
from newsprop.dataset_io import load_dataset
from newsprop.featurize import extract_graph_features
from newsprop.synth import (
    FAKE_DEFAULT,
    REAL_DEFAULT,
    SynthConfig,
    generate,
    generate_cascade,
    generate_dataset,
    load_synth_config,
    word_distributions,
    write_synthetic,
)


def test_requested_class_counts():
    ds = generate(SynthConfig(n_articles=100, fake_fraction=0.4, seed=3))
    labels = [a.label for a in ds.articles]
    assert labels.count("fake") == 40 and labels.count("real") == 60


def test_same_seed_same_bytes():
    cfg = SynthConfig(n_articles=40, seed=11)
    assert generate_dataset(cfg) == generate_dataset(cfg)
    assert generate_dataset(cfg) != generate_dataset(replace(cfg, seed=12))


def test_no_branching_means_no_retweets():
    params = replace(FAKE_DEFAULT, branching_mean=0.0, tweets_mean=20.0)
    tweets = generate_cascade("fake", params, np.random.default_rng(0))
    assert tweets and not any(t.is_retweet for t in tweets)


def test_retweet_gap_mean():
    params = replace(REAL_DEFAULT, tweets_mean=40.0, branching_mean=0.9, retweet_delay=900.0)
    rng = np.random.default_rng(1)
    gaps = []
    while len(gaps) < 10_000:
        tweets, parents = generate_cascade("real", params, rng, max_nodes=400, return_parents=True)
        ts = {t.tweet_id: t.timestamp for t in tweets}
        gaps.extend(ts[c] - ts[p] for c, p in parents.items())
    assert abs(np.mean(gaps) / 900.0 - 1.0) < 0.10


def test_timestamps_follow_publication_and_parents():
    ds = generate(SynthConfig(n_articles=60, seed=2))
    for a in ds.articles:
        by_id = {t.tweet_id: t for t in ds.tweets[a.article_id]}
        for t in by_id.values():
            assert t.timestamp >= a.publish_time
            if t.is_retweet:
                assert by_id[t.declared_source_id].timestamp <= t.timestamp


def test_files_validate_and_build_clean_trees(tmp_path):
    cfg = SynthConfig(n_articles=80, seed=4)
    news, tweets = write_synthetic(cfg, tmp_path)
    ds = load_dataset(news, tweets)
    assert len(ds) == 80
    for aid in ds.ids:
        g = build_propagation_graph(aid, ds.tweets[aid])
        assert sum(g.skipped.values()) == 0
        assert check_tree(g) == []
        assert g.num_nodes == len(ds.tweets[aid]) + 1
    assert tweets.read_text() == generate_dataset(cfg)[1]


def test_cascade_size_cap():
    params = replace(FAKE_DEFAULT, tweets_mean=30.0, branching_mean=3.0)
    assert len(generate_cascade("fake", params, np.random.default_rng(0), max_nodes=50)) == 50


def test_zero_separation_has_no_graph_signal():
    """Per seed and feature, the class means differ by less than two pooled standard errors."""
    for seed in range(1, 6):
        ds = generate(SynthConfig(separation=0.0, seed=seed))
        rows = {True: [], False: []}
        for a in ds.articles:
            rows[a.is_fake].append(extract_graph_features(build_propagation_graph(a.article_id,
                                                                                  ds.tweets[a.article_id])))
        f, r = np.array(rows[True]), np.array(rows[False])
        diff = np.abs(f.mean(axis=0) - r.mean(axis=0))
        se = np.sqrt(f.var(axis=0, ddof=1) / len(f) + r.var(axis=0, ddof=1) / len(r))
        assert np.all(diff <= 2 * se), (seed, diff / np.where(se > 0, se, 1))


def test_zero_separation_collapses_parameters():
    cfg = SynthConfig(separation=0.0)
    assert cfg.class_params("fake") == cfg.class_params("real")
    d = word_distributions(cfg)
    assert np.array_equal(d["fake"], d["real"])
    d = word_distributions(SynthConfig())
    assert not np.allclose(d["fake"], d["real"]) and d["fake"].sum() == pytest.approx(1.0)


def test_modality_separations_are_independent():
    cfg = SynthConfig(graph_separation=0.0, text_separation=1.0)
    assert cfg.class_params("fake") == cfg.class_params("real")
    d = word_distributions(cfg)
    assert not np.allclose(d["fake"], d["real"])


def test_shipped_ini_matches_defaults(tmp_path):
    assert load_synth_config() == SynthConfig()
    p = tmp_path / "s.ini"
    p.write_text("[synth]\nn_articles = 50\nseparation = 0.5\n[synth.fake]\nbranching_mean = 0.1\n")
    cfg = load_synth_config(p, seed=9)
    assert (cfg.n_articles, cfg.separation, cfg.seed, cfg.fake.branching_mean) == (50, 0.5, 9, 0.1)
    p.write_text("[synth]\nbogus = 1\n")
    with pytest.raises(ValueError, match="bogus"):
        load_synth_config(p)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(fake_fraction=1.0)
    with pytest.raises(ValueError):
        SynthConfig(separation=1.5)
    with pytest.raises(ValueError):
        SynthConfig(fake=replace(FAKE_DEFAULT, retweet_delay=0.0))
    assert json.dumps(SynthConfig().to_dict())
