import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from newsprop import nn
from newsprop.fusion import (
    FusionError,
    PredictionSet,
    early_fusion_predict,
    early_fusion_train,
    fold_assignment,
    fused_forward,
    fused_model_init,
    late_fusion_mean,
    late_fusion_stack_train,
    oof_predictions,
    stack_predict,
)
from newsprop.gnn import GnnConfig, GraphSample, adjacency_from_edges, gnn_logits, gnn_model_init, make_batch
from newsprop.nn import finite_difference_check

from helpers import random_tree_edges


def _set(source, ids, p_fake, fold=None):
    p = np.asarray(p_fake, dtype=float)
    return PredictionSet(source, list(ids), np.column_stack([1 - p, p]), fold)


def test_mean_example():
    a = PredictionSet("gnn", ["x"], [[0.2, 0.8]])
    b = PredictionSet("text", ["x"], [[0.6, 0.4]])
    assert np.allclose(late_fusion_mean([a, b]).probs, [[0.4, 0.6]])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_mean_is_idempotent_commutative_and_on_simplex(p, q):
    ids = [f"a{i}" for i in range(len(p))]
    a, b = _set("a", ids, p), _set("b", ids[::-1], q[:len(p)])
    assert np.allclose(late_fusion_mean([a, a]).probs, a.probs)
    ab = late_fusion_mean([a, b]).aligned(ids)
    ba = late_fusion_mean([b, a]).aligned(ids)
    assert np.allclose(ab, ba)
    assert np.allclose(ab.sum(axis=1), 1.0)


def test_mean_coverage_mismatch():
    with pytest.raises(FusionError, match="coverage"):
        late_fusion_mean([_set("a", ["x", "y"], [0.1, 0.2]), _set("b", ["x", "z"], [0.1, 0.2])])


def test_prediction_set_validation():
    with pytest.raises(FusionError):
        PredictionSet("a", ["x"], [[0.7, 0.7]])
    with pytest.raises(FusionError):
        PredictionSet("a", ["x", "x"], [[0.5, 0.5], [0.5, 0.5]])


def test_csv_round_trip():
    s = _set("gnn", ["a", "b", "c"], [0.1, 1 / 3, 0.9], np.array([0, 1, 2]))
    text = s.to_csv()
    assert text.splitlines()[0] == "article_id,fold,source,p_fake,p_real"
    back = PredictionSet.from_csv(text)
    assert back.ids == s.ids and back.probs.tobytes() == s.probs.tobytes() and back.fold.tolist() == [0, 1, 2]


def _recording_trainer(log):
    def trainer(train_ids, train_labels, predict_ids):
        log.append((list(train_ids), list(predict_ids)))
        return np.tile([0.5, 0.5], (len(predict_ids), 1))
    return trainer


def test_oof_partition_nine_articles():
    ids = [f"a{i}" for i in range(9)]
    labels = [1, 0, 0] * 3
    log = []
    oof = oof_predictions(ids, labels, _recording_trainer(log), folds=3, seed=0)
    assert len(log) == 3
    assert all(len(tr) == 6 and len(pr) == 3 for tr, pr in log)
    predicted = [a for _, pr in log for a in pr]
    assert sorted(predicted) == sorted(ids)
    for tr, pr in log:
        assert not set(tr) & set(pr)
    assert oof.out_of_fold and sorted(set(oof.fold.tolist())) == [0, 1, 2]


@settings(max_examples=40, deadline=None)
@given(st.integers(6, 60), st.integers(0, 1000), st.integers(2, 5))
def test_fold_assignment_is_stratified_and_seeded(n, seed, folds):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, n)
    ids = [f"a{i}" for i in range(n)]
    fold = fold_assignment(ids, labels, folds, seed)
    assert np.array_equal(fold, fold_assignment(ids, labels, folds, seed))
    ratio = labels.mean()
    for k in range(folds):
        part = labels[fold == k]
        assert abs(part.sum() - ratio * len(part)) <= 1 + 1e-9


def test_oof_needs_both_classes():
    with pytest.raises(FusionError):
        oof_predictions(["a", "b", "c", "d"], [1, 0, 0, 0], _recording_trainer([]), folds=2)
    with pytest.raises(FusionError):
        fold_assignment(["a"], [1], 1, 0)


def test_stacking_perfect_plus_random():
    rng = np.random.default_rng(0)
    n = 80
    y = rng.integers(0, 2, n)
    ids = [f"a{i}" for i in range(n)]
    fold = np.arange(n) % 3
    perfect = _set("perfect", ids, np.where(y == 1, 0.9, 0.1), fold)
    noise = _set("noise", ids, rng.random(n), fold)
    meta = late_fusion_stack_train([perfect, noise], y)
    acc = np.mean((stack_predict(meta, [perfect, noise])[:, 1] > 0.5) == y)
    assert acc >= 1.0
    again = late_fusion_stack_train([perfect, noise], y)
    assert meta.linear.weights.tobytes() == again.linear.weights.tobytes()


def test_stacking_single_base_preserves_ranking():
    rng = np.random.default_rng(1)
    n = 50
    y = rng.integers(0, 2, n)
    p = np.clip(0.5 * y + 0.5 * rng.random(n), 0, 1)
    ids = [f"a{i}" for i in range(n)]
    base = _set("only", ids, p, np.arange(n) % 3)
    out = stack_predict(late_fusion_stack_train([base], y), [base])[:, 1]
    assert spearmanr(out, p).correlation == pytest.approx(1.0)


def test_stacking_rejects_in_fold_and_nan():
    ids = ["a", "b"]
    with pytest.raises(FusionError, match="out-of-fold"):
        late_fusion_stack_train([_set("full", ids, [0.2, 0.8])], [0, 1])
    with pytest.raises(FusionError, match="NaN"):
        late_fusion_stack_train(np.array([[np.nan, 1.0], [0.5, 0.5]]), [0, 1])


# --- early fusion -------------------------------------------------------------

def _samples(seed, count, d=3):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(1, 8))
        out.append(GraphSample(adjacency_from_edges(n, random_tree_edges(rng, n)),
                               rng.normal(size=(n, d)) + (1.0 if i % 2 else -1.0), i % 2, f"a{i}"))
    return out


def test_fused_representation_is_64():
    model = fused_model_init(GnnConfig(), 3, 16, seed=0)
    samples = _samples(0, 4)
    logits, rep = fused_forward(model, make_batch(samples), np.random.default_rng(0).normal(size=(4, 16)))
    assert rep.shape == (4, 64) and logits.shape == (4, 2)


def test_zero_text_branch_matches_gnn():
    cfg = GnnConfig(num_layers=2, hidden_dim=8)
    fused = fused_model_init(cfg, 3, 5, seed=1)
    fused.params["text.proj.w"].value[:] = 0.0
    gnn = gnn_model_init(cfg, 3, seed=99)
    for name, t in fused.params.items():
        if name.startswith("gnn."):
            gnn.params[name].value = t.value.copy()
    gnn.params["gnn.out.w"].value = fused.params["fuse.w"].value[:cfg.head_dim].copy()
    gnn.params["gnn.out.b"].value = fused.params["fuse.b"].value.copy()
    batch = make_batch(_samples(1, 6))
    text = np.random.default_rng(2).normal(size=(6, 5))
    a, _ = fused_forward(fused, batch, text)
    b, _ = gnn_logits(gnn, batch)
    assert np.max(np.abs(a.value - b.value)) < 1e-10


def test_early_fusion_gradients():
    cfg = GnnConfig(num_layers=2, hidden_dim=4, head_dim=3)
    model = fused_model_init(cfg, 3, 4, seed=0)
    batch = make_batch(_samples(2, 4))
    text = np.random.default_rng(3).normal(size=(4, 4))

    def loss(params):
        model.params = params
        logits, _ = fused_forward(model, batch, text)
        return nn.cross_entropy(logits, batch.labels, (1.0, 1.5))

    res = finite_difference_check(loss, model.params)
    assert res.max_rel_error < 1e-4
    assert "text.proj.w" in res.coverage and "gnn.conv0.theta1" in res.coverage
    assert "text.in_mean" not in res.coverage


def test_early_fusion_trains_deterministically():
    cfg = GnnConfig(num_layers=1, hidden_dim=8, head_dim=4, epochs=10, lr=0.01, batch_size=8)
    train, val = _samples(3, 24), _samples(4, 10)
    rng = np.random.default_rng(5)
    t_train, t_val = rng.normal(size=(24, 6)), rng.normal(size=(10, 6))
    a = early_fusion_train(train, t_train, val, t_val, cfg, seed=2)
    b = early_fusion_train(train, t_train, val, t_val, cfg, seed=2)
    pa, ra = early_fusion_predict(a, val, t_val)
    pb, _ = early_fusion_predict(b, val, t_val)
    assert pa.tobytes() == pb.tobytes() and ra.shape == (10, 8)
    assert np.allclose(pa.sum(axis=1), 1.0)
    assert np.mean((pa[:, 1] > 0.5) == np.array([s.label for s in val])) >= 0.8


def test_early_fusion_missing_modality():
    train = _samples(5, 4)
    with pytest.raises(FusionError, match="both"):
        early_fusion_train(train, np.zeros((3, 2)), train, np.zeros((4, 2)))
    model = fused_model_init(GnnConfig(), 3, 2, seed=0)
    with pytest.raises(FusionError):
        fused_forward(model, make_batch(train), np.zeros((3, 2)))
