import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newsprop import nn
from newsprop.gnn import (
    GnnConfig,
    GraphSample,
    adjacency_from_edges,
    gat_forward,
    gcn_forward,
    global_pool,
    gnn_logits,
    gnn_model_init,
    graphconv_forward,
    load_gnn_model,
    make_batch,
    normalize_adjacency,
    predict_gnn,
    train_gnn,
    union,
)
from newsprop.nn import ParamStore, Tensor, finite_difference_check

from helpers import dense_adjacency, dense_gat, dense_gcn, dense_graphconv, dense_pool, random_edges, random_tree_edges


def _coef_matrix(adj):
    return adj.matrix(adj.coef).toarray()


def test_normalization_two_nodes():
    m = _coef_matrix(normalize_adjacency(adjacency_from_edges(2, [(0, 1)])))
    assert np.allclose(m, 0.5)


def test_normalization_star():
    m = _coef_matrix(normalize_adjacency(adjacency_from_edges(3, [(0, 1), (0, 2)])))
    assert m[1, 0] == pytest.approx(0.408248, abs=1e-6)
    m = _coef_matrix(normalize_adjacency(adjacency_from_edges(4, [(0, 1), (0, 2), (0, 3)])))
    assert m[1, 0] == pytest.approx(1 / math.sqrt(4 * 2))
    assert m[1, 0] == pytest.approx(0.353553, abs=1e-6)
    assert m[0, 0] == pytest.approx(0.25) and m[1, 1] == pytest.approx(0.5)


def test_normalization_isolated_node_and_twice():
    norm = normalize_adjacency(adjacency_from_edges(3, [(0, 1)]))
    assert _coef_matrix(norm)[2, 2] == 1.0
    with pytest.raises(ValueError):
        normalize_adjacency(norm)


def test_adjacency_validation():
    with pytest.raises(ValueError):
        adjacency_from_edges(2, [(0, 2)])
    with pytest.raises(ValueError):
        adjacency_from_edges(2, [(0, 1)], weights=[0.0])


def test_union_offsets():
    a = adjacency_from_edges(2, [(0, 1)])
    b = adjacency_from_edges(3, [(1, 2)])
    u, ptr = union([a, b])
    assert ptr.tolist() == [0, 2, 5]
    assert sorted(zip(u.src.tolist(), u.dst.tolist())) == [(0, 1), (1, 0), (3, 4), (4, 3)]


def _graph(seed, n=None, d=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 25))
    d = d or int(rng.integers(1, 6))
    edges = random_edges(rng, n, 0.25)
    return rng, n, edges, rng.normal(size=(n, d))


@pytest.mark.parametrize("seed", range(10))
def test_gcn_matches_dense(seed):
    rng, n, edges, x = _graph(seed)
    theta = rng.normal(size=(x.shape[1], 4))
    norm = normalize_adjacency(adjacency_from_edges(n, edges))
    out = gcn_forward(x, norm, theta).value
    assert np.max(np.abs(out - dense_gcn(x, dense_adjacency(n, edges), theta))) < 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_graphconv_matches_dense(seed):
    rng, n, edges, x = _graph(seed)
    t1, t2 = rng.normal(size=(x.shape[1], 3)), rng.normal(size=(x.shape[1], 3))
    w = rng.uniform(0.5, 2.0, size=len(edges))
    adj = adjacency_from_edges(n, edges, bidirectional=False, weights=w)
    a = np.zeros((n, n))
    for (u, v), wt in zip(edges, w):
        a[v, u] += wt
    out = graphconv_forward(x, adj, t1, t2).value
    assert np.allclose(out, dense_graphconv(x, a, t1, t2), atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_gat_matches_dense(seed):
    rng, n, edges, x = _graph(seed)
    theta, att = rng.normal(size=(x.shape[1], 3)), rng.normal(size=(6, 1))
    out, (alpha, src, dst) = gat_forward(x, adjacency_from_edges(n, edges), theta, att, 0.2, return_attention=True)
    ref, ref_alpha = dense_gat(x, dense_adjacency(n, edges), theta, att, 0.2)
    assert np.allclose(out.value, ref, atol=1e-10)
    assert np.allclose(alpha, ref_alpha[dst, src], atol=1e-12)
    # attention of each target sums to one and is non-negative
    assert np.allclose(np.bincount(dst, weights=alpha, minlength=n), 1.0)
    assert np.all(alpha >= 0)


def test_gat_isolated_node_attends_to_itself():
    x = np.array([[1.0, 2.0], [3.0, -1.0]])
    theta = np.eye(2)
    out, (alpha, src, dst) = gat_forward(x, adjacency_from_edges(2, []), theta, np.ones((4, 1)),
                                         return_attention=True)
    assert alpha.tolist() == [1.0, 1.0]
    assert np.allclose(out.value, x)


def test_gat_zero_attention_is_uniform():
    n, edges = 4, [(0, 1), (0, 2), (0, 3)]
    x = np.random.default_rng(0).normal(size=(n, 2))
    _, (alpha, src, dst) = gat_forward(x, adjacency_from_edges(n, edges), np.eye(2), np.zeros((4, 1)),
                                       return_attention=True)
    assert np.allclose(alpha[dst == 0], 0.25)
    assert np.allclose(alpha[dst == 1], 0.5)


def test_layer_shape_errors():
    adj = adjacency_from_edges(3, [(0, 1)])
    with pytest.raises(ValueError):
        gcn_forward(np.ones((3, 2)), adj, np.ones((2, 2)))          # raw adjacency
    with pytest.raises(ValueError):
        graphconv_forward(np.ones((2, 2)), adj, np.ones((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        gat_forward(np.ones((3, 2)), adj, np.ones((2, 2)), np.ones((3, 1)))


@pytest.mark.parametrize("mode", ["sum", "mean", "max"])
def test_pooling_matches_dense(mode):
    h = np.random.default_rng(1).normal(size=(7, 3))
    ptr = np.array([0, 3, 7])
    out = global_pool(h, mode, ptr).value
    assert np.allclose(out[0], dense_pool(h[:3], mode)) and np.allclose(out[1], dense_pool(h[3:], mode))


def test_pooling_examples():
    h = np.array([[1.0, 4.0], [3.0, 0.0]])
    assert global_pool(h, "sum").value.tolist() == [[4.0, 4.0]]
    assert global_pool(h, "mean").value.tolist() == [[2.0, 2.0]]
    assert global_pool(h, "max").value.tolist() == [[3.0, 4.0]]


def _layer(kind, x, adj, p):
    if kind == "gcn":
        return gcn_forward(x, normalize_adjacency(adj), p["theta"])
    if kind == "graphconv":
        return graphconv_forward(x, adj, p["theta1"], p["theta2"])
    return gat_forward(x, adj, p["theta"], p["att"])


def _layer_params(rng, d, h):
    p = ParamStore()
    p.add("theta", rng.normal(size=(d, h)))
    p.add("theta1", rng.normal(size=(d, h)))
    p.add("theta2", rng.normal(size=(d, h)))
    p.add("att", rng.normal(size=(2 * h, 1)))
    return p


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["gcn", "graphconv", "gat"]), st.sampled_from(["sum", "mean", "max"]))
def test_permutation_invariance(seed, kind, mode):
    rng, n, edges, x = _graph(seed)
    p = _layer_params(rng, x.shape[1], 3)
    adj = adjacency_from_edges(n, edges)
    perm = rng.permutation(n)
    out = _layer(kind, x, adj, p).value
    x_perm = np.empty_like(x)
    x_perm[perm] = x
    out_perm = _layer(kind, x_perm, adj.permuted(perm), p).value
    # node-level equivariance and graph-level invariance
    assert np.max(np.abs(out_perm[perm] - out)) < 1e-9
    assert np.max(np.abs(global_pool(out_perm, mode).value - global_pool(out, mode).value)) < 1e-9


def _hops(n, edges, start):
    dist = {start: 0}
    frontier = [start]
    nbrs = {i: set() for i in range(n)}
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    while frontier:
        nxt = []
        for u in frontier:
            for v in nbrs[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


@pytest.mark.parametrize("kind", ["gcn", "graphconv", "gat"])
@pytest.mark.parametrize("k", [1, 2])
def test_k_hop_locality(kind, k):
    rng = np.random.default_rng(k)
    n = 12
    edges = random_tree_edges(rng, n)
    adj = adjacency_from_edges(n, edges)
    x = rng.normal(size=(n, 3))
    p = _layer_params(rng, 3, 3)

    def stack(z):
        h = Tensor(z)
        for _ in range(k):
            h = _layer(kind, h, adj, p)
        return h.value

    base = stack(x)
    dist = _hops(n, edges, 0)
    far = [v for v in range(n) if dist[v] > k]
    assert far
    x2 = x.copy()
    x2[far] += rng.normal(size=(len(far), 3))
    assert np.array_equal(stack(x2)[0], base[0])


def _samples(seed, count, d=3):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(1, 9))
        label = i % 2
        x = rng.normal(size=(n, d)) + (1.5 if label else -1.5)
        out.append(GraphSample(adjacency_from_edges(n, random_tree_edges(rng, n)), x, label, f"a{i}"))
    return out


@pytest.mark.parametrize("kind", ["gcn", "graphconv", "gat"])
@pytest.mark.parametrize("pooling", ["sum", "mean", "max"])
def test_model_gradients(kind, pooling):
    cfg = GnnConfig(layer_kind=kind, num_layers=2, hidden_dim=4, head_dim=3, pooling=pooling)
    model = gnn_model_init(cfg, 3, seed=0)
    batch = make_batch(_samples(0, 4))

    def loss(params):
        m = load_gnn_model(params, cfg)
        logits, _ = gnn_logits(m, batch)
        return nn.cross_entropy(logits, batch.labels, (1.0, 2.0))

    assert finite_difference_check(loss, model.params).max_rel_error < 1e-4


def test_predict_shapes_and_probabilities():
    model = gnn_model_init(GnnConfig(), 3, seed=0)
    samples = _samples(1, 5)
    probs, pen = predict_gnn(model, samples)
    assert probs.shape == (5, 2) and pen.shape == (5, 32)
    assert np.allclose(probs.sum(axis=1), 1.0)
    single, single_pen = predict_gnn(model, samples[0])
    assert np.allclose(single, probs[0]) and single_pen.shape == (32,)


def test_zero_head_gives_even_odds():
    model = gnn_model_init(GnnConfig(), 3, seed=0)
    model.params["gnn.out.w"].value[:] = 0.0
    probs, _ = predict_gnn(model, _samples(2, 3))
    assert np.allclose(probs, 0.5)


def test_default_architecture():
    model = gnn_model_init(GnnConfig(), 12, seed=0)
    names = model.params.names()
    assert sum(n.endswith("theta1") for n in names) == 4
    assert model.params["gnn.conv3.theta1"].value.shape == (64, 64)
    assert model.params["gnn.head.w1"].value.shape == (64, 32)
    assert model.params["gnn.out.w"].value.shape == (32, 2)


def test_wrong_feature_count():
    model = gnn_model_init(GnnConfig(), 4, seed=0)
    with pytest.raises(ValueError, match="node features"):
        predict_gnn(model, _samples(0, 2))


@pytest.mark.parametrize("kind", ["gcn", "graphconv", "gat"])
def test_training_learns_and_is_deterministic(kind):
    cfg = GnnConfig(layer_kind=kind, num_layers=2, hidden_dim=8, head_dim=4, epochs=15, lr=0.01, batch_size=8)
    train, test = _samples(3, 40), _samples(4, 20)
    a = train_gnn(train, cfg, seed=5)
    b = train_gnn(train, cfg, seed=5)
    assert a.fit_result.train_loss == b.fit_result.train_loss
    for name, t in a.params.items():
        assert t.value.tobytes() == b.params[name].value.tobytes()
    probs, _ = predict_gnn(a, test)
    acc = np.mean((probs[:, 1] > 0.5) == np.array([s.label for s in test]))
    assert acc >= 0.9


def test_config_validation():
    with pytest.raises(ValueError):
        GnnConfig(layer_kind="sage")
    with pytest.raises(ValueError):
        GnnConfig(pooling="median")
    with pytest.raises(ValueError):
        train_gnn([])


def test_gcn_examples():
    x = np.array([[1.0, 2.0], [3.0, 6.0], [5.0, -1.0]])
    out = gcn_forward(x, normalize_adjacency(adjacency_from_edges(3, [(0, 1)])), np.eye(2)).value
    assert np.allclose(out[:2], [[2.0, 4.0], [2.0, 4.0]])
    assert np.allclose(out[2], x[2])
    zero = gcn_forward(x, normalize_adjacency(adjacency_from_edges(3, [(0, 1)])), np.zeros((2, 2))).value
    assert not zero.any()


def test_graphconv_examples():
    rng = np.random.default_rng(0)
    t1, t2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    x = rng.normal(size=(3, 2))
    out = graphconv_forward(x, adjacency_from_edges(3, []), t1, t2).value
    assert np.allclose(out, x @ t1)
    out = graphconv_forward(x, adjacency_from_edges(3, [(0, 1), (0, 2)]), np.zeros((2, 2)), t2).value
    assert np.allclose(out[0], (x[1] + x[2]) @ t2)
    out = graphconv_forward(np.array([[1.0, 0.0], [0.0, 1.0]]), adjacency_from_edges(2, [(0, 1)]),
                            np.eye(2), np.eye(2)).value
    assert out[0].tolist() == [1.0, 1.0]


def test_gat_identical_neighbours_get_equal_attention():
    x = np.array([[0.3, -1.0], [2.0, 1.0], [2.0, 1.0]])
    rng = np.random.default_rng(2)
    _, (alpha, src, dst) = gat_forward(x, adjacency_from_edges(3, [(0, 1), (0, 2)]), rng.normal(size=(2, 3)),
                                       rng.normal(size=(6, 1)), return_attention=True)
    a01 = alpha[(dst == 0) & (src == 1)][0]
    a02 = alpha[(dst == 0) & (src == 2)][0]
    assert a01 == a02


def test_pool_single_row_and_empty():
    row = np.array([[1.5, -2.0]])
    for mode in ("sum", "mean", "max"):
        assert global_pool(row, mode).value.tolist() == row.tolist()
    with pytest.raises(ValueError):
        global_pool(np.zeros((0, 2)), "mean")


def test_best_epoch_not_worse_than_first():
    cfg = GnnConfig(num_layers=1, hidden_dim=4, head_dim=4, epochs=6, lr=0.05, batch_size=8)
    train = _samples(6, 16)
    model = train_gnn(train, cfg, seed=1, val=train)
    res = model.fit_result
    assert len(res.val_loss) == 6
    assert res.val_loss[res.best_epoch] <= res.val_loss[0]
