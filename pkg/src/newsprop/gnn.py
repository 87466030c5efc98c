"""Graph convolutions (GCN, GraphConv, GAT), readout and graph classifier.

Node embeddings are row vectors: a layer maps ``X[n, d_in]`` to
``X'[n, d_out]``. Several graphs are processed together as one disjoint
union; ``ptr`` holds the node offsets of each graph inside the union.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import nn
from .cascade import PropagationGraph
from .nn import ParamStore, Tensor, TrainSettings

LAYER_KINDS = ("gcn", "graphconv", "gat")
POOLING = ("sum", "mean", "max")


@dataclass
class AdjacencyStructure:
    """Directed edges ``src[k] -> dst[k]`` with weights ``weight[k]``."""

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    self_loops_added: bool = False
    coef: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if not (len(self.src) == len(self.dst) == len(self.weight)):
            raise ValueError("edge arrays differ in length")
        if len(self.src) and (min(self.src.min(), self.dst.min()) < 0
                              or max(self.src.max(), self.dst.max()) >= self.num_nodes):
            raise ValueError("edge index out of range")
        if np.any(self.weight <= 0):
            raise ValueError("edge weights must be positive")

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def matrix(self, values: np.ndarray | None = None) -> sp.csr_matrix:
        """Sparse ``M[dst, src] = values`` (edge weights by default)."""
        values = self.weight if values is None else values
        return sp.csr_matrix((values, (self.dst, self.src)), shape=(self.num_nodes, self.num_nodes))

    def permuted(self, perm: np.ndarray) -> "AdjacencyStructure":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return AdjacencyStructure(self.num_nodes, perm[self.src], perm[self.dst], self.weight.copy(),
                                  self.self_loops_added, None if self.coef is None else self.coef.copy())


def adjacency_from_edges(num_nodes: int, edges: Sequence[tuple[int, int]], bidirectional: bool = True,
                         weights: Sequence[float] | None = None) -> AdjacencyStructure:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.ones(len(edges)) if weights is None else np.asarray(weights, dtype=np.float64)
    src, dst = edges[:, 0], edges[:, 1]
    if bidirectional:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        w = np.concatenate([w, w])
    return AdjacencyStructure(num_nodes, src, dst, w)


def adjacency_from_graph(graph: PropagationGraph) -> AdjacencyStructure:
    """Parent/child edges in both directions, unit weight."""
    return adjacency_from_edges(graph.num_nodes, graph.edges, bidirectional=True)


def normalize_adjacency(adj: AdjacencyStructure) -> AdjacencyStructure:
    """Add unit self-loops and set ``coef = e_ji / sqrt(d_j d_i)`` with
    ``d_i = 1 + sum_j e_ji``."""
    if adj.self_loops_added:
        raise ValueError("adjacency already has self-loops")
    n = adj.num_nodes
    loops = np.arange(n)
    src = np.concatenate([adj.src, loops])
    dst = np.concatenate([adj.dst, loops])
    w = np.concatenate([adj.weight, np.ones(n)])
    deg = np.bincount(dst, weights=w, minlength=n)
    coef = w / np.sqrt(deg[src] * deg[dst])
    return AdjacencyStructure(n, src, dst, w, True, coef)


def union(adjs: Sequence[AdjacencyStructure]) -> tuple[AdjacencyStructure, np.ndarray]:
    """Disjoint union of graphs; returns the combined structure and node offsets."""
    sizes = np.array([a.num_nodes for a in adjs], dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(sizes)])
    shift = [np.full(a.num_edges, off) for a, off in zip(adjs, ptr[:-1])]
    src = np.concatenate([a.src for a in adjs] + [np.zeros(0, np.int64)]) + np.concatenate(shift + [np.zeros(0, np.int64)])
    dst = np.concatenate([a.dst for a in adjs] + [np.zeros(0, np.int64)]) + np.concatenate(shift + [np.zeros(0, np.int64)])
    w = np.concatenate([a.weight for a in adjs] + [np.zeros(0)])
    loops = {a.self_loops_added for a in adjs}
    if len(loops) > 1:
        raise ValueError("cannot mix normalised and raw adjacency")
    coef = None
    if adjs and adjs[0].coef is not None:
        coef = np.concatenate([a.coef for a in adjs])
    return AdjacencyStructure(int(ptr[-1]), src, dst, w, loops.pop() if loops else False, coef), ptr


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_dims(x: Tensor, adj: AdjacencyStructure, theta: Tensor) -> None:
    if x.value.shape[0] != adj.num_nodes:
        raise ValueError(f"{x.value.shape[0]} feature rows for {adj.num_nodes} nodes")
    if x.value.shape[1] != theta.value.shape[0]:
        raise ValueError(f"features have {x.value.shape[1]} columns, weight expects {theta.value.shape[0]}")


def gcn_forward(x, adj: AdjacencyStructure, theta) -> Tensor:
    """x'_i = Theta^T sum_{j in N(i) + i} coef_ji x_j on a normalised adjacency."""
    if adj.coef is None:
        raise ValueError("gcn_forward needs a normalised adjacency")
    x, theta = _as_tensor(x), _as_tensor(theta)
    _check_dims(x, adj, theta)
    m = adj._cache.get("gcn")
    if m is None:
        m = adj._cache["gcn"] = adj.matrix(adj.coef)
    return nn.spmm(m, nn.matmul(x, theta))


def graphconv_forward(x, adj: AdjacencyStructure, theta1, theta2) -> Tensor:
    """x'_i = Theta1 x_i + Theta2 sum_{j in N(i)} e_ji x_j on a raw adjacency."""
    if adj.self_loops_added:
        raise ValueError("graphconv_forward needs an adjacency without self-loops")
    x, theta1, theta2 = _as_tensor(x), _as_tensor(theta1), _as_tensor(theta2)
    _check_dims(x, adj, theta1)
    _check_dims(x, adj, theta2)
    m = adj._cache.get("graphconv")
    if m is None:
        m = adj._cache["graphconv"] = adj.matrix()
    return nn.add(nn.matmul(x, theta1), nn.spmm(m, nn.matmul(x, theta2)))


def _attention_edges(adj: AdjacencyStructure):
    cached = adj._cache.get("gat")
    if cached is None:
        n = adj.num_nodes
        src = np.concatenate([adj.src, np.arange(n)])
        dst = np.concatenate([adj.dst, np.arange(n)])
        order = np.lexsort((src, dst))
        src, dst = src[order], dst[order]
        ptr = np.searchsorted(dst, np.arange(n + 1))
        cached = adj._cache["gat"] = (src, dst, ptr)
    return cached


def gat_forward(x, adj: AdjacencyStructure, theta, att, slope: float = 0.2, return_attention: bool = False):
    """Single-head graph attention.

    logit_ij = LeakyReLU(att^T [Theta x_i || Theta x_j]) for j in N(i) + i,
    alpha_i. = softmax of the logits, x'_i = sum_j alpha_ij Theta x_j.
    With ``return_attention`` also returns ``(alpha, src, dst)`` per edge.
    """
    if adj.self_loops_added:
        raise ValueError("gat_forward needs an adjacency without self-loops")
    x, theta, att = _as_tensor(x), _as_tensor(theta), _as_tensor(att)
    _check_dims(x, adj, theta)
    h_dim = theta.value.shape[1]
    if att.value.shape != (2 * h_dim, 1):
        raise ValueError(f"attention vector must have shape ({2 * h_dim}, 1)")
    src, dst, ptr = _attention_edges(adj)
    h = nn.matmul(x, theta)
    pair = nn.concat_cols(nn.gather_rows(h, dst), nn.gather_rows(h, src))
    logits = nn.leaky_relu(nn.matmul(pair, att), slope)
    alpha = nn.segment_softmax(logits, ptr)
    out = nn.edge_aggregate(alpha, h, src, dst, adj.num_nodes)
    if return_attention:
        return out, (alpha.value[:, 0], src, dst)
    return out


def global_pool(h, mode: str = "mean", ptr: np.ndarray | None = None) -> Tensor:
    """Column-wise sum/mean/max over the nodes of each graph."""
    h = _as_tensor(h)
    if ptr is None:
        ptr = np.array([0, h.value.shape[0]])
    return nn.segment_pool(h, np.asarray(ptr), mode)


# --- model ----------------------------------------------------------------

@dataclass
class GnnConfig:
    layer_kind: str = "graphconv"
    num_layers: int = 4
    hidden_dim: int = 64
    pooling: str = "mean"
    head_dim: int = 32
    slope: float = 0.2
    epochs: int = 50
    lr: float = 0.001
    batch_size: int = 64
    class_weights: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.layer_kind not in LAYER_KINDS:
            raise ValueError(f"layer_kind must be one of {LAYER_KINDS}")
        if self.pooling not in POOLING:
            raise ValueError(f"pooling must be one of {POOLING}")
        if self.num_layers < 1 or self.hidden_dim < 1 or self.head_dim < 1:
            raise ValueError("layer count and dimensions must be positive")
        self.class_weights = tuple(float(w) for w in self.class_weights)

    @property
    def settings(self) -> TrainSettings:
        return TrainSettings(self.epochs, self.lr, self.batch_size, self.class_weights)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class GraphSample:
    adj: AdjacencyStructure  # raw, bidirectional
    x: np.ndarray            # scaled node features
    label: int = 0           # 1 = fake
    article_id: str = ""

    def __post_init__(self):
        self.norm = normalize_adjacency(self.adj)


@dataclass
class GraphBatch:
    x: np.ndarray
    adj: AdjacencyStructure
    norm: AdjacencyStructure
    ptr: np.ndarray
    labels: np.ndarray


def make_batch(samples: Sequence[GraphSample]) -> GraphBatch:
    if not samples:
        raise ValueError("empty batch")
    adj, ptr = union([s.adj for s in samples])
    norm, _ = union([s.norm for s in samples])
    return GraphBatch(np.vstack([s.x for s in samples]), adj, norm, ptr,
                      np.array([s.label for s in samples], dtype=np.int64))


def init_gnn_params(params: ParamStore, config: GnnConfig, in_dim: int, rng: np.random.Generator,
                    prefix: str = "gnn.") -> None:
    d = in_dim
    for l in range(config.num_layers):
        h = config.hidden_dim
        p = f"{prefix}conv{l}."
        if config.layer_kind == "gcn":
            params.add(p + "theta", nn.glorot_uniform(rng, d, h))
        elif config.layer_kind == "graphconv":
            params.add(p + "theta1", nn.glorot_uniform(rng, d, h))
            params.add(p + "theta2", nn.glorot_uniform(rng, d, h))
        else:
            params.add(p + "theta", nn.glorot_uniform(rng, d, h))
            params.add(p + "att", nn.glorot_uniform(rng, 2 * h, 1))
        d = h
    params.add(prefix + "head.w1", nn.glorot_uniform(rng, d, config.head_dim))
    params.add(prefix + "head.b1", np.zeros((1, config.head_dim)))


def gnn_embed(params: ParamStore, config: GnnConfig, batch: GraphBatch, prefix: str = "gnn.") -> Tensor:
    """Convolutions, readout and the hidden head layer: one row of ``head_dim`` per graph."""
    h: Tensor = Tensor(batch.x)
    for l in range(config.num_layers):
        p = f"{prefix}conv{l}."
        if config.layer_kind == "gcn":
            h = gcn_forward(h, batch.norm, params[p + "theta"])
        elif config.layer_kind == "graphconv":
            h = graphconv_forward(h, batch.adj, params[p + "theta1"], params[p + "theta2"])
        else:
            h = gat_forward(h, batch.adj, params[p + "theta"], params[p + "att"], config.slope)
        if l < config.num_layers - 1:
            h = nn.relu(h)
    pooled = global_pool(h, config.pooling, batch.ptr)
    return nn.relu(nn.affine(pooled, params[prefix + "head.w1"], params[prefix + "head.b1"]))


@dataclass
class GnnModel:
    config: GnnConfig
    params: ParamStore
    in_dim: int
    fit_result: nn.FitResult | None = None


def gnn_model_init(config: GnnConfig, in_dim: int, seed: int) -> GnnModel:
    rng = np.random.default_rng(seed)
    params = ParamStore()
    init_gnn_params(params, config, in_dim, rng)
    params.add("gnn.out.w", nn.glorot_uniform(rng, config.head_dim, 2))
    params.add("gnn.out.b", np.zeros((1, 2)))
    return GnnModel(config, params, in_dim)


def gnn_logits(model: GnnModel, batch: GraphBatch) -> tuple[Tensor, Tensor]:
    if batch.x.shape[1] != model.in_dim:
        raise ValueError(f"model expects {model.in_dim} node features, got {batch.x.shape[1]}")
    pen = gnn_embed(model.params, model.config, batch)
    return nn.affine(pen, model.params["gnn.out.w"], model.params["gnn.out.b"]), pen


def _batched(samples: Sequence[GraphSample], size: int):
    for start in range(0, len(samples), size):
        yield make_batch(samples[start:start + size])


def mean_loss(logits_fn, samples: Sequence[GraphSample], class_weights, batch_size: int = 256) -> float:
    """Class-weighted mean cross-entropy over all samples, evaluated in chunks."""
    num = den = 0.0
    cw = np.asarray(class_weights, dtype=np.float64)
    for batch in _batched(samples, batch_size):
        logits, _ = logits_fn(batch)
        loss, _ = nn.softmax_cross_entropy(logits.value, batch.labels, class_weights)
        w = cw[batch.labels].sum()
        num += loss * w
        den += w
    return num / den


def train_gnn(train: Sequence[GraphSample], config: GnnConfig | None = None, seed: int = 0,
              val: Sequence[GraphSample] | None = None) -> GnnModel:
    """Adam on the weighted cross-entropy; keeps the lowest-validation-loss epoch."""
    config = config or GnnConfig()
    train = list(train)
    if not train:
        raise ValueError("empty training set")
    val = train if val is None else list(val)
    model = gnn_model_init(config, train[0].x.shape[1], seed)
    cw = config.class_weights

    def batch_loss(idx):
        batch = make_batch([train[i] for i in idx])
        logits, _ = gnn_logits(model, batch)
        return nn.cross_entropy(logits, batch.labels, cw)

    model.fit_result = nn.fit(model.params, batch_loss, len(train),
                              lambda: mean_loss(lambda b: gnn_logits(model, b), val, cw),
                              epochs=config.epochs, lr=config.lr, batch_size=config.batch_size, seed=seed)
    return model


def predict_gnn(model: GnnModel, samples) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities ``[p_real, p_fake]`` and the ``head_dim`` representation.

    Accepts one GraphSample or a sequence of them.
    """
    single = isinstance(samples, GraphSample)
    samples = [samples] if single else list(samples)
    probs, pens = [], []
    for batch in _batched(samples, 256):
        logits, pen = gnn_logits(model, batch)
        probs.append(nn.softmax(logits.value))
        pens.append(pen.value)
    probs, pens = np.vstack(probs), np.vstack(pens)
    return (probs[0], pens[0]) if single else (probs, pens)


def load_gnn_model(params: ParamStore, config: GnnConfig) -> GnnModel:
    first = "gnn.conv0.theta1" if config.layer_kind == "graphconv" else "gnn.conv0.theta"
    return GnnModel(config, params, params[first].value.shape[0])
