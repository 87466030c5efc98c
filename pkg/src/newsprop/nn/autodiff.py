"""Reverse-mode differentiation over dense float64 arrays.

Only the primitives the graph, text and fusion models need are provided.
Every op checks its output for NaN/inf and raises ``FloatingPointError``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, value, parents: Sequence["Tensor"] = (), backward_fn: Callable | None = None,
                 requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = tuple(parents)
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward_fn) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError("non-finite value produced")
    if any(p.requires_grad for p in parents):
        return Tensor(value, parents, backward_fn, requires_grad=True)
    return Tensor(value)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
    if loss.value.size != 1:
        raise ValueError("backward() needs a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# --- primitives -----------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if av.shape[-1] != bv.shape[0]:
        raise ValueError(f"matmul shape mismatch {av.shape} @ {bv.shape}")
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    xv, wv = x.value, w.value
    if xv.shape[1] != wv.shape[0] or b.value.shape != (1, wv.shape[1]):
        raise ValueError(f"affine shape mismatch x{xv.shape} W{wv.shape} b{b.value.shape}")
    return _make(xv @ wv + b.value, (x, w, b),
                 lambda g: (g @ wv.T, xv.T @ g, g.sum(axis=0, keepdims=True)))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise ValueError(f"add shape mismatch {a.value.shape} vs {b.value.shape}")
    return _make(a.value + b.value, (a, b), lambda g: (g, g))


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    return _make(x.value * mask, (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.value > 0, 1.0, slope)
    return _make(x.value * scale, (x,), lambda g: (g * scale,))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    k = a.value.shape[1]
    return _make(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    n = x.value.shape[0]

    def bw(g):
        out = np.zeros((n,) + g.shape[1:])
        np.add.at(out, index, g)
        return (out,)

    return _make(x.value[index], (x,), bw)


def spmm(matrix: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times a dense tensor."""
    if matrix.shape[1] != x.value.shape[0]:
        raise ValueError(f"spmm shape mismatch {matrix.shape} @ {x.value.shape}")
    mt = matrix.T.tocsr()
    return _make(matrix @ x.value, (x,), lambda g: (mt @ g,))


def segment_softmax(scores: Tensor, ptr: np.ndarray) -> Tensor:
    """Softmax of an (E, 1) column within contiguous segments ``ptr[k]:ptr[k+1]``.

    Every segment must be non-empty.
    """
    e = scores.value[:, 0]
    starts = ptr[:-1]
    sizes = np.diff(ptr)
    if np.any(sizes <= 0):
        raise ValueError("segment_softmax needs non-empty segments")
    seg_max = np.repeat(np.maximum.reduceat(e, starts), sizes)
    ex = np.exp(e - seg_max)
    alpha = ex / np.repeat(np.add.reduceat(ex, starts), sizes)

    def bw(g):
        ga = g[:, 0]
        dot = np.repeat(np.add.reduceat(alpha * ga, starts), sizes)
        return ((alpha * (ga - dot))[:, None],)

    return _make(alpha[:, None], (scores,), bw)


def edge_aggregate(weights: Tensor, x: Tensor, src: np.ndarray, dst: np.ndarray, n_out: int) -> Tensor:
    """out[i] = sum over edges e with dst[e] == i of weights[e] * x[src[e]]."""
    w = weights.value[:, 0]
    xv = x.value
    m = sp.csr_matrix((w, (dst, src)), shape=(n_out, xv.shape[0]))

    def bw(g):
        gw = np.einsum("ij,ij->i", g[dst], xv[src])[:, None]
        return (gw, m.T @ g)

    return _make(m @ xv, (weights, x), bw)


def segment_pool(x: Tensor, ptr: np.ndarray, mode: str = "mean") -> Tensor:
    """Column-wise sum/mean/max of contiguous row segments ``ptr[k]:ptr[k+1]``."""
    xv = x.value
    starts = ptr[:-1]
    sizes = np.diff(ptr)
    if len(sizes) == 0 or np.any(sizes <= 0):
        raise ValueError("cannot pool an empty node set")
    if mode == "sum":
        return _make(np.add.reduceat(xv, starts, axis=0), (x,), lambda g: (np.repeat(g, sizes, axis=0),))
    if mode == "mean":
        out = np.add.reduceat(xv, starts, axis=0) / sizes[:, None]
        return _make(out, (x,), lambda g: (np.repeat(g / sizes[:, None], sizes, axis=0),))
    if mode == "max":
        # first maximiser per segment and column receives the gradient
        rows = np.stack([s + xv[s:e].argmax(axis=0) for s, e in zip(ptr[:-1], ptr[1:])])
        cols = np.broadcast_to(np.arange(xv.shape[1]), rows.shape)

        def bw(g):
            out = np.zeros_like(xv)
            out[rows, cols] = g
            return (out,)

        return _make(xv[rows, cols], (x,), bw)
    raise ValueError(f"unknown pooling mode {mode!r}")


def softmax_cross_entropy(logits: np.ndarray, labels, class_weights=(1.0, 1.0)) -> tuple[float, np.ndarray]:
    """Weighted mean negative log-likelihood of ``labels`` under softmax(logits).

    Returns the loss and its gradient with respect to ``logits``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    cw = np.asarray(class_weights, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    if np.any(cw <= 0):
        raise ValueError("class weights must be positive")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= logits.shape[1]:
        raise ValueError("label out of range")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(labels))
    nll = lse - shifted[rows, labels]
    w = cw[labels]
    total = w.sum()
    loss = float((w * nll).sum() / total)
    probs = np.exp(shifted - lse[:, None])
    grad = probs
    grad[rows, labels] -= 1.0
    grad *= (w / total)[:, None]
    return loss, grad


def cross_entropy(logits: Tensor, labels, class_weights=(1.0, 1.0)) -> Tensor:
    loss, grad = softmax_cross_entropy(logits.value, labels, class_weights)
    return _make(np.array(loss), (logits,), lambda g: (grad * float(g),))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
