"""Adam and the epoch loop shared by every gradient-trained model."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward
from .params import ParamStore

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update over all trainable parameters, then zero grads."""
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, p in params.trainable():
        g = p.grad
        if g is None:
            continue
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.value.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value = p.value - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.zero_grad()


@dataclass
class TrainSettings:
    epochs: int = 50
    lr: float = 0.001
    batch_size: int = 64
    class_weights: tuple[float, float] = (1.0, 1.0)  # indexed by label: (real, fake)


@dataclass
class FitResult:
    best_epoch: int
    train_loss: list[float]
    val_loss: list[float]

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]


def fit(
    params: ParamStore,
    batch_loss: Callable[[np.ndarray], Tensor],
    n_train: int,
    val_loss: Callable[[], float],
    *,
    epochs: int = 50,
    lr: float = 0.001,
    batch_size: int = 64,
    seed: int = 0,
) -> FitResult:
    """Mini-batch Adam for ``epochs`` epochs, keeping the weights of the epoch
    with the lowest validation loss.

    ``batch_loss(indices)`` returns the mean loss over training items
    ``indices``; ``val_loss()`` evaluates the current weights.
    """
    if n_train <= 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr)
    params.zero_grad()
    train_trace, val_trace = [], []
    best, best_snap = np.inf, params.snapshot()
    best_epoch = 0
    for epoch in range(epochs):
        order = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, batch_size):
            idx = order[start:start + batch_size]
            loss = batch_loss(idx)
            backward(loss)
            adam_step(params, state)
            total += float(loss) * len(idx)
        train_trace.append(total / n_train)
        v = float(val_loss())
        val_trace.append(v)
        log.debug("epoch %d train %.6f val %.6f", epoch + 1, train_trace[-1], v)
        if v < best:
            best, best_epoch = v, epoch
            best_snap = params.snapshot()
    params.restore(best_snap)
    return FitResult(best_epoch, train_trace, val_trace)
