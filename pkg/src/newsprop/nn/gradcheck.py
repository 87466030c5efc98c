"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward
from .params import ParamStore


@dataclass
class GradCheckResult:
    max_rel_error: float
    coverage: dict[str, int]
    worst: tuple[str, tuple[int, int]] | None = None


def _evaluate(f, params: ParamStore):
    out = f(params)
    if isinstance(out, Tensor):
        return float(out), out
    loss, grads = out
    return float(loss), grads


def finite_difference_check(
    f: Callable[[ParamStore], Tensor | tuple[float, dict]],
    params: ParamStore,
    delta: float = 1e-5,
    max_coords: int = 20,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckResult:
    """Compare analytic and central-difference gradients of ``f``.

    ``f`` either returns a scalar Tensor (gradients come from backprop) or a
    ``(loss, {name: grad})`` pair. Up to ``max_coords`` random coordinates of
    every non-frozen parameter are probed. The relative error of a coordinate
    is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = np.random.default_rng(seed)
    params.zero_grad()
    _, out = _evaluate(f, params)
    if isinstance(out, Tensor):
        backward(out)
        analytic = {name: t.grad.copy() for name, t in params.items()}
    else:
        analytic = {name: np.asarray(g, dtype=np.float64) for name, g in out.items()}
    params.zero_grad()

    worst_err, worst = 0.0, None
    coverage: dict[str, int] = {}
    for name, p in params.trainable():
        size = p.value.size
        flat = rng.choice(size, size=min(size, max_coords), replace=False)
        coverage[name] = len(flat)
        for k in flat:
            pos = np.unravel_index(k, p.value.shape)
            orig = p.value[pos]
            p.value[pos] = orig + delta
            up, _ = _evaluate(f, params)
            p.value[pos] = orig - delta
            down, _ = _evaluate(f, params)
            p.value[pos] = orig
            numeric = (up - down) / (2 * delta)
            a = analytic[name][pos]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if err > worst_err:
                worst_err, worst = err, (name, tuple(int(i) for i in pos))
    params.zero_grad()
    return GradCheckResult(worst_err, coverage, worst)
