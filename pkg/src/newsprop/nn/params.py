"""Named parameter storage, initialisation and checkpoint files.

Checkpoint layout (UTF-8 text, parameters in name order)::

    newsprop-checkpoint 1
    <num_params>
    <name> <rows> <cols>
    <row 0 values, space separated, shortest round-trip repr>
    ...

Floats are written with ``repr`` so loading is bit-exact.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import numpy as np

from .autodiff import Tensor

_MAGIC = "newsprop-checkpoint 1"


class ParamStore:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.frozen: set[str] = set()

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        if value.ndim != 2:
            raise ValueError(f"parameter {name!r} must be 2-D, got shape {value.shape}")
        t = Tensor(value, requires_grad=True)
        t.grad = np.zeros_like(t.value)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def trainable(self) -> Iterator[tuple[str, Tensor]]:
        for name, t in self.items():
            if name not in self.frozen:
                yield name, t

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = np.zeros_like(t.value)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, value in snap.items():
            t = self._params[name]
            if t.value.shape != value.shape:
                raise ValueError(f"shape mismatch restoring {name!r}")
            t.value = value.copy()

    def num_values(self) -> int:
        return sum(t.value.size for t in self._params.values())


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def save_params(params: ParamStore, path) -> None:
    lines = [_MAGIC, str(len(params))]
    for name, t in params.items():
        if any(c.isspace() for c in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        rows, cols = t.value.shape
        lines.append(f"{name} {rows} {cols}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in t.value)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(path) -> ParamStore:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    count = int(lines[1])
    pos = 2
    store = ParamStore()
    for _ in range(count):
        name, rows, cols = lines[pos].split()
        rows, cols = int(rows), int(cols)
        data = [[float(v) for v in lines[pos + 1 + r].split()] for r in range(rows)]
        value = np.array(data, dtype=np.float64).reshape(rows, cols)
        store.add(name, value)
        pos += 1 + rows
    return store
