"""Linear classifiers on graph-level features. Labels are +1 (fake) / -1 (real);
0/1 labels are accepted and mapped 0 -> -1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LINEAR_KINDS = ("ridge", "logistic", "passive_aggressive", "sgd_hinge")


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    kind: str

    def decision(self, X) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=np.float64)) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": [float(w) for w in self.weights], "bias": float(self.bias)}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.array(d["weights"], dtype=np.float64), float(d["bias"]), d["kind"])


def _pm1(y) -> np.ndarray:
    y = np.asarray(y)
    vals = set(np.unique(y).tolist())
    if vals <= {0, 1}:
        return np.where(y == 1, 1.0, -1.0)
    if vals <= {-1, 1}:
        return y.astype(np.float64)
    raise ValueError(f"labels must be in {{0,1}} or {{-1,+1}}, got {sorted(vals)}")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_ridge(X, y, lam: float = 1.0) -> LinearModel:
    """Least squares on +-1 targets with an L2 penalty on the weights (not the bias)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] < 1:
        raise ValueError("ridge needs at least one sample")
    t = _pm1(y)
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    reg = lam * np.eye(Xa.shape[1])
    reg[-1, -1] = 0.0
    A = Xa.T @ Xa + reg
    if np.linalg.matrix_rank(A) < A.shape[0]:
        raise np.linalg.LinAlgError("singular normal equations; use lam > 0")
    sol = np.linalg.solve(A, Xa.T @ t)
    return LinearModel(sol[:-1], float(sol[-1]), "ridge")


def logistic_loss_grad(w: np.ndarray, b: float, X: np.ndarray, y01: np.ndarray, l2: float):
    """Mean log-loss plus (l2/2)|w|^2 with its gradient ``(dw, db)``."""
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y01 * z) + 0.5 * l2 * (w @ w)
    r = (_sigmoid(z) - y01) / len(y01)
    return float(loss), X.T @ r + l2 * w, float(r.sum())


def train_logistic(X, y, l2: float = 0.01, epochs: int = 1000, lr: float = 0.5) -> LinearModel:
    """Full-batch gradient descent on the regularised log-loss."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y01 = (_pm1(y) > 0).astype(np.float64)
    w, b = np.zeros(X.shape[1]), 0.0
    for _ in range(epochs):
        _, gw, gb = logistic_loss_grad(w, b, X, y01, l2)
        w -= lr * gw
        b -= lr * gb
    return LinearModel(w, b, "logistic")


def passive_aggressive_update(w: np.ndarray, b: float, x: np.ndarray, y: float, C: float):
    """PA-I step: on a hinge violation move by tau = min(C, loss / |x|^2)."""
    loss = max(0.0, 1.0 - y * (x @ w + b))
    sq = x @ x
    if loss == 0.0 or sq == 0.0:
        return w, b
    tau = min(C, loss / sq)
    return w + tau * y * x, b + tau * y


def train_passive_aggressive(X, y, C: float = 1.0, epochs: int = 20, seed: int = 0) -> LinearModel:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    t = _pm1(y)
    rng = np.random.default_rng(seed)
    w, b = np.zeros(X.shape[1]), 0.0
    for _ in range(epochs):
        for i in rng.permutation(len(t)):
            w, b = passive_aggressive_update(w, b, X[i], t[i], C)
    return LinearModel(w, b, "passive_aggressive")


def train_sgd_hinge(X, y, l2: float = 1e-4, epochs: int = 50, lr: float = 0.01, seed: int = 0) -> LinearModel:
    """Per-sample SGD on hinge loss + (l2/2)|w|^2 with seeded shuffling."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    t = _pm1(y)
    rng = np.random.default_rng(seed)
    w, b = np.zeros(X.shape[1]), 0.0
    for _ in range(epochs):
        for i in rng.permutation(len(t)):
            margin = t[i] * (X[i] @ w + b)
            w = w - lr * l2 * w
            if margin < 1.0:
                w = w + lr * t[i] * X[i]
                b += lr * t[i]
    return LinearModel(w, b, "sgd_hinge")


def predict_linear(model: LinearModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Labels in {+1, -1} (sign, ties to +1) and P(fake) via the logistic link."""
    s = model.decision(X)
    return np.where(s >= 0, 1, -1), _sigmoid(s)
