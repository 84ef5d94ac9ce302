"""Small feedforward classifier with hand-written gradients and AdamW.

Architecture: input -> 126 ReLU -> 126 ReLU -> softmax head. Dropout (inverted
scaling) applies to the two hidden activations during training only. The
backward pass takes d(loss)/d(logits), so any loss differentiable in the
logits can ride on it.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

HIDDEN_UNITS = 126

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


class MLPModel:
    def __init__(self, input_dim: int, n_classes: int, dropout: float = 0.0,
                 hidden: int = HIDDEN_UNITS, rng: Optional[np.random.Generator] = None):
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {dropout}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.hidden = hidden
        self.dropout = dropout
        # He initialization for the ReLU stack.
        self.params: Dict[str, np.ndarray] = {
            "W1": rng.normal(size=(input_dim, hidden)) * np.sqrt(2.0 / input_dim),
            "b1": np.zeros(hidden),
            "W2": rng.normal(size=(hidden, hidden)) * np.sqrt(2.0 / hidden),
            "b2": np.zeros(hidden),
            "W3": rng.normal(size=(hidden, n_classes)) * np.sqrt(2.0 / hidden),
            "b3": np.zeros(n_classes),
        }
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_t = 0
        # Path-integral importance state; populated by the SI strategy.
        self.si_omega: Optional[Dict[str, np.ndarray]] = None
        self.si_ref: Optional[Dict[str, np.ndarray]] = None

    def clone(self) -> "MLPModel":
        out = MLPModel.__new__(MLPModel)
        out.input_dim = self.input_dim
        out.n_classes = self.n_classes
        out.hidden = self.hidden
        out.dropout = self.dropout
        out.params = {k: v.copy() for k, v in self.params.items()}
        out.adam_m = {k: v.copy() for k, v in self.adam_m.items()}
        out.adam_v = {k: v.copy() for k, v in self.adam_v.items()}
        out.adam_t = self.adam_t
        out.si_omega = None if self.si_omega is None else {
            k: v.copy() for k, v in self.si_omega.items()}
        out.si_ref = None if self.si_ref is None else {
            k: v.copy() for k, v in self.si_ref.items()}
        return out

    def forward(self, X: np.ndarray, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, dict]:
        p = self.params
        z1 = X @ p["W1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        mask1 = None
        if train and self.dropout > 0.0:
            mask1 = (rng.random(h1.shape) >= self.dropout) / (1.0 - self.dropout)
            h1 = h1 * mask1
        z2 = h1 @ p["W2"] + p["b2"]
        h2 = np.maximum(z2, 0.0)
        mask2 = None
        if train and self.dropout > 0.0:
            mask2 = (rng.random(h2.shape) >= self.dropout) / (1.0 - self.dropout)
            h2 = h2 * mask2
        logits = h2 @ p["W3"] + p["b3"]
        cache = {"X": X, "z1": z1, "h1": h1, "mask1": mask1,
                 "z2": z2, "h2": h2, "mask2": mask2}
        return logits, cache

    def logits(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X, train=False)[0]

    def backward(self, cache: dict, dlogits: np.ndarray) -> Dict[str, np.ndarray]:
        p = self.params
        grads: Dict[str, np.ndarray] = {}
        grads["W3"] = cache["h2"].T @ dlogits
        grads["b3"] = dlogits.sum(axis=0)
        dh2 = dlogits @ p["W3"].T
        if cache["mask2"] is not None:
            dh2 = dh2 * cache["mask2"]
        dz2 = dh2 * (cache["z2"] > 0.0)
        grads["W2"] = cache["h1"].T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["W2"].T
        if cache["mask1"] is not None:
            dh1 = dh1 * cache["mask1"]
        dz1 = dh1 * (cache["z1"] > 0.0)
        grads["W1"] = cache["X"].T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return grads

    def adamw_step(self, grads: Dict[str, np.ndarray], lr: float,
                   weight_decay: float, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> Dict[str, np.ndarray]:
        """Apply one decoupled-weight-decay Adam update; returns the actual
        parameter deltas (needed by the path-integral importance tracker)."""
        self.adam_t += 1
        t = self.adam_t
        deltas = {}
        for k, g in grads.items():
            m = self.adam_m[k]
            v = self.adam_v[k]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            m_hat = m / (1.0 - beta1 ** t)
            v_hat = v / (1.0 - beta2 ** t)
            delta = -lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * self.params[k])
            self.params[k] += delta
            deltas[k] = delta
        return deltas


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient in the logits."""
    n = len(y)
    ls = log_softmax(logits)
    loss = -float(ls[np.arange(n), y].mean())
    dlogits = softmax(logits)
    dlogits[np.arange(n), y] -= 1.0
    return loss, dlogits / n
