"""Flat-parameter classifiers with hand-written backprop: softmax regression and a one-hidden-layer MLP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _cross_entropy(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    logp = _log_softmax(logits)
    b = len(y)
    loss = -logp[np.arange(b), y].mean()
    dz = np.exp(logp)
    dz[np.arange(b), y] -= 1.0
    return float(loss), dz / b


def _check_batch(x, y, d_in):
    if len(y) == 0:
        raise ValueError("empty batch")
    if x.ndim != 2 or x.shape[1] != d_in:
        raise DimensionMismatch(f"features of shape {x.shape}, model expects d_in={d_in}")


@dataclass(frozen=True)
class SoftmaxRegression:
    d_in: int
    num_classes: int

    @property
    def num_params(self) -> int:
        return self.d_in * self.num_classes + self.num_classes

    def _unpack(self, theta):
        k = self.d_in * self.num_classes
        return theta[:k].reshape(self.d_in, self.num_classes), theta[k:]

    def init(self, rng: np.random.Generator) -> np.ndarray:
        bound = 1.0 / np.sqrt(self.d_in)
        w = rng.uniform(-bound, bound, size=(self.d_in, self.num_classes))
        return np.concatenate([w.ravel(), np.zeros(self.num_classes)])

    def logits(self, theta, x):
        w, b = self._unpack(theta)
        return x @ w + b

    def loss_grad(self, theta, x, y):
        _check_batch(x, y, self.d_in)
        w, b = self._unpack(theta)
        loss, dz = _cross_entropy(x @ w + b, y)
        return loss, np.concatenate([(x.T @ dz).ravel(), dz.sum(axis=0)])


@dataclass(frozen=True)
class MLP1:
    """d_in -> hidden (ReLU) -> num_classes."""

    d_in: int
    hidden: int
    num_classes: int

    @property
    def num_params(self) -> int:
        return self.d_in * self.hidden + self.hidden + self.hidden * self.num_classes + self.num_classes

    def _unpack(self, theta):
        d, h, c = self.d_in, self.hidden, self.num_classes
        o1 = d * h
        o2 = o1 + h
        o3 = o2 + h * c
        return theta[:o1].reshape(d, h), theta[o1:o2], theta[o2:o3].reshape(h, c), theta[o3:]

    def init(self, rng: np.random.Generator) -> np.ndarray:
        b1 = 1.0 / np.sqrt(self.d_in)
        b2 = 1.0 / np.sqrt(self.hidden)
        w1 = rng.uniform(-b1, b1, size=(self.d_in, self.hidden))
        w2 = rng.uniform(-b2, b2, size=(self.hidden, self.num_classes))
        return np.concatenate([w1.ravel(), np.zeros(self.hidden), w2.ravel(), np.zeros(self.num_classes)])

    def logits(self, theta, x):
        w1, b1, w2, b2 = self._unpack(theta)
        return np.maximum(x @ w1 + b1, 0.0) @ w2 + b2

    def loss_grad(self, theta, x, y):
        _check_batch(x, y, self.d_in)
        w1, b1, w2, b2 = self._unpack(theta)
        pre = x @ w1 + b1
        h = np.maximum(pre, 0.0)
        loss, dz = _cross_entropy(h @ w2 + b2, y)
        dh = (dz @ w2.T) * (pre > 0)
        return loss, np.concatenate([(x.T @ dh).ravel(), dh.sum(axis=0), (h.T @ dz).ravel(), dz.sum(axis=0)])


Architecture = SoftmaxRegression | MLP1


def forward_loss_grad(arch: Architecture, theta, x, y):
    """Mean cross-entropy over the batch and its exact gradient."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (arch.num_params,):
        raise DimensionMismatch(f"theta has shape {theta.shape}, architecture needs {arch.num_params}")
    return arch.loss_grad(theta, np.asarray(x, dtype=np.float64), np.asarray(y))


def mean_loss(arch: Architecture, theta, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    logp = _log_softmax(arch.logits(theta, x))
    return float(-logp[np.arange(len(y)), y].mean())


def accuracy(arch: Architecture, theta, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float((arch.logits(theta, x).argmax(axis=1) == y).mean())
