"""Linear softmax classifiers as bilevel lower levels.

Both problems keep the classifier ``W`` (``classes x features``) flattened
row-major as the lower variable ``y`` and measure validation cross-entropy
in the upper level.

* hyper-cleaning: the upper variable is one confidence logit per training
  sample, weighting its loss by ``sigmoid(lambda_i)``.
* logreg: the upper variable is one regularizer ``zeta_j`` per feature,
  penalizing ``zeta_j^2 W_ij^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

from ..core import BilevelProblem
from ..errors import ShapeMismatch


def _check_xy(features, labels, classes, name):
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise ShapeMismatch(f"{name} features must be 2-D, got shape {features.shape}")
    if labels.shape != (features.shape[0],):
        raise ShapeMismatch(
            f"{name} labels have shape {labels.shape}, expected ({features.shape[0]},)"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeMismatch(f"{name} labels must lie in [0, {classes})")
    return features, labels


class _LinearSoftmax:
    """Cross-entropy pieces for logits ``Z = X W^T``."""

    def __init__(self, features, labels, classes):
        self.X = features
        self.labels = labels
        self.classes = classes
        self.n = features.shape[0]
        self.onehot = np.eye(classes)[labels]

    def logits(self, W):
        return self.X @ W.T

    def losses(self, W):
        return -log_softmax(self.logits(W), axis=1)[np.arange(self.n), self.labels]

    def probs(self, W):
        return softmax(self.logits(W), axis=1)

    def weighted_grad(self, W, weights):
        """``sum_i weights_i * grad_W loss_i``."""
        return ((self.probs(W) - self.onehot) * weights[:, None]).T @ self.X

    def weighted_hvp(self, W, V, weights):
        P = self.probs(W)
        dZ = self.X @ V.T
        dG = P * dZ - P * np.sum(P * dZ, axis=1, keepdims=True)
        return (dG * weights[:, None]).T @ self.X

    def accuracy(self, W):
        return float(np.mean(np.argmax(self.logits(W), axis=1) == self.labels))


@dataclass(frozen=True, eq=False)
class HyperCleanSpec:
    train_features: np.ndarray
    train_labels: np.ndarray
    val_features: np.ndarray
    val_labels: np.ndarray
    classes: int
    reg: float = 1e-3
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None


class HyperCleanProblem(BilevelProblem):
    """Upper ``x``: per-sample confidence logits; lower ``y``: flattened ``W``."""

    def __init__(self, spec: HyperCleanSpec):
        if spec.reg <= 0:
            raise ValueError("reg must be positive")
        c = spec.classes
        Xtr, ytr = _check_xy(spec.train_features, spec.train_labels, c, "train")
        Xval, yval = _check_xy(spec.val_features, spec.val_labels, c, "val")
        if Xval.shape[1] != Xtr.shape[1]:
            raise ShapeMismatch("train and val feature widths differ")
        self.train = _LinearSoftmax(Xtr, ytr, c)
        self.val = _LinearSoftmax(Xval, yval, c)
        self.test = None
        if spec.test_features is not None:
            Xte, yte = _check_xy(spec.test_features, spec.test_labels, c, "test")
            if Xte.shape[1] != Xtr.shape[1]:
                raise ShapeMismatch("train and test feature widths differ")
            self.test = _LinearSoftmax(Xte, yte, c)
        self.spec = spec
        self.reg = spec.reg
        self.classes = c
        self.features = Xtr.shape[1]
        self.dx = self.train.n
        self.dy = c * self.features

    def _W(self, y):
        return y.reshape(self.classes, self.features)

    def f_value(self, x, y):
        return float(np.mean(self.val.losses(self._W(y))))

    def g_value(self, x, y):
        W = self._W(y)
        return float(np.mean(expit(x) * self.train.losses(W)) + self.reg * y @ y)

    def grad_f_x(self, x, y):
        return np.zeros(self.dx)

    def grad_f_y(self, x, y):
        w = np.full(self.val.n, 1.0 / self.val.n)
        return self.val.weighted_grad(self._W(y), w).ravel()

    def grad_g_y(self, x, y):
        w = expit(x) / self.train.n
        return self.train.weighted_grad(self._W(y), w).ravel() + 2.0 * self.reg * y

    def hvp_gyy(self, x, y, v):
        w = expit(x) / self.train.n
        V = self._W(v)
        return self.train.weighted_hvp(self._W(y), V, w).ravel() + 2.0 * self.reg * v

    def jvp_gxy(self, x, y, v):
        s = expit(x)
        W, V = self._W(y), self._W(v)
        R = self.train.probs(W) - self.train.onehot
        return (s * (1.0 - s) / self.train.n) * np.sum(R * (self.train.X @ V.T), axis=1)

    def test_metric(self, x, y):
        if self.test is None:
            return None
        return self.test.accuracy(self._W(y))


def make_hyperclean(spec: HyperCleanSpec) -> HyperCleanProblem:
    return HyperCleanProblem(spec)


@dataclass(frozen=True, eq=False)
class LogRegSpec:
    train_features: np.ndarray
    train_labels: np.ndarray
    val_features: np.ndarray
    val_labels: np.ndarray
    classes: int
    test_features: np.ndarray | None = None
    test_labels: np.ndarray | None = None


class LogRegProblem(BilevelProblem):
    """Upper ``x``: per-feature regularizers ``zeta``; lower ``y``: flattened ``W``.

    The penalty ``(1 / (c l)) sum_ij zeta_j^2 W_ij^2`` is nonnegative for any
    real ``zeta``.
    """

    def __init__(self, spec: LogRegSpec):
        c = spec.classes
        Xtr, ytr = _check_xy(spec.train_features, spec.train_labels, c, "train")
        Xval, yval = _check_xy(spec.val_features, spec.val_labels, c, "val")
        if Xval.shape[1] != Xtr.shape[1]:
            raise ShapeMismatch("train and val feature widths differ")
        self.train = _LinearSoftmax(Xtr, ytr, c)
        self.val = _LinearSoftmax(Xval, yval, c)
        self.test = None
        if spec.test_features is not None:
            Xte, yte = _check_xy(spec.test_features, spec.test_labels, c, "test")
            self.test = _LinearSoftmax(Xte, yte, c)
        self.spec = spec
        self.classes = c
        self.features = Xtr.shape[1]
        self.scale = 1.0 / (c * self.features)
        self.dx = self.features
        self.dy = c * self.features

    def _W(self, y):
        return y.reshape(self.classes, self.features)

    def f_value(self, x, y):
        return float(np.mean(self.val.losses(self._W(y))))

    def g_value(self, x, y):
        W = self._W(y)
        penalty = self.scale * np.sum((x**2)[None, :] * W**2)
        return float(np.mean(self.train.losses(W)) + penalty)

    def grad_f_x(self, x, y):
        return np.zeros(self.dx)

    def grad_f_y(self, x, y):
        w = np.full(self.val.n, 1.0 / self.val.n)
        return self.val.weighted_grad(self._W(y), w).ravel()

    def grad_g_y(self, x, y):
        W = self._W(y)
        w = np.full(self.train.n, 1.0 / self.train.n)
        data = self.train.weighted_grad(W, w)
        return (data + 2.0 * self.scale * (x**2)[None, :] * W).ravel()

    def hvp_gyy(self, x, y, v):
        W, V = self._W(y), self._W(v)
        w = np.full(self.train.n, 1.0 / self.train.n)
        data = self.train.weighted_hvp(W, V, w)
        return (data + 2.0 * self.scale * (x**2)[None, :] * V).ravel()

    def jvp_gxy(self, x, y, v):
        W, V = self._W(y), self._W(v)
        return 4.0 * self.scale * x * np.sum(W * V, axis=0)

    def test_metric(self, x, y):
        data = self.test if self.test is not None else self.val
        return data.accuracy(self._W(y))

    def initial_point(self, rng):
        return np.ones(self.dx), np.zeros(self.dy)


def make_logreg(spec: LogRegSpec) -> LogRegProblem:
    return LogRegProblem(spec)
