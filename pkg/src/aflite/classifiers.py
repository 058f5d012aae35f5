"""Linear and RBF-kernel classifiers.

The linear model is L2-regularised multinomial logistic regression fitted by
full-batch gradient descent. Many small models are usually needed at once
(one per random partition), so the trainer works on a stack of independent
problems with shared shapes; :func:`train_linear` is the single-problem case.

The RBF model is kernel logistic regression solved with damped Newton steps.
Its decision function has the usual dual form
``f(x) = sum_j a_j exp(-gamma ||x - s_j||^2) + b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateTrainingError, InputError


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    learning_rate: float = 0.1
    l2_penalty: float = 1e-4
    convergence_tolerance: float = 1e-6

    def __post_init__(self):
        if self.max_epochs < 1:
            raise InputError("max_epochs must be positive")
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise InputError("l2_penalty must be non-negative")
        if not self.convergence_tolerance > 0:
            raise InputError("convergence_tolerance must be positive")


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights.T + self.bias

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = _check_matrix(X, self.dim)
        # np.argmax returns the first maximum, i.e. the lowest class index
        return np.argmax(self.decision_function(X), axis=1)


@dataclass(frozen=True)
class RbfModel:
    support_points: np.ndarray  # (s, d)
    dual_coefficients: np.ndarray  # (s,)
    intercept: float
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError("gamma must be positive")

    @property
    def dim(self) -> int:
        return self.support_points.shape[1]

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        if len(self.dual_coefficients) == 0:
            return np.full(X.shape[0], float(self.intercept))
        K = rbf_kernel(X, self.support_points, self.gamma)
        return K @ self.dual_coefficients + self.intercept

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = _check_matrix(X, self.dim)
        return (self.decision_function(X) > 0).astype(np.int64)


Model = Union[LinearModel, RbfModel]


def _check_matrix(X, dim: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise InputError(f"feature dimension {X.shape[1]} does not match model dimension {dim}")
    if not np.all(np.isfinite(X)):
        raise InputError("features contain non-finite values")
    return X


def _check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {y.shape}")
    if n and (y.min() < 0 or not np.all(np.equal(np.mod(y, 1), 0))):
        raise InputError("labels must be non-negative integers")
    return y.astype(np.int64)


# ---------------------------------------------------------------------------
# multinomial logistic regression


def _batch_loss_grad(W, b, X, Y1h, l2, XT=None):
    """Loss and gradients for a stack of problems.

    Shapes: W (B, C, d), b (B, C), X (B, N, d), Y1h (B, C, N). The class axis
    sits before the sample axis because reductions over a short trailing axis
    are slow in numpy. ``XT`` optionally supplies a contiguous ``X`` transpose.
    """
    n = X.shape[1]
    if XT is None:
        XT = X.transpose(0, 2, 1)
    Z = W @ XT + b[:, :, None]
    Z -= Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    S = E.sum(axis=1, keepdims=True)
    logP = Z - np.log(S)
    loss = -(Y1h * logP).sum(axis=(1, 2)) / n + 0.5 * l2 * (W * W).sum(axis=(1, 2))
    G = (E / S - Y1h) / n
    gW = G @ X + l2 * W
    gb = G.sum(axis=2)
    return loss, gW, gb


def logistic_loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    l2_penalty: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its analytic gradient."""
    W = np.asarray(weights, dtype=np.float64)
    X = _check_matrix(features, W.shape[1])
    y = _check_labels(labels, X.shape[0])
    Y1h = np.eye(W.shape[0])[y].T
    loss, gW, gb = _batch_loss_grad(
        W[None], np.asarray(bias, dtype=np.float64)[None], X[None], Y1h[None], l2_penalty
    )
    return float(loss[0]), gW[0], gb[0]


def train_linear_batch(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    config: TrainConfig = TrainConfig(),
    rngs: Sequence[np.random.Generator | None] | None = None,
    return_history: bool = False,
):
    """Fit ``B`` independent logistic models on equally sized training sets.

    ``features`` has shape (B, N, d) and ``labels`` (B, N). Each problem gets
    its own step size, halved whenever a step would increase its loss; a
    problem stops once an accepted step improves the loss by less than the
    tolerance. If ``rngs`` is given, problem ``j`` starts from small Gaussian
    weights drawn from ``rngs[j]``, otherwise from zero.
    """
    X = np.asarray(features, dtype=np.float64)
    Y = np.asarray(labels)
    if X.ndim != 3 or Y.shape != X.shape[:2]:
        raise InputError(f"bad batch shapes {X.shape} / {Y.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("features contain non-finite values")
    B, _, d = X.shape
    Y = Y.astype(np.int64)
    if Y.size and (Y.min() < 0 or Y.max() >= n_classes):
        raise InputError(f"labels must lie in 0..{n_classes - 1}")
    for j in range(B):
        if len(np.unique(Y[j])) < 2:
            raise DegenerateTrainingError(f"training set {j} contains a single class")
    Y1h = np.ascontiguousarray(np.eye(n_classes)[Y].transpose(0, 2, 1))

    W = np.zeros((B, n_classes, d))
    b = np.zeros((B, n_classes))
    if rngs is not None:
        for j, rng in enumerate(rngs):
            if rng is not None:
                W[j] = rng.normal(scale=0.01, size=(n_classes, d))

    l2 = config.l2_penalty
    XT = np.ascontiguousarray(X.transpose(0, 2, 1))
    loss, gW, gb = _batch_loss_grad(W, b, X, Y1h, l2, XT)
    lr = np.full(B, config.learning_rate)
    active = np.ones(B, dtype=bool)
    history = [[float(v)] for v in loss] if return_history else None

    for _ in range(config.max_epochs):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        if idx.size == B:
            # skip the gather copies while every problem is still running
            Xa, XTa, Ya, Wa, ba, gWa, gba = X, XT, Y1h, W, b, gW, gb
        else:
            Xa, XTa, Ya = X[idx], XT[idx], Y1h[idx]
            Wa, ba, gWa, gba = W[idx], b[idx], gW[idx], gb[idx]
        step = lr[idx]
        Wc = Wa - step[:, None, None] * gWa
        bc = ba - step[:, None] * gba
        lc, gWc, gbc = _batch_loss_grad(Wc, bc, Xa, Ya, l2, XTa)
        accept = lc <= loss[idx]
        improvement = loss[idx] - lc

        acc = idx[accept]
        W[acc], b[acc] = Wc[accept], bc[accept]
        loss[acc], gW[acc], gb[acc] = lc[accept], gWc[accept], gbc[accept]
        lr[idx[~accept]] *= 0.5
        if history is not None:
            for j in acc:
                history[j].append(float(loss[j]))

        done = (accept & (improvement < config.convergence_tolerance)) | (lr[idx] < 1e-12)
        active[idx[done]] = False

    models = [LinearModel(W[j].copy(), b[j].copy()) for j in range(B)]
    if return_history:
        return models, history
    return models


def train_linear(
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig = TrainConfig(),
    rng: np.random.Generator | None = None,
    n_classes: int | None = None,
) -> LinearModel:
    X = _check_matrix(features)
    y = _check_labels(labels, X.shape[0])
    if len(np.unique(y)) < 2:
        raise DegenerateTrainingError("training data contains a single class")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    return train_linear_batch(X[None], y[None], n_classes, config, [rng])[0]


# ---------------------------------------------------------------------------
# RBF kernel logistic regression


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def default_gamma(features: np.ndarray) -> float:
    """``1 / (d * var(X))`` over all entries; 1.0 for constant data."""
    var = float(np.var(features))
    if var <= 0:
        return 1.0
    return 1.0 / (features.shape[1] * var)


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def train_rbf(
    features: np.ndarray,
    labels: np.ndarray,
    gamma: float | None = None,
    regularization: float = 1e-3,
    rng: np.random.Generator | None = None,
    max_iter: int = 50,
    tol: float = 1e-8,
) -> RbfModel:
    """Kernel logistic regression with an RBF kernel.

    Minimises ``mean(log(1 + exp(-s f))) + regularization/2 * a^T K a`` with
    ``s = 2y - 1`` and ``f = K a + b`` by Newton's method with backtracking.
    Every training point becomes a support point. ``rng`` is accepted for
    interface symmetry; the solver is deterministic.
    """
    X = _check_matrix(features)
    y = _check_labels(labels, X.shape[0])
    if X.shape[0] == 0:
        raise InputError("empty training set")
    if y.max() > 1:
        raise InputError("the RBF classifier is binary; labels must be 0 or 1")
    if gamma is None:
        gamma = default_gamma(X)
    if not gamma > 0:
        raise InputError("gamma must be positive")
    if not regularization > 0:
        raise InputError("regularization must be positive")

    classes = np.unique(y)
    if len(classes) == 1:
        return RbfModel(
            support_points=np.zeros((0, X.shape[1])),
            dual_coefficients=np.zeros(0),
            intercept=1.0 if classes[0] == 1 else -1.0,
            gamma=gamma,
        )

    n = X.shape[0]
    s = 2.0 * y - 1.0
    K = rbf_kernel(X, X, gamma)
    lam = regularization
    alpha = np.zeros(n)
    b = 0.0

    def objective(alpha, b):
        f = K @ alpha + b
        return _softplus(-s * f).mean() + 0.5 * lam * alpha @ K @ alpha

    obj = objective(alpha, b)
    for _ in range(max_iter):
        f = K @ alpha + b
        g = -s * _sigmoid(-s * f) / n
        sig = _sigmoid(f)
        w = sig * (1.0 - sig) / n
        # Newton system in (alpha, b) with the common factor K divided out
        A = np.empty((n + 1, n + 1))
        A[:n, :n] = w[:, None] * K
        A[:n, :n][np.diag_indices(n)] += lam
        A[:n, n] = w
        A[n, :n] = w @ K
        A[n, n] = w.sum()
        rhs = -np.concatenate([g + lam * alpha, [g.sum()]])
        try:
            delta = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(A, rhs, rcond=None)[0]
        step = 1.0
        while step > 1e-10:
            cand_alpha = alpha + step * delta[:n]
            cand_b = b + step * delta[n]
            cand = objective(cand_alpha, cand_b)
            if cand <= obj:
                break
            step *= 0.5
        else:
            break
        alpha, b = cand_alpha, cand_b
        improvement = obj - cand
        obj = cand
        if improvement < tol:
            break

    return RbfModel(X.copy(), alpha, float(b), float(gamma))


# ---------------------------------------------------------------------------
# inference


def predict(model: Model, x: np.ndarray) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError("predict expects a single feature vector")
    return int(model.predict_many(x[None, :])[0])


def predict_many(model: Model, X: np.ndarray) -> np.ndarray:
    return model.predict_many(X)


def accuracy(model: Model, features: np.ndarray, labels: np.ndarray) -> float:
    X = _check_matrix(features, model.dim)
    if X.shape[0] == 0:
        raise InputError("accuracy needs a nonempty evaluation set")
    y = _check_labels(labels, X.shape[0])
    return float(np.mean(model.predict_many(X) == y))
