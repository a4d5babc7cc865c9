"""Pluggable nuisance learners: ridge regression, ridge logistic, boosted trees.

Every learner is deterministic given its inputs; the rng argument exists so
alternative stochastic learners can slot in behind the same interface.
Multi-class classification (cell posteriors for the four- and eight-class
settings) is one-vs-rest with a final row normalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._boosting import BoostedForest
from .errors import ConfigError
from .numerics import SeededRng

LEARNER_KINDS = ("ridge_regression", "ridge_logistic",
                 "gbt_regression", "gbt_classification")

_DEFAULTS = {
    "ridge_regression": {"lam": 0.0},
    "ridge_logistic": {"lam": 1e-6, "max_iter": 100, "tol": 1e-8},
    "gbt_regression": {"n_trees": 100, "max_depth": 3,
                       "learning_rate": 0.1, "min_leaf": 5},
    "gbt_classification": {"n_trees": 100, "max_depth": 3,
                           "learning_rate": 0.1, "min_leaf": 5},
}


@dataclass(frozen=True)
class LearnerSpec:
    """A learner kind plus hyperparameters (unset ones take defaults)."""

    kind: str
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ConfigError(
                f"unknown learner kind {self.kind!r}; expected one of {LEARNER_KINDS}")
        defaults = _DEFAULTS[self.kind]
        unknown = set(self.hyperparams) - set(defaults)
        if unknown:
            raise ConfigError(
                f"{self.kind}: unknown hyperparameters {sorted(unknown)}")
        params = {**defaults, **self.hyperparams}
        if params.get("lam", 0.0) < 0:
            raise ConfigError(f"{self.kind}: lam must be >= 0")
        if self.kind.startswith("gbt"):
            if params["n_trees"] < 1:
                raise ConfigError("gbt: n_trees must be >= 1")
            if params["max_depth"] < 1:
                raise ConfigError("gbt: max_depth must be >= 1")
            if not 0.0 < params["learning_rate"] <= 1.0:
                raise ConfigError("gbt: learning_rate must be in (0, 1]")
            if params["min_leaf"] < 1:
                raise ConfigError("gbt: min_leaf must be >= 1")
        if self.kind == "ridge_logistic":
            if params["max_iter"] < 1:
                raise ConfigError("ridge_logistic: max_iter must be >= 1")
            if params["tol"] <= 0:
                raise ConfigError("ridge_logistic: tol must be > 0")
        object.__setattr__(self, "hyperparams", params)

    @property
    def is_classifier(self) -> bool:
        return self.kind in ("ridge_logistic", "gbt_classification")


class FittedModel:
    """Base fitted model; predictions are deterministic given the model."""

    kind: str
    feature_dim: int
    n_classes: int  # 0 for regression, 2+ for classification
    degenerate: bool = False

    def _check_features(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.feature_dim:
            raise ValueError(
                f"{self.kind}: expected features with {self.feature_dim} "
                f"columns, got shape {x.shape}")
        return x

    def predict(self, x) -> np.ndarray:
        raise NotImplementedError


class ConstantModel(FittedModel):
    """Fallback for degenerate training targets (all equal)."""

    def __init__(self, kind, feature_dim, value, n_classes=0):
        self.kind = kind
        self.feature_dim = feature_dim
        self.n_classes = n_classes
        self.value = value
        self.degenerate = True

    def predict(self, x):
        x = self._check_features(x)
        if self.n_classes > 2:
            return np.tile(self.value, (x.shape[0], 1))
        return np.full(x.shape[0], self.value)


class RidgeModel(FittedModel):
    def __init__(self, feature_dim, intercept, coef):
        self.kind = "ridge_regression"
        self.feature_dim = feature_dim
        self.n_classes = 0
        self.intercept = intercept
        self.coef = coef

    def predict(self, x):
        x = self._check_features(x)
        return self.intercept + x @ self.coef


class LogisticModel(FittedModel):
    """Binary or one-vs-rest multi-class penalized logistic model."""

    def __init__(self, feature_dim, intercepts, coefs, n_classes):
        self.kind = "ridge_logistic"
        self.feature_dim = feature_dim
        self.n_classes = n_classes
        self.intercepts = intercepts  # (n_heads,)
        self.coefs = coefs            # (n_heads, q)

    def predict(self, x):
        x = self._check_features(x)
        raw = self.intercepts[None, :] + x @ self.coefs.T
        p = 1.0 / (1.0 + np.exp(-raw))
        if self.n_classes == 2:
            return p[:, 0]
        return p / p.sum(axis=1, keepdims=True)


class GbtModel(FittedModel):
    def __init__(self, kind, feature_dim, forests, n_classes, loss_paths):
        self.kind = kind
        self.feature_dim = feature_dim
        self.n_classes = n_classes
        self.forests = forests
        self.train_loss_paths = loss_paths

    def predict(self, x):
        x = self._check_features(x)
        if self.n_classes == 0:
            return self.forests[0].predict(x)
        if self.n_classes == 2:
            return self.forests[0].predict(x)
        p = np.column_stack([f.predict(x) for f in self.forests])
        return p / np.maximum(p.sum(axis=1, keepdims=True), 1e-300)


def _fit_ridge(x, y, lam):
    n, q = x.shape
    xt = np.column_stack([np.ones(n), x])
    gram = xt.T @ xt
    pen = np.eye(q + 1) * lam
    pen[0, 0] = 0.0  # intercept unpenalized
    coef = np.linalg.solve(gram + pen, xt.T @ y)
    return RidgeModel(q, float(coef[0]), coef[1:])


def _logistic_nll(eta, y, beta, lam):
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta)
                 + 0.5 * lam * beta[1:] @ beta[1:])


def _fit_logistic_binary(x, y, lam, max_iter, tol):
    """Damped Newton iterations for the L2-penalized logistic MLE."""
    n, q = x.shape
    xt = np.column_stack([np.ones(n), x])
    pen = np.eye(q + 1) * lam
    pen[0, 0] = 0.0
    beta = np.zeros(q + 1)
    eta = xt @ beta
    obj = _logistic_nll(eta, y, beta, lam)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = xt.T @ (p - y) + pen @ beta
        if np.linalg.norm(grad) <= tol:
            break
        w = np.maximum(p * (1.0 - p), 1e-10)
        hess = (xt * w[:, None]).T @ xt + pen
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        for _ in range(50):
            cand = beta - t * step
            eta_c = xt @ cand
            obj_c = _logistic_nll(eta_c, y, cand, lam)
            if obj_c <= obj:
                beta, eta, obj = cand, eta_c, obj_c
                break
            t *= 0.5
        else:
            break
    return float(beta[0]), beta[1:]


def fit(spec: LearnerSpec, features, targets, rng: SeededRng | None = None,
        n_classes: int | None = None) -> FittedModel:
    """Fit a nuisance learner.

    Classification targets must be labels in {0, ..., C-1}; pass
    ``n_classes`` explicitly when the training subset may miss a class.
    Degenerate targets (all identical) yield a constant model with a
    warning rather than an error.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be a 2-d matrix")
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ValueError("targets must be a vector matching the feature rows")
    n, q = x.shape
    if n < 2:
        raise ValueError("need at least 2 training rows")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    params = spec.hyperparams

    if spec.is_classifier:
        labels = y.astype(np.int64)
        if not np.all(labels == y):
            raise ValueError(f"{spec.kind}: targets must be integer class labels")
        if labels.min() < 0:
            raise ValueError(f"{spec.kind}: negative class label")
        c = int(n_classes) if n_classes is not None else int(labels.max()) + 1
        c = max(c, 2)
        if labels.max() >= c:
            raise ValueError(f"{spec.kind}: label {labels.max()} >= n_classes {c}")
    else:
        c = 0

    if np.all(y == y[0]):
        warnings.warn(f"{spec.kind}: degenerate targets, fitting a constant",
                      stacklevel=2)
        if c > 2:
            value = np.zeros(c)
            value[int(y[0])] = 1.0
        else:
            value = float(y[0])
        return ConstantModel(spec.kind, q, value, n_classes=c)

    if spec.kind == "ridge_regression":
        return _fit_ridge(x, y, params["lam"])

    if spec.kind == "ridge_logistic":
        heads = 1 if c == 2 else c
        intercepts = np.empty(heads)
        coefs = np.empty((heads, q))
        for head in range(heads):
            yy = (y == 1.0).astype(float) if c == 2 else (y == head).astype(float)
            intercepts[head], coefs[head] = _fit_logistic_binary(
                x, yy, params["lam"], params["max_iter"], params["tol"])
        return LogisticModel(q, intercepts, coefs, c)

    # boosted trees
    loss = "squared" if spec.kind == "gbt_regression" else "logistic"
    if spec.kind == "gbt_regression":
        targets_list = [y]
        c = 0
    elif c == 2:
        targets_list = [(y == 1.0).astype(float)]
    else:
        targets_list = [(y == head).astype(float) for head in range(c)]
    forests = []
    paths = []
    for yy in targets_list:
        if np.all(yy == yy[0]):
            # a class absent from this one-vs-rest subproblem: constant head
            forests.append(_ConstantForestStub(float(yy[0])))
            paths.append(None)
            continue
        forest = BoostedForest(loss, params["n_trees"], params["max_depth"],
                               params["learning_rate"], params["min_leaf"])
        forest.fit(x, yy)
        forests.append(forest)
        paths.append(forest.train_loss_path)
    return GbtModel(spec.kind, q, forests, c, paths)


class _ConstantForestStub:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def predict(self, x):
        return np.full(x.shape[0], self.value)


def predict(model: FittedModel, features) -> np.ndarray:
    """Predictions (or class posterior rows) for a fitted model."""
    return model.predict(features)


def clip_probability(p, eps: float) -> np.ndarray:
    """Clamp probabilities into [eps, 1-eps]."""
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must be in (0, 0.5)")
    return np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)
