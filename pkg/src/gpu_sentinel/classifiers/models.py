"""The five model families and shared prediction / evaluation.

All trainers are pure functions of (dataset, hyperparameters, seed). Every
model carries the standardizer it was trained behind, so callers always pass
raw feature vectors.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from ..features import Dataset, FeatureVector, Scaler, fit_scaler
from .metrics import Metrics, metrics_from_labels
from .tree import grow, grow_classifier

KINDS = ("logreg", "tree", "forest", "gbm", "mlp")
REPORT_KINDS = ("forest", "gbm", "logreg", "mlp")
DISPLAY_NAMES = {
    "forest": "Random Forest",
    "gbm": "Gradient Boosting",
    "logreg": "Logistic Regression",
    "mlp": "Neural Network",
    "tree": "Decision Tree",
}
DEFAULT_THRESHOLD = 0.5


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LogRegParams:
    learning_rate: float = 0.1
    epochs: int = 500
    l2: float = 1e-4


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_samples_leaf: int = 2


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 50
    max_depth: int = 8
    max_features: int | None = None  # None means ceil(sqrt(d))
    bootstrap: bool = True
    min_samples_leaf: int = 1


@dataclass(frozen=True)
class GBMParams:
    rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1


@dataclass(frozen=True)
class MLPParams:
    hidden: tuple[int, int] = (16, 8)
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32

    def __post_init__(self):
        if len(self.hidden) != 2:
            raise ValueError("the network has exactly two hidden layers")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


HYPERPARAMS = {
    "logreg": LogRegParams,
    "tree": TreeParams,
    "forest": ForestParams,
    "gbm": GBMParams,
    "mlp": MLPParams,
}


def _check_positive(hyper) -> None:
    for key, value in asdict(hyper).items():
        if value is None or isinstance(value, bool):
            continue
        items = value if isinstance(value, (tuple, list)) else [value]
        # zero epochs / rounds is allowed and yields the initial model
        floor_ok = (lambda v: v >= 0) if key in ("epochs", "rounds") else (lambda v: v > 0)
        if not all(floor_ok(v) for v in items):
            raise ValueError(f"hyperparameter {key} must be positive, got {value}")


def default_hyperparams(kind: str):
    try:
        return HYPERPARAMS[kind]()
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None


@dataclass
class Model:
    kind: str
    params: dict[str, Any]
    feature_names: tuple[str, ...]
    hyper: Any
    scaler: Scaler | None = None
    training_meta: dict[str, Any] = field(default_factory=dict)
    # per-epoch (or per-round) training loss; not serialized
    history: list[float] = field(default_factory=list, compare=False, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


# -- numerics -------------------------------------------------------------

def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log_loss_from_logits(z, y) -> float:
    """Mean binary cross-entropy computed from logits."""
    z = np.asarray(z, dtype=float)
    return float(np.mean(np.logaddexp(0.0, z) - np.asarray(y, dtype=float) * z))


def fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(y, dtype="<i8").tobytes())
    return h.hexdigest()[:16]


def _training_arrays(train: Dataset, standardize: bool):
    X, y = train.X, train.y
    if len(y) == 0:
        raise ValueError("empty training set")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("training rows must be labeled 0 or 1")
    scaler = train.scaler
    if scaler is None and standardize:
        scaler = fit_scaler(X)
    Xs = scaler.apply(X) if scaler is not None else X
    return X, Xs, y, scaler


def _meta(train: Dataset, X, y, seed) -> dict[str, Any]:
    meta = {"seed": seed, "dataset_fingerprint": fingerprint(X, y), "n_rows": int(len(y))}
    for key in ("width", "stride"):
        if key in train.meta:
            meta[f"window_{key}"] = int(train.meta[key])
    return meta


# -- logistic regression --------------------------------------------------

def train_logreg(train: Dataset, hyper: LogRegParams | None = None, seed: int = 42) -> Model:
    """L2-regularised logistic regression by full-batch gradient descent from
    zero weights. ``seed`` is recorded only; training is deterministic."""
    hyper = hyper or LogRegParams()
    _check_positive(hyper)
    X, Xs, y, scaler = _training_arrays(train, standardize=True)
    n, d = Xs.shape
    w = np.zeros(d)
    b = 0.0
    history = []
    for _ in range(hyper.epochs):
        z = Xs @ w + b
        err = sigmoid(z) - y
        w = w - hyper.learning_rate * (Xs.T @ err / n + hyper.l2 * w)
        b = b - hyper.learning_rate * float(err.mean())
        loss = log_loss_from_logits(Xs @ w + b, y) + 0.5 * hyper.l2 * float(w @ w)
        if not math.isfinite(loss):
            raise TrainingError(
                f"logistic loss diverged (learning rate {hyper.learning_rate}); "
                "try a smaller learning rate"
            )
        history.append(loss)
    return Model("logreg", {"weights": w, "bias": b}, train.feature_names, hyper,
                 scaler, _meta(train, X, y, seed), history)


# -- trees ----------------------------------------------------------------

def train_tree(train: Dataset, hyper: TreeParams | None = None, seed: int = 42) -> Model:
    hyper = hyper or TreeParams()
    _check_positive(hyper)
    X, Xs, y, scaler = _training_arrays(train, standardize=False)
    tree = grow_classifier(Xs, y, hyper.max_depth, hyper.min_samples_leaf)
    return Model("tree", {"trees": [tree]}, train.feature_names, hyper, scaler,
                 _meta(train, X, y, seed))


def train_forest(train: Dataset, hyper: ForestParams | None = None, seed: int = 42) -> Model:
    hyper = hyper or ForestParams()
    _check_positive(hyper)
    X, Xs, y, scaler = _training_arrays(train, standardize=False)
    n, d = Xs.shape
    m = hyper.max_features or math.ceil(math.sqrt(d))
    m = min(m, d)
    tree_seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=hyper.n_trees)
    trees = []
    for ts in tree_seeds:
        rng = np.random.default_rng(int(ts))
        rows = rng.integers(0, n, size=n) if hyper.bootstrap else np.arange(n)
        if m < d:
            def sampler(rng=rng):
                return np.sort(rng.choice(d, size=m, replace=False))
        else:
            sampler = None
        trees.append(grow_classifier(Xs[rows], y[rows], hyper.max_depth,
                                     hyper.min_samples_leaf, sampler))
    return Model("forest", {"trees": trees}, train.feature_names, hyper, scaler,
                 _meta(train, X, y, seed))


# -- gradient boosting ----------------------------------------------------

def _newton_leaf(residual: np.ndarray, hess: np.ndarray):
    def leaf(idx: np.ndarray) -> float:
        return float(residual[idx].sum() / max(hess[idx].sum(), 1e-12))
    return leaf


def train_gbm(train: Dataset, hyper: GBMParams | None = None, seed: int = 42) -> Model:
    """Logistic-loss boosting. Each round fits a regression tree to the
    residuals ``y - p`` and sets leaf values by one Newton step."""
    hyper = hyper or GBMParams()
    _check_positive(hyper)
    X, Xs, y, scaler = _training_arrays(train, standardize=False)
    p0 = float(y.mean())
    if p0 <= 0.0 or p0 >= 1.0:
        raise TrainingError("degenerate class balance: training set has a single class")
    f0 = math.log(p0 / (1.0 - p0))
    F = np.full(len(y), f0)
    trees = []
    history = [log_loss_from_logits(F, y)]
    for _ in range(hyper.rounds):
        p = sigmoid(F)
        residual = y - p
        hess = p * (1.0 - p)
        tree = grow(
            Xs, residual,
            max_depth=hyper.max_depth,
            min_leaf=hyper.min_samples_leaf,
            criterion="mse",
            leaf_value=_newton_leaf(residual, hess),
            is_pure=lambda idx: bool(np.ptp(residual[idx]) == 0.0),
        )
        trees.append(tree)
        F = F + hyper.learning_rate * tree.predict(Xs)
        history.append(log_loss_from_logits(F, y))
    return Model("gbm", {"f0": f0, "learning_rate": hyper.learning_rate, "trees": trees},
                 train.feature_names, hyper, scaler, _meta(train, X, y, seed), history)


# -- two-hidden-layer network ---------------------------------------------

def init_mlp(d: int, hidden: tuple[int, int], rng: np.random.Generator) -> list[np.ndarray]:
    """``[W1, b1, W2, b2, W3, b3]`` with Glorot-uniform weights, zero biases."""
    sizes = [d, hidden[0], hidden[1], 1]
    params = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def mlp_logits(params: list[np.ndarray], X: np.ndarray) -> np.ndarray:
    W1, b1, W2, b2, W3, b3 = params
    h1 = np.maximum(X @ W1 + b1, 0.0)
    h2 = np.maximum(h1 @ W2 + b2, 0.0)
    return (h2 @ W3 + b3)[..., 0]


def mlp_loss_and_grads(params: list[np.ndarray], X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient with respect to every parameter."""
    W1, b1, W2, b2, W3, b3 = params
    X = np.atleast_2d(X)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    a1 = X @ W1 + b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ W2 + b2
    h2 = np.maximum(a2, 0.0)
    z = (h2 @ W3 + b3)[:, 0]
    loss = log_loss_from_logits(z, y)

    dz = ((sigmoid(z) - y) / n)[:, None]
    gW3 = h2.T @ dz
    gb3 = dz.sum(axis=0)
    da2 = (dz @ W3.T) * (a2 > 0)
    gW2 = h1.T @ da2
    gb2 = da2.sum(axis=0)
    da1 = (da2 @ W2.T) * (a1 > 0)
    gW1 = X.T @ da1
    gb1 = da1.sum(axis=0)
    return loss, [gW1, gb1, gW2, gb2, gW3, gb3]


def train_mlp(train: Dataset, hyper: MLPParams | None = None, seed: int = 42) -> Model:
    hyper = hyper or MLPParams()
    _check_positive(hyper)
    X, Xs, y, scaler = _training_arrays(train, standardize=True)
    n, d = Xs.shape
    rng = np.random.default_rng(seed)
    params = init_mlp(d, hyper.hidden, rng)
    history = []
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            _, grads = mlp_loss_and_grads(params, Xs[batch], y[batch])
            params = [p - hyper.learning_rate * g for p, g in zip(params, grads)]
        loss = log_loss_from_logits(mlp_logits(params, Xs), y)
        if not math.isfinite(loss):
            raise TrainingError("network loss is not finite; try a smaller learning rate")
        history.append(loss)
    return Model("mlp", {"layers": params}, train.feature_names, hyper, scaler,
                 _meta(train, X, y, seed), history)


TRAINERS = {
    "logreg": train_logreg,
    "tree": train_tree,
    "forest": train_forest,
    "gbm": train_gbm,
    "mlp": train_mlp,
}


def train(kind: str, dataset: Dataset, hyper=None, seed: int = 42) -> Model:
    if kind not in TRAINERS:
        raise ValueError(f"unknown model kind {kind!r}")
    hyper = hyper or default_hyperparams(kind)
    return TRAINERS[kind](dataset, hyper, seed)


# -- prediction -----------------------------------------------------------

def _score_standardized(model: Model, x: np.ndarray) -> float:
    kind, p = model.kind, model.params
    if kind == "logreg":
        return float(sigmoid(float(x @ p["weights"]) + p["bias"]))
    if kind in ("tree", "forest"):
        return float(np.mean([t.predict_one(x) for t in p["trees"]]))
    if kind == "gbm":
        F = p["f0"]
        for t in p["trees"]:
            F += p["learning_rate"] * t.predict_one(x)
        return float(sigmoid(F))
    if kind == "mlp":
        return float(sigmoid(float(mlp_logits(p["layers"], x))))
    raise ValueError(f"unknown model kind {kind!r}")


def predict_score(model: Model, vector) -> float:
    x = vector.values if isinstance(vector, FeatureVector) else vector
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,):
        raise ValueError(
            f"dimension mismatch: model expects {model.n_features} features, got {x.size}"
        )
    if model.scaler is not None:
        x = model.scaler.apply(x)
    return _score_standardized(model, x)


def predict_label(model: Model, vector, threshold: float = DEFAULT_THRESHOLD) -> int:
    return int(predict_score(model, vector) >= threshold)


def predict_scores(model: Model, X) -> np.ndarray:
    """Row-by-row scores; identical to calling :func:`predict_score` per row."""
    return np.array([predict_score(model, row) for row in np.atleast_2d(X)])


def evaluate(model: Model, test: Dataset, threshold: float = DEFAULT_THRESHOLD) -> Metrics:
    if len(test) == 0:
        raise ValueError("empty test set")
    scores = predict_scores(model, test.X)
    return metrics_from_labels(test.y, (scores >= threshold).astype(int))
