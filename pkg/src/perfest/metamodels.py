"""Meta-model regressors mapping feature profiles to performance in [0, 1].

Four small regressors are provided: k-nearest neighbors, a one-hidden-
layer MLP trained by full-batch gradient descent, a random forest of
variance-reduction regression trees, and gradient-boosted trees with
shrinkage. All are implemented directly on numpy so that gradients,
tree structure, and serialized state are fully inspectable and
deterministic given (spec, rows, seed).

Distance- and gradient-based learners (kNN, MLP) consume z-scored
profiles; trees are scale-invariant and consume raw profiles.
Predictions are clipped to [0, 1] since targets are F1 scores.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, ModelFormatError, ShapeError
from .features import FeatureKind
from .profile import FeatureProfile

MODEL_FORMAT = "perfest-metamodel/1"
MIN_LEAF = 2


class ModelKind(str, Enum):
    KNN = "knn"
    MLP = "mlp"
    RANDOM_FOREST = "random_forest"
    GBT = "gbt"


REQUIRED_HYPERPARAMS = {
    ModelKind.KNN: ("k",),
    ModelKind.MLP: ("hidden_width", "learning_rate", "epochs"),
    ModelKind.RANDOM_FOREST: ("max_depth", "n_trees", "sampling_ratio"),
    ModelKind.GBT: ("max_depth", "n_rounds", "learning_rate",
                    "sampling_ratio"),
}

DEFAULT_HYPERPARAMS = {
    ModelKind.KNN: {"k": 3},
    ModelKind.MLP: {"hidden_width": 64, "learning_rate": 1e-2,
                    "epochs": 2000},
    ModelKind.RANDOM_FOREST: {"max_depth": 10, "n_trees": 260,
                              "sampling_ratio": 0.8},
    ModelKind.GBT: {"max_depth": 4, "n_rounds": 200, "learning_rate": 0.1,
                    "sampling_ratio": 0.8},
}


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        merged = dict(DEFAULT_HYPERPARAMS[self.kind])
        merged.update(self.hyperparams)
        object.__setattr__(self, "hyperparams", merged)
        for name in REQUIRED_HYPERPARAMS[self.kind]:
            if name not in self.hyperparams:
                raise ConfigurationError(
                    f"{self.kind.value} requires hyperparameter {name!r}")


@dataclass(frozen=True)
class TrainingRow:
    profile: FeatureProfile
    target: float

    def __post_init__(self):
        if not (0.0 <= self.target <= 1.0):
            raise ValueError(f"target {self.target} outside [0, 1]")


@dataclass
class TrainedMetaModel:
    spec: ModelSpec
    seed: int
    dims: int
    kinds: tuple  # FeatureKind ordering the profiles were built with
    mean: np.ndarray  # standardization stats (identity for tree models)
    std: np.ndarray
    params: dict  # kind-specific learned state


# ---------------------------------------------------------------------------
# Regression tree (CART, variance reduction, exhaustive threshold scan)

class RegressionTree:
    """Depth-bounded binary regression tree stored as flat node arrays."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self):
        self.feature = []    # -1 for leaves
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def _add_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def fit(self, X, y, max_depth):
        root = self._add_node()
        stack = [(root, np.arange(X.shape[0]), 0)]
        while stack:
            node, idx, depth = stack.pop()
            yn = y[idx]
            self.value[node] = float(yn.mean())
            if depth >= max_depth or idx.shape[0] < 2 * MIN_LEAF:
                continue
            feat, thr = _best_split(X[idx], yn)
            if feat < 0:
                continue
            go_left = X[idx, feat] <= thr
            self.feature[node] = feat
            self.threshold[node] = thr
            li = self._add_node()
            ri = self._add_node()
            self.left[node] = li
            self.right[node] = ri
            stack.append((li, idx[go_left], depth + 1))
            stack.append((ri, idx[~go_left], depth + 1))
        return self

    def predict(self, X):
        X = np.atleast_2d(X)
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        value = np.asarray(self.value)
        node = np.zeros(X.shape[0], dtype=int)
        active = feature[node] >= 0
        while active.any():
            f = feature[node[active]]
            t = threshold[node[active]]
            rows = np.nonzero(active)[0]
            goes_left = X[rows, f] <= t
            node[rows] = np.where(goes_left, left[node[rows]],
                                  right[node[rows]])
            active = feature[node] >= 0
        return value[node]

    def to_obj(self):
        return {"feature": list(self.feature),
                "threshold": list(self.threshold),
                "left": list(self.left), "right": list(self.right),
                "value": list(self.value)}

    @classmethod
    def from_obj(cls, obj):
        tree = cls()
        tree.feature = [int(v) for v in obj["feature"]]
        tree.threshold = [float(v) for v in obj["threshold"]]
        tree.left = [int(v) for v in obj["left"]]
        tree.right = [int(v) for v in obj["right"]]
        tree.value = [float(v) for v in obj["value"]]
        return tree


def _best_split(X, y):
    """Best (feature, threshold) by variance reduction; (-1, 0.0) if none.

    Scans every boundary between consecutive sorted values of every
    feature; ties resolve to the smallest split position, then the
    lowest feature index.
    """
    n = X.shape[0]
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    ys = y[order]
    csum = np.cumsum(ys, axis=0)
    total = csum[-1, :]
    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    left_sum = csum[:-1, :]
    right_sum = total[None, :] - left_sum
    # maximizing sum-of-squares of child means == minimizing total SSE
    score = left_sum ** 2 / nl + right_sum ** 2 / nr
    valid = xs[:-1, :] < xs[1:, :]
    valid &= (nl >= MIN_LEAF) & (nr >= MIN_LEAF)
    score = np.where(valid, score, -np.inf)
    flat = int(np.argmax(score))
    if not np.isfinite(score.flat[flat]):
        return -1, 0.0
    row, col = divmod(flat, X.shape[1])
    thr = 0.5 * (xs[row, col] + xs[row + 1, col])
    return col, float(thr)


# ---------------------------------------------------------------------------
# MLP internals (exposed for gradient checking)

def mlp_forward(params, X):
    h = np.tanh(X @ params["W1"] + params["b1"])
    return h @ params["W2"] + params["b2"], h


def mlp_loss_and_grads(params, X, y):
    """Mean squared error and its analytic gradients w.r.t. all weights."""
    yhat, h = mlp_forward(params, X)
    resid = yhat - y
    n = X.shape[0]
    loss = float(np.mean(resid ** 2))
    g = 2.0 * resid / n
    grads = {
        "W2": h.T @ g,
        "b2": float(np.sum(g)),
    }
    gh = np.outer(g, params["W2"])
    gz = gh * (1.0 - h ** 2)
    grads["W1"] = X.T @ gz
    grads["b1"] = gz.sum(axis=0)
    return loss, grads


def _train_mlp(X, y, hp, rng):
    n, dim = X.shape
    width = int(hp["hidden_width"])
    lr = float(hp["learning_rate"])
    epochs = int(hp["epochs"])
    params = {
        "W1": rng.normal(0.0, 1.0 / math.sqrt(dim), size=(dim, width)),
        "b1": np.zeros(width),
        # zero output weights start predictions at the target mean, which
        # makes constant-target training an exact fixed point
        "W2": np.zeros(width),
        "b2": float(np.mean(y)),
    }
    prev = math.inf
    for _ in range(epochs):
        loss, grads = mlp_loss_and_grads(params, X, y)
        if prev - loss < 1e-8:
            break
        prev = loss
        params["W1"] -= lr * grads["W1"]
        params["b1"] -= lr * grads["b1"]
        params["W2"] -= lr * grads["W2"]
        params["b2"] -= lr * grads["b2"]
    return params


# ---------------------------------------------------------------------------
# Training / prediction

def _rows_to_matrix(rows):
    rows = list(rows)
    if not rows:
        raise ValueError("cannot train on zero rows")
    first = rows[0].profile
    for r in rows:
        if r.profile.dims != first.dims or r.profile.kinds != first.kinds:
            raise ShapeError(
                f"inconsistent profiles: ({r.profile.dims}, "
                f"{r.profile.kinds}) vs ({first.dims}, {first.kinds})")
    X = np.array([r.profile.vector for r in rows], dtype=float)
    y = np.array([r.target for r in rows], dtype=float)
    return X, y, first.dims, first.kinds


def _rng(seed, *salt):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0x7FFFFFFF, *salt]))


def train(spec: ModelSpec, rows, seed: int) -> TrainedMetaModel:
    """Fit the requested meta-model; deterministic given (spec, rows, seed)."""
    X, y, dims, kinds = _rows_to_matrix(rows)
    hp = spec.hyperparams
    if spec.kind in (ModelKind.KNN, ModelKind.MLP):
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
    else:
        mean = np.zeros(X.shape[1])
        std = np.ones(X.shape[1])
    Xs = (X - mean) / std

    if spec.kind is ModelKind.KNN:
        params = {"X": Xs, "y": y, "k": int(hp["k"])}
    elif spec.kind is ModelKind.MLP:
        params = _train_mlp(Xs, y, hp, _rng(seed, 1))
    elif spec.kind is ModelKind.RANDOM_FOREST:
        n = X.shape[0]
        size = max(1, round(float(hp["sampling_ratio"]) * n))
        trees = []
        for t in range(int(hp["n_trees"])):
            rng = _rng(seed, 2, t)
            idx = rng.integers(0, n, size=size)
            trees.append(RegressionTree().fit(X[idx], y[idx],
                                              int(hp["max_depth"])))
        params = {"trees": trees}
    elif spec.kind is ModelKind.GBT:
        n = X.shape[0]
        lr = float(hp["learning_rate"])
        size = max(1, min(n, round(float(hp["sampling_ratio"]) * n)))
        base = float(np.mean(y))
        pred = np.full(n, base)
        trees = []
        scales = []
        for t in range(int(hp["n_rounds"])):
            rng = _rng(seed, 3, t)
            idx = rng.choice(n, size=size, replace=False)
            resid = y - pred
            tree = RegressionTree().fit(X[idx], resid[idx],
                                        int(hp["max_depth"]))
            h = tree.predict(X)
            hh = float(h @ h)
            if hh == 0.0:
                continue
            # least-squares step length keeps the training MSE
            # non-increasing even when the tree was fit on a subsample
            c = float(resid @ h) / hh
            scale = lr * c
            pred = pred + scale * h
            trees.append(tree)
            scales.append(scale)
        params = {"base": base, "trees": trees, "scales": scales}
    else:  # pragma: no cover
        raise ConfigurationError(f"unknown model kind {spec.kind!r}")

    return TrainedMetaModel(spec=spec, seed=int(seed), dims=dims,
                            kinds=tuple(kinds), mean=mean, std=std,
                            params=params)


def predict_many(model: TrainedMetaModel, profiles) -> np.ndarray:
    """Vectorized prediction over a batch of profiles, clipped to [0, 1]."""
    profiles = list(profiles)
    for pr in profiles:
        if pr.dims != model.dims or tuple(pr.kinds) != tuple(model.kinds):
            raise ShapeError(
                f"profile shape ({pr.dims}, {pr.kinds}) does not match "
                f"model ({model.dims}, {model.kinds})")
    X = np.array([pr.vector for pr in profiles], dtype=float)
    Xs = (X - model.mean) / model.std
    kind = model.spec.kind
    if kind is ModelKind.KNN:
        Xtr = model.params["X"]
        k = min(model.params["k"], Xtr.shape[0])
        d2 = ((Xs ** 2).sum(axis=1)[:, None]
              + (Xtr ** 2).sum(axis=1)[None, :] - 2.0 * Xs @ Xtr.T)
        # stable argsort breaks distance ties by training-row index
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out = model.params["y"][nearest].mean(axis=1)
    elif kind is ModelKind.MLP:
        out, _ = mlp_forward(model.params, Xs)
    elif kind is ModelKind.RANDOM_FOREST:
        trees = model.params["trees"]
        out = np.mean([t.predict(X) for t in trees], axis=0)
    else:  # GBT
        out = np.full(X.shape[0], model.params["base"])
        for tree, scale in zip(model.params["trees"],
                               model.params["scales"]):
            out = out + scale * tree.predict(X)
    return np.clip(out, 0.0, 1.0)


def predict(model: TrainedMetaModel, profile: FeatureProfile) -> float:
    return float(predict_many(model, [profile])[0])


def gbt_training_mse_curve(model: TrainedMetaModel, rows):
    """Training MSE after each boosting round (round 0 = base score)."""
    if model.spec.kind is not ModelKind.GBT:
        raise ConfigurationError("MSE curve is defined for GBT models only")
    X, y, _, _ = _rows_to_matrix(rows)
    pred = np.full(X.shape[0], model.params["base"])
    curve = [float(np.mean((y - pred) ** 2))]
    for tree, scale in zip(model.params["trees"], model.params["scales"]):
        pred = pred + scale * tree.predict(X)
        curve.append(float(np.mean((y - pred) ** 2)))
    return curve


# ---------------------------------------------------------------------------
# Grid search

def grid_search(kind, grid, rows, folds: int, seed: int) -> ModelSpec:
    """Full-Cartesian hyperparameter search by cross-validated MAE.

    Ties break by grid enumeration order (itertools.product over the
    grid's insertion order).
    """
    from .evaluation import kfold_split  # local import avoids a cycle

    kind = ModelKind(kind)
    if not grid:
        raise ConfigurationError("grid must be non-empty")
    for name, values in grid.items():
        if not list(values):
            raise ConfigurationError(f"grid axis {name!r} is empty")
    rows = list(rows)
    if folds < 2:
        raise ConfigurationError("folds must be >= 2")
    if len(rows) < folds:
        raise ConfigurationError(
            f"{len(rows)} rows cannot be split into {folds} folds")
    names = list(grid.keys())
    splits = kfold_split(len(rows), folds, seed)
    best_spec = None
    best_mae = math.inf
    for combo in itertools.product(*(grid[n] for n in names)):
        spec = ModelSpec(kind=kind, hyperparams=dict(zip(names, combo)))
        errors = []
        for train_idx, test_idx in splits:
            model = train(spec, [rows[i] for i in train_idx], seed)
            preds = predict_many(model, [rows[i].profile for i in test_idx])
            truth = np.array([rows[i].target for i in test_idx])
            errors.append(float(np.mean(np.abs(preds - truth))))
        cv_mae = float(np.mean(errors))
        if cv_mae < best_mae:
            best_mae = cv_mae
            best_spec = spec
    return best_spec


# ---------------------------------------------------------------------------
# Serialization

def _params_to_obj(model: TrainedMetaModel):
    kind = model.spec.kind
    p = model.params
    if kind is ModelKind.KNN:
        return {"X": p["X"].tolist(), "y": p["y"].tolist(), "k": p["k"]}
    if kind is ModelKind.MLP:
        return {"W1": p["W1"].tolist(), "b1": p["b1"].tolist(),
                "W2": p["W2"].tolist(), "b2": p["b2"]}
    if kind is ModelKind.RANDOM_FOREST:
        return {"trees": [t.to_obj() for t in p["trees"]]}
    return {"base": p["base"], "scales": list(p["scales"]),
            "trees": [t.to_obj() for t in p["trees"]]}


def _params_from_obj(kind, obj):
    if kind is ModelKind.KNN:
        return {"X": np.array(obj["X"], dtype=float),
                "y": np.array(obj["y"], dtype=float), "k": int(obj["k"])}
    if kind is ModelKind.MLP:
        return {"W1": np.array(obj["W1"], dtype=float),
                "b1": np.array(obj["b1"], dtype=float),
                "W2": np.array(obj["W2"], dtype=float),
                "b2": float(obj["b2"])}
    if kind is ModelKind.RANDOM_FOREST:
        return {"trees": [RegressionTree.from_obj(t) for t in obj["trees"]]}
    return {"base": float(obj["base"]),
            "scales": [float(s) for s in obj["scales"]],
            "trees": [RegressionTree.from_obj(t) for t in obj["trees"]]}


def save_model(model: TrainedMetaModel, path) -> None:
    """Write a versioned, self-describing JSON model file."""
    if not path:
        raise OSError("empty model path")
    obj = {
        "format": MODEL_FORMAT,
        "kind": model.spec.kind.value,
        "hyperparams": model.spec.hyperparams,
        "seed": model.seed,
        "dims": model.dims,
        "kinds": [k.value for k in model.kinds],
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "params": _params_to_obj(model),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, sort_keys=True)


def load_model(path) -> TrainedMetaModel:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"corrupt model file: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise ModelFormatError(
            f"incompatible model format {obj.get('format') if isinstance(obj, dict) else obj!r}; "
            f"expected {MODEL_FORMAT}")
    kind = ModelKind(obj["kind"])
    spec = ModelSpec(kind=kind, hyperparams=obj["hyperparams"])
    return TrainedMetaModel(
        spec=spec, seed=int(obj["seed"]), dims=int(obj["dims"]),
        kinds=tuple(FeatureKind(k) for k in obj["kinds"]),
        mean=np.array(obj["mean"], dtype=float),
        std=np.array(obj["std"], dtype=float),
        params=_params_from_obj(kind, obj["params"]))
