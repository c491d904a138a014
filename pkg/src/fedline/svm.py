"""Linear soft-margin SVM trained by seeded per-sample stochastic subgradient descent.

One `svm_train` call does exactly `epochs_per_call` passes, which is the unit of
local work per federated round; the centralized baseline is a single call with a
large epoch count. Training is a pure function of (init, data, cfg).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import Dataset
from .errors import ContractError, TrainingError


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        object.__setattr__(self, "intercept", float(self.intercept))
        if not (np.isfinite(self.weights).all() and np.isfinite(self.intercept)):
            raise ContractError("model parameters must be finite")
        self.weights.setflags(write=False)

    @property
    def dim(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    eta0: float = 0.1
    decay: float = 1e-3
    epochs_per_call: int = 1
    seed: int = 0
    class_weights: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if self.C <= 0 or self.eta0 <= 0 or self.decay < 0:
            raise ContractError("C and eta0 must be > 0, decay >= 0")
        if self.epochs_per_call < 1:
            raise ContractError("epochs_per_call must be >= 1")
        if any(w <= 0 for w in self.class_weights):
            raise ContractError("class_weights must be > 0")


def zero_model(dim: int) -> LinearModel:
    return LinearModel(np.zeros(dim), 0.0)


def svm_objective(m: LinearModel, data: Dataset, cfg: SvmConfig) -> float:
    """Primal objective 0.5*||w||^2 + C * sum_i kappa_i * hinge_i."""
    y_signed = 2.0 * data.labels - 1.0
    kappa = np.where(data.labels == 1, cfg.class_weights[1], cfg.class_weights[0])
    margins = y_signed * (data.features @ m.weights + m.intercept)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * float(m.weights @ m.weights) + cfg.C * float((kappa * hinge).sum())


def svm_train(init: LinearModel, data: Dataset, cfg: SvmConfig) -> LinearModel:
    """Run epochs_per_call passes of seeded SGD on the regularized hinge loss."""
    x, y = data.features, data.labels
    if init.dim != x.shape[1]:
        raise ContractError(f"init dimension {init.dim} != feature count {x.shape[1]}")
    if np.isnan(x).any():
        raise ContractError("training data must have no missing values")
    if len(np.unique(y)) < 2:
        raise TrainingError("training data must contain both classes")
    n = len(y)
    y_signed = 2.0 * y - 1.0
    kappa = np.where(y == 1, cfg.class_weights[1], cfg.class_weights[0])
    rng = np.random.default_rng(cfg.seed)
    w = init.weights.copy()
    b = init.intercept
    step = 0
    for _ in range(cfg.epochs_per_call):
        for i in rng.permutation(n):
            eta = cfg.eta0 / (1.0 + step * cfg.decay)
            step += 1
            margin = y_signed[i] * (w @ x[i] + b)
            # per-sample subgradient of 0.5*||w||^2/n + C*kappa_i*hinge_i
            w *= 1.0 - eta / n
            if margin < 1.0:
                coef = eta * cfg.C * kappa[i] * y_signed[i]
                w += coef * x[i]
                b += coef
    return LinearModel(w, b)


def svm_score(m: LinearModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.dim:
        raise ContractError(f"feature vector dimension {x.shape[-1]} != model dimension {m.dim}")
    return float(m.weights @ x + m.intercept)


def svm_scores(m: LinearModel, data: Dataset) -> np.ndarray:
    if data.n_features != m.dim:
        raise ContractError(f"dataset width {data.n_features} != model dimension {m.dim}")
    return data.features @ m.weights + m.intercept


def svm_predict(m: LinearModel, x: np.ndarray) -> int:
    # score exactly 0 predicts the majority (qualified) class
    return 1 if svm_score(m, x) > 0 else 0


def svm_predict_dataset(m: LinearModel, data: Dataset) -> np.ndarray:
    return (svm_scores(m, data) > 0).astype(np.int64)


def save_model(m: LinearModel, feature_names: tuple[str, ...], path: str | Path) -> None:
    record = {"weights": [float(v) for v in m.weights],
              "intercept": m.intercept,
              "feature_names": list(feature_names)}
    Path(path).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> tuple[LinearModel, tuple[str, ...]]:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    return LinearModel(np.array(record["weights"]), record["intercept"]), tuple(record["feature_names"])
