"""L2-regularized logistic regression over feature vectors.

Objective: mean logistic loss + lambda * ||w||^2 (bias unregularized).
Optimization is deterministic quasi-Newton (L-BFGS) from w = 0, b = 0,
stopping when the gradient infinity-norm falls below 1e-6 or after
10,000 iterations, so retraining on identical data reproduces the model
bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import CatalogMismatch, DegenerateLabels, InvalidK
from .features import FeatureVector, NormalizationParams

GRAD_TOL = 1e-6
MAX_ITER = 10_000

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LabeledExample:
    features: FeatureVector
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class RegressionModel:
    weights: np.ndarray
    bias: float
    normalization: NormalizationParams
    selected_indices: tuple[int, ...]
    lam: float
    catalog_version: str
    pools_fingerprint: str = ""

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))


def sigmoid(z):
    return expit(np.asarray(z, dtype=np.float64))


def loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float):
    """Regularized mean logistic loss and its analytic gradient."""
    n = X.shape[0]
    z = X @ w + b
    # log(1 + exp(z)) - y*z, numerically stable
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + lam * (w @ w))
    residual = sigmoid(z) - y
    grad_w = X.T @ residual / n + 2.0 * lam * w
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def train(examples: list[LabeledExample], lam: float) -> RegressionModel:
    """Fit weights on normalized labeled examples."""
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not examples:
        raise DegenerateLabels("no training examples")
    labels = {e.label for e in examples}
    if labels != {0, 1}:
        raise DegenerateLabels(f"need both classes, got labels {sorted(labels)}")
    versions = {e.features.catalog_version for e in examples}
    if len(versions) != 1:
        raise CatalogMismatch(f"mixed catalog versions in training data: {sorted(versions)}")

    X = np.stack([e.features.values for e in examples])
    y = np.array([e.label for e in examples], dtype=np.float64)
    d = X.shape[1]

    def objective(params):
        loss, gw, gb = loss_and_grad(params[:-1], params[-1], X, y, lam)
        return loss, np.concatenate([gw, [gb]])

    result = minimize(
        objective,
        x0=np.zeros(d + 1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": MAX_ITER, "gtol": GRAD_TOL, "ftol": 1e-18, "maxfun": 10 * MAX_ITER},
    )
    w = result.x[:-1]
    b = float(result.x[-1])
    version = examples[0].features.catalog_version
    norm = NormalizationParams(
        means=np.zeros(d), stds=np.ones(d), catalog_version=version
    )
    order = _order_by_magnitude(w)
    return RegressionModel(
        weights=w,
        bias=b,
        normalization=norm,
        selected_indices=tuple(order),
        lam=lam,
        catalog_version=version,
    )


def _order_by_magnitude(w: np.ndarray) -> list[int]:
    """Indices sorted by descending |w|, ties broken by lower index."""
    return sorted(range(len(w)), key=lambda i: (-abs(w[i]), i))


def select_top_k(model: RegressionModel, k: int) -> RegressionModel:
    """Restrict scoring to the k largest-magnitude coefficients (no refit)."""
    if k < 1 or k > len(model.weights):
        raise InvalidK(f"k must be in [1, {len(model.weights)}], got {k}")
    order = _order_by_magnitude(model.weights)
    return replace(model, selected_indices=tuple(order[:k]))


def predict_probability(model: RegressionModel, vector: FeatureVector) -> float:
    """sigma(w . v + b) on a vector normalized with the model's params."""
    if vector.catalog_version != model.catalog_version:
        raise CatalogMismatch(
            f"vector catalog {vector.catalog_version!r} != model catalog {model.catalog_version!r}"
        )
    return float(sigmoid(model.weights @ vector.values + model.bias))


def model_to_dict(model: RegressionModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "catalog_version": model.catalog_version,
        "lambda": model.lam,
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "selected_indices": list(model.selected_indices),
        "normalization": {
            "means": model.normalization.means.tolist(),
            "stds": model.normalization.stds.tolist(),
        },
        "pools_fingerprint": model.pools_fingerprint,
    }


def model_to_bytes(model: RegressionModel) -> bytes:
    return (json.dumps(model_to_dict(model), sort_keys=True, ensure_ascii=False) + "\n").encode(
        "utf-8"
    )


def save_model(model: RegressionModel, path: Path | str) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def model_from_dict(raw: dict) -> RegressionModel:
    if raw.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema: {raw.get('schema_version')!r}")
    norm = NormalizationParams(
        means=np.array(raw["normalization"]["means"], dtype=np.float64),
        stds=np.array(raw["normalization"]["stds"], dtype=np.float64),
        catalog_version=raw["catalog_version"],
    )
    return RegressionModel(
        weights=np.array(raw["weights"], dtype=np.float64),
        bias=float(raw["bias"]),
        normalization=norm,
        selected_indices=tuple(raw["selected_indices"]),
        lam=float(raw["lambda"]),
        catalog_version=raw["catalog_version"],
        pools_fingerprint=raw.get("pools_fingerprint", ""),
    )


def load_model(path: Path | str) -> RegressionModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
