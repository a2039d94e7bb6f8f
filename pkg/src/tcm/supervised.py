"""Supervised decision models and color baselines.

Threshold fitting and a small multinomial logistic regression cover the
label-trained variants; the average-color and color-over-time feature
extractors provide the non-clustered baselines. Everything here is
deterministic: the regression starts from zero weights (the objective is
convex) and runs plain full-batch gradient descent.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateLabels, SeriesTooShort
from .geometry import ChipStack


def _series_matrix(labeled: Sequence[tuple]) -> tuple[np.ndarray, np.ndarray]:
    rows = [np.asarray(getattr(s, "values", s), dtype=np.float64) for s, _ in labeled]
    lengths = {r.shape[0] for r in rows}
    if len(lengths) != 1:
        raise ValueError("all series must share one length")
    labels = np.array([int(l) for _, l in labeled])
    return np.stack(rows), labels


def threshold_candidates(values: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct observed values, plus one
    candidate below the minimum and one above the maximum."""
    v = np.unique(np.asarray(values, dtype=np.float64).ravel())
    mids = (v[:-1] + v[1:]) / 2.0
    return np.concatenate(([v[0] / 2.0], mids, [v[-1] + 1.0]))


def _crossing_predictions(series: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """(m, n) 1-based first-crossing indices for every candidate theta."""
    above = series[None, :, :] > thetas[:, None, None]
    idx = np.argmax(above, axis=2)
    fallback = series.shape[1] - 1
    return np.where(above.any(axis=2), idx, fallback) + 1


def fit_threshold(labeled_series: Sequence[tuple]) -> float:
    """Exhaustive threshold search maximizing exact-match accuracy.

    labeled_series holds (series, true_index) pairs with 1-based indices.
    Ties in accuracy go to the smallest candidate threshold.
    """
    if len(labeled_series) == 0:
        raise ValueError("need at least one labeled series")
    series, labels = _series_matrix(labeled_series)
    cands = threshold_candidates(series)
    preds = _crossing_predictions(series, cands)
    acc = (preds == labels[None, :]).mean(axis=1)
    return float(cands[int(np.argmax(acc))])


@dataclass(frozen=True)
class LogisticModel:
    """Multinomial logistic regression with standardized inputs."""

    n_classes: int
    weights: np.ndarray  # (C, dim)
    bias: np.ndarray  # (C,)
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    lam: float
    seed: int
    n_iter: int
    final_loss: float
    loss_history: tuple[float, ...] = ()


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _loss_and_grad(weights, bias, x, onehot, lam):
    """Cross-entropy + (lam/2)*||W||^2 and its gradients; bias unpenalized."""
    n = x.shape[0]
    probs = _softmax(x @ weights.T + bias)
    eps = 1e-300  # guards log of an exactly-zero probability
    loss = -np.log((probs * onehot).sum(axis=1) + eps).mean() + 0.5 * lam * (weights ** 2).sum()
    delta = (probs - onehot) / n
    return loss, delta.T @ x + lam * weights, delta.sum(axis=0)


def fit_lr(
    features: np.ndarray,
    labels: Sequence[int],
    n_classes: int | None = None,
    lam: float = 1e-3,
    iterations: int = 500,
    lr: float = 0.1,
    seed: int = 0,
) -> LogisticModel:
    """Full-batch gradient descent on standardized features from zero weights.

    labels are 0-based class indices. The seed is recorded for provenance only;
    the convex objective makes the zero start deterministic.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be 2-D")
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateLabels(f"need >= 2 distinct classes, got {classes.size}")
    c = int(n_classes) if n_classes is not None else int(y.max()) + 1
    if y.min() < 0 or y.max() >= c:
        raise ValueError("labels outside [0, n_classes)")

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    xs = (x - mean) / scale

    onehot = np.zeros((x.shape[0], c))
    onehot[np.arange(x.shape[0]), y] = 1.0

    weights = np.zeros((c, x.shape[1]))
    bias = np.zeros(c)
    losses = []
    for _ in range(iterations):
        loss, gw, gb = _loss_and_grad(weights, bias, xs, onehot, lam)
        losses.append(float(loss))
        weights -= lr * gw
        bias -= lr * gb
    final_loss, _, _ = _loss_and_grad(weights, bias, xs, onehot, lam)
    losses.append(float(final_loss))

    return LogisticModel(
        n_classes=c, weights=weights, bias=bias,
        feat_mean=mean, feat_scale=scale,
        lam=lam, seed=seed, n_iter=iterations,
        final_loss=float(final_loss), loss_history=tuple(losses),
    )


def model_to_dict(model: LogisticModel) -> dict:
    """JSON-ready form of a trained model (weights, scaling, config, seed)."""
    return {
        "n_classes": model.n_classes,
        "weights": model.weights.tolist(),
        "bias": model.bias.tolist(),
        "feat_mean": model.feat_mean.tolist(),
        "feat_scale": model.feat_scale.tolist(),
        "lam": model.lam,
        "seed": model.seed,
        "n_iter": model.n_iter,
        "final_loss": model.final_loss,
    }


def model_from_dict(payload: dict) -> LogisticModel:
    return LogisticModel(
        n_classes=int(payload["n_classes"]),
        weights=np.asarray(payload["weights"], dtype=np.float64),
        bias=np.asarray(payload["bias"], dtype=np.float64),
        feat_mean=np.asarray(payload["feat_mean"], dtype=np.float64),
        feat_scale=np.asarray(payload["feat_scale"], dtype=np.float64),
        lam=float(payload["lam"]),
        seed=int(payload["seed"]),
        n_iter=int(payload["n_iter"]),
        final_loss=float(payload["final_loss"]),
    )


def lr_probabilities(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    xs = (x - model.feat_mean) / model.feat_scale
    return _softmax(xs @ model.weights.T + model.bias)


def predict_lr(model: LogisticModel, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    return np.argmax(lr_probabilities(model, features), axis=1).astype(np.int64)


def avg_color_series(chips: ChipStack) -> np.ndarray:
    """Per-layer Euclidean distance between mean footprint and neighborhood color."""
    fp = chips.mask == 1
    nb = chips.mask == 0
    out = np.empty(chips.n_layers, dtype=np.float64)
    for t in range(chips.n_layers):
        layer = chips.imagery[t].astype(np.float64)
        out[t] = float(np.linalg.norm(layer[fp].mean(axis=0) - layer[nb].mean(axis=0)))
    return out


def color_over_time_features(chips: ChipStack) -> np.ndarray:
    """Distances between mean footprint colors of consecutive layers (T-1 values)."""
    if chips.n_layers < 2:
        raise SeriesTooShort("need at least two layers for color-over-time features")
    fp = chips.mask == 1
    means = np.stack([chips.imagery[t].astype(np.float64)[fp].mean(axis=0)
                      for t in range(chips.n_layers)])
    return np.linalg.norm(np.diff(means, axis=0), axis=1)


def mode_predictor(labels: Sequence[int]):
    """Constant predictor returning the most frequent label (ties -> smallest)."""
    if len(labels) == 0:
        raise ValueError("need at least one label")
    counts = Counter(int(l) for l in labels)
    best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    def predict(_ignored=None) -> int:
        return best

    predict.label = best
    return predict
