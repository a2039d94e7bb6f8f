"""Pixel features and k-means clustering of a single image layer.

The clusterer is written in-house rather than delegated to a library so that
fits are bit-identical across runs and across worker counts: seeded greedy
initialization, Lloyd updates with a fixed tie-break (lowest centroid index),
and single-threaded distance math that takes the same evaluation path for a
given input shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FeatureDimMismatch, TooFewPixels

FEATURE_MODES = ("spectral", "spectral_window")


@dataclass(frozen=True)
class PixelFeatureConfig:
    """How a pixel becomes a feature vector.

    mode "spectral" uses the pixel's own band values; "spectral_window"
    concatenates the band values of the (2*window+1)^2 neighborhood with
    edge replication at borders.
    """

    mode: str = "spectral"
    window: int = 1

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}")
        if self.mode == "spectral_window" and self.window < 1:
            raise ValueError("window half-size must be >= 1")

    def dim(self, channels: int) -> int:
        if self.mode == "spectral":
            return channels
        side = 2 * self.window + 1
        return channels * side * side


@dataclass(frozen=True)
class ClusterModel:
    """Fitted k-means centroids over pixel features of one image layer."""

    k: int
    centroids: np.ndarray  # (k, dim) float64
    feature_config: PixelFeatureConfig
    seed: int
    n_iter: int = 0
    inertia: float = float("nan")

    def __post_init__(self):
        if self.centroids.ndim != 2 or self.centroids.shape[0] != self.k:
            raise ValueError(f"expected {self.k} centroids, got {self.centroids.shape}")
        if not np.isfinite(self.centroids).all():
            raise ValueError("centroids must be finite")


def extract_features(image: np.ndarray, config: PixelFeatureConfig) -> np.ndarray:
    """Row-major (h*w, dim) float matrix of per-pixel features."""
    image = np.asarray(image)
    if image.ndim != 3 or image.size == 0:
        raise ValueError(f"image must be a nonempty (h, w, c) array, got {image.shape}")
    h, w, c = image.shape
    pixels = image.astype(np.float64, copy=False)
    if config.mode == "spectral":
        return pixels.reshape(h * w, c).astype(np.float64)
    wh = config.window
    padded = np.pad(pixels, ((wh, wh), (wh, wh), (0, 0)), mode="edge")
    blocks = [
        padded[dy : dy + h, dx : dx + w, :]
        for dy in range(2 * wh + 1)
        for dx in range(2 * wh + 1)
    ]
    return np.concatenate(blocks, axis=2).reshape(h * w, config.dim(c)).astype(np.float64)


def _sqdist_to_point(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = points - center
    return np.einsum("ij,ij->i", diff, diff)


def _row_norms(points: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", points, points)


def _sqdist(points: np.ndarray, centroids: np.ndarray,
            point_norms: Optional[np.ndarray] = None) -> np.ndarray:
    """(n, k) squared Euclidean distances via the norm expansion.

    Fixed input shapes give bit-identical results on a machine regardless of
    caller threading. Rounding can push tiny values negative; they are clamped.
    """
    if point_norms is None:
        point_norms = _row_norms(points)
    cross = points @ centroids.T
    dist = point_norms[:, None] + _row_norms(centroids)[None, :] - 2.0 * cross
    return np.maximum(dist, 0.0, out=dist)


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = _sqdist_to_point(points, centroids[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centroids[j] = points[pick]
        np.minimum(closest, _sqdist_to_point(points, centroids[j]), out=closest)
    return centroids


def fit_kmeans(
    features: np.ndarray,
    k: int,
    seed: int,
    feature_config: Optional[PixelFeatureConfig] = None,
    max_iter: int = 50,
    tol: float = 1e-4,
) -> ClusterModel:
    """Lloyd's algorithm with seeded greedy (D^2-weighted) initialization.

    Iterates until the largest centroid movement drops below tol or max_iter
    passes. Clusters that empty out are reseeded to the points currently
    farthest from their assigned centroid.
    """
    x = np.ascontiguousarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise TooFewPixels(f"{n} feature rows < k={k}")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(x, k, rng)
    norms = _row_norms(x)

    prev_inertia = np.inf
    labels = np.zeros(n, dtype=np.int64)
    inertia = 0.0
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        dist = _sqdist(x, centroids, norms)
        labels = np.argmin(dist, axis=1)  # ties -> lowest index
        point_d = dist[np.arange(n), labels]
        inertia = float(point_d.sum())
        # Lloyd never increases inertia; reseeding moves only empty centroids.
        assert inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12, "inertia increased"
        prev_inertia = inertia

        counts = np.bincount(labels, minlength=k).astype(np.float64)
        sums = np.stack(
            [np.bincount(labels, weights=x[:, dim], minlength=k) for dim in range(x.shape[1])],
            axis=1,
        )
        empty = np.nonzero(counts == 0)[0]
        if empty.size:
            order = np.argsort(-point_d, kind="stable")
            for slot, j in enumerate(empty):
                far = order[slot]
                sums[j] = x[far]
                counts[j] = 1.0
        new_centroids = sums / counts[:, None]

        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break

    return ClusterModel(
        k=k,
        centroids=centroids,
        feature_config=feature_config if feature_config is not None else PixelFeatureConfig(),
        seed=seed,
        n_iter=n_iter,
        inertia=inertia,
    )


def assign_features(model: ClusterModel, features: np.ndarray) -> np.ndarray:
    """Nearest-centroid index per feature row, ties to the lowest index."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.centroids.shape[1]:
        raise FeatureDimMismatch(
            f"features of dim {x.shape[-1] if x.ndim else '?'} vs model dim {model.centroids.shape[1]}"
        )
    return np.argmin(_sqdist(x, model.centroids), axis=1).astype(np.int32)


def assign_clusters(model: ClusterModel, image: np.ndarray) -> np.ndarray:
    """(h, w) map of cluster indices for one image layer."""
    image = np.asarray(image)
    if image.ndim != 3 or model.feature_config.dim(image.shape[2]) != model.centroids.shape[1]:
        raise FeatureDimMismatch(
            f"image with shape {image.shape} does not fit model of dim {model.centroids.shape[1]}"
        )
    feats = extract_features(image, model.feature_config)
    return assign_features(model, feats).reshape(image.shape[:2])
