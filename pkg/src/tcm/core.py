"""Footprint-vs-neighborhood divergence over time and the first-crossing rule.

For each chip layer, pixels are clustered, the footprint and its neighborhood
are summarized as discrete distributions of cluster indices, and the layer's
score is the KL divergence between the two. A footprint is called developed
from the first layer whose divergence exceeds the decision threshold. Because
every layer is clustered on its own, the comparison is immune to global
color shifts between years.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .clustering import PixelFeatureConfig, assign_features, extract_features, fit_kmeans
from .errors import EmptyRegion, SupportMismatch
from .geometry import ChipStack
from .util import stable_seed

DEFAULT_EPS = 1.0  # add-one smoothing keeps every KL finite


@dataclass(frozen=True)
class DivergenceSeries:
    """Per-layer divergence values d_1..d_T for one footprint."""

    footprint_id: str
    values: np.ndarray  # (T,) float64, nats
    years: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or len(self.years) != self.values.shape[0]:
            raise ValueError("series values and years must align")


@dataclass(frozen=True)
class DetectionResult:
    """Predicted first-developed layer for one footprint, with provenance."""

    footprint_id: str
    index: int  # 1-based layer index
    year: int
    series: DivergenceSeries
    crossed: bool  # False means the fallback "last layer" answer was used
    params: dict


def cluster_distribution(
    cmap: np.ndarray,
    mask: np.ndarray,
    region: str,
    k: int,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """Normalized histogram of cluster indices over one mask region.

    eps is added to every bin before normalizing so downstream KL stays finite
    even when a cluster never occurs in the region.
    """
    if region not in ("footprint", "neighborhood"):
        raise ValueError(f"region must be footprint|neighborhood, got {region!r}")
    selected = np.asarray(cmap)[np.asarray(mask) == (1 if region == "footprint" else 0)]
    if selected.size == 0:
        raise EmptyRegion(f"{region} region is empty")
    counts = np.bincount(selected.ravel(), minlength=k).astype(np.float64)
    counts += eps
    return counts / counts.sum()


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats, with 0*log(0/q) = 0. Infinite when q lacks support."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise SupportMismatch(f"support sizes differ: {p.shape} vs {q.shape}")
    pos = p > 0
    with np.errstate(divide="ignore"):
        terms = p[pos] * (np.log(p[pos]) - np.log(q[pos]))
    return float(terms.sum())


def layer_divergence(
    chips: ChipStack,
    layer: int,
    k: int,
    feature_config: PixelFeatureConfig = PixelFeatureConfig(),
    seed: int = 0,
    eps: float = DEFAULT_EPS,
) -> float:
    """Footprint-vs-neighborhood divergence of one chip layer (0-based).

    The layer's k-means fit is seeded from (seed, footprint_id, layer), so any
    single layer can be recomputed independently of the rest of the series.
    """
    image = chips.imagery[layer]
    feats = extract_features(image, feature_config)
    model = fit_kmeans(feats, k, stable_seed(seed, chips.footprint_id, layer), feature_config)
    cmap = assign_features(model, feats).reshape(image.shape[:2])
    d_fp = cluster_distribution(cmap, chips.mask, "footprint", k, eps)
    d_nb = cluster_distribution(cmap, chips.mask, "neighborhood", k, eps)
    return kl_divergence(d_fp, d_nb)


def divergence_series(
    chips: ChipStack,
    k: int,
    feature_config: PixelFeatureConfig = PixelFeatureConfig(),
    seed: int = 0,
    eps: float = DEFAULT_EPS,
) -> DivergenceSeries:
    """Divergence of every chip layer, clustered independently per layer."""
    values = np.array(
        [layer_divergence(chips, l, k, feature_config, seed, eps) for l in range(chips.n_layers)]
    )
    return DivergenceSeries(footprint_id=chips.footprint_id, values=values, years=chips.years)


def first_crossing(series, theta: float) -> int:
    """Smallest 1-based index with value > theta; the last index if none crosses."""
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if values.size == 0:
        raise ValueError("series is empty")
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    above = values > theta
    if not above.any():
        return int(values.size)
    return int(np.argmax(above)) + 1


def detect(
    chips: ChipStack,
    k: int,
    theta: float,
    feature_config: PixelFeatureConfig = PixelFeatureConfig(),
    seed: int = 0,
    eps: float = DEFAULT_EPS,
) -> DetectionResult:
    """Run the full per-footprint decision: series, first crossing, provenance."""
    series = divergence_series(chips, k, feature_config, seed, eps)
    index = first_crossing(series, theta)
    crossed = bool(series.values[index - 1] > theta)
    return DetectionResult(
        footprint_id=chips.footprint_id,
        index=index,
        year=chips.years[index - 1],
        series=series,
        crossed=crossed,
        params={
            "k": k,
            "r": chips.buffer_radius,
            "theta": float(theta),
            "eps": float(eps),
            "feature_mode": feature_config.mode,
            "seed": seed,
        },
    )
