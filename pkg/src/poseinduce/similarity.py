"""Feature normalization, histogram-intersection similarity, and the
per-instance neighbor graph.

An instance's raw activation grid (H x W x channels) is squashed through
a logistic sigmoid and each channel is divided by its spatial L1 norm, so
every channel becomes a spatial probability map. Two instances are
compared by histogram intersection of these maps, averaged over channels
so the score lives in [0, 1] whatever the channel count. The neighbor
graph keeps, for every instance, the m most similar others; similarities
are computed exactly over all pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def default_neighbor_count(n_instances: int) -> int:
    """Scale-adaptive neighbor count: max(5, ceil(0.02 * n))."""
    return max(5, math.ceil(0.02 * n_instances))


def normalize_features(activations: np.ndarray) -> np.ndarray:
    """Sigmoid the grid elementwise, then L1-normalize each channel over
    its spatial locations.

    Input and output have shape (H, W, channels). The denominator is
    always positive because the sigmoid is strictly positive.
    """
    c = np.asarray(activations, dtype=float)
    if c.ndim != 3:
        raise ValueError("feature map must have shape (H, W, channels)")
    if not np.all(np.isfinite(c)):
        raise ValueError("feature map entries must be finite")
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-c))
    return s / s.sum(axis=(0, 1), keepdims=True)


def histogram_intersection(a: np.ndarray, b: np.ndarray) -> float:
    """Channel-averaged histogram intersection of two normalized grids.

    Returns sum(min(a, b)) / channels, in [0, 1]; equals 1 only when the
    grids are elementwise identical, and is symmetric in its arguments.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"feature shapes differ: {a.shape} vs {b.shape}")
    return float(np.minimum(a, b).sum() / a.shape[-1])


def pairwise_similarity_matrix(features: Sequence[np.ndarray]) -> np.ndarray:
    """Exact n x n histogram-intersection matrix (diagonal is 1)."""
    n = len(features)
    shape = features[0].shape
    for f in features:
        if f.shape != shape:
            raise ValueError("all feature grids must share one shape")
    flat = np.stack([np.asarray(f, dtype=float).ravel() for f in features])
    k_ch = shape[-1]
    sims = np.empty((n, n))
    np.fill_diagonal(sims, 1.0)
    for i in range(n):
        m = np.minimum(flat[i], flat[i + 1 :]).sum(axis=1) / k_ch
        sims[i, i + 1 :] = m
        sims[i + 1 :, i] = m
    return sims


@dataclass(frozen=True)
class NeighborGraph:
    """Per-instance ordered neighbor lists.

    neighbor_ids[i] holds the indices of the m instances most similar to
    i (self excluded), similarity non-increasing; similarities[i] holds
    the matching scores. The relation is directed; no symmetrization.
    """

    neighbor_ids: np.ndarray
    similarities: np.ndarray

    @property
    def n_instances(self) -> int:
        return self.neighbor_ids.shape[0]

    @property
    def m(self) -> int:
        return self.neighbor_ids.shape[1]

    def neighbors(self, i: int) -> np.ndarray:
        return self.neighbor_ids[i]


def build_neighbor_graph(features: Sequence[np.ndarray], m: int | None = None) -> NeighborGraph:
    """Exact m-nearest-neighbor graph under histogram intersection.

    Ties in similarity break toward the lower instance id. m defaults to
    default_neighbor_count(len(features)) and is clamped to n - 1.
    """
    n = len(features)
    if n < 2:
        raise ValueError("need at least 2 instances to build a neighbor graph")
    if m is None:
        m = default_neighbor_count(n)
    if m < 1:
        raise ValueError("m must be at least 1")
    m = min(m, n - 1)

    sims = pairwise_similarity_matrix(features)
    np.fill_diagonal(sims, -np.inf)  # self excluded
    ids = np.arange(n)
    neighbor_ids = np.empty((n, m), dtype=int)
    neighbor_sims = np.empty((n, m))
    for i in range(n):
        order = np.lexsort((ids, -sims[i]))[:m]
        neighbor_ids[i] = order
        neighbor_sims[i] = sims[i, order]
    return NeighborGraph(neighbor_ids=neighbor_ids, similarities=neighbor_sims)
