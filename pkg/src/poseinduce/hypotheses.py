"""Diverse pose hypotheses from per-instance angle-bin distributions.

Each instance arrives as three categorical distributions (azimuth,
elevation, cyclorotation). Every bin triplet is scored by the sum of the
log bin probabilities, converted to a rotation at the bin centers, and a
greedy sweep in descending score order keeps triplets that are at least
``delta_div`` geodesic away from everything already kept. The kept
triplets' scores are the unary log-likelihoods used by inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .rotations import AZIMUTH, CYCLO, ELEVATION, BinningScheme, EulerPose, euler_to_rotation

# Floor added inside the log so zero-probability bins stay finite.
LOG_FLOOR = 1e-8

DEFAULT_K = 8
DEFAULT_DELTA_DIV = math.pi / 6


@dataclass(frozen=True)
class AngleBinDistribution:
    """Per-instance categorical distributions over the three angles."""

    azimuth: np.ndarray
    elevation: np.ndarray
    cyclo: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.azimuth)
        for name in ("azimuth", "elevation", "cyclo"):
            p = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, p)
            if p.ndim != 1 or len(p) != n:
                raise ValueError("the three probability vectors must share one length")
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise ValueError(f"{name} probabilities must be finite and non-negative")
            if abs(p.sum() - 1.0) > 1e-6:
                raise ValueError(f"{name} probabilities must sum to 1 within 1e-6")

    @property
    def n_bins(self) -> int:
        return len(self.azimuth)


@dataclass(frozen=True)
class PoseHypothesis:
    """One candidate pose with its log-likelihood score."""

    rotation: np.ndarray
    beta: float
    bins: tuple[int, int, int]


@lru_cache(maxsize=8)
def _triplet_rotations(n_bins: int) -> np.ndarray:
    """Rotations of all bin-center triplets, shape (n_bins**3, 3, 3).

    Triplet index is az * n**2 + el * n + cy, i.e. lexicographic in
    (azimuth, elevation, cyclo) bin order.
    """
    scheme = BinningScheme(n_bins)
    az_c = scheme.centers(AZIMUTH)
    el_c = scheme.centers(ELEVATION)
    cy_c = scheme.centers(CYCLO)
    out = np.empty((n_bins**3, 3, 3))
    idx = 0
    for az in az_c:
        for el in el_c:
            for cy in cy_c:
                out[idx] = euler_to_rotation(EulerPose(az, el, cy))
                idx += 1
    return out


def extract_hypotheses(
    dist: AngleBinDistribution,
    k: int = DEFAULT_K,
    delta_div: float = DEFAULT_DELTA_DIV,
) -> list[PoseHypothesis]:
    """Extract up to k pose hypotheses by exhaustive triplet scoring with
    greedy geodesic non-maximum suppression.

    Ties in triplet score are broken by lexicographic (azimuth, elevation,
    cyclo) bin index, so the output is fully deterministic. The result is
    sorted by score descending and any two entries are at least delta_div
    apart.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if delta_div < 0:
        raise ValueError("delta_div must be non-negative")
    n = dist.n_bins
    rotations = _triplet_rotations(n)

    log_az = np.log(dist.azimuth + LOG_FLOOR)
    log_el = np.log(dist.elevation + LOG_FLOOR)
    log_cy = np.log(dist.cyclo + LOG_FLOOR)
    scores = (log_az[:, None, None] + log_el[None, :, None] + log_cy[None, None, :]).ravel()

    # Stable argsort of -scores: ties resolve to the lower triplet index,
    # which is exactly lexicographic bin order.
    order = np.argsort(-scores, kind="stable")

    cos_thresh = math.cos(min(delta_div, math.pi))
    alive = np.ones(len(scores), dtype=bool)
    picked: list[int] = []
    pos = 0
    while len(picked) < k and pos < len(order):
        idx = order[pos]
        pos += 1
        if not alive[idx]:
            continue
        picked.append(idx)
        # Suppress everything within delta_div of the accepted rotation.
        # cos is monotone decreasing on [0, pi]: dist < delta_div <=> cos > cos(delta_div).
        traces = np.einsum("ij,nij->n", rotations[idx], rotations)
        alive &= (traces - 1.0) / 2.0 <= cos_thresh

    out = []
    for idx in picked:
        b_az, rem = divmod(int(idx), n * n)
        b_el, b_cy = divmod(rem, n)
        out.append(
            PoseHypothesis(
                rotation=rotations[idx].copy(),
                beta=float(scores[idx]),
                bins=(b_az, b_el, b_cy),
            )
        )
    return out


def argmax_init(hypotheses: list[PoseHypothesis]) -> int:
    """Index of the maximal-score hypothesis; ties break to the lowest index."""
    if not hypotheses:
        raise ValueError("hypothesis set is empty")
    best = 0
    for i in range(1, len(hypotheses)):
        if hypotheses[i].beta > hypotheses[best].beta:
            best = i
    return best
