"""Evaluation of predicted viewpoints.

Threshold accuracy over the geodesic rotation error, coarse
facing-direction accuracy from azimuth quadrants, and an error report
with nearest-rank percentiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .rotations import geodesic_distance, wrap_angle

DEFAULT_THETA = math.pi / 6
REPORT_PERCENTILES = (15, 30, 45, 60, 75)

FRONTAL = "frontal"
LEFT = "left"
RIGHT = "right"
REAR = "rear"
FACING_LABELS = (FRONTAL, LEFT, RIGHT, REAR)


@dataclass(frozen=True)
class EvaluationReport:
    """Summary statistics for one evaluation run."""

    acc_theta: float
    theta: float
    median_error: float
    percentile_errors: dict[int, float]
    n_instances: int
    acc_v: float | None = None

    def as_dict(self) -> dict:
        return {
            "acc_theta": self.acc_theta,
            "theta": self.theta,
            "acc_v": self.acc_v,
            "median_error": self.median_error,
            "percentile_errors": {str(p): v for p, v in self.percentile_errors.items()},
            "n_instances": self.n_instances,
        }

    def as_text(self) -> str:
        lines = [
            f"instances       {self.n_instances}",
            f"acc_theta       {self.acc_theta:.4f}  (theta = {self.theta:.4f} rad)",
        ]
        if self.acc_v is not None:
            lines.append(f"acc_v           {self.acc_v:.4f}")
        lines.append(f"median_error    {self.median_error:.4f} rad")
        for p in sorted(self.percentile_errors):
            lines.append(f"p{p:<2d}_error       {self.percentile_errors[p]:.4f} rad")
        return "\n".join(lines)


def geodesic_errors(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> np.ndarray:
    if len(preds) != len(gts):
        raise ValueError("prediction and ground-truth lists differ in length")
    return np.array([geodesic_distance(p, g) for p, g in zip(preds, gts)])


def acc_theta(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    theta: float = DEFAULT_THETA,
) -> float:
    """Fraction of instances with geodesic error strictly below theta."""
    errors = geodesic_errors(preds, gts)
    if errors.size == 0:
        raise ValueError("no instances to evaluate")
    return float(np.mean(errors < theta))


def facing_from_azimuth(azimuth: float) -> str:
    """Coarse facing quadrant of an azimuth.

    Half-open quadrants centered on 0 (frontal), pi/2 (left), +-pi
    (rear) and -pi/2 (right).
    """
    az = wrap_angle(azimuth)
    if -math.pi / 4 <= az < math.pi / 4:
        return FRONTAL
    if math.pi / 4 <= az < 3 * math.pi / 4:
        return LEFT
    if -3 * math.pi / 4 <= az < -math.pi / 4:
        return RIGHT
    return REAR


def acc_v(
    pred_azimuths: Sequence[float],
    gt_facings: Sequence[str],
    label_fn: Callable[[float], str] = facing_from_azimuth,
) -> float:
    """Fraction of instances whose azimuth falls in the labeled quadrant."""
    if len(pred_azimuths) != len(gt_facings):
        raise ValueError("azimuth and facing lists differ in length")
    if len(gt_facings) == 0:
        raise ValueError("no instances to evaluate")
    for label in gt_facings:
        if label not in FACING_LABELS:
            raise ValueError(f"unknown facing label: {label!r}")
    hits = sum(1 for az, label in zip(pred_azimuths, gt_facings) if label_fn(az) == label)
    return hits / len(gt_facings)


def nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    """Value at the nearest-rank index ceil(p/100 * n) - 1 of an
    ascending array."""
    n = sorted_values.size
    if n == 0:
        raise ValueError("empty values")
    if not 0 < percentile <= 100:
        raise ValueError("percentile must lie in (0, 100]")
    index = math.ceil(percentile / 100 * n) - 1
    return float(sorted_values[index])


def error_report(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    theta: float = DEFAULT_THETA,
    pred_azimuths: Sequence[float] | None = None,
    gt_facings: Sequence[str] | None = None,
) -> EvaluationReport:
    """Full evaluation: threshold accuracy, nearest-rank error
    percentiles, and (when azimuths and facing labels are supplied)
    facing accuracy."""
    if len(preds) == 0:
        raise ValueError("no instances to evaluate")
    errors = np.sort(geodesic_errors(preds, gts))
    percentiles = {p: nearest_rank(errors, p) for p in REPORT_PERCENTILES}
    facing_acc = None
    if pred_azimuths is not None and gt_facings is not None:
        facing_acc = acc_v(pred_azimuths, gt_facings)
    return EvaluationReport(
        acc_theta=float(np.mean(errors < theta)),
        theta=theta,
        median_error=nearest_rank(errors, 50),
        percentile_errors=percentiles,
        n_instances=len(preds),
        acc_v=facing_acc,
    )
