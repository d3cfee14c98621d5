"""Synthetic dataset generation.

Stands in for a real image network: samples ground-truth poses from a
mixture of viewpoint modes, then emits per-instance angle-bin
distributions peaked at the true pose and feature maps whose channel
activations move with the pose (so feature similarity tracks pose
proximity).

The corruption controlled by sigma_d has three parts:

- an i.i.d. uniform floor on every distribution row;
- a "viewpoint confusion" bump at the bins of a different
  randomly-drawn mode, with a per-instance exponential amplitude scaled
  by how much more popular the decoy mode is than the true one, so a
  heavy-tailed minority of instances argmax at the wrong mode --
  preferentially a more common one. This mimics the characteristic
  failure of pose classifiers: confidently confusing a rare view with a
  popular one. It gives joint reasoning something it can correct (a
  confused argmax agrees with the decoy mode's instances globally but
  not with its own feature neighbors) and bakes in the popularity bias
  that assignment-count normalization is meant to remove;
- a small population of "degraded" instances whose distribution rows
  are nearly flat and whose features peak at an unrelated random
  rotation. These stay wrong no matter the reasoning, but carry low
  scores and uninformative neighborhoods, so they sink to the bottom of
  any confidence ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..metrics import facing_from_azimuth
from ..rotations import BinningScheme, EulerPose, euler_to_rotation, random_rotation, wrap_angle
from .records import InstanceRecord, write_records
from .tensorfile import write_tensor

# fraction of the sigma_d noise budget spent on the confusion bump
# (the remainder is the i.i.d. uniform floor)
CONFUSION_WEIGHT = 0.75

# mean of the per-instance exponential multiplier on the confusion bump
CONFUSION_SPREAD = 1.5

# fraction of instances degraded per unit sigma_d, and how much of the
# true peak survives in a degraded distribution row
DEGRADE_RATE = 0.2
DEGRADE_KEEP = 0.25

# feature template: activation = PEAK * gaussian(bump) + BASE + noise
FEATURE_BASE = -4.0
FEATURE_PEAK = 8.0
FEATURE_BUMP_WIDTH = 1.2


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic generator.

    Modes are azimuth values sharing one elevation/cyclorotation (a
    camera orbiting an upright object); mode_weights is the mixture
    (popularity bias). kappa sharpens the per-angle distributions
    (math.inf gives point masses); sigma_d scales distribution noise
    and sigma_f feature noise. grid is (channels, height, width).
    """

    n: int = 500
    mode_azimuths: tuple[float, ...] = (0.0, math.pi / 2, math.pi, -math.pi / 2)
    mode_weights: tuple[float, ...] = (0.4, 0.3, 0.2, 0.1)
    mode_elevation: float = 0.15
    mode_cyclo: float = -0.05
    jitter: float = 0.05
    kappa: float = 6.0
    n_bins: int = 21
    grid: tuple[int, int, int] = (8, 7, 7)
    sigma_f: float = 0.3
    sigma_d: float = 0.5
    seed: int = 0
    category: str = "synthcat"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.mode_azimuths) != len(self.mode_weights):
            raise ValueError("mode_azimuths and mode_weights must match in length")
        if len(self.mode_weights) == 0:
            raise ValueError("need at least one pose mode")
        if any(w < 0 for w in self.mode_weights):
            raise ValueError("mode weights must be non-negative")
        if abs(sum(self.mode_weights) - 1.0) > 1e-9:
            raise ValueError("mode weights must sum to 1")
        if self.sigma_f < 0 or self.sigma_d < 0 or self.jitter < 0:
            raise ValueError("noise levels must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive (math.inf allowed)")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if len(self.grid) != 3 or any(g < 1 for g in self.grid):
            raise ValueError("grid must be (channels, height, width), all >= 1")

    def mode_pose(self, j: int) -> EulerPose:
        return EulerPose(
            az=wrap_angle(self.mode_azimuths[j]),
            el=self.mode_elevation,
            cy=self.mode_cyclo,
        ).normalized()


def _angle_distance(a: np.ndarray, b: float, full_circle: bool) -> np.ndarray:
    diff = np.abs(a - b)
    if full_circle:
        diff = np.minimum(diff, 2 * math.pi - diff)
    return diff


def _peaked_row(
    centers: np.ndarray, target: float, kappa: float, full_circle: bool
) -> np.ndarray:
    """Normalized exp(-kappa * angular distance) around the bin holding
    the target angle; a point mass when kappa is infinite."""
    if math.isinf(kappa):
        row = np.zeros(centers.size)
        row[int(np.argmin(_angle_distance(centers, target, full_circle)))] = 1.0
        return row
    row = np.exp(-kappa * _angle_distance(centers, target, full_circle))
    return row / row.sum()


def _distribution(
    scheme: BinningScheme,
    gt: EulerPose,
    decoy: EulerPose,
    cfg: SynthConfig,
    rng: np.random.Generator,
    bump_scale: float,
    degraded: bool,
) -> np.ndarray:
    """3 x N rows (azimuth, elevation, cyclo), each summing to 1."""
    # snap targets to bin centers so the peak sits exactly on the gt bin
    ba, be, bc = scheme.bin_pose(gt)
    da, de, dc = scheme.bin_pose(decoy)
    rows = np.empty((3, scheme.n_bins))
    specs = [
        ("azimuth", scheme.bin_center(ba, "azimuth"), scheme.bin_center(da, "azimuth"), True),
        ("elevation", scheme.bin_center(be, "elevation"), scheme.bin_center(de, "elevation"), False),
        ("cyclo", scheme.bin_center(bc, "cyclo"), scheme.bin_center(dc, "cyclo"), True),
    ]
    for i, (angle, target, decoy_target, full) in enumerate(specs):
        centers = scheme.centers(angle)
        row = _peaked_row(centers, target, cfg.kappa, full)
        if degraded:
            row = DEGRADE_KEEP * row + rng.random(scheme.n_bins)
            row = row / row.sum()
        elif cfg.sigma_d > 0:
            iid = rng.random(scheme.n_bins) / scheme.n_bins
            bump = _peaked_row(centers, decoy_target, cfg.kappa, full)
            row = (
                row
                + cfg.sigma_d * (1.0 - CONFUSION_WEIGHT) * iid
                + bump_scale * bump
            )
            row = row / row.sum()
        rows[i] = row
    return rows


def _feature_map(
    rotation: np.ndarray,
    anchors: np.ndarray,
    cfg: SynthConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    channels, height, width = cfg.grid
    rows = np.arange(height, dtype=float)[:, None]
    cols = np.arange(width, dtype=float)[None, :]
    out = np.empty((channels, height, width))
    moved = rotation @ anchors.T  # (3, channels)
    for k in range(channels):
        # map the rotated anchor's (x, y) in [-1, 1] onto the grid
        cx = (moved[0, k] + 1.0) / 2.0 * (width - 1)
        cy = (moved[1, k] + 1.0) / 2.0 * (height - 1)
        bump = np.exp(
            -((rows - cy) ** 2 + (cols - cx) ** 2) / (2.0 * FEATURE_BUMP_WIDTH**2)
        )
        out[k] = FEATURE_BASE + FEATURE_PEAK * bump
    if cfg.sigma_f > 0:
        out = out + cfg.sigma_f * rng.normal(size=out.shape)
    return out


def synth_generate(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Write a synthetic dataset under out_dir and return the records
    file path. Fully deterministic in cfg (including the seed)."""
    out = Path(out_dir)
    tensor_dir = out / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    scheme = BinningScheme(n_bins=cfg.n_bins)
    n_modes = len(cfg.mode_weights)
    weights = np.asarray(cfg.mode_weights, dtype=float)

    # per-channel anchor directions, shared by every instance
    anchors = rng.normal(size=(cfg.grid[0], 3))
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)

    records = []
    for i in range(cfg.n):
        mode = int(rng.choice(n_modes, p=weights))
        base = cfg.mode_pose(mode)
        gt = EulerPose(
            az=base.az + rng.normal(scale=cfg.jitter),
            el=base.el + rng.normal(scale=cfg.jitter),
            cy=base.cy + rng.normal(scale=cfg.jitter),
        ).normalized()
        if n_modes > 1:
            others = [j for j in range(n_modes) if j != mode]
            decoy_idx = others[int(rng.integers(len(others)))]
            decoy = cfg.mode_pose(decoy_idx)
            popularity = weights[decoy_idx] / weights[mode] if weights[mode] > 0 else 1.0
        else:
            decoy = base
            popularity = 1.0
        bump_scale = (
            cfg.sigma_d * CONFUSION_WEIGHT * popularity * rng.exponential(CONFUSION_SPREAD)
        )
        degraded = rng.random() < DEGRADE_RATE * min(cfg.sigma_d, 1.0)

        dist_rows = _distribution(scheme, gt, decoy, cfg, rng, bump_scale, degraded)
        feat_rotation = random_rotation(rng) if degraded else euler_to_rotation(gt)
        features = _feature_map(feat_rotation, anchors, cfg, rng)

        stem = f"s{i:05d}"
        dist_path = f"tensors/{stem}_dist.pit"
        feat_path = f"tensors/{stem}_feat.pit"
        write_tensor(out / dist_path, dist_rows.astype(np.float32))
        write_tensor(out / feat_path, features.astype(np.float32))
        records.append(
            InstanceRecord(
                id=stem,
                category=cfg.category,
                features=feat_path,
                distribution=dist_path,
                gt_pose=gt,
                facing=facing_from_azimuth(gt.az),
                source="synth",
            )
        )
    records_path = out / "records.jsonl"
    write_records(records_path, records)
    return records_path
