"""JSON-lines dataset records.

One JSON object per line describes one object instance: its id, class,
paths to feature/distribution tensors (relative to the records file),
and optional ground-truth pose, facing label, and 2D keypoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..hypotheses import AngleBinDistribution
from ..metrics import FACING_LABELS
from ..rotations import EulerPose
from .tensorfile import read_tensor


class RecordError(ValueError):
    """A dataset file violates the record schema."""


@dataclass(frozen=True)
class InstanceRecord:
    """Metadata for one object instance."""

    id: str
    category: str
    features: str
    distribution: str
    gt_pose: EulerPose | None = None
    facing: str | None = None
    keypoints: tuple[tuple[float, float, bool], ...] | None = None
    source: str | None = None

    def __post_init__(self):
        if not self.id:
            raise RecordError("record id must be non-empty")
        if self.facing is not None and self.facing not in FACING_LABELS:
            raise RecordError(f"unknown facing label {self.facing!r}")

    def to_json(self) -> str:
        blob: dict = {
            "id": self.id,
            "class": self.category,
            "features": self.features,
            "distribution": self.distribution,
        }
        if self.gt_pose is not None:
            blob["gt_pose"] = {
                "az": self.gt_pose.az,
                "el": self.gt_pose.el,
                "cy": self.gt_pose.cy,
            }
        if self.facing is not None:
            blob["facing"] = self.facing
        if self.keypoints is not None:
            blob["keypoints"] = [[u, v, bool(vis)] for u, v, vis in self.keypoints]
        if self.source is not None:
            blob["source"] = self.source
        return json.dumps(blob, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "InstanceRecord":
        try:
            blob = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"invalid JSON: {exc}") from exc
        if not isinstance(blob, dict):
            raise RecordError("record line must be a JSON object")
        try:
            rid = blob["id"]
            category = blob["class"]
            features = blob["features"]
            distribution = blob["distribution"]
        except KeyError as exc:
            raise RecordError(f"record missing required field {exc}") from exc
        gt_pose = None
        if "gt_pose" in blob:
            pose = blob["gt_pose"]
            try:
                gt_pose = EulerPose(float(pose["az"]), float(pose["el"]), float(pose["cy"]))
            except (TypeError, KeyError) as exc:
                raise RecordError(f"malformed gt_pose in record {rid!r}") from exc
        keypoints = None
        if "keypoints" in blob:
            try:
                keypoints = tuple(
                    (float(u), float(v), bool(vis)) for u, v, vis in blob["keypoints"]
                )
            except (TypeError, ValueError) as exc:
                raise RecordError(f"malformed keypoints in record {rid!r}") from exc
        return cls(
            id=str(rid),
            category=str(category),
            features=str(features),
            distribution=str(distribution),
            gt_pose=gt_pose,
            facing=blob.get("facing"),
            keypoints=keypoints,
            source=blob.get("source"),
        )


def write_records(path: str | Path, records: Sequence[InstanceRecord]) -> None:
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise RecordError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def read_records(path: str | Path) -> list[InstanceRecord]:
    records = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = InstanceRecord.from_json(line)
            except RecordError as exc:
                raise RecordError(f"{path}:{lineno}: {exc}") from exc
            if rec.id in seen:
                raise RecordError(f"{path}:{lineno}: duplicate record id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def load_distribution(record: InstanceRecord, base_dir: str | Path) -> AngleBinDistribution:
    """Read a record's 3 x N distribution tensor into validated
    per-angle rows."""
    tensor = read_tensor(Path(base_dir) / record.distribution)
    if tensor.ndim != 2 or tensor.shape[0] != 3:
        raise RecordError(
            f"record {record.id!r}: distribution tensor must be 3 x N, "
            f"got shape {tensor.shape}"
        )
    rows = tensor.astype(float)
    return AngleBinDistribution(azimuth=rows[0], elevation=rows[1], cyclo=rows[2])


def load_features(record: InstanceRecord, base_dir: str | Path) -> np.ndarray:
    """Read a record's feature tensor (channels x h x w)."""
    tensor = read_tensor(Path(base_dir) / record.features)
    if tensor.ndim != 3:
        raise RecordError(
            f"record {record.id!r}: feature tensor must be rank 3, "
            f"got shape {tensor.shape}"
        )
    return tensor.astype(float)
