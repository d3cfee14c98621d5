"""Run a pretrained torch image model over images and dump engine inputs.

For every decodable image, one forward pass captures (via forward
hooks) the activations of a named feature layer — written as a
``channels x h x w`` tensor — and the output of a named pose head,
reshaped to three rows (azimuth / elevation / cyclo) and converted to
probabilities with a per-row softmax. Images are resized to a fixed
square resolution first, so tensor dims are identical across the whole
export.

All pose semantics live downstream in the engine; this module only
moves numbers into the documented file formats. Undecodable images are
skipped with a warning and listed in an ``errors.jsonl`` sidecar; an
unloadable checkpoint or a model/layer mismatch is fatal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .formats import error_line, record_line, write_tensor

logger = logging.getLogger(__name__)

INPUT_SIZE = 224
# Standard ImageNet channel statistics, the convention pretrained torch
# image models are trained under.
IMAGE_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGE_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class ExportError(RuntimeError):
    """A fatal export condition: bad checkpoint, unknown layer/head, or
    a model whose captured shapes are unusable or inconsistent."""


@dataclass(frozen=True)
class ExportManifest:
    """What to export: which images, which model, which activations."""

    images: tuple[str, ...]
    checkpoint: str
    feature_layer: str
    head: str
    out_dir: str

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(str(p) for p in self.images))
        if not self.images:
            raise ValueError("manifest needs at least one image")
        for field in ("checkpoint", "feature_layer", "head", "out_dir"):
            if not getattr(self, field):
                raise ValueError(f"manifest field {field!r} must be non-empty")


def _load_model(path: str) -> torch.nn.Module:
    try:
        obj = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ExportError(f"cannot load checkpoint {path!r}: {exc}") from exc
    if not isinstance(obj, torch.nn.Module):
        raise ExportError(
            f"checkpoint {path!r} holds {type(obj).__name__}, expected a "
            "pickled torch.nn.Module"
        )
    return obj.eval()


def _find_module(model: torch.nn.Module, name: str) -> torch.nn.Module:
    modules = dict(model.named_modules())
    if name not in modules:
        known = ", ".join(sorted(k for k in modules if k)) or "<none>"
        raise ExportError(f"model has no submodule {name!r}; available: {known}")
    return modules[name]


def _decode_image(path: str) -> torch.Tensor:
    """Decode, resize, and normalize one image to a 1 x 3 x S x S batch."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize(
            (INPUT_SIZE, INPUT_SIZE), resample=Image.Resampling.BILINEAR
        )
    pixels = np.asarray(rgb, dtype=np.float32) / 255.0
    pixels = (pixels - IMAGE_MEAN) / IMAGE_STD
    return torch.from_numpy(pixels.transpose(2, 0, 1)).unsqueeze(0)


def _feature_grid(captured: torch.Tensor, layer: str) -> np.ndarray:
    out = captured.detach().cpu().numpy()
    if out.ndim != 4 or out.shape[0] != 1:
        raise ExportError(
            f"feature layer {layer!r} produced shape {tuple(out.shape)}, "
            "expected a 1 x channels x h x w activation map"
        )
    return np.ascontiguousarray(out[0], dtype=np.float32)


def _distribution_rows(captured: torch.Tensor, head: str) -> np.ndarray:
    """Head output -> three softmax rows, renormalized so the float32
    rows still sum to 1 within the loaders' 1e-6 tolerance."""
    out = captured.detach().cpu().numpy()
    if out.ndim < 1 or out.shape[0] != 1:
        raise ExportError(
            f"head {head!r} produced shape {tuple(out.shape)}, expected a "
            "single-sample batch"
        )
    vec = out.reshape(-1)
    if vec.size == 0 or vec.size % 3:
        raise ExportError(
            f"head {head!r} emits {vec.size} values, expected a multiple of 3 "
            "(azimuth / elevation / cyclo bins)"
        )
    rows = vec.reshape(3, -1).astype(np.float64)
    rows = np.exp(rows - rows.max(axis=1, keepdims=True))
    rows /= rows.sum(axis=1, keepdims=True)
    rows = rows.astype(np.float32).astype(np.float64)
    rows /= rows.sum(axis=1, keepdims=True)
    return rows.astype(np.float32)


def _unique_ids(paths: tuple[str, ...]) -> list[str]:
    ids: list[str] = []
    seen: dict[str, int] = {}
    for p in paths:
        stem = Path(p).stem or "image"
        count = seen.get(stem, 0) + 1
        seen[stem] = count
        ids.append(stem if count == 1 else f"{stem}-{count}")
    return ids


def export(manifest: ExportManifest) -> Path:
    """Export every image in the manifest; return the records.jsonl path.

    Images are processed sequentially in manifest order with torch
    pinned to one thread, so re-exporting identical inputs yields
    byte-identical files.
    """
    model = _load_model(manifest.checkpoint)
    captures: dict[str, torch.Tensor] = {}
    hooks = [
        _find_module(model, manifest.feature_layer).register_forward_hook(
            lambda mod, inp, out: captures.__setitem__("features", out)
        ),
        _find_module(model, manifest.head).register_forward_hook(
            lambda mod, inp, out: captures.__setitem__("head", out)
        ),
    ]

    out_dir = Path(manifest.out_dir)
    tensor_dir = out_dir / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)

    lines: list[str] = []
    failures: list[tuple[str, str]] = []
    grid_shape: tuple[int, ...] | None = None
    n_bins: int | None = None

    old_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        for path, instance_id in zip(manifest.images, _unique_ids(manifest.images)):
            try:
                batch = _decode_image(path)
            except Exception as exc:  # noqa: BLE001 - any decode failure skips
                logger.warning("skipping undecodable image %s: %s", path, exc)
                failures.append((path, str(exc)))
                continue
            captures.clear()
            with torch.no_grad():
                model(batch)
            for role in ("features", "head"):
                if role not in captures:
                    raise ExportError(
                        f"forward pass never reached the {role} module; "
                        "is it wired into forward()?"
                    )
            grid = _feature_grid(captures["features"], manifest.feature_layer)
            dist = _distribution_rows(captures["head"], manifest.head)
            if grid_shape is None:
                grid_shape, n_bins = grid.shape, dist.shape[1]
            elif grid.shape != grid_shape or dist.shape[1] != n_bins:
                raise ExportError(
                    f"inconsistent tensor dims for {path!r}: features "
                    f"{grid.shape} vs {grid_shape}, bins {dist.shape[1]} vs "
                    f"{n_bins} — the model is not resolution-fixed"
                )
            feat_rel = f"tensors/{instance_id}_feat.pit"
            dist_rel = f"tensors/{instance_id}_dist.pit"
            write_tensor(out_dir / feat_rel, grid)
            write_tensor(out_dir / dist_rel, dist)
            category = Path(path).parent.name or "images"
            lines.append(record_line(instance_id, category, feat_rel, dist_rel))
    finally:
        for hook in hooks:
            hook.remove()
        torch.set_num_threads(old_threads)

    records_path = out_dir / "records.jsonl"
    records_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    sidecar = "".join(error_line(path, message) + "\n" for path, message in failures)
    (out_dir / "errors.jsonl").write_text(sidecar, encoding="utf-8")
    return records_path
