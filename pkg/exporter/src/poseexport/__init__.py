"""Bridge real images into the pose-induction engine.

Runs a pretrained torch image model over a list of images and writes,
per image, an instance record, a feature-map tensor (a chosen layer's
activations), and an angle-bin distribution (a pose head's softmax
output) — exactly the engine's on-disk formats, so the exported
directory drops straight into the ``poseinduce`` pipeline.
"""

from .export import ExportError, ExportManifest, export

__all__ = ["ExportError", "ExportManifest", "export"]
