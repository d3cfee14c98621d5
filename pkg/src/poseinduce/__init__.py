"""Joint viewpoint selection for object collections.

The pipeline: per-instance angle-bin distributions become small sets of
diverse pose hypotheses (`hypotheses`), instances are linked by feature
similarity (`similarity`), and a coordinate-ascent pass picks one
hypothesis per instance so that similar instances agree on viewpoint
(`inference`). Accuracy and error reports live in `metrics`, rotation
math in `rotations`, and an orthographic structure-from-motion solver in
`factorize`. The `harness` subpackage adds file formats, a synthetic
data generator, and the ``poseinduce`` command-line pipeline.
"""
