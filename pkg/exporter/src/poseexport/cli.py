"""Command-line entry point.

Flags mirror the manifest fields one-to-one::

    poseexport img1.jpg img2.jpg --checkpoint model.pt \\
        --feature-layer trunk.3 --head pose_head --out exported/

Exit codes: 0 success, 1 usage error, 2 export failure (unloadable
checkpoint, unknown layer/head, unusable model output).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .export import ExportError, ExportManifest, export


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; remap to the documented 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poseexport", description=__doc__, allow_abbrev=False)
    parser.add_argument("images", nargs="+", help="image files, in dataset order")
    parser.add_argument("--checkpoint", required=True, help="pickled torch.nn.Module")
    parser.add_argument(
        "--feature-layer", required=True,
        help="named submodule whose activations become the feature tensors",
    )
    parser.add_argument(
        "--head", required=True,
        help="named submodule whose output becomes the angle-bin distributions",
    )
    parser.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    manifest = ExportManifest(
        images=tuple(args.images),
        checkpoint=args.checkpoint,
        feature_layer=args.feature_layer,
        head=args.head,
        out_dir=args.out,
    )
    try:
        records_path = export(manifest)
    except ExportError as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return 2
    n_failed = sum(1 for _ in open(records_path.parent / "errors.jsonl"))
    n_written = sum(1 for _ in open(records_path))
    print(f"exported {n_written} instances ({n_failed} skipped) to {records_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
