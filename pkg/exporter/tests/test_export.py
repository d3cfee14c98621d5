"""Exporter tests.

The acceptance bar: everything the exporter writes passes the engine
package's own loader validation, and re-exporting identical inputs is
byte-identical. The engine (``poseinduce``) is imported here only to
*validate* outputs — the exporter itself never touches it.
"""

import json
import logging

import numpy as np
import pytest
import torch

from poseexport.cli import main
from poseexport.export import (
    ExportError,
    ExportManifest,
    export,
)

from poseinduce.harness.cli import main as engine_main
from poseinduce.harness.records import (
    load_distribution,
    load_features,
    read_records,
)
from poseinduce.hypotheses import extract_hypotheses

N_BINS = 21


class TinyNet(torch.nn.Module):
    """Small fixed-resolution image net with a named trunk and pose head."""

    def __init__(self, head_width=3 * N_BINS):
        super().__init__()
        self.stem = torch.nn.Conv2d(3, 6, kernel_size=7, stride=4)
        self.pool = torch.nn.AdaptiveAvgPool2d(4)
        self.pose_head = torch.nn.Linear(6 * 4 * 4, head_width)

    def forward(self, x):
        x = torch.relu(self.stem(x))
        x = self.pool(x)
        return self.pose_head(x.flatten(1))


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    torch.manual_seed(3)
    path = tmp_path_factory.mktemp("model") / "tiny.pt"
    torch.save(TinyNet(), path)
    return str(path)


@pytest.fixture(scope="module")
def images(tmp_path_factory):
    """Four decodable images of assorted sizes, formats, and content."""
    from PIL import Image

    root = tmp_path_factory.mktemp("imgs")
    rng = np.random.default_rng(9)
    paths = []
    for name, size in (
        ("bike.png", (40, 30)),
        ("plane.jpg", (64, 64)),
        ("chair.png", (31, 57)),
        ("boat.jpg", (128, 96)),
    ):
        pixels = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
        path = root / name
        Image.fromarray(pixels).save(path)
        paths.append(str(path))
    return tuple(paths)


def _manifest(images, checkpoint, out_dir, **overrides):
    fields = dict(
        images=images,
        checkpoint=checkpoint,
        feature_layer="stem",
        head="pose_head",
        out_dir=str(out_dir),
    )
    fields.update(overrides)
    return ExportManifest(**fields)


class TestExportOutputs:
    def test_engine_loaders_accept_everything(self, images, checkpoint, tmp_path):
        records_path = export(_manifest(images, checkpoint, tmp_path))
        records = read_records(records_path)
        assert [r.id for r in records] == ["bike", "plane", "chair", "boat"]
        for record in records:
            grid = load_features(record, tmp_path)
            dist = load_distribution(record, tmp_path)
            assert grid.shape == (6, 55, 55)
            assert dist.n_bins == N_BINS
            assert record.source == "export"
            assert record.gt_pose is None
            # loaders already validate; extraction proves usability
            assert len(extract_hypotheses(dist)) >= 1
        assert (tmp_path / "errors.jsonl").read_text() == ""

    def test_distribution_rows_sum_to_one(self, images, checkpoint, tmp_path):
        records_path = export(_manifest(images, checkpoint, tmp_path))
        for record in read_records(records_path):
            dist = load_distribution(record, tmp_path)
            for row in (dist.azimuth, dist.elevation, dist.cyclo):
                assert abs(row.sum() - 1.0) <= 1e-6
                assert np.all(row >= 0)

    def test_reexport_is_byte_identical(self, images, checkpoint, tmp_path):
        first = export(_manifest(images, checkpoint, tmp_path / "a")).parent
        second = export(_manifest(images, checkpoint, tmp_path / "b")).parent
        rel_paths = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
        assert rel_paths == sorted(
            p.relative_to(second) for p in second.rglob("*") if p.is_file()
        )
        for rel in rel_paths:
            assert (first / rel).read_bytes() == (second / rel).read_bytes(), rel

    def test_category_is_parent_directory_name(self, images, checkpoint, tmp_path):
        records = read_records(export(_manifest(images, checkpoint, tmp_path)))
        assert {r.category for r in records} == {"imgs0"}

    def test_duplicate_stems_get_unique_ids(self, images, checkpoint, tmp_path):
        from PIL import Image

        other = tmp_path / "more"
        other.mkdir()
        clone = other / "bike.png"
        Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8)).save(clone)
        doubled = images + (str(clone),)
        records = read_records(export(_manifest(doubled, checkpoint, tmp_path / "out")))
        ids = [r.id for r in records]
        assert len(set(ids)) == len(ids) == 5
        assert "bike" in ids and "bike-2" in ids

    def test_undecodable_image_skipped_with_sidecar(
        self, images, checkpoint, tmp_path, caplog
    ):
        junk = tmp_path / "broken.jpg"
        junk.write_bytes(b"not an image at all")
        mixed = images[:2] + (str(junk),) + images[2:]
        with caplog.at_level(logging.WARNING, logger="poseexport.export"):
            records_path = export(_manifest(mixed, checkpoint, tmp_path / "out"))
        assert len(read_records(records_path)) == 4
        assert any("broken.jpg" in message for message in caplog.messages)
        sidecar = [
            json.loads(line)
            for line in (tmp_path / "out" / "errors.jsonl").read_text().splitlines()
        ]
        assert len(sidecar) == 1
        assert sidecar[0]["image"] == str(junk)
        assert sidecar[0]["error"]


class TestFatalConditions:
    def test_unreadable_checkpoint(self, images, tmp_path):
        junk = tmp_path / "junk.pt"
        junk.write_bytes(b"\x00\x01\x02")
        with pytest.raises(ExportError, match="cannot load checkpoint"):
            export(_manifest(images, str(junk), tmp_path / "out"))

    def test_missing_checkpoint(self, images, tmp_path):
        with pytest.raises(ExportError, match="cannot load checkpoint"):
            export(_manifest(images, str(tmp_path / "absent.pt"), tmp_path / "out"))

    def test_checkpoint_must_hold_a_module(self, images, tmp_path):
        path = tmp_path / "dict.pt"
        torch.save({"weights": torch.zeros(3)}, path)
        with pytest.raises(ExportError, match="expected a pickled torch.nn.Module"):
            export(_manifest(images, str(path), tmp_path / "out"))

    def test_unknown_layer_name_lists_candidates(self, images, checkpoint, tmp_path):
        with pytest.raises(ExportError, match="no submodule 'conv9'.*stem"):
            export(_manifest(images, checkpoint, tmp_path, feature_layer="conv9"))

    def test_unknown_head_name(self, images, checkpoint, tmp_path):
        with pytest.raises(ExportError, match="no submodule 'softmax'"):
            export(_manifest(images, checkpoint, tmp_path, head="softmax"))

    def test_head_width_must_split_into_three_rows(self, images, tmp_path):
        torch.manual_seed(3)
        path = tmp_path / "odd.pt"
        torch.save(TinyNet(head_width=64), path)
        with pytest.raises(ExportError, match="64 values, expected a multiple of 3"):
            export(_manifest(images, str(path), tmp_path / "out"))

    def test_feature_layer_must_be_spatial(self, images, checkpoint, tmp_path):
        with pytest.raises(ExportError, match="expected a 1 x channels x h x w"):
            export(_manifest(images, checkpoint, tmp_path, feature_layer="pose_head"))

    def test_manifest_validation(self, checkpoint):
        with pytest.raises(ValueError, match="at least one image"):
            ExportManifest((), checkpoint, "stem", "pose_head", "out")
        with pytest.raises(ValueError, match="'head' must be non-empty"):
            ExportManifest(("a.png",), checkpoint, "stem", "", "out")


class TestCli:
    def test_success_and_summary(self, images, checkpoint, tmp_path, capsys):
        code = main(
            [
                *images,
                "--checkpoint", checkpoint,
                "--feature-layer", "stem",
                "--head", "pose_head",
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 0
        assert "exported 4 instances (0 skipped)" in capsys.readouterr().out
        assert (tmp_path / "out" / "records.jsonl").exists()

    def test_usage_error_exits_1(self, images):
        assert main([*images, "--checkpoint", "m.pt"]) == 1

    def test_export_failure_exits_2(self, images, tmp_path, capsys):
        code = main(
            [
                *images,
                "--checkpoint", str(tmp_path / "absent.pt"),
                "--feature-layer", "stem",
                "--head", "pose_head",
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2
        assert "export error:" in capsys.readouterr().err


class TestEnginePipeline:
    def test_exported_dataset_flows_through_engine_cli(
        self, images, checkpoint, tmp_path
    ):
        d = tmp_path
        export(_manifest(images, checkpoint, d))
        assert engine_main(
            ["hypotheses", "--records", str(d / "records.jsonl"), "--out", str(d / "h.json")]
        ) == 0
        assert engine_main(
            ["neighbors", "--records", str(d / "records.jsonl"), "--out", str(d / "n.json")]
        ) == 0
        assert engine_main(
            [
                "induce", "--hypotheses", str(d / "h.json"),
                "--neighbors", str(d / "n.json"), "--out", str(d / "preds.csv"),
            ]
        ) == 0
        lines = (d / "preds.csv").read_text().splitlines()
        assert len(lines) == 5 and lines[0].startswith("id,")
