"""Bridge contract tests.

The tile corpus is produced by the core CLI (its external interface), and
the bridge output is validated by the core parser, which is exactly the
cross-component contract: schema-valid JSON, polygons inside tile bounds.
Detection *quality* is deliberately not asserted (the test model is an
untrained architecture).
"""
import json
import subprocess

import numpy as np
import pytest
import torch
from click.testing import CliRunner

from ovitrap_bridge import BridgeConfig, BridgeError, infer_tiles
from ovitrap_bridge.bridge import validate_detections
from ovitrap_bridge.cli import main as bridge_main


@pytest.fixture(scope="session")
def tile_corpus(tmp_path_factory):
    """Simulated 2-tile scan rendered through the core CLI."""
    root = tmp_path_factory.mktemp("corpus")
    plan = root / "plan.json"
    run = root / "run"
    subprocess.run(
        ["ovitrap", "plan", "--trap-mm", "12x8", "--tile-mm", "6x8",
         "--tile-px", "240x320", "--overlap", "0,0", "--counts", "2x1",
         "--out", str(plan)],
        check=True, capture_output=True,
    )
    subprocess.run(
        ["ovitrap", "simulate", "--plan", str(plan), "--eggs", "6", "--seed", "4",
         "--min-separation", "0.6", "--out-dir", str(run)],
        check=True, capture_output=True,
    )
    manifest = json.loads((run / "manifest.json").read_text())
    return manifest, run


@pytest.fixture(scope="session")
def bridge_output(tile_corpus):
    manifest, images_dir = tile_corpus
    torch.manual_seed(0)
    cfg = BridgeConfig(model="torchvision:maskrcnn_resnet50_fpn", score_floor=0.01)
    return infer_tiles(manifest, images_dir, cfg)


class TestBridgeContract:
    def test_output_parses_through_core_parser(self, bridge_output):
        from ovitrap import parse_tile_detections

        tiles = parse_tile_detections(bridge_output)  # raises on any violation
        assert [t.tile_id for t in tiles] == [0, 1]

    def test_polygons_within_tile_bounds(self, bridge_output, tile_corpus):
        manifest, images_dir = tile_corpus
        width, height = 240, 320
        for tile in bridge_output["tiles"]:
            for inst in tile["instances"]:
                poly = np.asarray(inst["polygon"])
                assert poly[:, 0].min() >= -0.5 and poly[:, 0].max() <= width - 0.5
                assert poly[:, 1].min() >= -0.5 and poly[:, 1].max() <= height - 0.5

    def test_scores_respect_floor_and_classes(self, bridge_output):
        for tile in bridge_output["tiles"]:
            for inst in tile["instances"]:
                assert inst["score"] >= 0.01
                assert inst["class"] in ("hatch", "full")

    def test_self_validation_passes(self, bridge_output):
        validate_detections(bridge_output)

    def test_empty_manifest_gives_empty_tiles(self, tile_corpus):
        _, images_dir = tile_corpus
        cfg = BridgeConfig(model="torchvision:maskrcnn_resnet50_fpn")
        doc = infer_tiles({"tiles": []}, images_dir, cfg)
        assert doc == {"tiles": []}


class TestBridgeConfig:
    def test_class_map_must_be_bijection(self):
        with pytest.raises(BridgeError, match="bijection"):
            BridgeConfig(model="x", class_map={1: "hatch", 2: "hatch"})
        with pytest.raises(BridgeError, match="bijection"):
            BridgeConfig(model="x", class_map={1: "hatch"})

    def test_score_floor_range(self):
        with pytest.raises(BridgeError):
            BridgeConfig(model="x", score_floor=1.5)

    def test_model_load_failure(self, tile_corpus):
        manifest, images_dir = tile_corpus
        cfg = BridgeConfig(model="/nonexistent/model.pt")
        with pytest.raises(BridgeError, match="model load failure"):
            infer_tiles(manifest, images_dir, cfg)

    def test_unknown_torchvision_model(self, tile_corpus):
        manifest, images_dir = tile_corpus
        cfg = BridgeConfig(model="torchvision:yolo")
        with pytest.raises(BridgeError, match="unknown torchvision model"):
            infer_tiles(manifest, images_dir, cfg)

    def test_missing_image_file(self, tile_corpus, tmp_path):
        manifest, _ = tile_corpus
        cfg = BridgeConfig(model="torchvision:maskrcnn_resnet50_fpn")
        with pytest.raises(BridgeError, match="image file missing"):
            infer_tiles(manifest, tmp_path, cfg)


class TestValidateDetections:
    def test_rejects_bad_score(self):
        doc = {"tiles": [{"tile_id": 0, "instances": [
            {"class": "full", "score": 1.4,
             "polygon": [[0, 0], [5, 0], [0, 5]], "clipped_edges": []}
        ]}]}
        with pytest.raises(BridgeError, match="score"):
            validate_detections(doc)

    def test_rejects_degenerate_polygon(self):
        doc = {"tiles": [{"tile_id": 0, "instances": [
            {"class": "full", "score": 0.5,
             "polygon": [[0, 0], [5, 0], [10, 0]], "clipped_edges": []}
        ]}]}
        with pytest.raises(BridgeError, match="polygon"):
            validate_detections(doc)


class TestBridgeCli:
    def test_end_to_end(self, tile_corpus, tmp_path):
        manifest_path = tile_corpus[1] / "manifest.json"
        out = tmp_path / "dets.json"
        torch.manual_seed(0)
        runner = CliRunner()
        res = runner.invoke(
            bridge_main,
            ["--manifest", str(manifest_path), "--images", str(tile_corpus[1]),
             "--score-floor", "0.01", "--out", str(out)],
            catch_exceptions=False,
        )
        assert res.exit_code == 0, res.output
        from ovitrap import parse_tile_detections

        parse_tile_detections(json.loads(out.read_text()))
