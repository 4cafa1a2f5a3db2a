"""Run a Mask R-CNN-family model over a directory of scanned tiles and emit
tile detections in the pipeline's interchange JSON.

The bridge is intentionally standalone: it consumes only the acquisition
manifest plus tile PNGs and produces the documented detections schema, so
the core pipeline never depends on it (and vice versa). It asserts schema
and geometry, never detection quality; model weights are configuration,
not part of the repository.

Wire format produced:
    {tiles: [{tile_id, instances: [{class: "hatch"|"full", score,
              polygon: [[u, v], ...], clipped_edges: ["E","W","N","S"]}]}]}
with polygon vertices in tile pixel coordinates (pixel-center convention:
valid range [-0.5, px - 0.5] per axis).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CLASSES = ("hatch", "full")

# A mask "touches" a tile edge when it comes within this many pixels.
EDGE_TOUCH_TOL_PX = 1.5

MASK_THRESHOLD = 0.5
# Douglas-Peucker tolerance (px) applied to traced contours; keeps the
# polygons compact without visibly moving the boundary.
CONTOUR_TOLERANCE_PX = 0.8
MIN_POLYGON_AREA_PX2 = 1.0


class BridgeError(Exception):
    """Model load, image decode, or output self-validation failure."""


@dataclass(frozen=True)
class BridgeConfig:
    """Inference configuration.

    model: either ``torchvision:maskrcnn_resnet50_fpn`` (fresh architecture;
    append ``@/path/to/state.pt`` to load trained weights) or a path to a
    TorchScript module. class_map maps the model's integer labels onto the
    two egg classes and must be a bijection.
    """

    model: str
    score_floor: float = 0.05
    class_map: dict[int, str] = field(
        default_factory=lambda: {1: "hatch", 2: "full"}
    )
    device: str = "cpu"

    def __post_init__(self):
        if not 0.0 <= self.score_floor <= 1.0:
            raise BridgeError("score_floor must be within [0, 1]")
        if sorted(self.class_map.values()) != sorted(CLASSES):
            raise BridgeError(
                "class_map must be a bijection onto {'hatch', 'full'}, "
                f"got {self.class_map!r}"
            )


def load_model(cfg: BridgeConfig):
    """Instantiate the configured model on the configured device."""
    import torch

    try:
        if cfg.model.startswith("torchvision:"):
            spec = cfg.model.split(":", 1)[1]
            name, _, weights_path = spec.partition("@")
            if name != "maskrcnn_resnet50_fpn":
                raise BridgeError(f"unknown torchvision model {name!r}")
            from torchvision.models.detection import maskrcnn_resnet50_fpn

            model = maskrcnn_resnet50_fpn(
                weights=None,
                weights_backbone=None,
                num_classes=max(cfg.class_map) + 1,
                min_size=256,
                max_size=512,
            )
            if weights_path:
                state = torch.load(weights_path, map_location=cfg.device)
                model.load_state_dict(state)
        else:
            model = torch.jit.load(cfg.model, map_location=cfg.device)
    except BridgeError:
        raise
    except Exception as exc:
        raise BridgeError(f"model load failure: {cfg.model}: {exc}") from exc
    model.to(cfg.device)
    model.eval()
    return model


def _load_tile(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.float32) / 255.0
    except BridgeError:
        raise
    except Exception as exc:
        raise BridgeError(f"image decode failure: {path}: {exc}") from exc


def _mask_to_polygon(mask: np.ndarray) -> np.ndarray | None:
    """Largest traced contour of a boolean mask, simplified, as (n, 2)
    pixel (u, v) vertices; None when nothing usable remains."""
    from skimage import measure

    padded = np.pad(mask.astype(float), 1)
    contours = measure.find_contours(padded, MASK_THRESHOLD)
    best, best_area = None, 0.0
    for contour in contours:
        ring = measure.approximate_polygon(contour, CONTOUR_TOLERANCE_PX)
        if len(ring) < 4:  # closed: first == last
            continue
        ring = ring[:-1] - 1.0  # drop closing point, undo padding
        area = abs(_ring_area(ring))
        if area > best_area:
            best, best_area = ring, area
    if best is None or best_area < MIN_POLYGON_AREA_PX2:
        return None
    # find_contours yields (row, col) = (v, u); the wire format wants (u, v).
    poly = best[:, ::-1].copy()
    # Clamp to the pixel-center domain (points sit on cell centers already;
    # this only guards the padded border trace).
    poly[:, 0] = np.clip(poly[:, 0], -0.5, mask.shape[1] - 0.5)
    poly[:, 1] = np.clip(poly[:, 1], -0.5, mask.shape[0] - 0.5)
    keep = np.any(poly != np.roll(poly, 1, axis=0), axis=1)
    poly = poly[keep]
    if len(poly) < 3 or not _is_simple(poly):
        return None
    return poly


def _ring_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _is_simple(ring: np.ndarray) -> bool:
    """Pairwise segment-crossing test; rings here are short after
    simplification."""
    n = len(ring)
    p = ring
    q = np.roll(ring, -1, axis=0)

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    for i in range(n):
        for j in range(i + 1, n):
            if (j + 1) % n == i or (i + 1) % n == j:
                continue
            d1, d2 = orient(p[j], q[j], p[i]), orient(p[j], q[j], q[i])
            d3, d4 = orient(p[i], q[i], p[j]), orient(p[i], q[i], q[j])
            if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
                return False
    return True


def _touched_edges(poly: np.ndarray, width: int, height: int) -> list[str]:
    u, v = poly[:, 0], poly[:, 1]
    edges = []
    if np.any(v <= -0.5 + EDGE_TOUCH_TOL_PX):
        edges.append("N")
    if np.any(v >= height - 0.5 - EDGE_TOUCH_TOL_PX):
        edges.append("S")
    if np.any(u >= width - 0.5 - EDGE_TOUCH_TOL_PX):
        edges.append("E")
    if np.any(u <= -0.5 + EDGE_TOUCH_TOL_PX):
        edges.append("W")
    return sorted(edges)


def infer_tiles(manifest: dict, images_dir: str | Path, cfg: BridgeConfig) -> dict:
    """Run the model over every tile in the manifest; returns the
    detections document (already self-validated)."""
    import torch

    images_dir = Path(images_dir)
    tiles_doc = manifest.get("tiles")
    if tiles_doc is None:
        raise BridgeError("manifest: missing 'tiles'")
    model = load_model(cfg) if tiles_doc else None

    out_tiles = []
    for entry in tiles_doc:
        tile_id = int(entry["id"])
        path = images_dir / entry["file"]
        if not path.exists():
            raise BridgeError(f"manifest tile {tile_id}: image file missing: {path}")
        pixels = _load_tile(path)
        height, width = pixels.shape
        tensor = torch.from_numpy(pixels)[None].repeat(3, 1, 1).to(cfg.device)
        with torch.no_grad():
            pred = model([tensor])[0]

        instances = []
        scores = pred["scores"].cpu().numpy()
        labels = pred["labels"].cpu().numpy()
        masks = pred["masks"].cpu().numpy()  # (n, 1, H, W) soft masks
        for k in range(len(scores)):
            score = float(scores[k])
            label = int(labels[k])
            if score < cfg.score_floor or label not in cfg.class_map:
                continue
            poly = _mask_to_polygon(masks[k, 0] >= MASK_THRESHOLD)
            if poly is None:
                continue
            instances.append(
                {
                    "class": cfg.class_map[label],
                    "score": min(score, 1.0),
                    "polygon": [[float(u), float(v)] for u, v in poly],
                    "clipped_edges": _touched_edges(poly, width, height),
                }
            )
        out_tiles.append({"tile_id": tile_id, "instances": instances})

    doc = {"tiles": out_tiles}
    validate_detections(doc)
    return doc


def validate_detections(doc: dict) -> None:
    """Self-validation against the interchange schema; raises BridgeError
    so a malformed document is never written."""
    if set(doc) != {"tiles"}:
        raise BridgeError("self-validation: document must have exactly 'tiles'")
    seen = set()
    for t, tile in enumerate(doc["tiles"]):
        where = f"self-validation: tiles[{t}]"
        if set(tile) != {"tile_id", "instances"}:
            raise BridgeError(f"{where}: bad keys {sorted(tile)}")
        if tile["tile_id"] in seen:
            raise BridgeError(f"{where}: duplicate tile_id {tile['tile_id']}")
        seen.add(tile["tile_id"])
        for i, inst in enumerate(tile["instances"]):
            iw = f"{where}.instances[{i}]"
            if inst["class"] not in CLASSES:
                raise BridgeError(f"{iw}: bad class {inst['class']!r}")
            if not 0.0 <= inst["score"] <= 1.0:
                raise BridgeError(f"{iw}: score out of range")
            poly = np.asarray(inst["polygon"], dtype=float)
            if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 3:
                raise BridgeError(f"{iw}: polygon needs >= 3 (u, v) vertices")
            if abs(_ring_area(poly)) <= 0.0 or not _is_simple(poly):
                raise BridgeError(f"{iw}: degenerate polygon")
            if set(inst["clipped_edges"]) - {"N", "S", "E", "W"}:
                raise BridgeError(f"{iw}: bad clipped_edges")
