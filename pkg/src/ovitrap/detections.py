"""Egg-instance data model, interchange parsers, the synthetic oracle
detector, and dataset statistics.

Masks travel as polygons (resolution independent, matching what labeling
tools export); rasterization happens only where areas and IoU are needed.
Two wire formats are accepted:

* ground truth -- a strict subset of the common COCO-style annotation JSON
  (images / annotations / categories, polygon segmentation only), category
  names exactly ``hatch`` and ``full``;
* tile detections -- ``{tiles: [{tile_id, instances: [...]}]}`` with one
  polygon, a score, and the clipped tile edges per instance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import polygons as pg
from .device import CLASS_FULL, CLASS_HATCH, EggTruth, SyntheticScene
from .errors import SchemaError
from .geometry import ScanPlan, TilePose, TileSpec, tile_rect
from .jsonio import require

EDGES = ("N", "S", "E", "W")

# A clipped mask "touches" a tile edge when it comes within this many pixels.
EDGE_TOUCH_TOL_PX = 1.5

# Clipped slivers below one pixel of area carry no usable evidence and
# destabilize IoU, so the oracle drops them.
MIN_CLIPPED_AREA_PX2 = 1.0

ELLIPSE_VERTICES = 64


@dataclass(eq=False)
class EggInstance:
    """One detected or ground-truth egg.

    ``mask`` is a tuple of polygon rings. Vertex units are pixels when
    ``frame`` is a tile/image id and mm when ``frame`` is None (trap-global).
    ``clipped_edges`` names the tile borders the mask was cut at; it is
    always empty in the global frame.
    """

    id: int
    egg_class: str
    score: float
    mask: tuple[np.ndarray, ...]
    frame: int | None
    clipped_edges: frozenset[str] = field(default_factory=frozenset)


@dataclass(eq=False)
class TileDetections:
    tile_id: int
    instances: list[EggInstance]


@dataclass(frozen=True)
class GtImage:
    id: int
    file_name: str
    width: int
    height: int


@dataclass(eq=False)
class GroundTruthSet:
    """Validated ground-truth annotations, one EggInstance per annotation."""

    images: dict[int, GtImage]
    by_image: dict[int, list[EggInstance]]
    categories: dict[int, str]

    @property
    def instances(self) -> list[EggInstance]:
        return [inst for lst in self.by_image.values() for inst in lst]


def _validate_polygon(ring: np.ndarray, where: str) -> np.ndarray:
    if ring.ndim != 2 or ring.shape[1] != 2 or len(ring) < 3:
        raise SchemaError(f"{where}: polygon needs at least 3 (x, y) vertices")
    if abs(pg.ring_area(ring)) <= 0.0:
        raise SchemaError(f"{where}: polygon has zero area")
    if not pg.is_simple_polygon(ring):
        raise SchemaError(f"{where}: self-intersecting polygon")
    return ring


def parse_ground_truth(doc: Mapping) -> GroundTruthSet:
    """Parse and validate a ground-truth document. Unknown fields are
    ignored; structural problems raise SchemaError naming the record."""
    categories: dict[int, str] = {}
    for i, cat in enumerate(require(doc, "categories", "ground truth")):
        where = f"categories[{i}]"
        cid = int(require(cat, "id", where))
        name = require(cat, "name", where)
        if name not in (CLASS_HATCH, CLASS_FULL):
            raise SchemaError(f"{where}: unknown category name {name!r}")
        categories[cid] = name
    if set(categories.values()) != {CLASS_HATCH, CLASS_FULL}:
        raise SchemaError(
            "categories: must declare exactly the 'hatch' and 'full' classes"
        )

    images: dict[int, GtImage] = {}
    for i, img in enumerate(require(doc, "images", "ground truth")):
        where = f"images[{i}]"
        img_id = int(require(img, "id", where))
        if img_id in images:
            raise SchemaError(f"{where}: duplicate image id {img_id}")
        images[img_id] = GtImage(
            id=img_id,
            file_name=str(require(img, "file_name", where)),
            width=int(require(img, "width", where)),
            height=int(require(img, "height", where)),
        )

    by_image: dict[int, list[EggInstance]] = {img_id: [] for img_id in images}
    for i, ann in enumerate(require(doc, "annotations", "ground truth")):
        where = f"annotations[{i}]"
        ann_id = int(require(ann, "id", where))
        image_id = int(require(ann, "image_id", where))
        if image_id not in images:
            raise SchemaError(f"{where}: dangling image reference: {image_id}")
        cat_id = int(require(ann, "category_id", where))
        if cat_id not in categories:
            raise SchemaError(f"{where}: unknown category id {cat_id}")
        seg = require(ann, "segmentation", where)
        if not isinstance(seg, list) or not seg:
            raise SchemaError(f"{where}: segmentation must be a non-empty list")
        rings = []
        for j, flat in enumerate(seg):
            if not isinstance(flat, list) or len(flat) % 2 != 0 or len(flat) < 6:
                raise SchemaError(
                    f"{where}.segmentation[{j}]: expected a flat [x1,y1,...] list "
                    "of at least 3 points"
                )
            ring = np.asarray(flat, dtype=float).reshape(-1, 2)
            rings.append(_validate_polygon(ring, f"{where}.segmentation[{j}]"))
        by_image[image_id].append(
            EggInstance(
                id=ann_id,
                egg_class=categories[cat_id],
                score=1.0,
                mask=tuple(rings),
                frame=image_id,
            )
        )
    return GroundTruthSet(images=images, by_image=by_image, categories=categories)


def parse_tile_detections(doc: Mapping) -> list[TileDetections]:
    """Parse and validate a tile-detections document."""
    out: list[TileDetections] = []
    seen: set[int] = set()
    for i, tile_doc in enumerate(require(doc, "tiles", "detections")):
        where = f"tiles[{i}]"
        tile_id = int(require(tile_doc, "tile_id", where))
        if tile_id in seen:
            raise SchemaError(f"{where}: duplicate tile_id {tile_id}")
        seen.add(tile_id)
        instances: list[EggInstance] = []
        for j, inst in enumerate(require(tile_doc, "instances", where)):
            iw = f"{where}.instances[{j}]"
            cls = require(inst, "class", iw)
            if cls not in (CLASS_HATCH, CLASS_FULL):
                raise SchemaError(f"{iw}: unknown class {cls!r}")
            score = float(require(inst, "score", iw))
            if not 0.0 <= score <= 1.0:
                raise SchemaError(f"{iw}: score out of range: {score}")
            ring = np.asarray(require(inst, "polygon", iw), dtype=float)
            ring = _validate_polygon(ring, iw)
            edges = inst.get("clipped_edges", [])
            bad = [e for e in edges if e not in EDGES]
            if bad:
                raise SchemaError(f"{iw}: unknown clipped edge {bad[0]!r}")
            instances.append(
                EggInstance(
                    id=j,
                    egg_class=cls,
                    score=score,
                    mask=(ring,),
                    frame=tile_id,
                    clipped_edges=frozenset(edges),
                )
            )
        out.append(TileDetections(tile_id=tile_id, instances=instances))
    return out


def serialize_tile_detections(tiles: list[TileDetections]) -> dict:
    return {
        "tiles": [
            {
                "tile_id": t.tile_id,
                "instances": [
                    {
                        "class": inst.egg_class,
                        "score": inst.score,
                        "polygon": [[float(x), float(y)] for x, y in inst.mask[0]],
                        "clipped_edges": sorted(inst.clipped_edges),
                    }
                    for inst in t.instances
                ],
            }
            for t in sorted(tiles, key=lambda t: t.tile_id)
        ]
    }


@dataclass(frozen=True)
class JitterParams:
    """Detector-imperfection knobs for the oracle.

    sigma_px perturbs each boundary vertex radially (Gaussian, in pixels of
    the tile's finer pitch); the radial direction keeps the polygon simple.
    score_noise lowers scores by up to that amount, uniformly.
    """

    sigma_px: float = 0.0
    score_noise: float = 0.0


def oracle_detect(
    scene: SyntheticScene,
    pose: TilePose,
    tile: TileSpec,
    jitter: JitterParams = JitterParams(),
    tile_id: int = 0,
) -> TileDetections:
    """Perfect-knowledge detector over the synthetic scene.

    Emits one instance per egg whose ellipse intersects the tile: the
    boundary sampled at 64 vertices, converted to tile pixel coordinates,
    optionally jittered, then clipped to the tile rectangle. Deterministic
    given (scene.seed, pose, jitter).
    """
    rect = tile_rect(pose, tile)
    pu, pv = tile.pitch_major_mm, tile.pitch_minor_mm
    rng = np.random.default_rng((scene.seed, pose.row, pose.col))
    instances: list[EggInstance] = []
    for egg in scene.eggs:
        # One RNG draw pair per egg keeps results independent of which other
        # eggs intersect this tile.
        radial = rng.normal(0.0, 1.0, ELLIPSE_VERTICES)
        score_u = rng.uniform(0.0, 1.0)
        if egg.bbox().intersect(rect) is None:
            continue
        boundary_mm = egg.boundary(ELLIPSE_VERTICES)
        # Tile pixel coordinates (pixel-center convention).
        u = (boundary_mm[:, 0] - rect.x0) / pu - 0.5
        v = (boundary_mm[:, 1] - rect.y0) / pv - 0.5
        if jitter.sigma_px > 0.0:
            cu = (egg.cx_mm - rect.x0) / pu - 0.5
            cv = (egg.cy_mm - rect.y0) / pv - 0.5
            du, dv = u - cu, v - cv
            r = np.hypot(du, dv)
            r_new = np.maximum(r + jitter.sigma_px * radial, 0.1 * r)
            u = cu + du / r * r_new
            v = cv + dv / r * r_new
        ring = np.stack([u, v], axis=1)
        clipped = pg.clip_ring_to_rect(
            ring, -0.5, -0.5, tile.px_major - 0.5, tile.px_minor - 0.5
        )
        if clipped is None or abs(pg.ring_area(clipped)) < MIN_CLIPPED_AREA_PX2:
            continue
        edges = _touched_edges(clipped, tile)
        score = 1.0 - jitter.score_noise * score_u
        instances.append(
            EggInstance(
                id=len(instances),
                egg_class=egg.egg_class,
                score=score,
                mask=(clipped,),
                frame=tile_id,
                clipped_edges=edges,
            )
        )
    return TileDetections(tile_id=tile_id, instances=instances)


def _touched_edges(ring: np.ndarray, tile: TileSpec) -> frozenset[str]:
    """Tile edges the polygon touches, with the standard 1.5 px tolerance.

    Edge letters follow image convention: N is the minimum-v border, S the
    maximum-v border, W the minimum-u border, E the maximum-u border.
    """
    u, v = ring[:, 0], ring[:, 1]
    edges = set()
    if np.any(u <= -0.5 + EDGE_TOUCH_TOL_PX):
        edges.add("W")
    if np.any(u >= tile.px_major - 0.5 - EDGE_TOUCH_TOL_PX):
        edges.add("E")
    if np.any(v <= -0.5 + EDGE_TOUCH_TOL_PX):
        edges.add("N")
    if np.any(v >= tile.px_minor - 0.5 - EDGE_TOUCH_TOL_PX):
        edges.add("S")
    return frozenset(edges)


def oracle_detect_plan(
    scene: SyntheticScene, plan: ScanPlan, jitter: JitterParams = JitterParams()
) -> list[TileDetections]:
    """Run the oracle over every pose of a plan."""
    return [
        oracle_detect(scene, pose, plan.tile, jitter=jitter, tile_id=tile_id)
        for tile_id, pose in enumerate(plan.poses)
    ]


def oracle_truth_instance(egg: EggTruth, frame: int | None = None) -> EggInstance:
    """Ground-truth instance for an egg, in trap-global mm (used as the
    reference against which merged output is scored)."""
    return EggInstance(
        id=egg.id,
        egg_class=egg.egg_class,
        score=1.0,
        mask=(egg.boundary(ELLIPSE_VERTICES),),
        frame=frame,
    )


@dataclass(frozen=True)
class SplitStats:
    n_hatch: int
    n_full: int

    @property
    def total(self) -> int:
        return self.n_hatch + self.n_full

    @property
    def hatch_ratio(self) -> float | None:
        return self.n_hatch / self.total if self.total else None


def dataset_stats(
    gt: GroundTruthSet, split_of: Mapping[int, str] | None = None
) -> dict[str, SplitStats]:
    """Per-split, per-class instance counts plus the hatch ratio.

    Splits come from split_of (image id -> label) when given; otherwise the
    top-level directory of each image's file_name is used, falling back to
    'all' for bare file names.
    """
    counts: dict[str, dict[str, int]] = {}
    for img_id, insts in gt.by_image.items():
        if split_of is not None:
            split = split_of.get(img_id, "all")
        else:
            name = gt.images[img_id].file_name
            split = name.split("/", 1)[0] if "/" in name else "all"
        bucket = counts.setdefault(split, {CLASS_HATCH: 0, CLASS_FULL: 0})
        for inst in insts:
            bucket[inst.egg_class] += 1
    return {
        split: SplitStats(n_hatch=c[CLASS_HATCH], n_full=c[CLASS_FULL])
        for split, c in sorted(counts.items())
    }


def count_egg_tile_incidence(scene: SyntheticScene, plan: ScanPlan) -> int:
    """Brute-force count of (egg, tile) pairs an ideal detector must report:
    pairs whose clipped boundary keeps at least the minimum area. Used to
    check oracle completeness."""
    total = 0
    for egg in scene.eggs:
        ring_mm = egg.boundary(ELLIPSE_VERTICES)
        for pose in plan.poses:
            rect = tile_rect(pose, plan.tile)
            pu, pv = plan.tile.pitch_major_mm, plan.tile.pitch_minor_mm
            u = (ring_mm[:, 0] - rect.x0) / pu - 0.5
            v = (ring_mm[:, 1] - rect.y0) / pv - 0.5
            clipped = pg.clip_ring_to_rect(
                np.stack([u, v], axis=1),
                -0.5, -0.5, plan.tile.px_major - 0.5, plan.tile.px_minor - 0.5,
            )
            if clipped is not None and abs(pg.ring_area(clipped)) >= MIN_CLIPPED_AREA_PX2:
                total += 1
    return total


def polygon_area_px2(inst: EggInstance) -> float:
    return pg.mask_area(inst.mask)
