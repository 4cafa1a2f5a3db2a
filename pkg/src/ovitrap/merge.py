"""Whole-trap reconstruction from per-tile detections.

Tile-local detections are lifted to trap-global mm, then collapsed with a
connected-components pass over three edge rules:

* duplicate rule — mask IoU at or above ``dup_iou_threshold``;
* containment rule — the smaller mask lies (almost) inside the larger one
  (intersection over the smaller area at or above
  ``containment_threshold``). This covers the frequent case where one tile
  sees a clipped fragment of an egg while a neighbouring tile sees it
  whole: the fragment's IoU against the full view can be arbitrarily small,
  so the plain duplicate rule cannot catch it;
* cut-egg rule — both masks were clipped at complementary borders of
  adjacent tiles and approach within ``contact_tolerance_mm``.

Each component collapses to a single instance whose mask is the rasterized
union of its members, re-vectorized to polygons (robust against
near-degenerate jittered geometry, unlike exact polygon booleans).
Singleton components keep their polygon untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import polygons as pg
from .detections import CLASS_FULL, CLASS_HATCH, TileDetections
from .errors import ConfigError, InvariantError, SchemaError
from .geometry import Rect, ScanPlan, TileSpec, tile_rect, tile_to_global
from .jsonio import require


@dataclass(frozen=True)
class MergeConfig:
    dup_iou_threshold: float = 0.5
    contact_tolerance_mm: float = 0.02
    score_combine: Literal["max", "mean"] = "max"
    raster_pitch_mm: float = 0.007
    containment_threshold: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.dup_iou_threshold <= 1.0:
            raise ConfigError("dup_iou_threshold must be in (0, 1]")
        if self.contact_tolerance_mm < 0:
            raise ConfigError("contact_tolerance_mm must be >= 0")
        if self.score_combine not in ("max", "mean"):
            raise ConfigError("score_combine must be 'max' or 'mean'")
        if self.raster_pitch_mm <= 0:
            raise ConfigError("raster_pitch_mm must be positive")
        if not 0.0 < self.containment_threshold <= 1.0:
            raise ConfigError("containment_threshold must be in (0, 1]")


@dataclass(frozen=True)
class Clip:
    """Where an instance was cut: the tile, the edge letter, and the tile's
    global rectangle (kept so adjacency needs no plan at merge time)."""

    tile_id: int
    edge: str
    rect: Rect


@dataclass(eq=False)
class GlobalInstance:
    """A reconstructed instance in trap-global mm."""

    id: int
    egg_class: str
    score: float
    mask: tuple[np.ndarray, ...]
    provenance: frozenset[tuple[int, int]]  # (tile_id, local instance id)
    clips: tuple[Clip, ...] = field(default=())  # internal; not serialized


def to_global(
    dets: list[TileDetections], plan: ScanPlan, tile: TileSpec | None = None
) -> list[GlobalInstance]:
    """Lift tile-local detections into the trap-global frame (no merging)."""
    tile = tile or plan.tile
    out: list[GlobalInstance] = []
    for td in dets:
        if not 0 <= td.tile_id < len(plan.poses):
            raise SchemaError(f"detections: unknown tile_id {td.tile_id}")
        pose = plan.pose(td.tile_id)
        rect = tile_rect(pose, tile)
        for inst in td.instances:
            rings = []
            for ring in inst.mask:
                x, y = tile_to_global(pose, tile, ring[:, 0], ring[:, 1])
                rings.append(np.stack([x, y], axis=1))
            clips = tuple(
                Clip(tile_id=td.tile_id, edge=e, rect=rect)
                for e in sorted(inst.clipped_edges)
            )
            out.append(
                GlobalInstance(
                    id=len(out),
                    egg_class=inst.egg_class,
                    score=inst.score,
                    mask=tuple(rings),
                    provenance=frozenset({(td.tile_id, inst.id)}),
                    clips=clips,
                )
            )
    return out


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


# Complementary edge pairs for the cut-egg rule: the first instance was
# clipped at `edge`, the second continues beyond it on the given side.
_COMPLEMENT = {"E": "W", "W": "E", "N": "S", "S": "N"}


def _cut_pair(a: GlobalInstance, b: GlobalInstance, tol: float) -> bool:
    """True when a and b look like two fragments of one egg cut at a shared
    border: complementary clipped edges on adjacent tiles, correctly
    oriented, masks within the contact tolerance."""
    for ca in a.clips:
        for cb in b.clips:
            if ca.tile_id == cb.tile_id or cb.edge != _COMPLEMENT[ca.edge]:
                continue
            if not ca.rect.touches_or_overlaps(cb.rect, tol=tol):
                continue
            # Orientation: an E clip continues east, so the W-clipped mate's
            # tile must extend further east than the cut line, etc.
            if ca.edge == "E" and not cb.rect.x1 > ca.rect.x1:
                continue
            if ca.edge == "W" and not cb.rect.x0 < ca.rect.x0:
                continue
            if ca.edge == "S" and not cb.rect.y1 > ca.rect.y1:
                continue
            if ca.edge == "N" and not cb.rect.y0 < ca.rect.y0:
                continue
            return True
    return False


def _pair_overlap_stats(
    a: GlobalInstance, b: GlobalInstance, pitch: float
) -> tuple[float, float]:
    """(IoU, intersection-over-smaller-area) on a shared raster."""
    bbox_a = pg.mask_bbox(a.mask)
    bbox_b = pg.mask_bbox(b.mask)
    bbox = (
        min(bbox_a[0], bbox_b[0]),
        min(bbox_a[1], bbox_b[1]),
        max(bbox_a[2], bbox_b[2]),
        max(bbox_a[3], bbox_b[3]),
    )
    x0, y0, nx, ny = pg.raster_grid(bbox, pitch, pad_cells=0)
    ra = pg.rasterize_mask(a.mask, x0, y0, nx, ny, pitch)
    rb = pg.rasterize_mask(b.mask, x0, y0, nx, ny, pitch)
    inter = np.count_nonzero(ra & rb)
    union = np.count_nonzero(ra | rb)
    smaller = min(np.count_nonzero(ra), np.count_nonzero(rb))
    iou = inter / union if union else 0.0
    ios = inter / smaller if smaller else 0.0
    return float(iou), float(ios)


def _canonical_key(inst: GlobalInstance):
    """Total order on merged instances, independent of input order."""
    return (*pg.mask_bbox(inst.mask), inst.egg_class, inst.score, sorted(inst.provenance))


def _find_edges(
    instances: list[GlobalInstance], cfg: MergeConfig
) -> list[tuple[int, int]]:
    """Pairs connected by the duplicate, containment, or cut-egg rule."""
    n = len(instances)
    if n < 2:
        return []
    boxes = np.array([pg.mask_bbox(inst.mask) for inst in instances])
    margin = cfg.contact_tolerance_mm
    near = (
        (boxes[:, None, 0] <= boxes[None, :, 2] + margin)
        & (boxes[None, :, 0] <= boxes[:, None, 2] + margin)
        & (boxes[:, None, 1] <= boxes[None, :, 3] + margin)
        & (boxes[None, :, 1] <= boxes[:, None, 3] + margin)
    )
    edges: list[tuple[int, int]] = []
    for i, j in np.argwhere(np.triu(near, k=1)):
        a, b = instances[i], instances[j]
        iou, ios = _pair_overlap_stats(a, b, cfg.raster_pitch_mm)
        if iou >= cfg.dup_iou_threshold or ios >= cfg.containment_threshold:
            edges.append((i, j))
            continue
        if _cut_pair(a, b, cfg.contact_tolerance_mm) or _cut_pair(
            b, a, cfg.contact_tolerance_mm
        ):
            if pg.mask_min_distance(a.mask, b.mask) <= cfg.contact_tolerance_mm:
                edges.append((i, j))
    return edges


def deduplicate(
    instances: list[GlobalInstance], cfg: MergeConfig = MergeConfig()
) -> list[GlobalInstance]:
    """Collapse duplicate and cut detections; see the module docstring.

    Runs connected-components collapse rounds to a fixed point: collapsing
    re-vectorizes masks, which can expose a new near-threshold pair, so a
    single pass is not idempotent in general. At the fixed point no rule
    fires on the output, making a re-run the identity by construction.
    Output is sorted by mask bounding box and re-numbered, so the result is
    also independent of input order.
    """
    current = list(instances)
    while True:
        edges = _find_edges(current, cfg)
        if not edges:
            break
        uf = _UnionFind(len(current))
        for i, j in edges:
            uf.union(i, j)
        groups: dict[int, list[GlobalInstance]] = {}
        for i, inst in enumerate(current):
            groups.setdefault(uf.find(i), []).append(inst)
        current = [_collapse(members, cfg) for members in groups.values()]

    current.sort(key=_canonical_key)
    out = [
        GlobalInstance(
            id=i,
            egg_class=g.egg_class,
            score=g.score,
            mask=g.mask,
            provenance=g.provenance,
            clips=g.clips,
        )
        for i, g in enumerate(current)
    ]
    _check_conservation(instances, out)
    return out


def _collapse(members: list[GlobalInstance], cfg: MergeConfig) -> GlobalInstance:
    if len(members) == 1:
        m = members[0]
        return GlobalInstance(
            id=0, egg_class=m.egg_class, score=m.score, mask=m.mask,
            provenance=m.provenance, clips=m.clips,
        )
    mask = _raster_union([m.mask for m in members], cfg.raster_pitch_mm)
    scores = [m.score for m in members]
    if cfg.score_combine == "max":
        score = max(scores)
    else:
        # Weight by provenance size so iterated collapsing still yields the
        # mean over the original tile detections.
        weights = [len(m.provenance) for m in members]
        score = float(np.average(scores, weights=weights))
    top = max(scores)
    top_classes = {m.egg_class for m in members if m.score == top}
    # Highest score decides the class; a cross-class tie falls back to the
    # majority class of the dataset.
    egg_class = top_classes.pop() if len(top_classes) == 1 else CLASS_FULL
    provenance = frozenset().union(*[m.provenance for m in members])
    clips = tuple(
        sorted(
            {c for m in members for c in m.clips},
            key=lambda c: (c.tile_id, c.edge),
        )
    )
    return GlobalInstance(
        id=0, egg_class=egg_class, score=score, mask=mask,
        provenance=provenance, clips=clips,
    )


def _raster_union(masks: list[tuple[np.ndarray, ...]], pitch: float) -> tuple[np.ndarray, ...]:
    """Union several masks on a raster and re-vectorize the result."""
    from skimage import measure  # deferred: heavy import, merge-only

    boxes = [pg.mask_bbox(m) for m in masks]
    bbox = (
        min(b[0] for b in boxes),
        min(b[1] for b in boxes),
        max(b[2] for b in boxes),
        max(b[3] for b in boxes),
    )
    x0, y0, nx, ny = pg.raster_grid(bbox, pitch, pad_cells=2)
    grid = np.zeros((ny, nx), dtype=bool)
    for m in masks:
        grid |= pg.rasterize_mask(m, x0, y0, nx, ny, pitch)
    contours = measure.find_contours(grid.astype(float), 0.5, positive_orientation="high")
    rings = []
    for contour in contours:
        ring = contour[:-1]  # find_contours closes the loop; drop the repeat
        if len(ring) < 3:
            continue
        xy = np.stack(
            [x0 + (ring[:, 1] + 0.5) * pitch, y0 + (ring[:, 0] + 0.5) * pitch], axis=1
        )
        if abs(pg.ring_area(xy)) < 0.5 * pitch * pitch:
            continue
        rings.append(xy)
    if not rings:
        raise InvariantError("raster union produced an empty mask")
    return tuple(rings)


def _check_conservation(
    inputs: list[GlobalInstance], outputs: list[GlobalInstance]
) -> None:
    """Every input provenance entry must land in exactly one output."""
    seen: list[tuple[int, int]] = []
    for g in outputs:
        seen.extend(g.provenance)
    if len(seen) != len(set(seen)):
        raise InvariantError("provenance entry assigned to multiple merged instances")
    want = {p for inst in inputs for p in inst.provenance}
    if set(seen) != want:
        raise InvariantError("merged output lost or invented provenance entries")


@dataclass(frozen=True)
class CountReport:
    n_hatched: int
    n_full: int

    @property
    def total(self) -> int:
        return self.n_hatched + self.n_full

    @property
    def hatch_ratio(self) -> float | None:
        return self.n_hatched / self.total if self.total else None

    def to_json(self) -> dict:
        doc = {"hatched": self.n_hatched, "full": self.n_full, "total": self.total}
        if self.total:
            doc["hatch_ratio"] = self.hatch_ratio
        return doc


def count_eggs(instances: list[GlobalInstance]) -> CountReport:
    """Per-class tallies; callers pass deduplicated instances."""
    n_hatched = sum(1 for i in instances if i.egg_class == CLASS_HATCH)
    return CountReport(n_hatched=n_hatched, n_full=len(instances) - n_hatched)


def merged_to_json(instances: list[GlobalInstance]) -> dict:
    """Merged-output document. The wire format carries one polygon per
    instance; for the rare multi-lobe mask the largest ring is emitted."""
    report = count_eggs(instances)
    out = []
    for inst in instances:
        ring = max(inst.mask, key=lambda r: abs(pg.ring_area(r)))
        out.append(
            {
                "id": inst.id,
                "class": inst.egg_class,
                "score": inst.score,
                "polygon": [[float(x), float(y)] for x, y in ring],
                "provenance": sorted([t, l] for t, l in inst.provenance),
            }
        )
    return {"instances": out, "counts": report.to_json()}


def merged_from_json(doc: dict) -> tuple[list[GlobalInstance], CountReport]:
    instances = []
    for i, rec in enumerate(require(doc, "instances", "merged")):
        where = f"merged.instances[{i}]"
        cls = require(rec, "class", where)
        if cls not in (CLASS_HATCH, CLASS_FULL):
            raise SchemaError(f"{where}: unknown class {cls!r}")
        ring = np.asarray(require(rec, "polygon", where), dtype=float)
        if ring.ndim != 2 or ring.shape[1] != 2 or len(ring) < 3:
            raise SchemaError(f"{where}: polygon needs at least 3 (x, y) vertices")
        provenance = frozenset(
            (int(t), int(l)) for t, l in require(rec, "provenance", where)
        )
        if not provenance:
            raise SchemaError(f"{where}: empty provenance")
        instances.append(
            GlobalInstance(
                id=int(require(rec, "id", where)),
                egg_class=cls,
                score=float(require(rec, "score", where)),
                mask=(ring,),
                provenance=provenance,
            )
        )
    counts = require(doc, "counts", "merged")
    report = CountReport(
        n_hatched=int(require(counts, "hatched", "merged.counts")),
        n_full=int(require(counts, "full", "merged.counts")),
    )
    return instances, report
