"""Trap/tile geometry, scan planning, and coordinate transforms.

The trap-global frame is millimeters with the origin at the trap's minimum
corner: x runs along the major (length) axis, y along the minor (width)
axis. Pixel coordinates inside a tile follow the pixel-center convention:
integer pixel (u, v) has its center at (u + 0.5, v + 0.5) pixel pitches from
the tile's minimum corner, so the continuous pixel domain of a tile spans
[-0.5, px - 0.5] per axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError, SchemaError
from .jsonio import require

# Clamped edge tiles must align with the trap border to within this slack.
EDGE_ALIGN_TOL_MM = 1e-9

#: Name of the shipped acquisition preset: 14.8 x 2.5 cm trap, 9 x 5 mm field
#: of view at 25 % / 40 % overlaps, forced to the published 33 x 5 tile grid.
PRESET_PAPER_165 = "paper-165"

DEFAULT_TILE_PX = (1280, 1024)


@dataclass(frozen=True)
class TrapSpec:
    """Physical trap extents in mm; the major axis is the longer one."""

    length_mm: float
    width_mm: float

    def __post_init__(self):
        if self.length_mm <= 0 or self.width_mm <= 0:
            raise ConfigError("trap extents must be positive")
        if self.length_mm < self.width_mm:
            raise ConfigError("trap length_mm (major axis) must be >= width_mm")


@dataclass(frozen=True)
class TileSpec:
    """One camera field of view: physical extent and pixel resolution."""

    major_extent_mm: float
    minor_extent_mm: float
    px_major: int
    px_minor: int

    def __post_init__(self):
        if self.major_extent_mm <= 0 or self.minor_extent_mm <= 0:
            raise ConfigError("tile extents must be positive")
        if self.px_major <= 0 or self.px_minor <= 0:
            raise ConfigError("tile resolution must be positive")

    @property
    def pitch_major_mm(self) -> float:
        return self.major_extent_mm / self.px_major

    @property
    def pitch_minor_mm(self) -> float:
        return self.minor_extent_mm / self.px_minor


@dataclass(frozen=True)
class OverlapSpec:
    """Requested overlap between adjacent tiles, as a fraction of the tile
    extent on each axis."""

    major_frac: float
    minor_frac: float

    def __post_init__(self):
        for frac in (self.major_frac, self.minor_frac):
            if not 0.0 <= frac < 1.0:
                raise ConfigError(f"overlap fraction {frac} outside [0, 1)")


@dataclass(frozen=True)
class TilePose:
    """Grid position of one tile; (x_mm, y_mm) is its minimum corner."""

    row: int
    col: int
    x_mm: float
    y_mm: float


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in trap-global mm."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def intersect(self, other: "Rect") -> "Rect | None":
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None  # edge contact has zero area
        return Rect(x0, y0, x1, y1)

    def touches_or_overlaps(self, other: "Rect", tol: float = 1e-9) -> bool:
        return (
            self.x0 <= other.x1 + tol
            and other.x0 <= self.x1 + tol
            and self.y0 <= other.y1 + tol
            and other.y0 <= self.y1 + tol
        )


@dataclass(frozen=True)
class ScanPlan:
    """Ordered grid of tile poses; the pose index is the tile id."""

    trap: TrapSpec
    tile: TileSpec
    overlap: OverlapSpec
    n_major: int
    n_minor: int
    poses: tuple[TilePose, ...]

    def __post_init__(self):
        if self.n_major * self.n_minor != len(self.poses):
            raise ConfigError("pose count does not match the n_major x n_minor grid")
        cells = {(p.row, p.col) for p in self.poses}
        if len(cells) != len(self.poses):
            raise ConfigError("duplicate (row, col) in scan plan")

    def pose(self, tile_id: int) -> TilePose:
        return self.poses[tile_id]


def tile_rect(pose: TilePose, tile: TileSpec) -> Rect:
    return Rect(
        pose.x_mm,
        pose.y_mm,
        pose.x_mm + tile.major_extent_mm,
        pose.y_mm + tile.minor_extent_mm,
    )


def _axis_positions(
    trap_extent: float, tile_extent: float, overlap_frac: float, count: int | None
) -> list[float]:
    """Tile minimum-corner positions along one axis.

    Without a count the step is tile * (1 - overlap) and the final tile is
    clamped to the trap edge; with a count the step is recomputed so the
    first and last tiles sit flush with the trap borders.
    """
    if tile_extent > trap_extent + 1e-12:
        raise GeometryError(
            f"tile extent {tile_extent} mm exceeds trap extent {trap_extent} mm"
        )
    span = trap_extent - tile_extent
    if count is None:
        step = tile_extent * (1.0 - overlap_frac)
        if step <= 0:
            raise ConfigError(f"overlap {overlap_frac} leaves a step of {step} mm")
        n = 1 if span <= 1e-12 else math.ceil(span / step - 1e-12) + 1
    else:
        if count < 1:
            raise ConfigError("tile count override must be >= 1")
        n = count
    if n == 1:
        return [0.0]
    step = span / (n - 1) if count is not None else tile_extent * (1.0 - overlap_frac)
    positions = [i * step for i in range(n - 1)]
    positions.append(span)  # exact edge alignment regardless of step rounding
    return positions


def plan_scan(
    trap: TrapSpec,
    tile: TileSpec,
    overlap: OverlapSpec,
    count_override: tuple[int, int] | None = None,
) -> ScanPlan:
    """Generate the serpentine scan grid covering the trap.

    Acquisition order walks columns (minor axis) in increasing order; rows
    ascend within even columns and descend within odd ones, which keeps
    every stage move a single step.
    """
    n_major_req, n_minor_req = count_override if count_override else (None, None)
    xs = _axis_positions(trap.length_mm, tile.major_extent_mm, overlap.major_frac, n_major_req)
    ys = _axis_positions(trap.width_mm, tile.minor_extent_mm, overlap.minor_frac, n_minor_req)
    poses: list[TilePose] = []
    for col, y in enumerate(ys):
        rows = range(len(xs)) if col % 2 == 0 else range(len(xs) - 1, -1, -1)
        for row in rows:
            poses.append(TilePose(row=row, col=col, x_mm=xs[row], y_mm=y))
    return ScanPlan(
        trap=trap,
        tile=tile,
        overlap=overlap,
        n_major=len(xs),
        n_minor=len(ys),
        poses=tuple(poses),
    )


def paper_preset() -> ScanPlan:
    """The shipped 165-tile acquisition preset (see PRESET_PAPER_165)."""
    return plan_scan(
        trap=TrapSpec(length_mm=148.0, width_mm=25.0),
        tile=TileSpec(
            major_extent_mm=5.0,
            minor_extent_mm=9.0,
            px_major=DEFAULT_TILE_PX[0],
            px_minor=DEFAULT_TILE_PX[1],
        ),
        overlap=OverlapSpec(major_frac=0.25, minor_frac=0.40),
        count_override=(33, 5),
    )


def tile_to_global(pose: TilePose, tile: TileSpec, u, v):
    """Map continuous pixel coordinates (u, v) of a tile to trap-global mm.

    Accepts scalars or arrays. Valid coordinates span [-0.5, px - 0.5] per
    axis (pixel-center convention); anything outside raises GeometryError.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    tol = 1e-6
    if np.any(u < -0.5 - tol) or np.any(u > tile.px_major - 0.5 + tol):
        raise GeometryError("pixel u coordinate out of tile bounds")
    if np.any(v < -0.5 - tol) or np.any(v > tile.px_minor - 0.5 + tol):
        raise GeometryError("pixel v coordinate out of tile bounds")
    x = pose.x_mm + (u + 0.5) * tile.pitch_major_mm
    y = pose.y_mm + (v + 0.5) * tile.pitch_minor_mm
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def global_to_tile(pose: TilePose, tile: TileSpec, x, y):
    """Inverse of tile_to_global; exact up to floating point."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = (x - pose.x_mm) / tile.pitch_major_mm - 0.5
    v = (y - pose.y_mm) / tile.pitch_minor_mm - 0.5
    tol = 1e-6
    if np.any(u < -0.5 - tol) or np.any(u > tile.px_major - 0.5 + tol):
        raise GeometryError("global x coordinate outside this tile")
    if np.any(v < -0.5 - tol) or np.any(v > tile.px_minor - 0.5 + tol):
        raise GeometryError("global y coordinate outside this tile")
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def overlap_region(a: TilePose, b: TilePose, tile: TileSpec) -> Rect | None:
    """Intersection of two tile rectangles; None when interiors are disjoint."""
    return tile_rect(a, tile).intersect(tile_rect(b, tile))


def estimate_duration(plan: ScanPlan, dwell_s: float, per_move_s: float) -> float:
    """Total acquisition time: one dwell per tile plus one move between
    consecutive tiles (capture time is folded into the dwell)."""
    if dwell_s < 0 or per_move_s < 0:
        raise ConfigError("dwell and per-move times must be non-negative")
    n = len(plan.poses)
    if n == 0:
        raise ConfigError("cannot estimate duration of an empty plan")
    return n * dwell_s + (n - 1) * per_move_s


def plan_to_json(plan: ScanPlan) -> dict:
    return {
        "trap": {"length_mm": plan.trap.length_mm, "width_mm": plan.trap.width_mm},
        "tile": {
            "major_mm": plan.tile.major_extent_mm,
            "minor_mm": plan.tile.minor_extent_mm,
            "px_major": plan.tile.px_major,
            "px_minor": plan.tile.px_minor,
        },
        "overlap": {
            "major_frac": plan.overlap.major_frac,
            "minor_frac": plan.overlap.minor_frac,
        },
        "poses": [
            {"id": i, "row": p.row, "col": p.col, "x_mm": p.x_mm, "y_mm": p.y_mm}
            for i, p in enumerate(plan.poses)
        ],
    }


def plan_from_json(doc: dict) -> ScanPlan:
    trap_doc = require(doc, "trap", "plan")
    tile_doc = require(doc, "tile", "plan")
    ov_doc = require(doc, "overlap", "plan")
    poses_doc = require(doc, "poses", "plan")
    try:
        trap = TrapSpec(
            length_mm=float(require(trap_doc, "length_mm", "plan.trap")),
            width_mm=float(require(trap_doc, "width_mm", "plan.trap")),
        )
        tile = TileSpec(
            major_extent_mm=float(require(tile_doc, "major_mm", "plan.tile")),
            minor_extent_mm=float(require(tile_doc, "minor_mm", "plan.tile")),
            px_major=int(require(tile_doc, "px_major", "plan.tile")),
            px_minor=int(require(tile_doc, "px_minor", "plan.tile")),
        )
        overlap = OverlapSpec(
            major_frac=float(require(ov_doc, "major_frac", "plan.overlap")),
            minor_frac=float(require(ov_doc, "minor_frac", "plan.overlap")),
        )
    except ConfigError as exc:
        raise SchemaError(f"plan: {exc}") from exc
    poses = []
    for i, p in enumerate(poses_doc):
        where = f"plan.poses[{i}]"
        if int(require(p, "id", where)) != i:
            raise SchemaError(f"{where}: pose ids must be consecutive from 0")
        poses.append(
            TilePose(
                row=int(require(p, "row", where)),
                col=int(require(p, "col", where)),
                x_mm=float(require(p, "x_mm", where)),
                y_mm=float(require(p, "y_mm", where)),
            )
        )
    rows = 1 + max(p.row for p in poses) if poses else 0
    cols = 1 + max(p.col for p in poses) if poses else 0
    try:
        plan = ScanPlan(
            trap=trap, tile=tile, overlap=overlap,
            n_major=rows, n_minor=cols, poses=tuple(poses),
        )
    except ConfigError as exc:
        raise SchemaError(f"plan: {exc}") from exc
    for i, p in enumerate(poses):
        if not (-EDGE_ALIGN_TOL_MM <= p.x_mm <= trap.length_mm - tile.major_extent_mm + EDGE_ALIGN_TOL_MM):
            raise SchemaError(f"plan.poses[{i}]: x_mm places the tile outside the trap")
        if not (-EDGE_ALIGN_TOL_MM <= p.y_mm <= trap.width_mm - tile.minor_extent_mm + EDGE_ALIGN_TOL_MM):
            raise SchemaError(f"plan.poses[{i}]: y_mm places the tile outside the trap")
    return plan
