"""Whole-trap overlay rendering: merged masks drawn over a downscaled
mosaic of the tile images, hatched eggs in one hue, full eggs in another."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import polygons as pg
from .detections import CLASS_HATCH
from .errors import SchemaError
from .geometry import ScanPlan
from .jsonio import require
from .merge import GlobalInstance

# Target mosaic width in pixels; the pitch follows from the trap length.
MOSAIC_WIDTH_PX = 1600

HATCH_COLOR = (235, 110, 35)
FULL_COLOR = (45, 105, 230)
OVERLAY_ALPHA = 0.45


def render_overlay(
    instances: list[GlobalInstance],
    plan: ScanPlan,
    manifest: dict,
    images_dir: str | Path,
    out_path: str | Path,
) -> None:
    from PIL import Image

    images_dir = Path(images_dir)
    pitch = plan.trap.length_mm / MOSAIC_WIDTH_PX
    nx = MOSAIC_WIDTH_PX
    ny = int(np.ceil(plan.trap.width_mm / pitch))
    canvas = np.full((ny, nx), 230, dtype=np.uint8)

    for i, entry in enumerate(require(manifest, "tiles", "manifest")):
        where = f"manifest.tiles[{i}]"
        name = require(entry, "file", where)
        path = images_dir / name
        if not path.exists():
            raise SchemaError(f"{where}: image file not found: {path}")
        tile_img = np.asarray(Image.open(path).convert("L"))
        w = max(1, int(round(plan.tile.major_extent_mm / pitch)))
        h = max(1, int(round(plan.tile.minor_extent_mm / pitch)))
        small = np.asarray(
            Image.fromarray(tile_img).resize((w, h), resample=Image.BILINEAR)
        )
        x0 = int(round(float(require(entry, "x_mm", where)) / pitch))
        y0 = int(round(float(require(entry, "y_mm", where)) / pitch))
        x1, y1 = min(x0 + w, nx), min(y0 + h, ny)
        canvas[y0:y1, x0:x1] = small[: y1 - y0, : x1 - x0]

    rgb = np.stack([canvas] * 3, axis=2).astype(float)
    for inst in instances:
        color = HATCH_COLOR if inst.egg_class == CLASS_HATCH else FULL_COLOR
        bbox = pg.mask_bbox(inst.mask)
        gx0, gy0, gnx, gny = pg.raster_grid(bbox, pitch, pad_cells=1)
        hit = pg.rasterize_mask(inst.mask, gx0, gy0, gnx, gny, pitch)
        # Grid cell (r, c) sits at mosaic pixel (r + gy0/pitch, c + gx0/pitch).
        col_off = int(round(gx0 / pitch))
        row_off = int(round(gy0 / pitch))
        rows, cols = np.nonzero(hit)
        rows = rows + row_off
        cols = cols + col_off
        keep = (rows >= 0) & (rows < ny) & (cols >= 0) & (cols < nx)
        rows, cols = rows[keep], cols[keep]
        rgb[rows, cols] = (1 - OVERLAY_ALPHA) * rgb[rows, cols] + OVERLAY_ALPHA * np.asarray(color)

    Image.fromarray(np.clip(rgb, 0, 255).astype(np.uint8), mode="RGB").save(
        out_path, format="PNG"
    )
