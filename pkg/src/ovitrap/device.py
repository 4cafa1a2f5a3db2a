"""Stage command compilation and simulated acquisition.

The command stream is line-oriented UTF-8 text (`MOVE x y`, `DWELL ms`,
`CAPTURE id`) so a run is inspectable and diff-able. The simulator renders
8-bit grayscale tiles of a synthetic egg scene; rendering is exact
(a pixel belongs to an egg iff its center lies inside the ellipse), which
keeps every rendered quantity brute-force checkable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SceneTooDenseError, SchemaError
from .geometry import Rect, ScanPlan, TilePose, TileSpec, TrapSpec, tile_rect
from .jsonio import dump_json, require

# Rendering intensities. Full eggs are solid dark ellipses; hatched eggs are
# emptied shells: a dark ring around a lighter interior.
BACKGROUND = 200
SHELL = 30
HATCHED_INTERIOR = 140
HATCHED_INTERIOR_SCALE = 0.6  # inner-ellipse scale separating shell from interior

# Default egg shape distribution: area near 0.065 mm^2, moderately elongated.
# The semi-major axis stays below 0.227 mm so eggs 0.5 mm apart never touch.
EGG_AREA_RANGE_MM2 = (0.055, 0.070)
EGG_ASPECT_RANGE = (1.8, 2.3)

CLASS_HATCH = "hatch"
CLASS_FULL = "full"


@dataclass(frozen=True)
class MotionCommand:
    """One line of the stage protocol: MOVE, DWELL, or CAPTURE."""

    verb: str
    x_mm: float | None = None
    y_mm: float | None = None
    ms: int | None = None
    tile_id: int | None = None

    @staticmethod
    def move(x_mm: float, y_mm: float) -> "MotionCommand":
        return MotionCommand(verb="MOVE", x_mm=x_mm, y_mm=y_mm)

    @staticmethod
    def dwell(ms: int) -> "MotionCommand":
        if ms < 0:
            raise ConfigError("DWELL milliseconds must be >= 0")
        return MotionCommand(verb="DWELL", ms=ms)

    @staticmethod
    def capture(tile_id: int) -> "MotionCommand":
        return MotionCommand(verb="CAPTURE", tile_id=tile_id)

    def line(self) -> str:
        if self.verb == "MOVE":
            return f"MOVE {_fmt_mm(self.x_mm)} {_fmt_mm(self.y_mm)}"
        if self.verb == "DWELL":
            return f"DWELL {self.ms}"
        return f"CAPTURE {self.tile_id}"


def _fmt_mm(value: float) -> str:
    """Decimal mm with up to 6 fractional digits, at least one kept."""
    text = f"{value:.6f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def compile_plan(plan: ScanPlan, dwell_s: float) -> list[MotionCommand]:
    """Compile a plan to the (MOVE DWELL CAPTURE)^n command stream."""
    if dwell_s < 0:
        raise ConfigError("dwell must be >= 0")
    ms = int(round(dwell_s * 1000.0))
    commands: list[MotionCommand] = []
    for tile_id, pose in enumerate(plan.poses):
        commands.append(MotionCommand.move(pose.x_mm, pose.y_mm))
        commands.append(MotionCommand.dwell(ms))
        commands.append(MotionCommand.capture(tile_id))
    return commands


def commands_to_text(commands: list[MotionCommand]) -> str:
    return "".join(c.line() + "\n" for c in commands)


def parse_commands(text: str) -> list[MotionCommand]:
    """Parse a command stream; used by tests to machine-check the grammar."""
    out: list[MotionCommand] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        where = f"command line {lineno}"
        if not parts:
            raise SchemaError(f"{where}: empty line")
        verb = parts[0]
        if verb == "MOVE" and len(parts) == 3:
            out.append(MotionCommand.move(float(parts[1]), float(parts[2])))
        elif verb == "DWELL" and len(parts) == 2:
            out.append(MotionCommand.dwell(int(parts[1])))
        elif verb == "CAPTURE" and len(parts) == 2:
            out.append(MotionCommand.capture(int(parts[1])))
        else:
            raise SchemaError(f"{where}: unrecognized command {line!r}")
    return out


@dataclass(frozen=True)
class EggTruth:
    """Ground-truth egg: an ellipse with a class label."""

    id: int
    cx_mm: float
    cy_mm: float
    a_mm: float  # semi-axis along the egg's own major direction
    b_mm: float
    angle_rad: float
    egg_class: str  # CLASS_HATCH | CLASS_FULL

    def __post_init__(self):
        if self.a_mm <= 0 or self.b_mm <= 0:
            raise ConfigError("egg semi-axes must be positive")
        if self.egg_class not in (CLASS_HATCH, CLASS_FULL):
            raise ConfigError(f"unknown egg class {self.egg_class!r}")

    @property
    def area_mm2(self) -> float:
        return math.pi * self.a_mm * self.b_mm

    def bbox(self) -> Rect:
        # Tight axis-aligned bounds of a rotated ellipse.
        ex = math.sqrt(
            (self.a_mm * math.cos(self.angle_rad)) ** 2
            + (self.b_mm * math.sin(self.angle_rad)) ** 2
        )
        ey = math.sqrt(
            (self.a_mm * math.sin(self.angle_rad)) ** 2
            + (self.b_mm * math.cos(self.angle_rad)) ** 2
        )
        return Rect(self.cx_mm - ex, self.cy_mm - ey, self.cx_mm + ex, self.cy_mm + ey)

    def boundary(self, n_vertices: int = 64, scale: float = 1.0) -> np.ndarray:
        """Ellipse boundary sampled at n_vertices, in trap-global mm."""
        theta = np.linspace(0.0, 2.0 * math.pi, n_vertices, endpoint=False)
        ex = scale * self.a_mm * np.cos(theta)
        ey = scale * self.b_mm * np.sin(theta)
        cos_r, sin_r = math.cos(self.angle_rad), math.sin(self.angle_rad)
        x = self.cx_mm + ex * cos_r - ey * sin_r
        y = self.cy_mm + ex * sin_r + ey * cos_r
        return np.stack([x, y], axis=1)


@dataclass(frozen=True)
class SyntheticScene:
    """Ground-truth trap content used by the simulator and the oracle."""

    trap: TrapSpec
    eggs: tuple[EggTruth, ...]
    seed: int


def generate_scene(
    seed: int,
    n_eggs: int,
    hatch_fraction: float,
    min_separation_mm: float,
    trap: TrapSpec,
    area_range_mm2: tuple[float, float] = EGG_AREA_RANGE_MM2,
    aspect_range: tuple[float, float] = EGG_ASPECT_RANGE,
    max_tries_per_egg: int = 2000,
) -> SyntheticScene:
    """Place eggs by rejection sampling with a pairwise separation floor.

    Centers are inset by each egg's own semi-major axis so every ellipse
    lies entirely inside the trap; the hatched count is round-half-up of
    n_eggs * hatch_fraction. Deterministic given the seed.
    """
    if n_eggs < 0:
        raise ConfigError("n_eggs must be >= 0")
    if not 0.0 <= hatch_fraction <= 1.0:
        raise ConfigError("hatch_fraction must be within [0, 1]")
    if min_separation_mm < 0:
        raise ConfigError("min_separation_mm must be >= 0")
    rng = np.random.default_rng(seed)
    n_hatched = int(math.floor(n_eggs * hatch_fraction + 0.5))
    classes = [CLASS_HATCH] * n_hatched + [CLASS_FULL] * (n_eggs - n_hatched)
    rng.shuffle(classes)

    centers = np.empty((0, 2), dtype=float)
    eggs: list[EggTruth] = []
    for i in range(n_eggs):
        area = rng.uniform(*area_range_mm2)
        aspect = rng.uniform(*aspect_range)
        a = math.sqrt(area * aspect / math.pi)
        b = math.sqrt(area / (aspect * math.pi))
        angle = rng.uniform(0.0, math.pi)
        for _ in range(max_tries_per_egg):
            cx = rng.uniform(a, trap.length_mm - a)
            cy = rng.uniform(a, trap.width_mm - a)
            if centers.size:
                d2 = np.sum((centers - (cx, cy)) ** 2, axis=1)
                if d2.min() < min_separation_mm**2:
                    continue
            break
        else:
            raise SceneTooDenseError(
                f"could not place egg {i} after {max_tries_per_egg} tries; "
                "scene too dense for the requested separation"
            )
        eggs.append(
            EggTruth(
                id=i, cx_mm=cx, cy_mm=cy, a_mm=a, b_mm=b,
                angle_rad=angle, egg_class=classes[i],
            )
        )
        centers = np.vstack([centers, (cx, cy)])
    return SyntheticScene(trap=trap, eggs=tuple(eggs), seed=seed)


@dataclass(eq=False)
class TileImage:
    """8-bit grayscale tile; pixels has shape (px_minor, px_major)."""

    tile_id: int
    pixels: np.ndarray

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _ellipse_hit(egg: EggTruth, xg: np.ndarray, yg: np.ndarray, scale: float) -> np.ndarray:
    """Boolean grid of points whose centers lie inside the (scaled) ellipse."""
    dx = xg - egg.cx_mm
    dy = yg - egg.cy_mm
    cos_r, sin_r = math.cos(egg.angle_rad), math.sin(egg.angle_rad)
    ex = dx * cos_r + dy * sin_r
    ey = -dx * sin_r + dy * cos_r
    return (ex / (scale * egg.a_mm)) ** 2 + (ey / (scale * egg.b_mm)) ** 2 <= 1.0


def render_tile(
    scene: SyntheticScene, pose: TilePose, tile: TileSpec, tile_id: int = 0
) -> TileImage:
    """Rasterize the eggs visible in one tile. No anti-aliasing: a pixel is
    egg iff its center lies inside the ellipse, so counts are exact."""
    img = np.full((tile.px_minor, tile.px_major), BACKGROUND, dtype=np.uint8)
    rect = tile_rect(pose, tile)
    pu, pv = tile.pitch_major_mm, tile.pitch_minor_mm
    for egg in scene.eggs:
        bb = egg.bbox()
        if bb.intersect(rect) is None and not _rects_touch(bb, rect):
            continue
        # Pixel index window covering the egg's bbox, clipped to the tile.
        u0 = max(0, int(math.floor((bb.x0 - rect.x0) / pu - 0.5)))
        u1 = min(tile.px_major, int(math.ceil((bb.x1 - rect.x0) / pu + 0.5)))
        v0 = max(0, int(math.floor((bb.y0 - rect.y0) / pv - 0.5)))
        v1 = min(tile.px_minor, int(math.ceil((bb.y1 - rect.y0) / pv + 0.5)))
        if u0 >= u1 or v0 >= v1:
            continue
        xs = rect.x0 + (np.arange(u0, u1) + 0.5) * pu
        ys = rect.y0 + (np.arange(v0, v1) + 0.5) * pv
        xg, yg = np.meshgrid(xs, ys)
        outer = _ellipse_hit(egg, xg, yg, 1.0)
        window = img[v0:v1, u0:u1]
        if egg.egg_class == CLASS_FULL:
            window[outer] = SHELL
        else:
            inner = _ellipse_hit(egg, xg, yg, HATCHED_INTERIOR_SCALE)
            window[outer & ~inner] = SHELL
            window[inner] = HATCHED_INTERIOR
    return TileImage(tile_id=tile_id, pixels=img)


def _rects_touch(a: Rect, b: Rect) -> bool:
    return a.touches_or_overlaps(b, tol=0.0)


def tile_file_name(tile_id: int) -> str:
    return f"tile_{tile_id:03d}.png"


def simulate_run(
    scene: SyntheticScene,
    plan: ScanPlan,
    out_dir: str | Path,
    plan_ref: str = "plan.json",
) -> tuple[dict, list[TileImage]]:
    """Render one image per pose into out_dir and write the manifest.

    Returns (manifest, images). Byte-deterministic given (scene, plan).
    """
    from PIL import Image  # deferred: keep plan-only CLI paths light

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tiles = []
    images: list[TileImage] = []
    for tile_id, pose in enumerate(plan.poses):
        image = render_tile(scene, pose, plan.tile, tile_id=tile_id)
        name = tile_file_name(tile_id)
        Image.fromarray(image.pixels, mode="L").save(out / name, format="PNG")
        images.append(image)
        tiles.append(
            {
                "id": tile_id,
                "row": pose.row,
                "col": pose.col,
                "x_mm": pose.x_mm,
                "y_mm": pose.y_mm,
                "file": name,
            }
        )
    manifest = {"scene_seed": scene.seed, "plan_ref": plan_ref, "tiles": tiles}
    dump_json(manifest, out / "manifest.json")
    return manifest, images


def scene_to_json(scene: SyntheticScene) -> dict:
    return {
        "trap": {"length_mm": scene.trap.length_mm, "width_mm": scene.trap.width_mm},
        "seed": scene.seed,
        "eggs": [
            {
                "id": e.id,
                "cx_mm": e.cx_mm,
                "cy_mm": e.cy_mm,
                "a_mm": e.a_mm,
                "b_mm": e.b_mm,
                "angle_rad": e.angle_rad,
                "class": e.egg_class,
            }
            for e in scene.eggs
        ],
    }


def scene_from_json(doc: dict) -> SyntheticScene:
    trap_doc = require(doc, "trap", "scene")
    trap = TrapSpec(
        length_mm=float(require(trap_doc, "length_mm", "scene.trap")),
        width_mm=float(require(trap_doc, "width_mm", "scene.trap")),
    )
    eggs = []
    for i, e in enumerate(require(doc, "eggs", "scene")):
        where = f"scene.eggs[{i}]"
        cls = require(e, "class", where)
        if cls not in (CLASS_HATCH, CLASS_FULL):
            raise SchemaError(f"{where}: unknown class {cls!r}")
        eggs.append(
            EggTruth(
                id=int(require(e, "id", where)),
                cx_mm=float(require(e, "cx_mm", where)),
                cy_mm=float(require(e, "cy_mm", where)),
                a_mm=float(require(e, "a_mm", where)),
                b_mm=float(require(e, "b_mm", where)),
                angle_rad=float(require(e, "angle_rad", where)),
                egg_class=cls,
            )
        )
    return SyntheticScene(
        trap=trap, eggs=tuple(eggs), seed=int(require(doc, "seed", "scene"))
    )
