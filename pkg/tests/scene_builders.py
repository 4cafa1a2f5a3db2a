"""Deterministic scene construction for the acceptance suite: a fixed
number of eggs placed exactly on interior tile borders (guaranteed cut
eggs) plus randomly scattered filler eggs, all respecting a pairwise
center-separation floor."""
from __future__ import annotations

import numpy as np

from ovitrap import EggTruth, ScanPlan, SyntheticScene


def scene_with_straddlers(
    plan: ScanPlan,
    n_eggs: int = 200,
    n_straddle: int = 24,
    hatch_fraction: float = 0.15,
    min_separation_mm: float = 0.5,
    seed: int = 11,
) -> tuple[SyntheticScene, list[int]]:
    """Returns (scene, ids of the border-straddling eggs)."""
    rng = np.random.default_rng(seed)
    trap = plan.trap
    tile = plan.tile
    xs = sorted({p.x_mm for p in plan.poses})
    # Interior vertical borders: east edges of all but the last tile row.
    borders = [x + tile.major_extent_mm for x in xs[:-1]]
    assert len(borders) >= n_straddle

    a, b = 0.21, 0.09  # semi-axes; angle 0 maximizes the straddle width
    placed: list[tuple[float, float]] = []
    eggs: list[EggTruth] = []
    for k in range(n_straddle):
        cx = borders[k]
        cy = 2.0 + (k % 8) * 2.6  # spread across the trap width
        eggs.append(EggTruth(id=k, cx_mm=cx, cy_mm=cy, a_mm=a, b_mm=b,
                             angle_rad=0.0, egg_class="full"))
        placed.append((cx, cy))

    centers = np.array(placed)
    for i in range(n_straddle, n_eggs):
        area = rng.uniform(0.055, 0.070)
        aspect = rng.uniform(1.8, 2.3)
        ea = float(np.sqrt(area * aspect / np.pi))
        eb = float(np.sqrt(area / (aspect * np.pi)))
        angle = float(rng.uniform(0, np.pi))
        while True:
            cx = float(rng.uniform(ea, trap.length_mm - ea))
            cy = float(rng.uniform(ea, trap.width_mm - ea))
            d2 = np.sum((centers - (cx, cy)) ** 2, axis=1)
            if d2.min() >= min_separation_mm**2:
                break
        eggs.append(EggTruth(id=i, cx_mm=cx, cy_mm=cy, a_mm=ea, b_mm=eb,
                             angle_rad=angle, egg_class="full"))
        centers = np.vstack([centers, (cx, cy)])

    n_hatched = round(n_eggs * hatch_fraction)
    hatched_ids = set(rng.permutation(n_eggs)[:n_hatched].tolist())
    eggs = [
        EggTruth(
            id=e.id, cx_mm=e.cx_mm, cy_mm=e.cy_mm, a_mm=e.a_mm, b_mm=e.b_mm,
            angle_rad=e.angle_rad,
            egg_class="hatch" if e.id in hatched_ids else "full",
        )
        for e in eggs
    ]
    return (
        SyntheticScene(trap=trap, eggs=tuple(eggs), seed=seed),
        list(range(n_straddle)),
    )
