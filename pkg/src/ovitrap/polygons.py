"""Planar polygon helpers shared by the detection, merge, and metrics stages.

Conventions: a *ring* is an (n, 2) float array of vertices (not closed; the
edge from the last vertex back to the first is implied). A *mask* is a
sequence of rings interpreted with even-odd parity, so disjoint lobes and
holes are both representable. Coordinates are in whatever frame the caller
uses (mm or px); nothing here assumes a unit.

Rasterization uses the cell-center rule: a cell belongs to the mask iff its
center has odd crossing parity. This makes small hand-checkable cases exact
(e.g. axis-aligned rectangles on an integer grid).
"""
from __future__ import annotations

import numpy as np

Ring = np.ndarray  # (n, 2) float64


def as_ring(vertices) -> Ring:
    ring = np.asarray(vertices, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 3:
        raise ValueError("a polygon ring needs at least 3 (x, y) vertices")
    return ring


def ring_area(ring: Ring) -> float:
    """Signed shoelace area (positive for counter-clockwise rings)."""
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def mask_area(rings) -> float:
    """Area of a mask whose holes (if any) are wound opposite to the outer
    rings; plain disjoint rings just add up."""
    return abs(sum(ring_area(r) for r in rings))


def mask_bbox(rings) -> tuple[float, float, float, float]:
    pts = np.vstack(list(rings))
    return (
        float(pts[:, 0].min()),
        float(pts[:, 1].min()),
        float(pts[:, 0].max()),
        float(pts[:, 1].max()),
    )


def is_simple_polygon(ring: Ring) -> bool:
    """True iff no two non-adjacent edges intersect and no edge is degenerate.

    O(n^2) pairwise segment test; rings here are at most a few hundred
    vertices, far below where that matters.
    """
    ring = np.asarray(ring, dtype=float)
    n = len(ring)
    if n < 3:
        return False
    p = ring
    q = np.roll(ring, -1, axis=0)
    if np.any(np.all(np.isclose(p, q, atol=0.0), axis=1)):
        return False  # zero-length edge
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex by construction
            if _segments_intersect(p[i], q[i], p[j], q[j]):
                return False
    return True


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_intersect(a, b, c, d) -> bool:
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    # Collinear touching counts as intersection (a self-overlap).
    for pt, (s0, s1), dv in ((a, (c, d), d1), (b, (c, d), d2), (c, (a, b), d3), (d, (a, b), d4)):
        if dv == 0 and _on_segment(s0, s1, pt):
            return True
    return False


def _on_segment(a, b, p) -> bool:
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def clip_ring_to_rect(ring: Ring, x0: float, y0: float, x1: float, y1: float) -> Ring | None:
    """Sutherland-Hodgman clip of a ring against an axis-aligned rectangle.

    Exact for convex rings; returns None when the clipped region is empty
    or degenerate.
    """
    def clip_half(points, inside, intersect):
        out: list[np.ndarray] = []
        n = len(points)
        for i in range(n):
            cur, nxt = points[i], points[(i + 1) % n]
            cur_in, nxt_in = inside(cur), inside(nxt)
            if cur_in:
                out.append(cur)
                if not nxt_in:
                    out.append(intersect(cur, nxt))
            elif nxt_in:
                out.append(intersect(cur, nxt))
        return out

    def x_cross(bound):
        def f(p, q):
            t = (bound - p[0]) / (q[0] - p[0])
            return np.array([bound, p[1] + t * (q[1] - p[1])])
        return f

    def y_cross(bound):
        def f(p, q):
            t = (bound - p[1]) / (q[1] - p[1])
            return np.array([p[0] + t * (q[0] - p[0]), bound])
        return f

    pts = [np.asarray(v, dtype=float) for v in ring]
    pts = clip_half(pts, lambda p: p[0] >= x0, x_cross(x0))
    if pts:
        pts = clip_half(pts, lambda p: p[0] <= x1, x_cross(x1))
    if pts:
        pts = clip_half(pts, lambda p: p[1] >= y0, y_cross(y0))
    if pts:
        pts = clip_half(pts, lambda p: p[1] <= y1, y_cross(y1))
    if len(pts) < 3:
        return None
    out = np.asarray(pts)
    # Collapse consecutive duplicates introduced by corner clips.
    keep = np.any(~np.isclose(out, np.roll(out, 1, axis=0), atol=1e-12), axis=1)
    out = out[keep]
    if len(out) < 3 or abs(ring_area(out)) == 0.0:
        return None
    return out


def rasterize_mask(rings, x0: float, y0: float, nx: int, ny: int, pitch: float) -> np.ndarray:
    """Even-odd fill of a mask onto a (ny, nx) boolean grid.

    Cell (i, j) has its center at (x0 + (j + 0.5) * pitch, y0 + (i + 0.5) * pitch).
    Each edge crossing a row of cell centers flips the parity of every cell
    to the right of the crossing; accumulated flips + prefix sum give the
    even-odd interior.
    """
    flips = np.zeros((ny, nx + 1), dtype=np.int64)
    yc = y0 + (np.arange(ny) + 0.5) * pitch
    for ring in rings:
        p = np.asarray(ring, dtype=float)
        q = np.roll(p, -1, axis=0)
        py, qy = p[:, 1][:, None], q[:, 1][:, None]
        # Half-open span [min, max) so a vertex lying on a row is counted once.
        crossed = ((py <= yc) & (yc < qy)) | ((qy <= yc) & (yc < py))
        if not crossed.any():
            continue
        denom = np.where(qy != py, qy - py, 1.0)
        t = (yc - py) / denom
        xi = p[:, 0][:, None] + t * (q[:, 0][:, None] - p[:, 0][:, None])
        edge_idx, row_idx = np.nonzero(crossed)
        cols = np.ceil((xi[edge_idx, row_idx] - x0) / pitch - 0.5).astype(np.int64)
        cols = np.clip(cols, 0, nx)
        np.add.at(flips, (row_idx, cols), 1)
    return (np.cumsum(flips, axis=1)[:, :nx] % 2).astype(bool)


def raster_grid(bbox: tuple[float, float, float, float], pitch: float, pad_cells: int = 1):
    """Grid origin and shape covering a bbox at the given pitch.

    Returns (x0, y0, nx, ny); pad_cells of margin keep blobs away from the
    array border so traced contours always close.
    """
    bx0, by0, bx1, by1 = bbox
    x0 = bx0 - pad_cells * pitch
    y0 = by0 - pad_cells * pitch
    nx = int(np.ceil((bx1 - x0) / pitch - 1e-9)) + pad_cells
    ny = int(np.ceil((by1 - y0) / pitch - 1e-9)) + pad_cells
    return x0, y0, max(nx, 1), max(ny, 1)


def point_in_mask(x: float, y: float, rings) -> bool:
    """Even-odd point membership test."""
    inside = False
    for ring in rings:
        p = np.asarray(ring, dtype=float)
        q = np.roll(p, -1, axis=0)
        py, qy = p[:, 1], q[:, 1]
        crossed = ((py <= y) & (y < qy)) | ((qy <= y) & (y < py))
        if not crossed.any():
            continue
        denom = np.where(qy != py, qy - py, 1.0)
        t = (y - py[crossed]) / denom[crossed]
        xi = p[crossed, 0] + t * (q[crossed, 0] - p[crossed, 0])
        inside ^= bool(np.count_nonzero(xi > x) % 2)
    return inside


def mask_min_distance(rings_a, rings_b) -> float:
    """Minimum Euclidean distance between two masks' boundaries/interiors.

    Returns 0.0 when the masks touch, cross, or one contains the other.
    """
    segs_a = _segments(rings_a)
    segs_b = _segments(rings_b)
    if _any_cross(segs_a, segs_b):
        return 0.0
    if point_in_mask(*segs_a[0, 0], rings_b) or point_in_mask(*segs_b[0, 0], rings_a):
        return 0.0
    d_ab = _points_to_segments(segs_a[:, 0], segs_b).min()
    d_ba = _points_to_segments(segs_b[:, 0], segs_a).min()
    return float(min(d_ab, d_ba))


def _segments(rings) -> np.ndarray:
    """All edges of a mask as an (m, 2, 2) array of (start, end) pairs."""
    parts = []
    for ring in rings:
        p = np.asarray(ring, dtype=float)
        parts.append(np.stack([p, np.roll(p, -1, axis=0)], axis=1))
    return np.concatenate(parts, axis=0)


def _points_to_segments(pts: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Distance of each point to the nearest segment, as an (n_pts,) array."""
    a = segs[:, 0][None, :, :]  # (1, m, 2)
    d = segs[:, 1][None, :, :] - a
    ap = pts[:, None, :] - a
    denom = np.einsum("ijk,ijk->ij", d, d)
    t = np.clip(np.einsum("ijk,ijk->ij", ap, d) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    closest = a + t[:, :, None] * d
    diff = pts[:, None, :] - closest
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).min(axis=1)


def _any_cross(segs_a: np.ndarray, segs_b: np.ndarray) -> bool:
    """Vectorized proper-intersection test over all segment pairs."""
    a0, a1 = segs_a[:, 0][:, None, :], segs_a[:, 1][:, None, :]
    b0, b1 = segs_b[None, :, 0, :], segs_b[None, :, 1, :]

    def cross(o, p, q):
        return (p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1]) - (
            p[..., 1] - o[..., 1]
        ) * (q[..., 0] - o[..., 0])

    d1 = cross(b0, b1, a0)
    d2 = cross(b0, b1, a1)
    d3 = cross(a0, a1, b0)
    d4 = cross(a0, a1, b1)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))
    if proper.any():
        return True
    # Touching endpoints (distance 0) are caught by the point-to-segment
    # pass in mask_min_distance, so collinear overlap needs no special case.
    return False
