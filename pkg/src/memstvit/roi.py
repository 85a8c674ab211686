"""Facial RoI partition from 68-point landmarks.

The face below the eyebrows is split into a 5 x 3 grid of regions.  Regions are
indexed in raster order, ``row * 5 + col``, top-left first.
"""
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

N_LANDMARKS = 68
GRID_COLS = 5
GRID_ROWS = 3
N_ROIS = GRID_COLS * GRID_ROWS

JAW = slice(0, 17)
BROWS = slice(17, 27)


@dataclass(frozen=True)
class RoiLayout:
    """One frame's RoI partition.

    ``polygons[i]`` is a (k, 2) array of (x, y) vertices, counter-clockwise.
    ``box`` is (x0, y0, x1, y1) of the clipped face hull the grid is laid on.
    """

    polygons: tuple
    hull: np.ndarray
    box: tuple

    def labels(self, height, width):
        """Per-pixel region index, -1 outside every region.

        Pixel (i, j) sits at point (x=j, y=i).  Grid boundaries are half-open
        except the last row/column, so no pixel lands in two regions.
        """
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        inside = _inside_convex(self.hull, xs, ys)
        x0, y0, x1, y1 = self.box
        inside &= (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
        cw = (x1 - x0) / GRID_COLS
        rh = (y1 - y0) / GRID_ROWS
        col = np.clip(np.floor((xs - x0) / cw), 0, GRID_COLS - 1).astype(np.int64)
        row = np.clip(np.floor((ys - y0) / rh), 0, GRID_ROWS - 1).astype(np.int64)
        return np.where(inside, row * GRID_COLS + col, -1)

    def masks(self, height, width):
        """Boolean (15, H, W) stack of region masks."""
        lab = self.labels(height, width)
        return lab[None, :, :] == np.arange(N_ROIS)[:, None, None]


def convex_hull(points):
    """Counter-clockwise convex hull (Andrew's monotone chain), no repeated vertex."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=np.float64))))
    if len(pts) < 3:
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_halfplane(poly, inside, intersect):
    """One Sutherland-Hodgman pass against a half-plane."""
    out = []
    n = len(poly)
    for i in range(n):
        cur, nxt = poly[i], poly[(i + 1) % n]
        cin, nin = inside(cur), inside(nxt)
        if cin:
            out.append(cur)
            if not nin:
                out.append(intersect(cur, nxt))
        elif nin:
            out.append(intersect(cur, nxt))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def clip_box(poly, x0, y0, x1, y1):
    """Clip a polygon to an axis-aligned box."""

    def cut(axis, value, keep_greater):
        def inside(p):
            return p[axis] >= value if keep_greater else p[axis] <= value

        def intersect(a, b):
            t = (value - a[axis]) / (b[axis] - a[axis])
            p = a + t * (b - a)
            p[axis] = value
            return p

        return inside, intersect

    for axis, value, greater in ((0, x0, True), (0, x1, False), (1, y0, True), (1, y1, False)):
        if len(poly) == 0:
            break
        poly = clip_halfplane(poly, *cut(axis, value, greater))
    return poly


def roi_layout(landmarks):
    """Build the 15-region layout for one frame of 68 landmarks.

    Raises GeometryError when the jaw/brow hull is degenerate or nothing of the
    face remains below the eyebrows.
    """
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.shape != (N_LANDMARKS, 2):
        raise GeometryError(f"expected {N_LANDMARKS} landmark points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("non-finite landmark coordinates")
    hull = convex_hull(np.concatenate([pts[JAW], pts[BROWS]]))
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1.0)
    if len(hull) < 3 or polygon_area(hull) <= 1e-9 * scale * scale:
        raise GeometryError("degenerate face hull (landmarks are collinear)")

    brow_line = float(pts[BROWS, 1].max())
    below = clip_halfplane(
        hull,
        lambda p: p[1] >= brow_line,
        lambda a, b: np.array([a[0] + (brow_line - a[1]) * (b[0] - a[0]) / (b[1] - a[1]), brow_line]),
    )
    if len(below) < 3 or polygon_area(below) <= 1e-9 * scale * scale:
        raise GeometryError("no face area below the eyebrow line")

    x0, y0 = below.min(axis=0)
    x1, y1 = below.max(axis=0)
    cw = (x1 - x0) / GRID_COLS
    rh = (y1 - y0) / GRID_ROWS
    polys = []
    for r in range(GRID_ROWS):
        for c in range(GRID_COLS):
            cell = clip_box(below, x0 + c * cw, y0 + r * rh, x0 + (c + 1) * cw, y0 + (r + 1) * rh)
            polys.append(cell)
    return RoiLayout(polygons=tuple(polys), hull=below, box=(float(x0), float(y0), float(x1), float(y1)))


def _inside_convex(poly, xs, ys, tol=1e-9):
    inside = np.ones(xs.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        inside &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= -tol
    return inside


def synthetic_landmarks(width, height):
    """A fixed 68-point layout whose below-brow hull is an axis-aligned box.

    The face box spans roughly the central 70% x 70% of the frame so every grid
    cell holds pixels even at 32 x 32.  Coordinates are integers.
    """
    x0, x1 = round(0.15 * width), round(0.85 * width) - 1
    yb, y1 = round(0.22 * height), round(0.92 * height) - 1
    top = max(yb - max(2, round(0.08 * height)), 0)
    pts = np.zeros((N_LANDMARKS, 2), dtype=np.float64)
    # jaw: down the left side, across the chin, up the right side
    left = [(x0, y) for y in np.linspace(yb, y1, 6)]
    bottom = [(x, y1) for x in np.linspace(x0, x1, 7)[1:-1]]
    right = [(x1, y) for y in np.linspace(y1, yb, 6)]
    pts[JAW] = np.rint(np.array(left + bottom + right))
    # brows: lowest brow point sits exactly on the brow line
    bx = np.linspace(x0, x1, 10)
    by = np.where(np.isin(np.arange(10), [0, 4, 5, 9]), yb, top)
    pts[BROWS] = np.rint(np.stack([bx, by], axis=1))
    # nose, eyes, mouth: interior filler
    cx, cy = (x0 + x1) / 2, (yb + y1) / 2
    inner = np.linspace(0, 2 * np.pi, N_LANDMARKS - 27, endpoint=False)
    pts[27:, 0] = np.rint(cx + 0.25 * (x1 - x0) * np.cos(inner))
    pts[27:, 1] = np.rint(cy + 0.25 * (y1 - yb) * np.sin(inner))
    return pts
