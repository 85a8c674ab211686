"""Column-wise reshaping of a map into 196 transformer patches.

Each map column (one frame: 60 rows x 3 channels) is linearly interpolated to
256 samples per channel and reshaped row-major into a 16 x 16 x 3 patch.

The 256 sample positions run from row 0 to row 59 and pass through every
source row, so interpolation never loses a column's extremes.  Source interval
``i`` receives ``floor((i+1)*255/59) - floor(i*255/59)`` (4 or 5) evenly spaced
samples, which keeps the grid within 0.23 rows of the uniform j*59/255 spacing.
"""
from dataclasses import dataclass

import numpy as np

from .stmap import N_ROWS, WINDOW_FRAMES

PATCH_SIDE = 16
PATCH_LEN = PATCH_SIDE * PATCH_SIDE
PATCH_DIM = PATCH_LEN * 3
N_PATCHES = WINDOW_FRAMES


def _node_grid(n_src=N_ROWS, n_dst=PATCH_LEN):
    """Source index and fractional offset of every target sample."""
    intervals = n_src - 1
    steps = n_dst - 1
    first = [i * steps // intervals for i in range(intervals + 1)]
    idx = np.empty(n_dst, dtype=np.int64)
    frac = np.empty(n_dst)
    for i in range(intervals):
        n_i = first[i + 1] - first[i]
        for m in range(n_i):
            idx[first[i] + m] = i
            frac[first[i] + m] = m / n_i
    idx[-1], frac[-1] = intervals, 0.0
    return idx, frac


GRID_INDEX, GRID_FRAC = _node_grid()
# target sample positions in units of source rows
GRID_POSITIONS = GRID_INDEX + GRID_FRAC


def _interp_rows(values):
    """Interpolate axis 0 (60 rows) onto the 256-point grid.

    Written as lo + (hi - lo) * frac with the last row padded by itself, so
    samples that land on a source row reproduce it bit-exactly.
    """
    padded = np.concatenate([values, values[-1:]], axis=0)
    lo = padded[GRID_INDEX]
    hi = padded[GRID_INDEX + 1]
    frac = GRID_FRAC.reshape((-1,) + (1,) * (values.ndim - 1))
    return lo + (hi - lo) * frac


def column_to_patch(column):
    """(60, 3) column to a (16, 16, 3) patch."""
    column = np.asarray(column, dtype=np.float64)
    if column.shape != (N_ROWS, 3):
        raise ValueError(f"column must be ({N_ROWS}, 3), got {column.shape}")
    return _interp_rows(column).reshape(PATCH_SIDE, PATCH_SIDE, 3)


@dataclass
class PatchSequence:
    patches: np.ndarray

    @property
    def frame_positions(self):
        return np.arange(self.patches.shape[0])

    def flat(self):
        """(196, 768) rows in (i, j, channel) order."""
        return self.patches.reshape(self.patches.shape[0], PATCH_DIM)

    def tile(self):
        """224 x 224 x 3 debug image, patches laid out in raster order."""
        side = int(round(np.sqrt(self.patches.shape[0])))
        p = self.patches.reshape(side, side, PATCH_SIDE, PATCH_SIDE, 3)
        return p.transpose(0, 2, 1, 3, 4).reshape(side * PATCH_SIDE, side * PATCH_SIDE, 3)


def map_to_patches(m):
    """Patch k comes from column k only; order is preserved."""
    values = getattr(m, "values", m)
    return PatchSequence(maps_to_patch_array(values[None])[0])


def maps_to_patch_array(values):
    """Batched form: (B, 60, 196, 3) maps to (B, 196, 16, 16, 3) patches."""
    values = np.asarray(values, dtype=np.float64)
    b, rows, cols, ch = values.shape
    if (rows, cols, ch) != (N_ROWS, N_PATCHES, 3):
        raise ValueError(f"maps must be (B, {N_ROWS}, {N_PATCHES}, 3), got {values.shape}")
    dense = _interp_rows(values.transpose(1, 0, 2, 3))  # (256, B, T, 3)
    return dense.transpose(1, 2, 0, 3).reshape(b, cols, PATCH_SIDE, PATCH_SIDE, 3)
