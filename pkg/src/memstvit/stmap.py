"""Multi-scale magnified spatial-temporal maps.

Per-RoI YUV means of the original and the three magnified videos are stacked
into a 60-row signal grid, cut into 196-frame windows and min-max normalized.
"""
import json
import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import GeometryError, InputError
from .ingest import validate_track
from .magnify import DEFAULT_ALPHAS, BandpassSpec, magnify_set
from .roi import N_ROIS, RoiLayout, roi_layout  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

N_VIDEOS = 4
N_ROWS = N_VIDEOS * N_ROIS
WINDOW_FRAMES = 196
STRIDE_SECONDS = 0.5
# Emitted map values are snapped to this grid so that positive affine changes
# of a row, which perturb float64 results at the 1e-15 level, cannot change a map.
QUANTUM = 2.0**-16

LABELS = {"real": 0, "fake": 1, None: 255}
LABEL_NAMES = {v: k for k, v in LABELS.items()}
MEMS_MAGIC = b"MEMS"
MEMS_VERSION = 1
_MEMS_HEADER = struct.Struct("<4sIIIIBII")


class ShortVideoWarning(UserWarning):
    """The video is shorter than one map window."""


def rgb_to_yuv(rgb):
    """Full-range BT.601 YUV with U and V offset by 128; works on (..., 3) arrays."""
    rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 255.0)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    u = 0.492 * (b - y) + 128.0
    v = 0.877 * (r - y) + 128.0
    return np.stack([y, u, v], axis=-1)


@dataclass
class SignalGrid:
    """(60, T, 3) YUV means; row blocks are original, octave 1, 2, 3."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[0] != N_ROWS or self.values.shape[2] != 3:
            raise InputError(f"signal grid must be ({N_ROWS}, T, 3), got {self.values.shape}")

    @property
    def n_frames(self):
        return self.values.shape[1]


@dataclass
class MEMSTmap:
    values: np.ndarray
    source_video: str = ""
    window_start: int = 0
    label: str = None

    def __post_init__(self):
        if self.values.shape != (N_ROWS, WINDOW_FRAMES, 3):
            raise InputError(f"map must be {(N_ROWS, WINDOW_FRAMES, 3)}, got {self.values.shape}")
        if self.label not in LABELS:
            raise InputError(f"unknown label {self.label!r}")


def extract_signals(mset, track):
    """Per-frame, per-RoI spatial YUV means of all four videos.

    The RoI layout is recomputed from every frame's landmarks; consecutive
    frames with identical landmarks share one rasterization.
    """
    n, h, w, _ = mset.original.frames.shape
    if len(track) != n:
        raise InputError(f"track has {len(track)} frames, video has {n}")
    if not track.valid.all():
        raise InputError("landmark track has invalid frames; run validate_track first")

    weights = np.empty((n, N_ROIS, h * w))
    prev_key, prev_w = None, None
    for t in range(n):
        key = track.points[t].tobytes()
        if key != prev_key:
            try:
                lab = roi_layout(track.points[t]).labels(h, w).ravel()
            except GeometryError as exc:
                raise GeometryError(f"frame {t}: {exc}", frame=t) from exc
            onehot = (lab[None, :] == np.arange(N_ROIS)[:, None]).astype(np.float64)
            counts = onehot.sum(axis=1)
            empty = np.flatnonzero(counts == 0)
            if empty.size:
                raise GeometryError(f"frame {t}: RoI {empty[0]} contains no pixels", frame=t, region=int(empty[0]))
            prev_key, prev_w = key, onehot / counts[:, None]
        weights[t] = prev_w

    rows = []
    for video in mset.videos:
        yuv = rgb_to_yuv(video.frames).reshape(n, h * w, 3)
        rows.append(np.einsum("trp,tpc->rtc", weights, yuv))
    return SignalGrid(np.concatenate(rows, axis=0))


def window_starts(n_frames, fps, window=WINDOW_FRAMES, stride_s=STRIDE_SECONDS):
    step = max(int(round(stride_s * fps)), 1)
    if n_frames < window:
        return []
    return list(range(0, n_frames - window + 1, step))


def normalize_window(block):
    """Min-max each (row, channel) over time to [0, 1]; constant signals become 0.5."""
    lo = block.min(axis=1, keepdims=True)
    hi = block.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span == 0
    out = (block - lo) / np.where(flat, 1.0, span)
    out = np.where(flat, 0.5, out)
    return np.clip(np.rint(out / QUANTUM) * QUANTUM, 0.0, 1.0)


def window_and_normalize(grid, fps, window=WINDOW_FRAMES, stride_s=STRIDE_SECONDS, source_video="", label=None):
    """Slide a ``window``-frame window with stride round(stride_s * fps)."""
    starts = window_starts(grid.n_frames, fps, window, stride_s)
    if not starts:
        msg = f"{source_video or 'video'}: {grid.n_frames} frames is shorter than the {window}-frame window"
        log.warning(msg)
        warnings.warn(msg, ShortVideoWarning, stacklevel=2)
        return []
    return [
        MEMSTmap(normalize_window(grid.values[:, s:s + window, :]), source_video, s, label)
        for s in starts
    ]


def build_maps(video, track, band=BandpassSpec(), alphas=DEFAULT_ALPHAS, source_video="", label=None,
               stride_s=STRIDE_SECONDS, jobs=1):
    """Video + landmarks to maps; returns None when the discard rule rejects the video."""
    track.check_bounds(video.width, video.height)
    filled = validate_track(track)
    if filled is None:
        log.info("%s: discarded (%d frames without landmarks)", source_video, track.n_invalid)
        return None
    mset = magnify_set(video, band, alphas, jobs=jobs)
    grid = extract_signals(mset, filled)
    return window_and_normalize(grid, video.fps, stride_s=stride_s, source_video=source_video, label=label)


# ---------------------------------------------------------------- files


def write_map(m, path):
    sid = m.source_video.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MEMS_HEADER.pack(MEMS_MAGIC, MEMS_VERSION, N_ROWS, WINDOW_FRAMES, 3,
                                   LABELS[m.label], m.window_start, len(sid)))
        fh.write(sid)
        fh.write(m.values.astype("<f4").tobytes())


def read_map(path):
    data = Path(path).read_bytes()
    if len(data) < _MEMS_HEADER.size:
        raise InputError(f"{path}: truncated MEMS header")
    magic, version, rows, cols, chans, label, start, n_id = _MEMS_HEADER.unpack_from(data)
    if magic != MEMS_MAGIC or version != MEMS_VERSION:
        raise InputError(f"{path}: not a version-{MEMS_VERSION} MEMS file")
    if (rows, cols, chans) != (N_ROWS, WINDOW_FRAMES, 3):
        raise InputError(f"{path}: unsupported map shape {(rows, cols, chans)}")
    if label not in LABEL_NAMES:
        raise InputError(f"{path}: bad label code {label}")
    off = _MEMS_HEADER.size
    sid = data[off:off + n_id].decode("utf-8")
    body = data[off + n_id:]
    if len(body) != rows * cols * chans * 4:
        raise InputError(f"{path}: payload size mismatch")
    values = np.frombuffer(body, dtype="<f4").reshape(rows, cols, chans).astype(np.float64)
    return MEMSTmap(values, sid, start, LABEL_NAMES[label])


def export_png(m, path):
    """Render a map as an 8-bit 60 x 196 image, YUV channels in the RGB slots."""
    Image.fromarray(np.clip(np.rint(m.values * 255.0), 0, 255).astype(np.uint8)).save(path)


@dataclass
class ManifestEntry:
    video: Path
    landmarks: Path
    label: str
    split: str


def read_manifest(path):
    """JSON-lines manifest; relative paths resolve against the manifest's folder."""
    path = Path(path)
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                e = ManifestEntry(path.parent / rec["video"], path.parent / rec["landmarks"],
                                  rec["label"], rec["split"])
            except (ValueError, KeyError) as exc:
                raise InputError(f"{path}:{lineno}: malformed manifest record ({exc})") from exc
            if e.label not in ("real", "fake") or e.split not in ("train", "val", "test"):
                raise InputError(f"{path}:{lineno}: bad label or split")
            entries.append(e)
    return entries
