"""Frame and landmark ingestion, the missing-face discard rule, and synthetic
pulsatile test videos with known ground truth."""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError
from .roi import N_LANDMARKS, N_ROIS, roi_layout, synthetic_landmarks

log = logging.getLogger(__name__)

MAX_MISSING_FRAMES = 10
FSEQ_MAGIC = b"FSEQ"
FSEQ_VERSION = 1
_FSEQ_HEADER = struct.Struct("<4sIIIIf")
IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass
class FrameSequence:
    """RGB video as an (N, H, W, 3) array.

    Decoded and synthetic videos hold uint8.  Magnified videos hold float64
    clamped to [0, 255] so that no quantization sits between magnification and
    signal extraction.
    """

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise InputError(f"frames must be (N, H, W, 3), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise InputError("a frame sequence needs at least one frame")
        if not self.fps > 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        self.fps = float(self.fps)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]


@dataclass
class LandmarkTrack:
    """Per-frame 68 (x, y) points plus a validity flag per frame."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.points.ndim != 3 or self.points.shape[1:] != (N_LANDMARKS, 2):
            raise InputError(f"points must be (N, {N_LANDMARKS}, 2), got {self.points.shape}")
        if self.valid.shape != (self.points.shape[0],):
            raise InputError("valid flags must have one entry per frame")

    def __len__(self):
        return self.points.shape[0]

    @property
    def n_invalid(self):
        return int(np.count_nonzero(~self.valid))

    def check_bounds(self, width, height):
        p = self.points[self.valid]
        if p.size and not (
            np.all(p[..., 0] >= 0) and np.all(p[..., 0] < width)
            and np.all(p[..., 1] >= 0) and np.all(p[..., 1] < height)
        ):
            raise InputError(f"landmarks fall outside the {width}x{height} frame")


# ---------------------------------------------------------------- frames


def load_frames(path, fps=None):
    """Load a directory of PNG/PPM frames or an FSEQ container.

    ``fps`` overrides any fps stored on disk.  Directories read it from an
    ``fps.txt`` sidecar; FSEQ files carry it in the header.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such path: {path}")
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise InputError(f"no frame images in {path}")
        frames = []
        for f in files:
            with Image.open(f) as im:
                frames.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
        shapes = {fr.shape for fr in frames}
        if len(shapes) > 1:
            raise InputError(f"inconsistent frame dimensions in {path}: {sorted(shapes)}")
        if fps is None:
            sidecar = path / "fps.txt"
            if not sidecar.exists():
                raise InputError(f"missing fps: no fps.txt in {path} and no override given")
            fps = float(sidecar.read_text().strip())
        return FrameSequence(np.stack(frames), fps)

    seq = read_fseq(path)
    if fps is not None:
        seq.fps = float(fps)
    return seq


def read_fseq(path):
    data = Path(path).read_bytes()
    if len(data) < _FSEQ_HEADER.size:
        raise InputError(f"{path}: truncated FSEQ header")
    magic, version, w, h, n, fps = _FSEQ_HEADER.unpack_from(data)
    if magic != FSEQ_MAGIC:
        raise InputError(f"{path}: not an FSEQ file (magic {magic!r})")
    if version != FSEQ_VERSION:
        raise InputError(f"{path}: unsupported FSEQ version {version}")
    if n == 0:
        raise InputError(f"{path}: zero frames")
    size = n * h * w * 3
    body = data[_FSEQ_HEADER.size:]
    if len(body) != size:
        raise InputError(f"{path}: expected {size} payload bytes, found {len(body)}")
    frames = np.frombuffer(body, dtype=np.uint8).reshape(n, h, w, 3).copy()
    return FrameSequence(frames, float(fps))


def write_fseq(seq, path):
    """Write a sequence as FSEQ; real-valued frames are rounded to 8 bits."""
    frames = seq.frames
    if frames.dtype != np.uint8:
        frames = np.clip(np.rint(frames), 0, 255).astype(np.uint8)
    n, h, w, _ = frames.shape
    with open(path, "wb") as fh:
        fh.write(_FSEQ_HEADER.pack(FSEQ_MAGIC, FSEQ_VERSION, w, h, n, seq.fps))
        fh.write(np.ascontiguousarray(frames).tobytes())


def write_frame_dir(seq, path):
    """Write frame_%06d.png files plus the fps.txt sidecar."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    frames = np.clip(np.rint(seq.frames), 0, 255).astype(np.uint8)
    for i, fr in enumerate(frames):
        Image.fromarray(fr).save(path / f"frame_{i:06d}.png")
    (path / "fps.txt").write_text(f"{seq.fps!r}\n")


# ---------------------------------------------------------------- landmarks


def load_landmarks(path, n_frames=None):
    """Read a JSON-lines landmark file.

    Each line is ``{"frame": int, "points": [[x, y] * 68]}``.  Frames without a
    record are marked invalid.  Without ``n_frames`` the track ends at the last
    recorded frame.
    """
    records = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                idx = int(rec["frame"])
                pts = np.asarray(rec["points"], dtype=np.float64)
            except (ValueError, KeyError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: malformed landmark record ({exc})") from exc
            if pts.shape != (N_LANDMARKS, 2):
                raise InputError(
                    f"{path}:{lineno}: expected {N_LANDMARKS} points, got {pts.shape[0] if pts.ndim else 0}"
                )
            if idx < 0 or (n_frames is not None and idx >= n_frames):
                raise InputError(f"{path}:{lineno}: frame index {idx} out of range")
            records[idx] = pts
    if n_frames is None:
        n_frames = max(records) + 1 if records else 0
    points = np.zeros((n_frames, N_LANDMARKS, 2))
    valid = np.zeros(n_frames, dtype=bool)
    for idx, pts in records.items():
        points[idx] = pts
        valid[idx] = True
    return LandmarkTrack(points, valid)


def write_landmarks(track, path):
    with open(path, "w") as fh:
        for i in np.flatnonzero(track.valid):
            fh.write(json.dumps({"frame": int(i), "points": track.points[i].tolist()}) + "\n")


def validate_track(track, max_missing=MAX_MISSING_FRAMES):
    """Apply the discard rule; return the gap-filled track or None.

    A video with more than ``max_missing`` frames lacking landmarks is
    discarded.  Otherwise invalid frames are filled by linear interpolation
    between the nearest valid frames, copying the nearest one at either end.
    """
    n_bad = track.n_invalid
    if n_bad > max_missing or n_bad == len(track):
        return None
    if n_bad == 0:
        return LandmarkTrack(track.points.copy(), track.valid.copy())
    t = np.arange(len(track))
    good = np.flatnonzero(track.valid)
    flat = track.points.reshape(len(track), -1)
    filled = np.empty_like(flat)
    for j in range(flat.shape[1]):
        filled[:, j] = np.interp(t, good, flat[good, j])
    return LandmarkTrack(filled.reshape(track.points.shape), np.ones(len(track), dtype=bool))


# ---------------------------------------------------------------- synthetic


@dataclass
class SynthSpec:
    """Parameters of a synthetic pulsing face video.

    Amplitudes and noise are in 8-bit units.  ``region_phase`` holds one phase
    offset (radians) per RoI; ``channel`` picks the RGB channel that carries
    the pulse, either one index for every region or one per region.
    """

    width: int = 64
    height: int = 64
    fps: float = 30.0
    duration: float = 10.0
    pulse_hz: float = 1.5
    pulse_amp: float = 2.0
    base_color: tuple = (160.0, 110.0, 90.0)
    noise_sigma: float = 0.0
    region_phase: tuple = (0.0,) * N_ROIS
    channel: object = 1
    seed: int = 0

    def __post_init__(self):
        if self.pulse_amp < 0:
            raise InputError("pulse_amp must be non-negative")
        if self.fps <= 0 or self.duration <= 0:
            raise InputError("fps and duration must be positive")
        if len(self.region_phase) != N_ROIS:
            raise InputError(f"region_phase needs {N_ROIS} entries")

    @property
    def n_frames(self):
        return int(round(self.duration * self.fps))

    @property
    def channels(self):
        return np.broadcast_to(np.asarray(self.channel, dtype=np.int64), (N_ROIS,))


@dataclass
class GroundTruth:
    frequency: float
    amplitude: np.ndarray
    phase: np.ndarray
    channel: np.ndarray
    labels: np.ndarray = field(repr=False)


def synth_pulse_video(spec):
    """Render a synthetic pulse video, its landmarks and the ground truth.

    Region ``i`` of the fixed synthetic face carries
    ``pulse_amp * sin(2 pi pulse_hz t + region_phase[i])`` on its channel, on
    top of ``base_color``.  Gaussian noise is drawn from ``spec.seed``; the
    result is rounded to 8 bits.
    """
    n = spec.n_frames
    lm = synthetic_landmarks(spec.width, spec.height)
    labels = roi_layout(lm).labels(spec.height, spec.width)
    t = np.arange(n) / spec.fps
    phases = np.asarray(spec.region_phase, dtype=np.float64)
    chans = spec.channels

    video = np.empty((n, spec.height, spec.width, 3), dtype=np.float64)
    video[:] = np.asarray(spec.base_color, dtype=np.float64)
    wave = spec.pulse_amp * np.sin(2 * np.pi * spec.pulse_hz * t[:, None] + phases[None, :])
    for r in range(N_ROIS):
        ii, jj = np.nonzero(labels == r)
        video[:, ii, jj, chans[r]] += wave[:, r][:, None]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        video += rng.normal(0.0, spec.noise_sigma, size=video.shape)
    frames = np.clip(np.rint(video), 0, 255).astype(np.uint8)

    track = LandmarkTrack(np.broadcast_to(lm, (n, N_LANDMARKS, 2)).copy(), np.ones(n, dtype=bool))
    truth = GroundTruth(
        frequency=spec.pulse_hz,
        amplitude=np.full(N_ROIS, spec.pulse_amp),
        phase=phases.copy(),
        channel=chans.copy(),
        labels=labels,
    )
    return FrameSequence(frames, spec.fps), track, truth
