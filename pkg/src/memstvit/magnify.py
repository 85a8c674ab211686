"""Eulerian colour magnification at three Gaussian octaves.

Each octave of the video is band-passed in time with an ideal FFT filter,
scaled, upsampled back to full resolution and added to the original frames.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InputError
from .ingest import FrameSequence

BINOMIAL_5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
HEART_BAND = (0.75, 3.0)
DEFAULT_ALPHAS = (10.0, 20.0, 40.0)
MIN_OCTAVE_SIDE = 4


@dataclass(frozen=True)
class BandpassSpec:
    f_low: float = HEART_BAND[0]
    f_high: float = HEART_BAND[1]

    def check(self, fps):
        if not (0 < self.f_low < self.f_high < fps / 2):
            raise InputError(
                f"band [{self.f_low}, {self.f_high}] Hz must satisfy 0 < low < high < fps/2 = {fps / 2}"
            )


@dataclass
class OctaveVideo:
    """Real-valued (N, h, w, 3) frames of one pyramid level."""

    level: int
    frames: np.ndarray
    fps: float


@dataclass
class MagnifiedSet:
    original: FrameSequence
    magnified: list
    alphas: tuple

    def __post_init__(self):
        ref = self.original.frames.shape
        if len(self.magnified) != 3 or any(m.frames.shape != ref for m in self.magnified):
            raise InputError("magnified sequences must match the original in shape")

    @property
    def videos(self):
        """Original first, then octaves 1..3: the row-block order of the maps."""
        return [self.original, *self.magnified]


def octave_shape(height, width, level):
    for _ in range(level):
        height, width = (height + 1) // 2, (width + 1) // 2
    return height, width


def _blur_decimate(x):
    """Binomial 5-tap blur on axes 1 and 2 (reflect-101 borders), keep even samples."""
    x = correlate1d(x, BINOMIAL_5, axis=1, mode="mirror")
    x = correlate1d(x, BINOMIAL_5, axis=2, mode="mirror")
    return x[:, ::2, ::2]


def gaussian_decompose(video, levels=3, dtype=np.float64):
    """Octaves 1..levels; octave k is blurred and decimated k times."""
    h, w = video.height, video.width
    if min(h, w) / 2**levels < MIN_OCTAVE_SIDE:
        raise InputError(f"{w}x{h} video is too small for {levels} octaves")
    x = video.frames.astype(dtype)
    out = []
    for level in range(1, levels + 1):
        x = _blur_decimate(x)
        out.append(OctaveVideo(level, x, video.fps))
    return out


def ideal_bandpass(octave, band=BandpassSpec()):
    """Zero-phase ideal temporal band-pass over the whole clip.

    Bins with frequency k*fps/N outside [f_low, f_high] (DC included) are
    zeroed; the result is the real inverse transform.
    """
    n = octave.frames.shape[0]
    if n < 4:
        raise InputError(f"band-pass needs at least 4 frames, got {n}")
    band.check(octave.fps)
    freqs = np.fft.rfftfreq(n, d=1.0 / octave.fps)
    keep = (freqs >= band.f_low) & (freqs <= band.f_high)
    spec = np.fft.rfft(octave.frames, axis=0)
    spec[~keep] = 0
    filtered = np.fft.irfft(spec, n=n, axis=0).astype(octave.frames.dtype, copy=False)
    return OctaveVideo(octave.level, filtered, octave.fps)


def _upsample_axis(x, size, axis):
    """Bilinear (half-pixel centred) resize of one axis to ``size`` samples."""
    n = x.shape[axis]
    pos = (np.arange(size) + 0.5) * (n / size) - 0.5
    pos = np.clip(pos, 0, n - 1)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = pos - i0
    shape = [1] * x.ndim
    shape[axis] = size
    frac = frac.reshape(shape)
    return np.take(x, i0, axis=axis) * (1 - frac) + np.take(x, i1, axis=axis) * frac


def upsample_to(frames, height, width, level):
    """Undo ``level`` decimations, doubling each time up to the pyramid sizes."""
    x = frames
    for k in range(level - 1, -1, -1):
        th, tw = octave_shape(height, width, k)
        x = _upsample_axis(x, th, axis=1)
        x = _upsample_axis(x, tw, axis=2)
    return x


def amplify_composite(original, filtered, alpha):
    """original + alpha * upsample(filtered), clamped to [0, 255]."""
    if alpha < 0:
        raise InputError("alpha must be non-negative")
    n, h, w, _ = original.frames.shape
    expect = (n, *octave_shape(h, w, filtered.level), 3)
    if filtered.frames.shape != expect:
        raise InputError(f"filtered octave shape {filtered.frames.shape} does not match {expect}")
    base = original.frames.astype(filtered.frames.dtype)
    if alpha == 0:
        return FrameSequence(base, original.fps)
    up = upsample_to(filtered.frames, h, w, filtered.level)
    if up.shape != base.shape:
        raise InputError(f"upsampled shape {up.shape} != original {base.shape}")
    return FrameSequence(np.clip(base + alpha * up, 0.0, 255.0), original.fps)


def magnify_set(video, band=BandpassSpec(), alphas=DEFAULT_ALPHAS, dtype=np.float64, jobs=1):
    """The original plus one magnified video per octave.

    ``jobs > 1`` runs the three octaves on worker threads; results are
    identical to the sequential path since the octaves share no state.
    """
    if len(alphas) != 3:
        raise InputError("exactly three amplification factors are required")
    band.check(video.fps)
    octaves = gaussian_decompose(video, levels=3, dtype=dtype)

    def one(k):
        return amplify_composite(video, ideal_bandpass(octaves[k], band), float(alphas[k]))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, 3)) as pool:
            magnified = list(pool.map(one, range(3)))
    else:
        magnified = [one(k) for k in range(3)]
    return MagnifiedSet(video, magnified, tuple(float(a) for a in alphas))
