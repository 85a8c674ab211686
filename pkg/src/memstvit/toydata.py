"""Synthetic real/fake map dataset for desk-scale training.

Real maps come from synthetic pulse videos run through the full
magnify -> RoI signals -> window pipeline.  Every real video pulses at its own
rate in 0.8-2.5 Hz with the same spatial phase pattern across the face.  Fake
maps are real maps whose columns (frames) are shuffled, which keeps every
frame's colour content but breaks continuity in time.
"""
from dataclasses import dataclass

import numpy as np

from .ingest import SynthSpec, synth_pulse_video
from .roi import GRID_COLS, N_ROIS
from .stmap import build_maps

# A fixed phase lag across the face: later down and to the right.
REGION_PHASE = tuple(0.35 * (i // GRID_COLS) + 0.2 * (i % GRID_COLS) for i in range(N_ROIS))


@dataclass
class ToyDataset:
    maps: np.ndarray
    labels: np.ndarray
    video: np.ndarray
    split: np.ndarray

    def subset(self, name):
        keep = self.split == name
        return self.maps[keep], self.labels[keep]


def real_video_maps(seed, size=64, duration=10.0, fps=30.0):
    rng = np.random.default_rng(seed)
    spec = SynthSpec(
        width=size, height=size, fps=fps, duration=duration,
        pulse_hz=float(rng.uniform(0.8, 2.5)),
        pulse_amp=float(rng.uniform(1.5, 3.0)),
        base_color=tuple(float(c) for c in rng.uniform([140, 90, 70], [190, 130, 110])),
        noise_sigma=1.0,
        region_phase=tuple(float(p) + float(rng.uniform(0, 2 * np.pi)) for p in REGION_PHASE),
        seed=int(rng.integers(2**31)),
    )
    video, track, _ = synth_pulse_video(spec)
    return build_maps(video, track, source_video=f"synth-{seed}")


def shuffle_columns(values, rng):
    return values[:, rng.permutation(values.shape[1]), :]


def make_toy_dataset(n_real=400, seed=0, size=64, fractions=(0.8, 0.1, 0.1)):
    """``n_real`` real maps and as many column-shuffled fakes, split by source video.

    Each fake is a shuffle of one real map and shares that map's split, so no
    test video contributes to training in either class.
    """
    rng = np.random.default_rng(seed)
    maps, vids = [], []
    v = 0
    while len(maps) < n_real:
        for m in real_video_maps(int(rng.integers(2**31)), size=size):
            if len(maps) < n_real:
                maps.append(m.values)
                vids.append(v)
        v += 1
    real = np.stack(maps)
    vids = np.array(vids)
    fake = np.stack([shuffle_columns(m, rng) for m in real])

    n_vid = v
    perm = rng.permutation(n_vid)
    cut1 = int(round(fractions[0] * n_vid))
    cut2 = cut1 + int(round(fractions[1] * n_vid))
    split_of = np.empty(n_vid, dtype=object)
    split_of[perm[:cut1]] = "train"
    split_of[perm[cut1:cut2]] = "val"
    split_of[perm[cut2:]] = "test"
    split = split_of[vids].astype(str)

    return ToyDataset(
        maps=np.concatenate([real, fake]),
        labels=np.concatenate([np.zeros(n_real, dtype=np.int64), np.ones(n_real, dtype=np.int64)]),
        video=np.concatenate([vids, vids]),
        split=np.concatenate([split, split]),
    )
