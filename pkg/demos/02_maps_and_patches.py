"""From video to spatio-temporal maps to transformer patches.

Writes the first map and its 224x224 patch tiling as PNGs under demo_out/.
"""
from pathlib import Path

import numpy as np
from PIL import Image

from memstvit.ingest import SynthSpec, synth_pulse_video
from memstvit.patchseq import map_to_patches
from memstvit.stmap import export_png, write_map, read_map
from memstvit.stmap import build_maps
from memstvit.toydata import REGION_PHASE

out = Path("demo_out")
out.mkdir(exist_ok=True)

video, track, truth = synth_pulse_video(SynthSpec(pulse_hz=1.2, pulse_amp=2.5, noise_sigma=1.0,
                                                  region_phase=REGION_PHASE))
maps = build_maps(video, track, source_video="synthetic", label="real")
print(f"{len(video)} frames -> {len(maps)} maps, starts {[m.window_start for m in maps]}")

m = maps[0]
print("map shape", m.values.shape, "range", m.values.min(), m.values.max())

# rows 0-14 come from the original video, 45-59 from the most magnified octave
spec = np.abs(np.fft.rfft(m.values[:, :, 0] - m.values[:, :, 0].mean(axis=1, keepdims=True), axis=1))
freqs = np.fft.rfftfreq(196, 1 / video.fps)
for block, name in enumerate(["original", "octave 1", "octave 2", "octave 3"]):
    rows = spec[block * 15:(block + 1) * 15]
    print(f"{name:9s}: dominant frequency {freqs[rows.sum(axis=0).argmax()]:.2f} Hz")

export_png(m, out / "map0.png")
write_map(m, out / "map0.mems")
assert np.array_equal(read_map(out / "map0.mems").values, m.values)

seq = map_to_patches(m)
print("patches", seq.patches.shape, "-> flat", seq.flat().shape)
Image.fromarray(np.rint(seq.tile() * 255).astype(np.uint8)).save(out / "map0_patches.png")
print("wrote", sorted(p.name for p in out.iterdir()))
