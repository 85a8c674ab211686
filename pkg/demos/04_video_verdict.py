"""End to end on files: frames on disk -> maps -> per-map probabilities -> verdict.

Uses the weights from 03_train_toy.py if present, otherwise a random toy model
(the verdict is then meaningless, but every stage still runs).
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from memstvit.ingest import SynthSpec, synth_pulse_video, write_frame_dir, write_landmarks
from memstvit.vit import ViTConfig, init_params, save_weights

work = Path(tempfile.mkdtemp(prefix="memstvit-demo-"))
video, track, _ = synth_pulse_video(SynthSpec(duration=8.0, pulse_hz=1.1, noise_sigma=1.0))
write_frame_dir(video, work / "frames")
write_landmarks(track, work / "landmarks.jsonl")
print("video written to", work)

weights = Path("demo_toy.vitw")
if not weights.exists():
    weights = work / "random.vitw"
    save_weights(init_params(ViTConfig.toy(), seed=0), weights)

cmd = [sys.executable, "-m", "memstvit", "predict", "--weights", str(weights),
       "--frames", str(work / "frames"), "--landmarks", str(work / "landmarks.jsonl")]
report = json.loads(subprocess.run(cmd, check=True, capture_output=True, text=True).stdout)
print(f"verdict: {report['verdict']}  votes {report['votes']}  mean probs "
      f"({report['mean_probs'][0]:.3f}, {report['mean_probs'][1]:.3f})")
for row in report["per_map"][:3]:
    print("  ", row["map"], [round(p, 3) for p in row["probs"]], row["predicted"])
