"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line with the measured value and threshold;
the lines are printed in the terminal summary (and directly when this file
is run as a script).
"""
import subprocess
import sys
import time

import numpy as np
import pytest

from memstvit.ingest import SynthSpec, synth_pulse_video
from memstvit.magnify import BandpassSpec, OctaveVideo, amplify_composite, gaussian_decompose, ideal_bandpass
from memstvit.patchseq import map_to_patches
from memstvit.stmap import SignalGrid, build_maps, window_and_normalize
from memstvit.toydata import make_toy_dataset
from memstvit.train import TrainConfig, evaluate, finite_diff_check, train_loop
from memstvit.vit import ViTConfig, classify_head, embed, encoder_forward, init_params
from memstvit.decide import MapPrediction, video_verdict

RESULTS = []


def record(number, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _amp(signal, freq, fps):
    k = int(round(freq * len(signal) / fps))
    return 2 * abs(np.fft.rfft(signal)[k]) / len(signal)


def _region_amplitude(pulse_hz):
    video, _, truth = synth_pulse_video(SynthSpec(pulse_hz=pulse_hz, pulse_amp=2.0, noise_sigma=0.0))
    octave = gaussian_decompose(video, 1)[0]
    out = amplify_composite(video, ideal_bandpass(octave, BandpassSpec()), 10.0)
    region = truth.labels == 7
    before = _amp(video.frames[:, region, 1].astype(float).mean(axis=1), pulse_hz, 30.0)
    after = _amp(out.frames[:, region, 1].mean(axis=1), pulse_hz, 30.0)
    return before, after


def test_evm_amplification():
    t0 = time.perf_counter()
    _, inband = _region_amplitude(1.5)
    rel = abs(inband - 22.0) / 22.0
    before, after = _region_amplitude(5.0)
    gain = after / before
    dt = time.perf_counter() - t0
    record(1, "EVM amplification", rel <= 0.10 and gain <= 1.05 and dt < 30,
           f"in-band amplitude {inband:.3f} vs 22 (rel err {rel:.3f} <= 0.10); "
           f"5 Hz gain {gain:.4f} <= 1.05; {dt:.1f} s < 30 s")


def test_bandpass_exactness():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst_out = worst_in = 0.0
    f = np.abs(np.fft.fftfreq(64, 1 / 30.0))
    inband = (f >= 0.75) & (f <= 3.0)
    for _ in range(100):
        x = rng.normal(size=64)
        y = ideal_bandpass(OctaveVideo(1, x.reshape(64, 1, 1, 1), 30.0)).frames.ravel()
        X, Y = np.fft.fft(x), np.fft.fft(y)
        n = np.linalg.norm(x)
        worst_out = max(worst_out, np.abs(Y[~inband]).max() / n)
        worst_in = max(worst_in, np.abs(Y[inband] - X[inband]).max() / n)
    dt = time.perf_counter() - t0
    record(2, "Band-pass exactness", worst_out < 1e-9 and worst_in < 1e-9 and dt < 1,
           f"out-of-band {worst_out:.2e}, in-band change {worst_in:.2e} (< 1e-9 x norm); {dt:.3f} s < 1 s")


def test_map_contract():
    bad = []
    for fps in (25.0, 30.0):
        for t in (196, 300, 1000):
            video, track, _ = synth_pulse_video(SynthSpec(fps=fps, duration=t / fps, noise_sigma=1.0))
            assert len(video) == t
            maps = build_maps(video, track)
            expect = (t - 196) // int(round(0.5 * fps)) + 1
            ok = len(maps) == expect and all(
                m.values.shape == (60, 196, 3) and m.values.min() >= 0 and m.values.max() <= 1 for m in maps)
            if not ok:
                bad.append((t, fps, len(maps), expect))
    record(3, "MEMSTmap contract", not bad, f"6 (T, fps) cases, mismatches: {bad or 'none'}")


def test_normalization_invariance():
    rng = np.random.default_rng(4)
    same = 0
    for _ in range(100):
        g = rng.normal(rng.uniform(0, 200), rng.uniform(0.1, 50), size=(60, 300, 3))
        a = rng.uniform(1e-3, 1e3, size=(60, 1, 1))
        b = rng.uniform(-1e3, 1e3, size=(60, 1, 1))
        m1 = window_and_normalize(SignalGrid(g), 30)
        m2 = window_and_normalize(SignalGrid(a * g + b), 30)
        same += len(m1) == len(m2) and all(np.array_equal(x.values, y.values) for x, y in zip(m1, m2))
    record(4, "Normalization invariance", same == 100, f"{same}/100 trials bit-identical")


def test_patch_locality_and_range():
    rng = np.random.default_rng(5)
    m = rng.random((60, 196, 3))
    base = map_to_patches(m).patches
    local = extreme = 0
    for _ in range(1000):
        k = int(rng.integers(196))
        m2 = m.copy()
        m2[:, k] = rng.random((60, 3)) * rng.uniform(0.1, 1)
        p2 = map_to_patches(m2).patches
        changed = np.flatnonzero(np.any(p2 != base, axis=(1, 2, 3)))
        local += list(changed) == [k]
        extreme += (np.array_equal(p2[k].min(axis=(0, 1)), m2[:, k].min(axis=0))
                    and np.array_equal(p2[k].max(axis=(0, 1)), m2[:, k].max(axis=0)))
    record(5, "Patch locality + range", local == 1000 and extreme == 1000,
           f"locality {local}/1000, min/max equality {extreme}/1000")


def test_gradient_check():
    params = init_params(ViTConfig.toy(dropout_rate=0.0), seed=11)
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    err, details = finite_diff_check(params, (rng.random((60, 196, 3)), 1), trials=240, seed=11,
                                     return_details=True)
    dt = time.perf_counter() - t0
    kinds = {d[0] for d in details}
    record(6, "Gradient check", err < 1e-4 and dt < 120 and len(details) >= 200,
           f"max rel err {err:.2e} < 1e-4 over {len(details)} coordinates in {len(kinds)} tensors; "
           f"{dt:.1f} s < 120 s")


def test_permutation_equivariance():
    rng = np.random.default_rng(7)
    params = init_params(ViTConfig.toy(), seed=7)
    params["pos_embed"][:] = rng.normal(0, 0.02, params["pos_embed"].shape)
    patches = map_to_patches(rng.random((60, 196, 3))).flat()
    ref_desc = encoder_forward(embed(patches, params), params)
    ref_probs = classify_head(ref_desc, params)
    same = 0
    for _ in range(20):
        perm = rng.permutation(196)
        q = params.copy()
        q["pos_embed"][1:] = params["pos_embed"][1:][perm]
        d = encoder_forward(embed(patches[perm], q), q)
        same += np.array_equal(d, ref_desc) and np.array_equal(classify_head(d, q), ref_probs)
    record(7, "Permutation equivariance", same == 20, f"{same}/20 permutations bit-identical")


@pytest.mark.slow
def test_toy_classification():
    t0 = time.perf_counter()
    ds = make_toy_dataset(n_real=400, seed=0)
    t_data = time.perf_counter() - t0
    cfg = TrainConfig(learning_rate=5e-5, epochs=30, batch_size=32, dropout_rate=0.1, seed=0)
    res = train_loop(ds.subset("train"), ds.subset("val"), ViTConfig.toy(dropout_rate=0.1), cfg)
    val_acc, _ = evaluate(*ds.subset("val"), res.params)
    test_acc, _ = evaluate(*ds.subset("test"), res.params)
    dt = time.perf_counter() - t0
    sizes = "/".join(str(int((ds.split == s).sum())) for s in ("train", "val", "test"))
    record(8, "Toy classification", val_acc >= 0.95 and test_acc >= 0.95 and dt < 900,
           f"val acc {val_acc:.4f}, test acc {test_acc:.4f} (>= 0.95) after {len(res.history)} epochs, "
           f"split {sizes}; {dt:.0f} s < 900 s (data {t_data:.0f} s)")


def test_verdict_aggregation():
    def verdict(*probs):
        return video_verdict([MapPrediction(p) for p in probs]).verdict

    got = (verdict((0.2, 0.8), (0.3, 0.7), (0.1, 0.9), (0.7, 0.3), (0.6, 0.4)),
           verdict((0.1, 0.9), (0.2, 0.8), (0.6, 0.4), (0.7, 0.3)),
           verdict((0.9, 0.1)))
    tie = video_verdict([MapPrediction(p) for p in ((0.1, 0.9), (0.2, 0.8), (0.6, 0.4), (0.7, 0.3))])
    ok = got == ("fake", "fake", "real") and tie.tie_break and np.allclose(tie.mean_probs, (0.4, 0.6))
    record(9, "Verdict aggregation", ok, f"majority/tie/single -> {got}, tie mean ({tie.mean_probs[0]:.2f}, {tie.mean_probs[1]:.2f})")


def test_selftest_determinism(tmp_path):
    logs = []
    for run in ("a", "b"):
        log = tmp_path / f"{run}.jsonl"
        proc = subprocess.run([sys.executable, "-m", "memstvit", "--strict", "selftest", "--seed", "3",
                               "--log", str(log)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        logs.append(log.read_bytes())
    record(10, "End-to-end determinism", logs[0] == logs[1] and len(logs[0]) > 0,
           f"two strict selftest runs, {len(logs[0])}-byte logs, identical={logs[0] == logs[1]}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
