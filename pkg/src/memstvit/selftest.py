"""Synthetic-oracle self checks, also used by ``memstvit selftest``.

Every check is seeded; the JSON-lines metric log is byte-identical between
runs with the same seed.
"""
import json

import numpy as np

from .decide import MapPrediction, video_verdict
from .ingest import SynthSpec, synth_pulse_video
from .magnify import BandpassSpec, OctaveVideo, amplify_composite, gaussian_decompose, ideal_bandpass
from .patchseq import map_to_patches
from .stmap import N_ROWS, SignalGrid, window_and_normalize, window_starts
from .toydata import real_video_maps, shuffle_columns
from .train import TrainConfig, finite_diff_check, train_loop
from .vit import ViTConfig, embed, encoder_forward, init_params

CENTER_ROI = 7


def tone_amplitude(signal, freq, fps):
    """Amplitude of the DFT bin nearest ``freq``: 2|X_k|/N."""
    n = len(signal)
    k = int(round(freq * n / fps))
    return 2.0 * abs(np.fft.rfft(signal)[k]) / n


def evm_gain(pulse_hz, alpha=10.0, amp=2.0):
    """Region-mean pulse amplitude after octave-1 magnification, and before."""
    spec = SynthSpec(width=64, height=64, fps=30.0, duration=10.0, pulse_hz=pulse_hz, pulse_amp=amp)
    video, _, truth = synth_pulse_video(spec)
    octave = gaussian_decompose(video, levels=1)[0]
    out = amplify_composite(video, ideal_bandpass(octave, BandpassSpec()), alpha)
    region = truth.labels == CENTER_ROI
    ch = int(truth.channel[CENTER_ROI])
    before = tone_amplitude(video.frames[:, region, ch].astype(np.float64).mean(axis=1), pulse_hz, spec.fps)
    after = tone_amplitude(out.frames[:, region, ch].mean(axis=1), pulse_hz, spec.fps)
    return after, before


def check_evm(seed):
    after, _ = evm_gain(1.5)
    target = 11.0 * 2.0
    rel = abs(after - target) / target
    oob_after, oob_before = evm_gain(5.0)
    oob = oob_after / oob_before
    return rel <= 0.10 and oob <= 1.05, {"inband_amp": after, "inband_rel_err": rel, "oob_gain": oob}


def check_bandpass(seed, trials=50):
    rng = np.random.default_rng(seed)
    worst_out, worst_in = 0.0, 0.0
    n, fps = 64, 30.0
    band = BandpassSpec()
    freqs = np.fft.fftfreq(n, 1.0 / fps)
    inband = (np.abs(freqs) >= band.f_low) & (np.abs(freqs) <= band.f_high)
    for _ in range(trials):
        x = rng.normal(size=n)
        y = ideal_bandpass(OctaveVideo(1, x.reshape(n, 1, 1, 1), fps), band).frames.ravel()
        X, Y = np.fft.fft(x), np.fft.fft(y)
        norm = np.linalg.norm(x)
        worst_out = max(worst_out, np.abs(Y[~inband]).max() / norm)
        worst_in = max(worst_in, np.abs(Y[inband] - X[inband]).max() / norm)
    return worst_out < 1e-9 and worst_in < 1e-9, {"max_out_of_band": worst_out, "max_in_band_change": worst_in}


def check_windows(seed):
    rng = np.random.default_rng(seed)
    ok = True
    counts = {}
    for t in (196, 300, 1000):
        for fps in (25, 30):
            expect = (t - 196) // int(round(0.5 * fps)) + 1
            maps = window_and_normalize(SignalGrid(rng.normal(size=(N_ROWS, t, 3))), fps)
            good = len(maps) == expect == len(window_starts(t, fps)) and all(
                m.values.shape == (60, 196, 3) and m.values.min() >= 0 and m.values.max() <= 1 for m in maps)
            ok &= good
            counts[f"T{t}_fps{fps}"] = len(maps)
    return ok, counts


def check_norm_invariance(seed, trials=10):
    rng = np.random.default_rng(seed)
    same = 0
    for _ in range(trials):
        g = rng.normal(100, 20, size=(N_ROWS, 300, 3))
        a = rng.uniform(0.1, 10, size=(N_ROWS, 1, 1))
        b = rng.uniform(-100, 100, size=(N_ROWS, 1, 1))
        m1 = window_and_normalize(SignalGrid(g), 30)
        m2 = window_and_normalize(SignalGrid(a * g + b), 30)
        same += all(np.array_equal(x.values, y.values) for x, y in zip(m1, m2))
    return same == trials, {"identical": same, "trials": trials}


def check_patches(seed, trials=20):
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(trials):
        m = rng.random((60, 196, 3))
        p = map_to_patches(m).patches
        k = int(rng.integers(196))
        m2 = m.copy()
        m2[:, k] = rng.random((60, 3))
        p2 = map_to_patches(m2).patches
        changed = np.flatnonzero(np.any(p != p2, axis=(1, 2, 3)))
        ok &= list(changed) == [k]
        ok &= np.array_equal(p.min(axis=(1, 2)), m.min(axis=0)) and np.array_equal(p.max(axis=(1, 2)), m.max(axis=0))
    return bool(ok), {"trials": trials}


def check_gradients(seed, trials=200):
    cfg = ViTConfig.toy(dropout_rate=0.0)
    params = init_params(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    err = finite_diff_check(params, (rng.random((60, 196, 3)), 1), trials=trials, seed=seed)
    return err < 1e-4, {"max_rel_err": err, "trials": trials}


def check_permutation(seed, trials=20):
    cfg = ViTConfig.toy()
    params = init_params(cfg, seed=seed)
    rng = np.random.default_rng(seed)
    params["pos_embed"][:] = rng.normal(0, 0.02, params["pos_embed"].shape)
    patches = map_to_patches(rng.random((60, 196, 3))).patches
    ref = encoder_forward(embed(patches, params), params)
    same = 0
    for _ in range(trials):
        perm = rng.permutation(196)
        q = params.copy()
        q["pos_embed"][1:] = params["pos_embed"][1:][perm]
        same += np.array_equal(encoder_forward(embed(patches[perm], q), q), ref)
    return same == trials, {"identical": same, "trials": trials}


def check_verdicts(seed):
    cases = [
        ([(0.2, 0.8)] * 3 + [(0.7, 0.3)] * 2, "fake"),
        ([(0.1, 0.9), (0.2, 0.8), (0.6, 0.4), (0.7, 0.3)], "fake"),
        ([(0.9, 0.1)], "real"),
    ]
    got = [video_verdict([MapPrediction(p) for p in probs]).verdict for probs, _ in cases]
    return got == [c[1] for c in cases], {"verdicts": got}


def check_training(seed):
    """A few seeded epochs on a small real/shuffled set; logs the loss curve."""
    rng = np.random.default_rng(seed)
    maps = [m.values for m in real_video_maps(seed)][:6]
    real = np.stack(maps)
    fake = np.stack([shuffle_columns(m, rng) for m in real])
    x = np.concatenate([real, fake])
    y = np.array([0] * len(real) + [1] * len(fake))
    res = train_loop((x, y), (x, y), ViTConfig.toy(), TrainConfig(epochs=2, batch_size=4, seed=seed))
    losses = [h["train_loss"] for h in res.history]
    return bool(np.all(np.isfinite(losses))), {"train_loss": losses, "val_acc": [h["val_acc"] for h in res.history]}


CHECKS = [
    ("evm_amplification", check_evm),
    ("bandpass_exactness", check_bandpass),
    ("map_windows", check_windows),
    ("normalization_invariance", check_norm_invariance),
    ("patch_locality_range", check_patches),
    ("gradient_check", check_gradients),
    ("permutation_equivariance", check_permutation),
    ("verdict_aggregation", check_verdicts),
    ("training_smoke", check_training),
]

FULL_TRIALS = {"normalization_invariance": 100, "patch_locality_range": 1000, "gradient_check": 200,
               "permutation_equivariance": 20}
QUICK_TRIALS = {"normalization_invariance": 10, "patch_locality_range": 50, "gradient_check": 200,
                "permutation_equivariance": 5}


def run_selftest(seed=0, log_path=None, quick=True, out=print):
    trials = QUICK_TRIALS if quick else FULL_TRIALS
    records = []
    for name, fn in CHECKS:
        kw = {"trials": trials[name]} if name in trials else {}
        ok, metrics = fn(seed, **kw)
        rec = {"check": name, "pass": bool(ok), **_plain(metrics)}
        records.append(rec)
        out(f"{'PASS' if ok else 'FAIL'} {name} {json.dumps(_plain(metrics))}")
    if log_path:
        with open(log_path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    return all(r["pass"] for r in records)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj
