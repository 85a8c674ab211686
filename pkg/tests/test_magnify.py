import numpy as np
import pytest
from scipy.ndimage import convolve

from memstvit.errors import InputError
from memstvit.ingest import FrameSequence, SynthSpec, synth_pulse_video
from memstvit.magnify import (BandpassSpec, OctaveVideo, amplify_composite, gaussian_decompose, ideal_bandpass,
                              magnify_set)

K = np.array([1, 4, 6, 4, 1]) / 16.0


def _seq(frames, fps=30.0):
    return FrameSequence(np.asarray(frames), fps)


def test_constant_video_constant_octaves():
    v = _seq(np.full((4, 64, 64, 3), 77, np.uint8))
    octs = gaussian_decompose(v, 3)
    assert [o.frames.shape[1:3] for o in octs] == [(32, 32), (16, 16), (8, 8)]
    for o in octs:
        np.testing.assert_allclose(o.frames, 77.0, atol=1e-12)


def test_brute_force_blur_8x8():
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (8, 8, 3)).astype(np.uint8)
    oct1 = gaussian_decompose(_seq(img[None]), 1)[0].frames[0]
    # independent oracle: 2-D kernel, mirror borders without edge repeat
    k2 = np.outer(K, K)
    expect = np.stack([convolve(img[..., c].astype(float), k2, mode="mirror") for c in range(3)], -1)[::2, ::2]
    np.testing.assert_allclose(oct1, expect, atol=1e-12)


def test_white_pixel_mass():
    img = np.zeros((1, 8, 8, 3), np.uint8)
    img[0, 4, 4] = 255
    oct1 = gaussian_decompose(_seq(img), 1)[0].frames
    assert oct1[..., 0].sum() == pytest.approx(255 / 4)


def test_odd_size_keeps_edge_sample():
    octs = gaussian_decompose(_seq(np.zeros((2, 45, 37, 3), np.uint8)), 3)
    assert [o.frames.shape[1:3] for o in octs] == [(23, 19), (12, 10), (6, 5)]


def test_too_small_for_pyramid():
    with pytest.raises(InputError, match="too small"):
        gaussian_decompose(_seq(np.zeros((2, 20, 20, 3), np.uint8)), 3)


def _signal(freq, n=300, fps=30.0):
    t = np.arange(n) / fps
    return np.sin(2 * np.pi * freq * t) + 3.0


def _bp(x, fps=30.0, band=BandpassSpec()):
    return ideal_bandpass(OctaveVideo(1, x.reshape(-1, 1, 1, 1), fps), band).frames.ravel()


def test_bandpass_constant_zero():
    assert np.abs(_bp(np.full(300, 5.0))).max() < 1e-12


def test_bandpass_inband_sine():
    x = _signal(1.5)
    assert np.abs(_bp(x) - (x - x.mean())).max() < 1e-9


def test_bandpass_outband_sine():
    assert np.abs(_bp(_signal(5.0))).max() < 1e-9


def test_bandpass_even_odd_length():
    rng = np.random.default_rng(4)
    for n in (63, 64):
        x = rng.normal(size=n)
        y = _bp(x)
        f = np.abs(np.fft.rfftfreq(n, 1 / 30.0))
        Y = np.fft.rfft(y)
        assert np.abs(Y[(f < 0.75) | (f > 3.0)]).max() < 1e-9
        np.testing.assert_allclose(Y[(f >= 0.75) & (f <= 3.0)], np.fft.rfft(x)[(f >= 0.75) & (f <= 3.0)],
                                   atol=1e-9)


def test_band_above_nyquist_rejected():
    with pytest.raises(InputError):
        BandpassSpec(0.75, 3.0).check(5.0)
    with pytest.raises(InputError):
        BandpassSpec(2.0, 1.0).check(30.0)


def test_alpha_zero_identity(pulse_video):
    video = pulse_video[0]
    oct1 = gaussian_decompose(video, 1)[0]
    out = amplify_composite(video, ideal_bandpass(oct1, BandpassSpec()), 0.0)
    np.testing.assert_array_equal(out.frames, video.frames.astype(np.float64))


def test_constant_original_unchanged():
    v = _seq(np.full((64, 32, 32, 3), 100, np.uint8))
    oct1 = gaussian_decompose(v, 1)[0]
    out = amplify_composite(v, ideal_bandpass(oct1, BandpassSpec()), 40.0)
    np.testing.assert_allclose(out.frames, 100.0, atol=1e-9)


def _region_amp(frames, truth, roi=7):
    sig = frames[:, truth.labels == roi, 1].astype(np.float64).mean(axis=1)
    return 2 * abs(np.fft.rfft(sig)[15]) / len(sig)


def test_amplification_near_analytic(pulse_video):
    video, _, truth = pulse_video
    oct1 = gaussian_decompose(video, 1)[0]
    out = amplify_composite(video, ideal_bandpass(oct1, BandpassSpec()), 10.0)
    assert _region_amp(out.frames, truth) == pytest.approx(22.0, rel=0.10)


def test_alphas_zero_set_equals_original(pulse_video):
    video = pulse_video[0]
    mset = magnify_set(video, alphas=(0, 0, 0))
    assert len(mset.videos) == 4
    for v in mset.videos[1:]:
        np.testing.assert_array_equal(v.frames, video.frames.astype(np.float64))


def test_default_alphas_ordered(pulse_video):
    video, _, truth = pulse_video
    mset = magnify_set(video)
    base = _region_amp(video.frames, truth)
    r = [_region_amp(v.frames, truth) / base for v in mset.videos[1:]]
    assert 1 < r[0] < r[1] < r[2]
    assert all(v.frames.shape == (300, 64, 64, 3) for v in mset.videos)


def test_clamped_to_byte_range(pulse_video):
    mset = magnify_set(pulse_video[0], alphas=(500, 500, 500))
    for v in mset.videos[1:]:
        assert v.frames.min() >= 0 and v.frames.max() <= 255


def test_parallel_matches_sequential(pulse_video):
    a = magnify_set(pulse_video[0], jobs=1)
    b = magnify_set(pulse_video[0], jobs=3)
    for x, y in zip(a.videos, b.videos):
        np.testing.assert_array_equal(x.frames, y.frames)


def test_bandpass_linear():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=(2, 50, 2, 2, 3))
    f = lambda v: ideal_bandpass(OctaveVideo(1, v, 30.0)).frames  # noqa: E731
    np.testing.assert_allclose(f(2.5 * x - 0.7 * y), 2.5 * f(x) - 0.7 * f(y), atol=1e-12)
