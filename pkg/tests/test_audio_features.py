"""Feature extraction tests against slow independent oracles."""

import numpy as np
import pytest

from speechpose import audio as A


def _tone(freq, n, amp=0.3):
    t = np.arange(n) / A.SAMPLE_RATE
    return A.Waveform(amp * np.sin(2 * np.pi * freq * t))


def test_frame_count_matches_loop():
    for n in [1, 249, 250, 251, 999, 1000, 64000, 64001]:
        covered, frames = 0, 0
        while covered < n:
            covered += A.HOP
            frames += 1
        assert A.frame_count(n) == frames
    assert A.frame_count(64000) == 256


def test_power_spectrogram_matches_naive_dft():
    rng = np.random.default_rng(0)
    w = A.Waveform(rng.normal(0, 0.2, 1100))
    got = A.power_spectrogram(w)

    # oracle: same framing, O(n^2) DFT written out by hand
    frames = A.frame_count(1100)
    left = (A.WINDOW - A.HOP) // 2
    right = frames * A.HOP - 1100 + left
    padded = np.pad(w.samples, (left, right), mode="reflect")
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(A.WINDOW) / A.WINDOW)
    ref = np.zeros_like(got)
    for f in range(frames):
        seg = np.zeros(A.NFFT)
        seg[: A.WINDOW] = padded[f * A.HOP : f * A.HOP + A.WINDOW] * win
        for k in range(A.NFFT // 2 + 1):
            c = np.exp(-2j * np.pi * k * np.arange(A.NFFT) / A.NFFT)
            v = (seg * c).sum()
            ref[f, k] = v.real ** 2 + v.imag ** 2
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-9)


def test_spectrogram_rejects_bad_input():
    with pytest.raises(ValueError):
        A.power_spectrogram(A.Waveform(np.zeros(399)))
    with pytest.raises(ValueError):
        A.power_spectrogram(A.Waveform(np.zeros(1000), sample_rate=44100))
    with pytest.raises(ValueError):
        A.Waveform(np.array([0.0, np.nan]))


def test_mel_scale_closed_forms():
    assert np.isclose(A.hz_to_mel(700.0), 2595.0 * np.log10(2.0), atol=1e-12)
    assert np.isclose(A.hz_to_mel(0.0), 0.0, atol=1e-12)
    freqs = np.array([125.0, 440.0, 1000.0, 7600.0])
    assert np.allclose(A.mel_to_hz(A.hz_to_mel(freqs)), freqs, rtol=1e-12)


def test_mel_filterbank_geometry():
    bank = A.mel_filterbank()
    freqs = np.arange(A.NFFT // 2 + 1) * (A.SAMPLE_RATE / A.NFFT)
    centers = A.mel_center_freqs()
    assert bank.shape == (64, 257)
    assert (bank >= 0).all()
    assert np.all(np.diff(centers) > 0)
    pts = A.mel_to_hz(np.linspace(A.hz_to_mel(A.MEL_LO), A.hz_to_mel(A.MEL_HI), 66))
    for m in range(64):
        support = freqs[bank[m] > 0]
        assert support.min() > pts[m] - 1e-9
        assert support.max() < pts[m + 2] + 1e-9
        # area normalization: triangle height 2/(right-left)
        assert bank[m].max() <= 2.0 / (pts[m + 2] - pts[m]) + 1e-12
    # full coverage between the lowest and highest centers
    inside = (freqs > centers[0]) & (freqs < centers[-1])
    assert (bank.sum(axis=0)[inside] > 0).all()


def test_log_mel_floor_on_silence():
    lm = A.log_mel(A.Waveform(np.zeros(2000)))
    assert np.array_equal(lm.values, np.full((8, 64), A.LOG_FLOOR))


def test_log_mel_tone_peaks_near_carrier():
    lm = A.log_mel(_tone(1500.0, 8000))
    centers = A.mel_center_freqs()
    peak = centers[lm.values.mean(axis=0).argmax()]
    assert abs(peak - 1500.0) < 200.0


def test_log_mel_deterministic():
    rng = np.random.default_rng(1)
    s = rng.normal(0, 0.1, 5000)
    a = A.log_mel(A.Waveform(s.copy())).values
    b = A.log_mel(A.Waveform(s.copy())).values
    assert np.array_equal(a, b)


def test_mfcc_matches_handwritten_dct():
    rng = np.random.default_rng(2)
    w = A.Waveform(rng.normal(0, 0.2, 3000))
    lm = A.log_mel(w).values
    got = A.mfcc(w).values
    n = 64
    ref = np.zeros((lm.shape[0], 13))
    for k in range(13):
        scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        basis = np.cos(np.pi * k * (2 * np.arange(n) + 1) / (2 * n))
        ref[:, k] = scale * (lm * basis).sum(axis=1)
    assert np.allclose(got, ref, atol=1e-10)
    assert got.shape == (lm.shape[0], 13)


def test_full_dct_is_orthonormal_inverse():
    rng = np.random.default_rng(3)
    frame = rng.normal(0, 1, 64)
    coeffs = A.full_dct_frame(frame)
    back = A.inverse_full_dct_frame(coeffs)
    assert np.allclose(back, frame, atol=1e-12)
    assert np.isclose((coeffs ** 2).sum(), (frame ** 2).sum(), rtol=1e-12)


def test_pooled_embedding_properties():
    e = A.pooled_embedding(_tone(700.0, 16000))
    assert not e.silent
    assert np.isclose(np.linalg.norm(e.vector), 1.0, atol=1e-12)
    z = A.pooled_embedding(A.Waveform(np.zeros(16000)))
    assert z.silent
    assert np.array_equal(z.vector, np.zeros(64))


def test_cosine_distance_behavior():
    a = A.pooled_embedding(_tone(700.0, 16000))
    b = A.pooled_embedding(_tone(3000.0, 16000))
    z = A.pooled_embedding(A.Waveform(np.zeros(16000)))
    assert A.cosine_distance(a, a) < 1e-12
    assert np.isclose(A.cosine_distance(a, b), A.cosine_distance(b, a), atol=1e-15)
    assert 0.0 < A.cosine_distance(a, b) <= 2.0
    assert A.cosine_distance(a, z) == 1.0
    # same pitch, different loudness: log scaling keeps them close
    loud = A.pooled_embedding(_tone(700.0, 16000, amp=0.9))
    assert A.cosine_distance(a, loud) < A.cosine_distance(a, b)
