"""Deterministic audio feature extraction.

Pipeline: mono 16 kHz waveform -> reflect-padded Hann STFT (window 400,
hop 250, nfft 512) -> power spectrum -> 64 triangular mel filters over
125..7600 Hz with area normalization -> natural log floored at 1e-6.
Frame f is centered on its hop chunk [f*250, (f+1)*250), so the frame
count is ceil(samples/250) and 64000 samples give exactly 256 frames.

MFCCs are the orthonormal DCT-II of each log-mel frame (coefficients
0..12). The pooled embedding is the time-mean of the log-mel matrix
shifted so the silence floor maps to zero, then L2-normalized; exact
silence therefore yields the zero vector and is flagged.
"""

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
WINDOW = 400
HOP = 250
NFFT = 512
N_MELS = 64
MEL_LO = 125.0
MEL_HI = 7600.0
POWER_FLOOR = 1e-6
LOG_FLOOR = float(np.log(POWER_FLOOR))
N_MFCC = 13


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("waveform must be a non-empty 1D array")
        if not np.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass
class LogMelSpectrogram:
    values: np.ndarray  # frames x 64
    hop: int = HOP
    window: int = WINDOW
    mel_range: tuple = (MEL_LO, MEL_HI)


@dataclass
class MfccSequence:
    values: np.ndarray  # frames x 13


@dataclass
class AudioEmbedding:
    vector: np.ndarray  # 64, unit norm (or zeros when silent)
    silent: bool = False


def _hann_periodic(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, nfft=NFFT, sr=SAMPLE_RATE, lo=MEL_LO, hi=MEL_HI):
    """(n_mels, nfft//2+1) triangular weights, each filter scaled by
    2/(right - left) so filter area is independent of bandwidth."""
    pts = mel_to_hz(np.linspace(hz_to_mel(lo), hz_to_mel(hi), n_mels + 2))
    freqs = np.arange(nfft // 2 + 1) * (sr / nfft)
    bank = np.zeros((n_mels, freqs.size))
    for m in range(n_mels):
        left, center, right = pts[m], pts[m + 1], pts[m + 2]
        up = (freqs - left) / (center - left)
        down = (right - freqs) / (right - center)
        bank[m] = np.maximum(0.0, np.minimum(up, down)) * (2.0 / (right - left))
    return bank


def mel_center_freqs(n_mels=N_MELS, lo=MEL_LO, hi=MEL_HI):
    pts = mel_to_hz(np.linspace(hz_to_mel(lo), hz_to_mel(hi), n_mels + 2))
    return pts[1:-1]


def frame_count(n_samples, hop=HOP):
    return -(-n_samples // hop)


def power_spectrogram(w: Waveform):
    """frames x 257 one-sided power spectrum of the padded Hann STFT."""
    if w.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {w.sample_rate}")
    s = w.samples
    if s.size < WINDOW:
        raise ValueError(f"waveform shorter than one window ({WINDOW} samples)")
    frames = frame_count(s.size)
    left = (WINDOW - HOP) // 2  # 75: centers frame f on its hop chunk
    right = frames * HOP - s.size + left
    padded = np.pad(s, (left, right), mode="reflect")
    idx = np.arange(WINDOW)[None, :] + HOP * np.arange(frames)[:, None]
    segs = padded[idx] * _hann_periodic(WINDOW)[None, :]
    spec = np.fft.rfft(segs, n=NFFT, axis=1)
    return (spec.real ** 2 + spec.imag ** 2)


_BANK = mel_filterbank()


def log_mel(w: Waveform) -> LogMelSpectrogram:
    power = power_spectrogram(w)
    mel = power @ _BANK.T
    return LogMelSpectrogram(np.log(np.maximum(mel, POWER_FLOOR)))


def _dct2_ortho_matrix(n):
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    mat = np.cos(np.pi * (j + 0.5) * k / n) * np.sqrt(2.0 / n)
    mat[0] /= np.sqrt(2.0)
    return mat


_DCT = _dct2_ortho_matrix(N_MELS)


def mfcc(w: Waveform) -> MfccSequence:
    lm = log_mel(w)
    return MfccSequence(lm.values @ _DCT[:N_MFCC].T)


def full_dct_frame(frame):
    """All 64 orthonormal DCT-II coefficients of one log-mel frame."""
    return _DCT @ np.asarray(frame, dtype=np.float64)


def inverse_full_dct_frame(coeffs):
    return _DCT.T @ np.asarray(coeffs, dtype=np.float64)


def pooled_embedding(w: Waveform) -> AudioEmbedding:
    lm = log_mel(w)
    v = (lm.values - LOG_FLOOR).mean(axis=0)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return AudioEmbedding(np.zeros(N_MELS), silent=True)
    return AudioEmbedding(v / norm, silent=False)


def cosine_distance(a: AudioEmbedding, b: AudioEmbedding) -> float:
    if a.silent or b.silent:
        return 1.0
    return float(1.0 - a.vector @ b.vector)
