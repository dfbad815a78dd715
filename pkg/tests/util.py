"""Shared test helpers: finite-difference gradient checks and small
hand-built corpora for structural tests."""

import numpy as np

from speechpose import nn
from speechpose.audio import SAMPLE_RATE
from speechpose.corpus import Interval, SpeakerCorpus
from speechpose.pose import FPS, PoseSequence


def fd_check(build_loss, params, n_coords=4, h=1e-5, seed=0):
    """Max relative error between autodiff and central differences.

    build_loss() must rebuild the forward pass from the params' current
    .data (ops capture arrays at call time, so in-place edits to a
    param's buffer are seen by the next call). Checks n_coords sampled
    coordinates per parameter.
    """
    for p in params:
        p.zero_grad()
    loss = build_loss()
    nn.backward(loss)
    grads = [None if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g in zip(params, grads):
        assert g is not None, "parameter received no gradient"
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        take = min(n_coords, flat.size)
        for i in rng.choice(flat.size, size=take, replace=False):
            old = flat[i]
            step = h * max(1.0, abs(old))
            flat[i] = old + step
            up = float(build_loss().data)
            flat[i] = old - step
            dn = float(build_loss().data)
            flat[i] = old
            fd = (up - dn) / (2.0 * step)
            err = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-6)
            worst = max(worst, err)
    return worst


def make_interval(interval_id, source_id, n_frames, speaker="spk", seed=0):
    """Interval with plausible pixel poses and zero audio, for tests
    that only care about corpus structure."""
    rng = np.random.default_rng(seed)
    base = np.array([320.0, 160.0]) + rng.normal(0, 40, (1, 49, 2))
    frames = base + rng.normal(0, 3.0, (n_frames, 49, 2))
    n_samples = int(round(n_frames * SAMPLE_RATE / FPS))
    return Interval(
        interval_id=interval_id,
        source_id=source_id,
        speaker_id=speaker,
        audio=_wave(n_samples),
        poses=PoseSequence(frames),
    )


def _wave(n_samples):
    from speechpose.audio import Waveform
    return Waveform(np.zeros(n_samples))


def make_structural_corpus(n_sources, frames_per_interval=64, speaker="spk", seed=0):
    intervals = [
        make_interval(f"{speaker}_i{k:03d}", f"src{k:03d}", frames_per_interval,
                      speaker=speaker, seed=seed * 1000 + k)
        for k in range(n_sources)
    ]
    return SpeakerCorpus(speaker_id=speaker, intervals=intervals)


def brute_force_dtw(ca, cb):
    """Enumerate every monotone path. The local cost matrix is computed
    with the same vectorized expression as the implementation (so the
    comparison is bitwise); the path search itself is exhaustive, and
    costs accumulate in path order to match the recurrence's float
    association."""
    la, lb = len(ca), len(cb)
    diff = ca[:, None, :] - cb[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    best = [np.inf]

    def walk(i, j, acc):
        if (i, j) == (la - 1, lb - 1):
            best[0] = min(best[0], acc)
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < la and nj < lb:
                walk(ni, nj, acc + cost[ni, nj])

    walk(0, 0, float(cost[0, 0]))
    return best[0]


def mk_units_frames(frames, unit_len):
    """Chop a T x 98 stack into consecutive gesture units."""
    from speechpose.dictionary import GestureUnit
    from speechpose.pose import PoseSequence
    units = []
    for s in range(0, frames.shape[0] - unit_len + 1, unit_len):
        chunk = np.asarray(frames[s:s + unit_len], dtype=np.float64)
        units.append(GestureUnit("iv", s, s + unit_len,
                                 PoseSequence(chunk.reshape(unit_len, 49, 2))))
    return units
