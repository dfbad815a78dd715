"""Comparison predictors: median pose, random gesture, audio
nearest-neighbor, LSTM-on-MFCC, and repeat-initial-pose.

Every predictor exposes predict_batch(pairs) -> (B, 64, 98) in the
corpus's normalized pose space, so evaluate() treats them and the
trained generator identically.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .audio import Waveform, cosine_distance, mfcc, pooled_embedding
from .corpus import (
    CLIP_FRAMES,
    CLIP_SAMPLES,
    CorpusError,
    SpeakerCorpus,
    eligible_clip_starts,
    frame_to_sample,
    sample_clip_pairs,
)
from .pose import POSE_DIM, center_on_neck, median_pose, normalize


def median_baseline(median_vec, t=CLIP_FRAMES):
    """Tile a 98-dim pose T times."""
    vec = np.asarray(median_vec, dtype=np.float64)
    if vec.shape != (POSE_DIM,):
        raise ValueError(f"expected a {POSE_DIM}-vector")
    return np.tile(vec, (t, 1))


def repeat_initial_pose_baseline(initial_pose, t=CLIP_FRAMES):
    """Tile the clip's preceding pose T times (zero motion by construction)."""
    vec = np.asarray(initial_pose, dtype=np.float64)
    if vec.shape != (POSE_DIM,):
        raise ValueError(f"expected a {POSE_DIM}-vector")
    return np.tile(vec, (t, 1))


def train_split_median(corpus: SpeakerCorpus, split_ids):
    """Median of the neck-centered pixel poses over the split, mapped
    into the corpus's normalized space."""
    seqs = [
        center_on_neck(iv.poses)
        for iv in sorted(corpus.intervals, key=lambda i: i.interval_id)
        if iv.interval_id in split_ids
    ]
    if not seqs:
        raise CorpusError("median over an empty split")
    med_px = median_pose(seqs)
    return normalize(med_px[None, :], corpus.norm_stats)[0]


class MedianBaseline:
    def __init__(self, corpus, split_ids):
        self.vec = train_split_median(corpus, split_ids)

    def predict_batch(self, pairs):
        return np.stack([median_baseline(self.vec, CLIP_FRAMES) for _ in pairs])


class RepeatInitialBaseline:
    def predict_batch(self, pairs):
        return np.stack(
            [repeat_initial_pose_baseline(p.initial_pose, CLIP_FRAMES) for p in pairs]
        )


def random_baseline(corpus, split_ids, seed, exclude_interval=None, t=CLIP_FRAMES):
    """A uniformly drawn training clip, never from exclude_interval.
    Returns (stack, interval_id, start_frame)."""
    if t != CLIP_FRAMES:
        raise ValueError("clip length is fixed at 64 frames")
    table = [
        (iid, n) for iid, n in eligible_clip_starts(corpus, split_ids)
        if iid != exclude_interval
    ]
    if not table:
        raise CorpusError("no eligible clip outside the excluded interval")
    counts = np.array([n for _, n in table])
    cum = np.cumsum(counts)
    rng = np.random.default_rng(seed)
    fi = int(rng.integers(0, cum[-1]))
    which = int(np.searchsorted(cum, fi, side="right"))
    start = int(fi - (cum[which - 1] if which else 0))
    iid = table[which][0]
    return corpus.normalized_flat(iid)[start : start + t].copy(), iid, start


class RandomBaseline:
    """Draws a fresh random training clip per query; the construction
    seed makes the whole evaluation pass deterministic."""

    def __init__(self, corpus, split_ids, seed=0):
        self.corpus = corpus
        self.split_ids = split_ids
        self.rng = np.random.default_rng(seed)

    def predict_batch(self, pairs):
        out = []
        for p in pairs:
            sub_seed = int(self.rng.integers(2 ** 63))
            stack, _, _ = random_baseline(
                self.corpus, self.split_ids, sub_seed, exclude_interval=p.interval_id
            )
            out.append(stack)
        return np.stack(out)


@dataclass
class NnIndex:
    entries: list  # (AudioEmbedding, interval_id, start_frame)

    def __post_init__(self):
        if not self.entries:
            raise CorpusError("nearest-neighbor index is empty")


def build_nn_index(corpus: SpeakerCorpus, split_ids, stride=32) -> NnIndex:
    entries = []
    for iid, n_starts in eligible_clip_starts(corpus, split_ids):
        iv = corpus.interval(iid)
        for start in range(0, n_starts, stride):
            s0 = frame_to_sample(start)
            win = iv.audio.samples[s0 : s0 + CLIP_SAMPLES]
            entries.append((pooled_embedding(Waveform(win)), iid, start))
    return NnIndex(entries)


def nn_baseline(index: NnIndex, query_audio: Waveform, corpus: SpeakerCorpus):
    """Pose clip of the index entry nearest in cosine distance; ties go
    to the lowest (interval_id, start_frame)."""
    q = pooled_embedding(query_audio)
    best = None
    for emb, iid, start in index.entries:
        key = (cosine_distance(q, emb), iid, start)
        if best is None or key < best:
            best = key
    _, iid, start = best
    return corpus.normalized_flat(iid)[start : start + CLIP_FRAMES].copy(), iid, start


class NnBaseline:
    def __init__(self, corpus, split_ids, stride=32):
        self.corpus = corpus
        self.index = build_nn_index(corpus, split_ids, stride=stride)

    def predict_batch(self, pairs):
        out = []
        for p in pairs:
            if p.audio is None:
                raise ValueError("nearest-neighbor baseline needs clip audio")
            stack, _, _ = nn_baseline(self.index, Waveform(p.audio), self.corpus)
            out.append(stack)
        return np.stack(out)


@dataclass
class RnnConfig:
    hidden: int = 256
    extra_hidden: int = 128
    lr: float = 1e-3
    iterations: int = 1000
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if min(self.hidden, self.extra_hidden) < 1:
            raise ValueError("sizes must be positive")
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations >= 0, batch_size >= 1")


def pooled_mfcc(samples):
    """64000-sample clip -> (64, 13): MFCC frames mean-pooled in blocks
    of 4 so the sequence runs on the 15 Hz pose clock."""
    m = mfcc(Waveform(samples)).values
    if m.shape[0] != 4 * CLIP_FRAMES:
        raise ValueError(f"expected {4 * CLIP_FRAMES} MFCC frames, got {m.shape[0]}")
    return m.reshape(CLIP_FRAMES, 4, m.shape[1]).mean(axis=1)


class RnnModel(nn.Module):
    def __init__(self, config: RnnConfig, seed=0):
        super().__init__()
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.lstm = nn.LSTM(13, config.hidden, rng=rng)
        self.fc1 = nn.Linear(config.hidden, config.extra_hidden, rng=rng)
        self.fc2 = nn.Linear(config.extra_hidden, POSE_DIM, rng=rng)

    def forward(self, x):
        if not isinstance(x, nn.Tensor):
            x = nn.Tensor(np.asarray(x, dtype=np.float64))
        n, t, _ = x.shape
        h = self.lstm(x)                                   # (N, T, H)
        flat = nn.reshape(h, (n * t, self.config.hidden))
        z = nn.relu(self.fc1(flat))
        out = self.fc2(z)
        return nn.reshape(out, (n, t, POSE_DIM))


def train_rnn_baseline(corpus: SpeakerCorpus, split, config: RnnConfig) -> RnnModel:
    """L1-trained LSTM on pooled MFCCs. Keeps the final parameters (no
    validation selection); requires corpus.norm_stats to be set."""
    if corpus.norm_stats is None:
        raise CorpusError("fit corpus norm stats before training the RNN baseline")
    seeds = np.random.SeedSequence(config.seed).generate_state(2, np.uint64)
    model = RnnModel(config, seed=int(seeds[0]))
    opt = nn.Adam(model.parameters(), lr=config.lr)
    batch_rng = np.random.default_rng(int(seeds[1]))
    for _ in range(config.iterations):
        bseed = int(batch_rng.integers(2 ** 63))
        pairs = sample_clip_pairs(corpus, split.train, config.batch_size,
                                  seed=bseed, with_audio=True)
        feats = np.stack([pooled_mfcc(p.audio) for p in pairs])
        poses = np.stack([p.pose_clip for p in pairs])
        pred = model(feats)
        loss = nn.l1_loss(pred, nn.Tensor(poses))
        opt.zero_grad()
        nn.backward(loss)
        opt.step()
        if not np.isfinite(loss.item()):
            raise ValueError("rnn baseline training diverged")
    model.eval()
    return model


def rnn_predict(model: RnnModel, samples):
    """Normalized (64, 98) stack for one 64000-sample audio clip."""
    feats = pooled_mfcc(samples)[None, :, :]
    return model(feats).data[0]


class RnnBaseline:
    def __init__(self, model):
        self.model = model

    def predict_batch(self, pairs):
        feats = np.stack([pooled_mfcc(p.audio) for p in pairs])
        return self.model(feats).data
