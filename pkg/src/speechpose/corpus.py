"""Corpus data model, on-disk layout, splitting, and clip sampling.

Directory layout: manifest.json (list of interval records) plus one
98-column keypoint CSV (row per frame, x0,y0,...,x48,y48) and one mono
16 kHz PCM16 WAV per interval. Keypoints are written at full float64
precision so a save/load round trip is bit-exact.

Frame f of a 15 fps interval aligns to audio sample round(f*16000/15).
A training clip pairs 64 pose frames with the 64000 audio samples
(256 spectrogram frames) starting at the clip's start-frame sample;
the clip's last few frames extend slightly past that 4 s window and
lean on the model's temporal context.

The synthetic generator gives a desk-scale corpus with a known
audio-to-pose oracle: a 4-dim slowly varying latent u(t) drives both
the amplitudes of four sinusoidal carriers and, through a per-speaker
random linear map W, the deviation of the 98-dim pose from a fixed
rest pose. Audio uniquely determines the expected pose, so recovering
W by regression is the ground-truth check on the whole pipeline.
"""

import hashlib
import json
import os
import wave
from dataclasses import dataclass, field

import numpy as np

from .audio import SAMPLE_RATE, Waveform, log_mel
from .pose import POSE_DIM, FPS, NormStats, PoseSequence, center_on_neck, normalize

CLIP_FRAMES = 64
CLIP_SAMPLES = 64000
SPEC_FRAMES = 256

# synthetic oracle constants
CARRIER_HZ = (300.0, 700.0, 1500.0, 3000.0)
N_LATENTS = 4
KNOT_FRAMES = 8
LATENT_MAX = 0.24
P_REST = 0.25
MAPPING_SCALE = 75.0
POSE_NOISE_PX = 0.5


class CorpusError(Exception):
    pass


def frame_to_sample(f):
    return int(round(f * SAMPLE_RATE / FPS))


@dataclass
class Interval:
    interval_id: str
    source_id: str
    speaker_id: str
    poses: PoseSequence
    audio: Waveform
    fps: int = FPS

    def __post_init__(self):
        drift = abs(self.audio.duration - self.poses.n_frames / self.fps)
        if drift >= 1.0 / self.fps:
            raise CorpusError(
                f"interval {self.interval_id}: audio/pose duration drift {drift:.4f}s"
            )

    @property
    def n_frames(self):
        return self.poses.n_frames


@dataclass
class SpeakerCorpus:
    speaker_id: str
    intervals: list
    norm_stats: NormStats = None
    _norm_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ids = [iv.interval_id for iv in self.intervals]
        if len(set(ids)) != len(ids):
            raise CorpusError("duplicate interval ids")
        for iv in self.intervals:
            if iv.speaker_id != self.speaker_id:
                raise CorpusError(
                    f"interval {iv.interval_id} has speaker {iv.speaker_id}, "
                    f"corpus is {self.speaker_id}"
                )

    def interval(self, interval_id):
        for iv in self.intervals:
            if iv.interval_id == interval_id:
                return iv
        raise KeyError(interval_id)

    def normalized_flat(self, interval_id):
        """Neck-centered, normalized T x 98 stack for one interval (cached)."""
        if self.norm_stats is None:
            raise CorpusError("corpus has no normalization stats yet")
        got = self._norm_cache.get(interval_id)
        if got is None:
            iv = self.interval(interval_id)
            got = normalize(center_on_neck(iv.poses), self.norm_stats)
            self._norm_cache[interval_id] = got
        return got


@dataclass
class SplitAssignment:
    train: set
    val: set
    test: set
    seed: int


@dataclass
class ClipPair:
    spectrogram_clip: np.ndarray  # 256 x 64
    pose_clip: np.ndarray         # 64 x 98, normalized
    initial_pose: np.ndarray      # 98, normalized frame before the clip (zeros at start 0)
    speaker_id: str
    interval_id: str = ""
    start_frame: int = 0
    audio: np.ndarray = None      # 64000 raw samples

    def __post_init__(self):
        if self.pose_clip.shape != (CLIP_FRAMES, POSE_DIM):
            raise ValueError(f"pose clip must be {CLIP_FRAMES} x {POSE_DIM}")
        if self.spectrogram_clip.shape[0] != 4 * CLIP_FRAMES:
            raise ValueError("spectrogram clip must have 4 frames per pose frame")


@dataclass
class SyntheticSpec:
    n_speakers: int = 2
    intervals_per_speaker: int = 10
    interval_seconds: float = 24.0
    mapping_seed: int = 777

    def __post_init__(self):
        if self.n_speakers < 1 or self.intervals_per_speaker < 1:
            raise ValueError("counts must be >= 1")
        if self.interval_seconds * FPS < 1:
            raise ValueError("intervals must span at least one frame")


def read_wav(path):
    with wave.open(path, "rb") as f:
        n_channels = f.getnchannels()
        width = f.getsampwidth()
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    if n_channels != 1 or width != 2:
        raise CorpusError(f"{path}: expected mono PCM16, got {n_channels}ch width {width}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path, samples, rate=SAMPLE_RATE):
    ints = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(path, "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(rate)
        f.writeframes(ints.tobytes())


def save_corpus(corpus: SpeakerCorpus, root_path):
    os.makedirs(os.path.join(root_path, "keypoints"), exist_ok=True)
    os.makedirs(os.path.join(root_path, "audio"), exist_ok=True)
    entries = []
    for iv in sorted(corpus.intervals, key=lambda i: i.interval_id):
        kp_rel = f"keypoints/{iv.interval_id}.csv"
        au_rel = f"audio/{iv.interval_id}.wav"
        np.savetxt(
            os.path.join(root_path, kp_rel),
            iv.poses.flat(),
            fmt="%.17g",
            delimiter=",",
        )
        write_wav(os.path.join(root_path, au_rel), iv.audio.samples, iv.audio.sample_rate)
        entries.append(
            {
                "interval_id": iv.interval_id,
                "source_id": iv.source_id,
                "speaker_id": iv.speaker_id,
                "fps": iv.fps,
                "frames": iv.n_frames,
                "keypoints_file": kp_rel,
                "audio_file": au_rel,
            }
        )
    with open(os.path.join(root_path, "manifest.json"), "w") as f:
        json.dump(entries, f, indent=2, sort_keys=True)
        f.write("\n")


def load_corpus(root_path) -> SpeakerCorpus:
    manifest_path = os.path.join(root_path, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise CorpusError(f"no manifest.json under {root_path}")
    with open(manifest_path) as f:
        entries = json.load(f)
    intervals = []
    speaker_ids = set()
    for e in entries:
        iid = e["interval_id"]
        kp_path = os.path.join(root_path, e["keypoints_file"])
        au_path = os.path.join(root_path, e["audio_file"])
        if not os.path.isfile(kp_path):
            raise CorpusError(f"interval {iid}: missing keypoint file {kp_path}")
        if not os.path.isfile(au_path):
            raise CorpusError(f"interval {iid}: missing audio file {au_path}")
        flat = np.loadtxt(kp_path, delimiter=",", ndmin=2)
        if flat.shape[1] != POSE_DIM:
            raise CorpusError(
                f"interval {iid}: keypoint file has {flat.shape[1]} columns, expected {POSE_DIM}"
            )
        if flat.shape[0] != e["frames"]:
            raise CorpusError(
                f"interval {iid}: {flat.shape[0]} rows but manifest says {e['frames']} frames"
            )
        samples, rate = read_wav(au_path)
        if rate != SAMPLE_RATE:
            raise CorpusError(f"interval {iid}: sample rate {rate}, expected {SAMPLE_RATE}")
        intervals.append(
            Interval(
                interval_id=iid,
                source_id=e["source_id"],
                speaker_id=e["speaker_id"],
                poses=PoseSequence(flat.reshape(-1, POSE_DIM // 2, 2)),
                audio=Waveform(samples),
                fps=e["fps"],
            )
        )
        speaker_ids.add(e["speaker_id"])
    if len(speaker_ids) > 1:
        raise CorpusError(f"corpus mixes speakers: {sorted(speaker_ids)}")
    speaker = speaker_ids.pop() if speaker_ids else os.path.basename(str(root_path))
    return SpeakerCorpus(speaker_id=speaker, intervals=intervals)


def _source_hash(seed, source_id):
    return hashlib.sha256(f"{seed}:{source_id}".encode()).hexdigest()


def split_by_source(corpus: SpeakerCorpus, ratios=(0.8, 0.1, 0.1), seed=0) -> SplitAssignment:
    """Partition intervals so no source_id crosses splits. Sources are
    ordered by a stable hash of (seed, source_id) and apportioned by
    largest remainder, with every split kept non-empty."""
    if not corpus.intervals:
        raise CorpusError("cannot split an empty corpus")
    sources = sorted({iv.source_id for iv in corpus.intervals})
    if len(sources) < 3:
        raise CorpusError(
            f"need at least 3 distinct source_ids to split, have {len(sources)}"
        )
    n = len(sources)
    raw = [r * n for r in ratios]
    counts = [int(c) for c in raw]
    rem = [(raw[i] - counts[i], -i) for i in range(3)]
    order = sorted(range(3), key=lambda i: rem[i], reverse=True)
    for i in range(n - sum(counts)):
        counts[order[i % 3]] += 1
    # every split gets at least one source group
    for i in range(3):
        while counts[i] == 0:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[i] += 1
    shuffled = sorted(sources, key=lambda s: (_source_hash(seed, s), s))
    buckets = (
        set(shuffled[: counts[0]]),
        set(shuffled[counts[0] : counts[0] + counts[1]]),
        set(shuffled[counts[0] + counts[1] :]),
    )
    ids = [
        {iv.interval_id for iv in corpus.intervals if iv.source_id in b} for b in buckets
    ]
    return SplitAssignment(train=ids[0], val=ids[1], test=ids[2], seed=seed)


def eligible_clip_starts(corpus, split_ids):
    """(interval_id, n_starts) for intervals long enough for a 64-frame
    clip, in sorted id order."""
    out = []
    for iv in sorted(corpus.intervals, key=lambda i: i.interval_id):
        if iv.interval_id in split_ids and iv.n_frames >= CLIP_FRAMES:
            out.append((iv.interval_id, iv.n_frames - CLIP_FRAMES + 1))
    return out


def clip_pair_at(corpus: SpeakerCorpus, interval_id, start, with_audio=True) -> ClipPair:
    iv = corpus.interval(interval_id)
    flat = corpus.normalized_flat(interval_id)
    pose_clip = flat[start : start + CLIP_FRAMES]
    if start >= 1:
        initial = flat[start - 1].copy()
    else:
        initial = np.zeros(POSE_DIM)
    s0 = frame_to_sample(start)
    win = iv.audio.samples[s0 : s0 + CLIP_SAMPLES]
    spec = log_mel(Waveform(win)).values
    return ClipPair(
        spectrogram_clip=spec,
        pose_clip=pose_clip.copy(),
        initial_pose=initial,
        speaker_id=iv.speaker_id,
        interval_id=interval_id,
        start_frame=start,
        audio=win.copy() if with_audio else None,
    )


def sample_clip_pairs(corpus, split_ids, count, seed, replace=True, with_audio=True):
    """Uniform over all eligible (interval, start) positions. With
    replace=False the draw is capped at the number of distinct
    positions; order follows the seeded draw either way."""
    table = eligible_clip_starts(corpus, split_ids)
    if not table:
        raise CorpusError("no interval in the split is long enough for a clip")
    counts = np.array([c for _, c in table])
    cum = np.cumsum(counts)
    total = int(cum[-1])
    rng = np.random.default_rng(seed)
    if replace:
        flat_idx = rng.integers(0, total, size=count)
    else:
        flat_idx = rng.choice(total, size=min(count, total), replace=False)
    pairs = []
    for fi in flat_idx:
        which = int(np.searchsorted(cum, fi, side="right"))
        start = int(fi - (cum[which - 1] if which else 0))
        pairs.append(clip_pair_at(corpus, table[which][0], start, with_audio=with_audio))
    return pairs


def rest_pose():
    """Fixed 49-point rest skeleton in a 640 x 360 pixel frame."""
    pts = np.zeros((49, 2))
    pts[0] = (320.0, 140.0)
    pts[1] = (280.0, 150.0)
    pts[2] = (360.0, 150.0)
    pts[3] = (260.0, 210.0)
    pts[4] = (380.0, 210.0)
    pts[5] = (270.0, 265.0)
    pts[6] = (370.0, 265.0)
    for wrist_idx, root_idx, sign in ((5, 7, -1.0), (6, 28, 1.0)):
        root = pts[wrist_idx] + np.array([2.0 * sign, 10.0])
        pts[root_idx] = root
        for finger in range(5):
            angle = (finger - 2) * 0.35
            direction = np.array([np.sin(angle) * sign, np.cos(angle)])
            base = root_idx + 1 + 4 * finger
            for j in range(4):
                pts[base + j] = root + direction * 4.5 * (j + 1)
    return pts


def mapping_matrix(mapping_seed, speaker_index):
    """The per-speaker latent-to-pose linear map W (98 x 4)."""
    rng = np.random.default_rng(mapping_seed + speaker_index)
    return rng.standard_normal((POSE_DIM, N_LATENTS)) * MAPPING_SCALE


def _latent_knots(rng, n_knots):
    knots = rng.uniform(0.0, LATENT_MAX, size=(N_LATENTS, n_knots))
    gate = rng.random((N_LATENTS, n_knots)) >= P_REST
    knots *= gate
    knots[:, :2] = 0.0  # intervals start at rest
    return knots


def _interp_knots(knots, positions):
    """Cosine interpolation of knot rows at fractional knot positions."""
    seg = np.clip(np.floor(positions).astype(int), 0, knots.shape[1] - 2)
    frac = positions - seg
    w = 0.5 - 0.5 * np.cos(np.pi * frac)
    return knots[:, seg] * (1.0 - w) + knots[:, seg + 1] * w


def generate_synthetic_corpus(spec: SyntheticSpec, seed=0):
    """List of per-speaker corpora with the audio-to-pose oracle wired in."""
    rest_flat = rest_pose().reshape(POSE_DIM)
    root = np.random.SeedSequence(seed)
    speaker_seeds = root.spawn(spec.n_speakers)
    corpora = []
    frames = int(round(spec.interval_seconds * FPS))
    n_samples = frame_to_sample(frames)
    t = np.arange(n_samples)
    knot_pos_audio = t * (FPS / (KNOT_FRAMES * SAMPLE_RATE))
    knot_pos_frames = np.arange(frames) / KNOT_FRAMES
    carriers = np.stack(
        [np.sin(2.0 * np.pi * f * t / SAMPLE_RATE) for f in CARRIER_HZ]
    )
    n_knots = int(np.ceil(frames / KNOT_FRAMES)) + 1
    for s in range(spec.n_speakers):
        speaker_id = f"speaker{s:02d}"
        w_map = mapping_matrix(spec.mapping_seed, s)
        interval_seeds = speaker_seeds[s].spawn(spec.intervals_per_speaker)
        intervals = []
        for i in range(spec.intervals_per_speaker):
            rng = np.random.default_rng(interval_seeds[i])
            knots = _latent_knots(rng, n_knots)
            u_audio = _interp_knots(knots, knot_pos_audio)      # 4 x samples
            u_frames = _interp_knots(knots, knot_pos_frames)    # 4 x frames
            audio = (u_audio * carriers).sum(axis=0)
            audio = np.round(audio * 32768.0) / 32768.0  # PCM16 grid, round-trip exact
            noise = rng.normal(0.0, POSE_NOISE_PX, size=(frames, POSE_DIM))
            flat = rest_flat[None, :] + u_frames.T @ w_map.T + noise
            intervals.append(
                Interval(
                    interval_id=f"{speaker_id}_int{i:03d}",
                    source_id=f"{speaker_id}_src{i:03d}",
                    speaker_id=speaker_id,
                    poses=PoseSequence(flat.reshape(frames, POSE_DIM // 2, 2)),
                    audio=Waveform(audio),
                )
            )
        corpora.append(SpeakerCorpus(speaker_id=speaker_id, intervals=intervals))
    return corpora
