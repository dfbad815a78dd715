"""Training loops, validation selection, and evaluation.

Training draws freshly seeded clip batches each iteration, tracks a
normalized-space L1 on a fixed validation sample, and keeps the
parameter snapshot with the lowest validation L1 (earliest iteration
on ties). Two modes: plain L1 regression, and the adversarial mode
where a motion discriminator is stepped before the generator each
iteration and the generator objective is adv + lambda * L1.

All randomness flows from one config seed through generate_state, so
a run is exactly reproducible.
"""

import time
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .corpus import sample_clip_pairs, SpeakerCorpus
from .models import (
    DiscriminatorModel,
    GeneratorConfig,
    GeneratorModel,
    gan_losses,
    generator_objective,
)
from .pose import (
    POSE_DIM,
    center_on_neck,
    denormalize,
    fit_norm_stats,
    l1_metric,
    normalize,
    pck,
)

TRAIN_MODES = ("l1_only", "gan")


class TrainingDivergedError(Exception):
    pass


@dataclass
class TrainConfig:
    iterations: int = 3000
    batch_size: int = 32
    lr: float = 1e-4
    lambda_l1: float = 1.0
    seed: int = 0
    eval_every: int = 250
    mode: str = "l1_only"
    val_clips: int = 128
    disc_channels: int = 32
    minibatch_replace: bool = True

    def __post_init__(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}")
        if self.iterations < 0 or self.batch_size < 2:
            raise ValueError("need iterations >= 0 and batch_size >= 2")


@dataclass
class TrainResult:
    model: GeneratorModel
    disc: DiscriminatorModel
    history: list
    best_iteration: int
    best_val_l1: float
    seconds: float


def set_corpus_norm_stats(corpus: SpeakerCorpus, stats):
    corpus.norm_stats = stats
    corpus._norm_cache.clear()


def fit_corpus_stats(corpus, split_ids):
    seqs = [
        center_on_neck(iv.poses)
        for iv in sorted(corpus.intervals, key=lambda i: i.interval_id)
        if iv.interval_id in split_ids
    ]
    if not seqs:
        raise ValueError("no intervals in split to fit stats on")
    return fit_norm_stats(seqs)


def _batch_arrays(pairs):
    spec = np.stack([p.spectrogram_clip for p in pairs])
    poses = np.stack([p.pose_clip for p in pairs])
    init = np.stack([p.initial_pose for p in pairs])
    return spec, poses, init


def _predict_batched(model, pairs, batch=32):
    model.eval()
    outs = []
    for i in range(0, len(pairs), batch):
        chunk = pairs[i : i + batch]
        spec, _, init = _batch_arrays(chunk)
        kwargs = {}
        if model.config.conditioning == "initial_pose":
            kwargs["initial_pose"] = init
        outs.append(model(spec, **kwargs).data)
    return np.concatenate(outs, axis=0)


class ModelPredictor:
    """Adapts a GeneratorModel to the predict_batch protocol: list of
    ClipPairs -> (B, 64, 98) normalized pose stacks."""

    def __init__(self, model):
        self.model = model

    def predict_batch(self, pairs):
        return _predict_batched(self.model, pairs)


def train(corpus: SpeakerCorpus, split, gen_config: GeneratorConfig,
          cfg: TrainConfig, log=None) -> TrainResult:
    t_start = time.time()
    stats = fit_corpus_stats(corpus, split.train)
    set_corpus_norm_stats(corpus, stats)

    seeds = np.random.SeedSequence(cfg.seed).generate_state(4, np.uint64)
    g_seed, d_seed, batch_seed, val_seed = (int(s) for s in seeds)

    model = GeneratorModel(gen_config, seed=g_seed)
    model.set_norm_stats(stats)
    disc = DiscriminatorModel(channels=cfg.disc_channels, seed=d_seed)

    opt_g = nn.Adam(model.parameters(), lr=cfg.lr,
                    betas=(0.5, 0.999) if cfg.mode == "gan" else (0.9, 0.999))
    opt_d = nn.Adam(disc.parameters(), lr=cfg.lr, betas=(0.5, 0.999))

    val_pairs = sample_clip_pairs(corpus, split.val, cfg.val_clips,
                                  seed=val_seed, replace=True, with_audio=False)
    val_gt = np.stack([p.pose_clip for p in val_pairs])

    def validate():
        pred = _predict_batched(model, val_pairs)
        return float(np.abs(pred - val_gt).mean())

    batch_rng = np.random.default_rng(batch_seed)
    history = []
    best_val = np.inf
    best_iter = -1
    best_state = None

    def record(iteration, train_l1, loss_d, loss_adv, val_l1):
        history.append({
            "iteration": iteration,
            "train_l1": train_l1,
            "loss_d": loss_d,
            "loss_adv": loss_adv,
            "val_l1": val_l1,
        })
        if log is not None:
            parts = [f"iter {iteration}"]
            if np.isfinite(train_l1):
                parts.append(f"train_l1 {train_l1:.4f}")
            if np.isfinite(loss_d):
                parts.append(f"loss_d {loss_d:.4f} loss_adv {loss_adv:.4f}")
            if np.isfinite(val_l1):
                parts.append(f"val_l1 {val_l1:.4f}")
            log(" ".join(parts))

    def snapshot_if_best(iteration, val_l1):
        nonlocal best_val, best_iter, best_state
        if val_l1 < best_val:
            best_val = val_l1
            best_iter = iteration
            best_state = [(k, v.copy()) for k, v in model.state_items()]

    v0 = validate()
    record(0, np.nan, np.nan, np.nan, v0)
    snapshot_if_best(0, v0)

    for it in range(1, cfg.iterations + 1):
        bseed = int(batch_rng.integers(2 ** 63))
        pairs = sample_clip_pairs(corpus, split.train, cfg.batch_size, seed=bseed,
                                  replace=cfg.minibatch_replace, with_audio=False)
        spec, poses, init = _batch_arrays(pairs)
        model.train()
        kwargs = {}
        if gen_config.conditioning == "initial_pose":
            kwargs["initial_pose"] = init
        fake = model(spec, **kwargs)
        real = nn.Tensor(poses)
        train_l1 = float(np.abs(fake.data - poses).mean())
        loss_d_v = np.nan
        loss_adv_v = np.nan
        if cfg.mode == "gan":
            disc.train()
            loss_d, loss_adv = gan_losses(fake, real, disc,
                                          minimax_g=gen_config.minimax_g)
            opt_d.zero_grad()
            nn.backward(loss_d)
            opt_d.step()
            loss_g = generator_objective(fake, real, loss_adv, cfg.lambda_l1)
            opt_g.zero_grad()
            nn.backward(loss_g)
            opt_g.step()
            loss_d_v = loss_d.item()
            loss_adv_v = loss_adv.item()
            check = loss_g.item()
        else:
            loss = nn.l1_loss(fake, real)
            opt_g.zero_grad()
            nn.backward(loss)
            opt_g.step()
            check = loss.item()
        if not np.isfinite(check):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}")

        val_l1 = np.nan
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            val_l1 = validate()
            snapshot_if_best(it, val_l1)
        record(it, train_l1, loss_d_v, loss_adv_v, val_l1)

    if best_state is not None:
        model.load_state(dict(best_state))
    model.eval()
    return TrainResult(model=model, disc=disc, history=history,
                       best_iteration=best_iter, best_val_l1=float(best_val),
                       seconds=time.time() - t_start)


@dataclass
class EvalReport:
    speaker_id: str
    n_clips: int
    l1: float
    pck_01: float
    pck_02: float
    pck_avg: float

    def to_dict(self):
        return asdict(self)


def evaluate(predictor, corpus: SpeakerCorpus, split_ids, n_clips=200,
             seed=0, alphas=(0.1, 0.2)) -> EvalReport:
    """Normalized L1 plus pixel-space PCK over sampled clips. Clips are
    drawn without replacement (capped by the number of distinct
    positions); the PCK box comes from each clip's ground truth."""
    pairs = sample_clip_pairs(corpus, split_ids, n_clips, seed=seed,
                              replace=False, with_audio=True)
    preds = predictor.predict_batch(pairs)
    stats = corpus.norm_stats
    l1_vals, pck_by_alpha = [], {a: [] for a in alphas}
    for pair, pred in zip(pairs, preds):
        l1_vals.append(l1_metric(pred, pair.pose_clip))
        gt_px = denormalize(pair.pose_clip, stats)
        pr_px = denormalize(pred, stats)
        for a in alphas:
            pck_by_alpha[a].append(pck(pr_px, gt_px, a))
    p01 = float(np.mean(pck_by_alpha[alphas[0]]))
    p02 = float(np.mean(pck_by_alpha[alphas[1]]))
    return EvalReport(
        speaker_id=corpus.speaker_id,
        n_clips=len(pairs),
        l1=float(np.mean(l1_vals)),
        pck_01=p01,
        pck_02=p02,
        pck_avg=float((p01 + p02) / 2.0),
    )


def cross_speaker_matrix(models, corpora, splits, n_clips=100, seed=0):
    """L1 matrix: rows index the evaluation speaker, columns the model's
    training speaker. Predictions are mapped out of the model's
    normalization and into the evaluation speaker's before scoring.
    Returns (speaker_ids, matrix)."""
    ids = sorted(corpora.keys())
    if sorted(models.keys()) != ids or sorted(splits.keys()) != ids:
        raise ValueError("models, corpora, and splits must cover the same speakers")
    mat = np.zeros((len(ids), len(ids)))
    for i, sid_eval in enumerate(ids):
        corpus = corpora[sid_eval]
        pairs = sample_clip_pairs(corpus, splits[sid_eval].test, n_clips,
                                  seed=seed, replace=False, with_audio=False)
        gt = np.stack([p.pose_clip for p in pairs])
        stats_eval = corpus.norm_stats
        for j, sid_model in enumerate(ids):
            model = models[sid_model]
            stats_model = model.norm_stats()
            if model.config.conditioning == "initial_pose":
                # move the conditioning frame into the model's pose space;
                # the all-zero start-of-interval sentinel stays zero
                adapted = []
                for p in pairs:
                    q = p
                    if np.any(p.initial_pose):
                        px = denormalize(p.initial_pose[None, :], stats_eval).flat()
                        init = normalize(px, stats_model)[0]
                        q = type(p)(
                            spectrogram_clip=p.spectrogram_clip,
                            pose_clip=p.pose_clip,
                            initial_pose=init,
                            speaker_id=p.speaker_id,
                            interval_id=p.interval_id,
                            start_frame=p.start_frame,
                        )
                    adapted.append(q)
                pred = _predict_batched(model, adapted)
            else:
                pred = _predict_batched(model, pairs)
            b, t, d = pred.shape
            px = denormalize(pred.reshape(-1, d), stats_model).flat()
            renorm = normalize(px, stats_eval).reshape(b, t, d)
            mat[i, j] = float(np.abs(renorm - gt).mean())
    return ids, mat


def write_history_csv(path, history):
    cols = ["iteration", "train_l1", "loss_d", "loss_adv", "val_l1"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in history:
            f.write(",".join("%.17g" % float(row[c]) if c != "iteration"
                             else str(row[c]) for c in cols) + "\n")
