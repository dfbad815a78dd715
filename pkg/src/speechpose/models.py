"""Generator and discriminator models.

The generator maps a log-mel spectrogram clip (N x 4T x 64) to a
normalized pose stack (N x T x 98). A 2D conv encoder collapses the
64 mel bins to 1 and downsamples time 4x so encoder output aligns one
feature column per pose frame; a 1D U-Net with skip connections then
translates features to poses. Optional conditioning adds a projection
of the pose frame preceding the clip at the U-Net bottleneck.

The discriminator scores first-order motion (frame-to-frame pose
differences), not absolute poses, so adversarial pressure lands on
movement quality rather than position.
"""

import json
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .audio import N_MELS
from .pose import NormStats, POSE_DIM

CONDITIONING_MODES = ("none", "initial_pose")
HEAD_INIT_SCALE = 5e-2


@dataclass
class GeneratorConfig:
    base_channels: int = 32
    unet_depth: int = 5
    output_dim: int = POSE_DIM
    lambda_l1: float = 1.0
    conditioning: str = "none"
    ablate_audio: bool = False
    minimax_g: bool = False

    def __post_init__(self):
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")
        if self.unet_depth < 1:
            raise ValueError("unet_depth must be >= 1")
        if self.base_channels < 1 or self.output_dim < 1:
            raise ValueError("sizes must be positive")
        if self.ablate_audio and self.conditioning == "none":
            raise ValueError("ablating audio with no conditioning leaves no input signal")


class AudioEncoder(nn.Module):
    """(N, F, 64) log-mel -> (N, C, F/4) features; F must be a multiple of 4."""

    def __init__(self, out_channels, rng):
        super().__init__()
        c = max(4, out_channels // 4)
        # six stride-2 steps collapse the 64 mel bins to 1; the first two
        # also halve time so F maps to F/4 (early, to shrink later maps)
        self.stack = nn.Sequential([
            nn.Conv2d(1, c, 3, stride=(2, 2), pad=(1, 1), rng=rng),
            nn.BatchNorm(c), nn.ReLU(),
            nn.Conv2d(c, c, 3, stride=(2, 2), pad=(1, 1), rng=rng),
            nn.BatchNorm(c), nn.ReLU(),
            nn.Conv2d(c, c, 3, stride=(2, 1), pad=(1, 1), rng=rng),
            nn.BatchNorm(c), nn.ReLU(),
            nn.Conv2d(c, c, 3, stride=(2, 1), pad=(1, 1), rng=rng),
            nn.BatchNorm(c), nn.ReLU(),
            nn.Conv2d(c, c, 3, stride=(2, 1), pad=(1, 1), rng=rng),
            nn.BatchNorm(c), nn.ReLU(),
            nn.Conv2d(c, c, (2, 3), stride=(2, 1), pad=(0, 1), rng=rng),
            nn.BatchNorm(c), nn.ReLU(),
        ])
        self.widen = nn.Sequential([
            nn.Conv1d(c, out_channels, 3, stride=1, pad=1, rng=rng),
            nn.BatchNorm(out_channels), nn.ReLU(),
        ])
        self._c = c

    def forward(self, spec):
        n, f, mels = spec.shape
        if mels != N_MELS:
            raise ValueError(f"expected {N_MELS} mel bins, got {mels}")
        if f % 4 != 0:
            raise ValueError("spectrogram frame count must be a multiple of 4")
        x = nn.transpose(spec, (0, 2, 1))            # (N, 64, F)
        x = nn.reshape(x, (n, 1, N_MELS, f))
        x = self.stack(x)                            # (N, c, 1, F/4)
        x = nn.reshape(x, (n, self._c, f // 4))
        return self.widen(x)


class GeneratorModel(nn.Module):
    def __init__(self, config: GeneratorConfig, seed=0):
        super().__init__()
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        ch = config.base_channels
        if not config.ablate_audio:
            self.encoder = AudioEncoder(ch, rng)
        self.downs = nn.ModuleList()
        for _ in range(config.unet_depth):
            self.downs.append(nn.Sequential([
                nn.Conv1d(ch, ch, 4, stride=2, pad=1, rng=rng),
                nn.BatchNorm(ch), nn.ReLU(),
            ]))
        if config.conditioning == "initial_pose":
            self.init_proj = nn.Linear(config.output_dim, ch, rng=rng)
        self.ups = nn.ModuleList()
        self.merges = nn.ModuleList()
        for _ in range(config.unet_depth):
            self.ups.append(nn.Sequential([
                nn.ConvTranspose1d(ch, ch, 4, stride=2, pad=1, rng=rng),
                nn.BatchNorm(ch), nn.ReLU(),
            ]))
            self.merges.append(nn.Sequential([
                nn.Conv1d(2 * ch, ch, 3, stride=1, pad=1, rng=rng),
                nn.BatchNorm(ch), nn.ReLU(),
            ]))
        self.head = nn.Conv1d(ch, config.output_dim, 1, rng=rng)
        # start near the normalized mean pose: a close-to-zero head makes
        # the untrained model under-animate instead of emitting frame-to-
        # frame noise, the regime the adversary is meant to push against
        self.head.weight.data *= HEAD_INIT_SCALE
        self.register_buffer("norm_mean", np.zeros(config.output_dim))
        self.register_buffer("norm_std", np.ones(config.output_dim))
        self.register_buffer("has_norm", np.zeros(1))

    def set_norm_stats(self, stats: NormStats):
        self.register_buffer("norm_mean", stats.mean.copy())
        self.register_buffer("norm_std", stats.std.copy())
        self.register_buffer("has_norm", np.ones(1))

    def norm_stats(self):
        if self.buffer("has_norm")[0] == 0:
            raise ValueError("model has no normalization stats")
        return NormStats(self.buffer("norm_mean").copy(), self.buffer("norm_std").copy())

    def _as_tensor(self, x):
        return x if isinstance(x, nn.Tensor) else nn.Tensor(np.asarray(x, dtype=np.float64))

    def forward(self, spec, initial_pose=None, zero_bottleneck=False):
        spec = self._as_tensor(spec)
        if self.config.ablate_audio:
            n, f, _ = spec.shape
            x = nn.Tensor(np.zeros((n, self.config.base_channels, f // 4)))
        else:
            x = self.encoder(spec)
        skips = [x]
        for down in self.downs:
            skips.append(down(skips[-1]))
        bottom = skips.pop()
        if zero_bottleneck:
            bottom = nn.mul(bottom, nn.Tensor(np.zeros(1)))
        if self.config.conditioning == "initial_pose":
            if initial_pose is None:
                raise ValueError("conditioning=initial_pose requires initial_pose")
            init = self._as_tensor(initial_pose)
            proj = self.init_proj(init)                       # (N, C)
            n, ch = proj.shape
            bottom = nn.add(bottom, nn.reshape(proj, (n, ch, 1)))
        x = bottom
        for up, merge in zip(self.ups, self.merges):
            skip = skips.pop()
            x = up(x)
            x = _match_length(x, skip.shape[2])
            x = merge(nn.concat([x, skip], axis=1))
        out = self.head(x)                                    # (N, 98, T)
        return nn.transpose(out, (0, 2, 1))

    def save(self, path):
        os.makedirs(path, exist_ok=True)
        nn.save_arrays(path, self.state_items())
        meta = {"kind": "generator", "seed": self.seed, "config": asdict(self.config)}
        with open(os.path.join(path, "config.json"), "w") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(os.path.join(path, "config.json")) as f:
            meta = json.load(f)
        if meta.get("kind") != "generator":
            raise ValueError(f"{path} is not a generator checkpoint")
        model = cls(GeneratorConfig(**meta["config"]), seed=meta.get("seed", 0))
        model.load_state(nn.load_arrays(path))
        model.eval()
        return model


def _match_length(x, target):
    n, c, length = x.shape
    if length == target:
        return x
    if length > target:
        return x[:, :, :target]
    return nn.pad_end(x, 2, target - length)


class DiscriminatorModel(nn.Module):
    """Scores a motion stack (N, T-1, 98); returns raw logits (N,)."""

    def __init__(self, channels=32, seed=0):
        super().__init__()
        self.channels = channels
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        # no normalization anywhere in the critic: per-batch stats would
        # cancel the overall magnitude of a fake batch, and the motion
        # energy scale is exactly the signal the generator must be
        # pushed on to avoid over-smooth output
        self.stack = nn.Sequential([
            nn.Conv1d(POSE_DIM, channels, 4, stride=2, pad=1, rng=rng),
            nn.LeakyReLU(0.2),
            nn.Conv1d(channels, channels, 4, stride=2, pad=1, rng=rng),
            nn.LeakyReLU(0.2),
            nn.Conv1d(channels, channels, 4, stride=2, pad=1, rng=rng),
            nn.LeakyReLU(0.2),
        ])
        self.score = nn.Linear(channels, 1, rng=rng)

    def forward(self, motion_stack):
        if not isinstance(motion_stack, nn.Tensor):
            motion_stack = nn.Tensor(np.asarray(motion_stack, dtype=np.float64))
        x = nn.transpose(motion_stack, (0, 2, 1))   # (N, 98, T-1)
        x = self.stack(x)
        x = nn.mean_axis(x, 2)                      # (N, C)
        out = self.score(x)                         # (N, 1)
        return nn.reshape(out, (out.shape[0],))

    def save(self, path):
        os.makedirs(path, exist_ok=True)
        nn.save_arrays(path, self.state_items())
        meta = {"kind": "discriminator", "seed": self.seed, "channels": self.channels}
        with open(os.path.join(path, "config.json"), "w") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(os.path.join(path, "config.json")) as f:
            meta = json.load(f)
        if meta.get("kind") != "discriminator":
            raise ValueError(f"{path} is not a discriminator checkpoint")
        model = cls(channels=meta["channels"], seed=meta.get("seed", 0))
        model.load_state(nn.load_arrays(path))
        model.eval()
        return model


def motion(x):
    """First-order temporal difference of (N, T, D): returns (N, T-1, D).
    Differentiable when given a Tensor."""
    if isinstance(x, nn.Tensor):
        return nn.sub(x[:, 1:, :], x[:, :-1, :])
    x = np.asarray(x)
    return x[:, 1:, :] - x[:, :-1, :]


def gan_losses(fake_poses, real_poses, disc, minimax_g=False):
    """Adversarial losses over motion. Returns (loss_d, loss_g_adv).

    loss_d sees the generator output detached; loss_g_adv keeps the
    generator graph attached. Both are evaluated against the same
    (pre-update) discriminator, so one call supports the usual
    D-step-then-G-step loop. The default generator loss is the
    non-saturating form; minimax_g=True uses the literal minimax
    objective (negated discriminator loss on fakes)."""
    real_m = motion(real_poses)
    fake_m = motion(fake_poses)
    n = real_m.shape[0]
    ones = np.ones(n)
    zeros = np.zeros(n)
    loss_d = nn.add(
        nn.bce_with_logits(disc(real_m), ones),
        nn.bce_with_logits(disc(fake_m.detach()), zeros),
    )
    if minimax_g:
        loss_g_adv = nn.mul(nn.bce_with_logits(disc(fake_m), zeros), nn.Tensor(np.float64(-1.0)))
    else:
        loss_g_adv = nn.bce_with_logits(disc(fake_m), ones)
    return loss_d, loss_g_adv


def generator_objective(fake_poses, real_poses, loss_g_adv, lambda_l1):
    """Full generator loss: adversarial term plus lambda * L1."""
    recon = nn.l1_loss(fake_poses, real_poses if isinstance(real_poses, nn.Tensor)
                       else nn.Tensor(np.asarray(real_poses, dtype=np.float64)))
    return nn.add(loss_g_adv, nn.mul(recon, nn.Tensor(np.float64(lambda_l1))))
