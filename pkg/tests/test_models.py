"""Generator/discriminator architecture and adversarial loss tests."""

import numpy as np
import pytest

from speechpose import nn
from speechpose import models as M
from speechpose.pose import NormStats
from util import fd_check


def _spec(rng, n=2, f=128):
    return rng.normal(-8.0, 3.0, (n, f, 64))


def _tiny(conditioning="none", ablate=False, seed=0):
    cfg = M.GeneratorConfig(base_channels=8, conditioning=conditioning,
                            ablate_audio=ablate)
    m = M.GeneratorModel(cfg, seed=seed)
    m.eval()
    return m


def test_config_validation():
    with pytest.raises(ValueError):
        M.GeneratorConfig(conditioning="telepathy")
    with pytest.raises(ValueError):
        M.GeneratorConfig(unet_depth=0)
    with pytest.raises(ValueError):
        M.GeneratorConfig(base_channels=0)
    with pytest.raises(ValueError):
        M.GeneratorConfig(ablate_audio=True, conditioning="none")


def test_encoder_shapes_and_errors():
    rng = np.random.default_rng(0)
    enc = M.AudioEncoder(8, np.random.default_rng(1))
    enc.eval()
    out = enc(nn.Tensor(_spec(rng, n=2, f=128)))
    assert out.shape == (2, 8, 32)
    with pytest.raises(ValueError):
        enc(nn.Tensor(rng.normal(0, 1, (1, 126, 64))))  # F not multiple of 4
    with pytest.raises(ValueError):
        enc(nn.Tensor(rng.normal(0, 1, (1, 128, 63))))  # wrong mel count


def test_generator_output_shape():
    rng = np.random.default_rng(2)
    m = _tiny()
    for f in (128, 256):
        out = m(_spec(rng, n=2, f=f))
        assert out.shape == (2, f // 4, 98)


def test_generator_seed_determinism():
    rng = np.random.default_rng(3)
    spec = _spec(rng)
    a = _tiny(seed=4)(spec).data
    b = _tiny(seed=4)(spec).data
    c = _tiny(seed=5)(spec).data
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_conditioning_requires_and_uses_initial_pose():
    rng = np.random.default_rng(6)
    m = _tiny(conditioning="initial_pose")
    spec = _spec(rng)
    with pytest.raises(ValueError):
        m(spec)
    p0 = rng.normal(0, 1, (2, 98))
    p1 = rng.normal(0, 1, (2, 98))
    assert not np.array_equal(m(spec, initial_pose=p0).data,
                              m(spec, initial_pose=p1).data)
    # the conditioning path stays live even with the bottleneck zeroed
    assert not np.array_equal(
        m(spec, initial_pose=p0, zero_bottleneck=True).data,
        m(spec, initial_pose=p1, zero_bottleneck=True).data,
    )


def test_ablate_audio_ignores_spectrogram():
    rng = np.random.default_rng(7)
    m = _tiny(conditioning="initial_pose", ablate=True)
    p0 = rng.normal(0, 1, (2, 98))
    a = m(_spec(rng), initial_pose=p0).data
    b = m(_spec(rng), initial_pose=p0).data  # different audio, same pose
    assert np.array_equal(a, b)
    c = m(_spec(rng), initial_pose=rng.normal(0, 1, (2, 98))).data
    assert not np.array_equal(a, c)


def test_generator_save_load_bitwise(tmp_path):
    rng = np.random.default_rng(8)
    m = _tiny(conditioning="initial_pose", seed=9)
    m.set_norm_stats(NormStats(rng.normal(0, 1, 98), rng.uniform(1, 5, 98)))
    spec = _spec(rng)
    p0 = rng.normal(0, 1, (2, 98))
    before = m(spec, initial_pose=p0).data
    m.save(tmp_path / "gen")
    back = M.GeneratorModel.load(tmp_path / "gen")
    assert back.config == m.config
    assert np.array_equal(back(spec, initial_pose=p0).data, before)
    assert np.array_equal(back.norm_stats().mean, m.norm_stats().mean)
    assert np.array_equal(back.norm_stats().std, m.norm_stats().std)


def test_norm_stats_guard():
    m = _tiny()
    with pytest.raises(ValueError):
        m.norm_stats()


def test_checkpoint_kind_mismatch(tmp_path):
    _tiny().save(tmp_path / "gen")
    with pytest.raises(ValueError):
        M.DiscriminatorModel.load(tmp_path / "gen")
    d = M.DiscriminatorModel(channels=8)
    d.save(tmp_path / "disc")
    with pytest.raises(ValueError):
        M.GeneratorModel.load(tmp_path / "disc")


def test_discriminator_shape_and_shift_invariance():
    rng = np.random.default_rng(10)
    d = M.DiscriminatorModel(channels=8, seed=11)
    d.eval()
    x = rng.normal(0, 1, (3, 64, 98))
    out = d(M.motion(x))
    assert out.shape == (3,)
    # constant per-sequence offsets vanish in the motion representation
    shifted = x + rng.normal(0, 5, (3, 1, 98))
    assert np.allclose(d(M.motion(shifted)).data, out.data, atol=1e-9)


def test_discriminator_save_load(tmp_path):
    rng = np.random.default_rng(12)
    d = M.DiscriminatorModel(channels=8, seed=13)
    d.eval()
    x = rng.normal(0, 1, (2, 63, 98))
    before = d(x).data
    d.save(tmp_path / "d")
    back = M.DiscriminatorModel.load(tmp_path / "d")
    assert np.array_equal(back(x).data, before)


def test_motion_oracle_and_grad():
    rng = np.random.default_rng(14)
    x = rng.normal(0, 1, (2, 6, 98))
    assert np.array_equal(M.motion(x), np.diff(x, axis=1))
    p = nn.Parameter(x.copy())

    def loss():
        return nn.mean(nn.mul(M.motion(p), M.motion(p)))

    assert fd_check(loss, [p]) < 1e-3


def _bce(z, t):
    return float(np.mean(np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))))


def test_gan_losses_oracle():
    rng = np.random.default_rng(15)
    d = M.DiscriminatorModel(channels=8, seed=16)
    d.eval()
    real = rng.normal(0, 1, (4, 64, 98))
    fake = nn.Tensor(rng.normal(0, 1, (4, 64, 98)))
    loss_d, loss_g = M.gan_losses(fake, real, d)
    zr = d(M.motion(real)).data
    zf = d(M.motion(fake.data)).data
    assert np.isclose(float(loss_d.data), _bce(zr, 1.0) + _bce(zf, 0.0), atol=1e-10)
    assert np.isclose(float(loss_g.data), _bce(zf, 1.0), atol=1e-10)
    _, loss_gm = M.gan_losses(fake, real, d, minimax_g=True)
    assert np.isclose(float(loss_gm.data), -_bce(zf, 0.0), atol=1e-10)


def test_gan_losses_detach_blocks_generator_grad():
    rng = np.random.default_rng(17)
    d = M.DiscriminatorModel(channels=8, seed=18)
    d.eval()
    gparam = nn.Parameter(rng.normal(0, 1, (2, 64, 98)))
    real = rng.normal(0, 1, (2, 64, 98))
    loss_d, loss_g = M.gan_losses(gparam, real, d)
    nn.backward(loss_d)
    assert gparam.grad is None  # D step must not touch the generator
    for p in d.parameters():
        assert p.grad is not None
        p.zero_grad()
    nn.backward(loss_g)
    assert gparam.grad is not None


def test_generator_objective_linearity():
    rng = np.random.default_rng(19)
    fake = nn.Tensor(rng.normal(0, 1, (2, 8, 98)))
    real = rng.normal(0, 1, (2, 8, 98))
    adv = nn.Tensor(np.float64(0.37))
    l1 = float(np.abs(fake.data - real).mean())
    for lam in (0.0, 1.0, 2.0, 100.0):
        got = float(M.generator_objective(fake, real, adv, lam).data)
        assert np.isclose(got, 0.37 + lam * l1, atol=1e-12)
    one = float(M.generator_objective(fake, real, adv, 1.0).data)
    two = float(M.generator_objective(fake, real, adv, 2.0).data)
    assert np.isclose(two - 0.37, 2.0 * (one - 0.37), atol=1e-12)


def test_end_to_end_generator_grad():
    rng = np.random.default_rng(20)
    cfg = M.GeneratorConfig(base_channels=4, conditioning="initial_pose")
    m = M.GeneratorModel(cfg, seed=21)
    m.train()
    spec = _spec(rng, n=2, f=128)
    init = rng.normal(0, 1, (2, 98))
    target = nn.Tensor(rng.normal(0, 1, (2, 32, 98)))

    def loss():
        return nn.l1_loss(m(spec, initial_pose=init), target)

    assert fd_check(loss, list(m.parameters()), n_coords=2) < 1e-3


def test_end_to_end_discriminator_grad():
    rng = np.random.default_rng(22)
    d = M.DiscriminatorModel(channels=6, seed=23)
    d.train()
    x = rng.normal(0, 1, (4, 32, 98))
    labels = np.array([1.0, 0.0, 1.0, 0.0])

    def loss():
        return nn.bce_with_logits(d(M.motion(x)), labels)

    assert fd_check(loss, list(d.parameters()), n_coords=3) < 1e-3
