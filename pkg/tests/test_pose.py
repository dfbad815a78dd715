"""Pose container, normalization, metric, and rendering tests."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from speechpose import pose as P


def _random_seq(rng, t=6):
    return P.PoseSequence(np.array([320, 200]) + rng.normal(0, 30, (t, 49, 2)))


def test_pose_sequence_validation():
    with pytest.raises(ValueError):
        P.PoseSequence(np.zeros((3, 48, 2)))
    with pytest.raises(ValueError):
        P.PoseSequence(np.zeros((0, 49, 2)))
    bad = np.zeros((2, 49, 2))
    bad[1, 3, 0] = np.inf
    with pytest.raises(ValueError):
        P.PoseSequence(bad)


def test_flat_round_trip():
    rng = np.random.default_rng(0)
    seq = _random_seq(rng)
    flat = seq.flat()
    assert flat.shape == (6, 98)
    # interleaving: columns 2k, 2k+1 are keypoint k's x, y
    assert np.array_equal(flat[:, 6], seq.frames[:, 3, 0])
    assert np.array_equal(flat[:, 7], seq.frames[:, 3, 1])
    assert np.array_equal(P.from_flat(flat).frames, seq.frames)


def test_center_on_neck():
    rng = np.random.default_rng(1)
    seq = _random_seq(rng)
    c = P.center_on_neck(seq)
    assert np.array_equal(c.frames[:, 0], np.zeros((6, 2)))
    # translating the whole body changes nothing after centering
    shifted = P.PoseSequence(seq.frames + np.array([55.0, -21.0]))
    assert np.allclose(P.center_on_neck(shifted).frames, c.frames, atol=1e-9)


def test_norm_stats_oracle_and_floor():
    rng = np.random.default_rng(2)
    a, b = _random_seq(rng, 5), _random_seq(rng, 7)
    stats = P.fit_norm_stats([a, b])
    allf = np.concatenate([a.flat(), b.flat()], axis=0)
    assert np.allclose(stats.mean, allf.mean(axis=0), atol=1e-12)
    assert np.allclose(stats.std, allf.std(axis=0), atol=1e-12)
    const = P.PoseSequence(np.ones((4, 49, 2)))
    floored = P.fit_norm_stats([const])
    assert np.array_equal(floored.std, np.full(98, P.STD_FLOOR))


def test_normalize_round_trip():
    rng = np.random.default_rng(3)
    seq = _random_seq(rng, 9)
    stats = P.fit_norm_stats([seq])
    x = P.normalize(seq, stats)
    back = P.denormalize(x, stats)
    assert np.abs(back.frames - seq.frames).max() < 1e-9
    assert np.abs(P.normalize(seq, stats).mean(axis=0)).max() < 1e-9


def test_motion_derivative_and_reconstruction():
    rng = np.random.default_rng(4)
    x = _random_seq(rng, 8).flat()
    m = P.motion_derivative(x)
    assert m.shape == (7, 98)
    assert np.array_equal(m, x[1:] - x[:-1])
    recon = x[0].copy()
    for t in range(7):
        recon = recon + m[t]
        assert np.array_equal(recon, x[t + 1])
    with pytest.raises(ValueError):
        P.motion_derivative(x[:1])


def test_l1_metric_oracle():
    rng = np.random.default_rng(5)
    a = rng.normal(0, 1, (6, 98))
    b = rng.normal(0, 1, (6, 98))
    ref = sum(abs(a[t, d] - b[t, d]) for t in range(6) for d in range(98)) / (6 * 98)
    assert np.isclose(P.l1_metric(a, b), ref, rtol=1e-12)
    with pytest.raises(ValueError):
        P.l1_metric(a, b[:5])


def test_pck_brute_force():
    rng = np.random.default_rng(6)
    gt = _random_seq(rng, 5)
    pred = P.PoseSequence(gt.frames + rng.normal(0, 8, (5, 49, 2)))
    for alpha in (0.05, 0.1, 0.2):
        got = P.pck(pred, gt, alpha)
        h = gt.frames[:, :, 1].max() - gt.frames[:, :, 1].min()
        w = gt.frames[:, :, 0].max() - gt.frames[:, :, 0].min()
        thresh = alpha * max(h, w)
        hits = 0
        for t in range(5):
            for k in range(49):
                d = np.sqrt(((pred.frames[t, k] - gt.frames[t, k]) ** 2).sum())
                hits += int(d <= thresh)
        assert got == hits / (5 * 49)


def test_pck_boundary_counts_as_hit():
    gt = P.PoseSequence(np.zeros((1, 49, 2)) + np.arange(49)[None, :, None])
    pred = P.PoseSequence(gt.frames.copy())
    h, w = 48.0, 48.0
    # move one keypoint exactly to the alpha=0.5 threshold distance
    pred.frames[0, 0, 0] += 0.5 * max(h, w)
    assert P.pck(pred, gt, 0.5, box=(h, w)) == 1.0


def test_pck_avg_is_mean_of_alphas():
    rng = np.random.default_rng(7)
    gt = _random_seq(rng, 4)
    pred = P.PoseSequence(gt.frames + rng.normal(0, 10, (4, 49, 2)))
    avg = P.pck_avg(pred, gt, alphas=(0.1, 0.2))
    assert np.isclose(avg, 0.5 * (P.pck(pred, gt, 0.1) + P.pck(pred, gt, 0.2)),
                      atol=1e-15)


def test_median_pose_oracle():
    rng = np.random.default_rng(8)
    seqs = [_random_seq(rng, t) for t in (3, 5, 2)]
    got = P.median_pose(seqs)
    allf = np.concatenate([s.flat() for s in seqs], axis=0)
    ref = np.array([np.median(allf[:, d]) for d in range(98)])
    assert np.array_equal(got, ref)


def test_skeleton_edges_form_a_tree():
    edges = P.skeleton_edges()
    assert len(edges) == 48
    assert len(set(edges)) == 48
    seen = {0}
    for i, j in edges:
        assert 0 <= i < 49 and 0 <= j < 49
        # tree order: each edge attaches one new node to a seen one
        assert (i in seen) != (j in seen)
        seen.update((i, j))
    assert seen == set(range(49))


def test_render_svg_structure(tmp_path):
    rng = np.random.default_rng(9)
    seq = _random_seq(rng, 3)
    paths = P.render_svg(seq, tmp_path, prefix="pose")
    assert len(paths) == 3
    root = ET.parse(paths[1]).getroot()
    lines = [e for e in root if e.tag.endswith("line")]
    assert len(lines) == 48
    vb = [float(v) for v in root.get("viewBox").split()]
    xs = seq.frames[:, :, 0]
    assert vb[0] <= xs.min() and vb[0] + vb[2] >= xs.max()


def test_render_svg_deterministic(tmp_path):
    rng = np.random.default_rng(10)
    seq = _random_seq(rng, 2)
    a = P.render_svg(seq, tmp_path / "a")
    b = P.render_svg(seq, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert open(pa, "rb").read() == open(pb, "rb").read()


def test_render_svg_handles_centered_coordinates(tmp_path):
    rng = np.random.default_rng(11)
    seq = P.center_on_neck(_random_seq(rng, 2))
    paths = P.render_svg(seq, tmp_path)
    vb = [float(v) for v in ET.parse(paths[0]).getroot().get("viewBox").split()]
    assert vb[0] < 0  # negative coordinates stay inside the viewBox
