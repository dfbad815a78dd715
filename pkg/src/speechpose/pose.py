"""Pose stacks, normalization, metrics, and skeleton rendering.

A pose is 49 2D keypoints in pixels: index 0 neck, 1-2 shoulders (L,R),
3-4 elbows, 5-6 wrists, 7-27 the 21 left-hand points, 28-48 the 21
right-hand points. Flattened vectors interleave coordinates as
x0,y0,...,x48,y48 (98 values). Sequences run at 15 fps.
"""

import os
from dataclasses import dataclass

import numpy as np

N_KEYPOINTS = 49
POSE_DIM = 2 * N_KEYPOINTS
FPS = 15
STD_FLOOR = 1e-4


@dataclass
class PoseSequence:
    frames: np.ndarray  # T x 49 x 2, pixels
    fps: int = FPS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[1:] != (N_KEYPOINTS, 2):
            raise ValueError(f"pose stack must be T x {N_KEYPOINTS} x 2, got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("pose stack needs at least one frame")
        if not np.isfinite(self.frames).all():
            raise ValueError("pose stack contains non-finite coordinates")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    def flat(self):
        """T x 98 view-order copy, x/y interleaved."""
        return self.frames.reshape(self.n_frames, POSE_DIM)


def from_flat(x):
    x = np.asarray(x, dtype=np.float64)
    return PoseSequence(x.reshape(x.shape[0], N_KEYPOINTS, 2))


@dataclass
class NormStats:
    mean: np.ndarray  # 98
    std: np.ndarray   # 98, floored

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(POSE_DIM)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(POSE_DIM)
        if (self.std < STD_FLOOR).any():
            raise ValueError(f"std entries must be >= {STD_FLOOR}")


@dataclass
class PckParams:
    alphas: tuple = (0.1, 0.2)
    box: tuple = None  # (h, w) override; default from ground truth


def center_on_neck(p: PoseSequence) -> PoseSequence:
    """Subtract each frame's neck point from all 49 points."""
    return PoseSequence(p.frames - p.frames[:, 0:1, :])


def fit_norm_stats(sequences) -> NormStats:
    seqs = [s.flat() if isinstance(s, PoseSequence) else np.asarray(s, dtype=np.float64)
            for s in sequences]
    if not seqs or sum(s.shape[0] for s in seqs) < 1:
        raise ValueError("no frames to fit normalization stats")
    allf = np.concatenate(seqs, axis=0)
    mean = allf.mean(axis=0)
    std = allf.std(axis=0)  # population convention
    return NormStats(mean, np.maximum(std, STD_FLOOR))


def normalize(p, stats: NormStats):
    x = p.flat() if isinstance(p, PoseSequence) else np.asarray(p, dtype=np.float64)
    if x.shape[1] != POSE_DIM:
        raise ValueError(f"expected {POSE_DIM} columns, got {x.shape[1]}")
    return (x - stats.mean) / stats.std


def denormalize(x, stats: NormStats) -> PoseSequence:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != POSE_DIM:
        raise ValueError(f"expected {POSE_DIM} columns, got {x.shape[1]}")
    return from_flat(x * stats.std + stats.mean)


def motion_derivative(x):
    """Frame-to-frame differences of a T x 98 stack; T-1 rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise ValueError("motion derivative needs at least 2 frames")
    return x[1:] - x[:-1]


def l1_metric(pred, gt) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return float(np.abs(pred - gt).mean())


def _gt_box(gt: PoseSequence):
    xs = gt.frames[:, :, 0]
    ys = gt.frames[:, :, 1]
    h = float(ys.max() - ys.min())
    w = float(xs.max() - xs.min())
    if h <= 0.0 or w <= 0.0:
        raise ValueError("degenerate ground-truth box (zero height or width)")
    return h, w


def pck(pred: PoseSequence, gt: PoseSequence, alpha: float, box=None) -> float:
    """Fraction of keypoints within alpha * max(h, w) pixels of ground
    truth, counting boundary hits as correct. h, w come from the
    ground-truth keypoint bounding box over the whole sequence."""
    if pred.frames.shape != gt.frames.shape:
        raise ValueError("pred/gt shape mismatch")
    h, w = box if box is not None else _gt_box(gt)
    thresh = alpha * max(h, w)
    err = np.sqrt(((pred.frames - gt.frames) ** 2).sum(axis=2))
    return float((err <= thresh).mean())


def pck_avg(pred: PoseSequence, gt: PoseSequence, alphas=(0.1, 0.2), box=None) -> float:
    return float(np.mean([pck(pred, gt, a, box=box) for a in alphas]))


def median_pose(sequences) -> np.ndarray:
    seqs = [s.flat() if isinstance(s, PoseSequence) else np.asarray(s, dtype=np.float64)
            for s in sequences]
    if not seqs:
        raise ValueError("median pose of an empty collection")
    return np.median(np.concatenate(seqs, axis=0), axis=0)


def skeleton_edges():
    """The 48 edges of the 49-point tree."""
    edges = [(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 6)]
    for wrist, root in ((5, 7), (6, 28)):
        edges.append((wrist, root))
        for finger in range(5):
            base = root + 1 + 4 * finger
            edges.append((root, base))
            edges.extend((base + j, base + j + 1) for j in range(3))
    return edges


_EDGE_COLOR = {"body": "#2b6cb0", "left": "#c05621", "right": "#2f855a"}


def _edge_group(i, j):
    if max(i, j) <= 6:
        return "body"
    return "left" if max(i, j) <= 27 else "right"


def render_svg(p: PoseSequence, out_dir, prefix="frame"):
    """One SVG per frame, 48 line elements each, deterministic bytes.

    The viewBox covers the whole sequence with a margin, so
    neck-centered (even negative) coordinates land inside it.
    """
    os.makedirs(out_dir, exist_ok=True)
    margin = 10.0
    x0 = p.frames[:, :, 0].min() - margin
    y0 = p.frames[:, :, 1].min() - margin
    ww = p.frames[:, :, 0].max() + margin - x0
    hh = p.frames[:, :, 1].max() + margin - y0
    edges = skeleton_edges()
    paths = []
    for t in range(p.n_frames):
        lines = []
        for i, j in edges:
            xa, ya = p.frames[t, i]
            xb, yb = p.frames[t, j]
            lines.append(
                f'<line x1="{xa:.2f}" y1="{ya:.2f}" x2="{xb:.2f}" y2="{yb:.2f}" '
                f'stroke="{_EDGE_COLOR[_edge_group(i, j)]}" stroke-width="1.5" '
                f'stroke-linecap="round"/>'
            )
        body = "\n  ".join(lines)
        svg = (
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="{x0:.2f} {y0:.2f} {ww:.2f} {hh:.2f}">\n  {body}\n</svg>\n'
        )
        path = os.path.join(out_dir, f"{prefix}_{t:05d}.svg")
        with open(path, "w") as f:
            f.write(svg)
        paths.append(path)
    return paths
