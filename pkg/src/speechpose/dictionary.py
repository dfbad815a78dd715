"""Unsupervised gesture-unit dictionary.

Pipeline: a linear autoregressive pose predictor flags frames that are
hard to predict (motion onsets); threshold crossings segment gesture
units; units are described by per-frame projections onto the top
principal components; DTW over those descriptor tracks gives a
pairwise distance; average-linkage clustering cut at k plus medoid
exemplars form the dictionary.

Everything here runs in neck-centered pixel space, per speaker: the
predictor, the error threshold, and the PCA basis are all fit on one
speaker's training split and are not expected to transfer.
"""

import json
from dataclasses import dataclass

import numpy as np

from .corpus import CorpusError, SpeakerCorpus
from .pose import POSE_DIM, PoseSequence, center_on_neck

PRED_K = 8
RIDGE_LAMBDA = 1e-3
THRESH_SIGMAS = 1.5
QUIET_RUN = 3
MIN_UNIT_FRAMES = 5
N_COMPONENTS = 5
DEFAULT_K_CLUSTERS = 10
MAX_CLUSTER_SAMPLE = 1000


@dataclass
class GestureUnit:
    interval_id: str
    start_frame: int
    end_frame: int  # exclusive
    poses: PoseSequence

    def __post_init__(self):
        if self.end_frame <= self.start_frame:
            raise ValueError("unit end must exceed start")
        if self.n_frames < MIN_UNIT_FRAMES:
            raise ValueError(f"unit shorter than {MIN_UNIT_FRAMES} frames")
        if self.poses.n_frames != self.n_frames:
            raise ValueError("pose slice length mismatch")

    @property
    def n_frames(self):
        return self.end_frame - self.start_frame

    @property
    def unit_id(self):
        return f"{self.interval_id}:{self.start_frame}-{self.end_frame}"


@dataclass
class GestureDescriptor:
    coords: np.ndarray  # (L, n_components)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[0] < 1:
            raise ValueError("descriptor needs at least one frame")


@dataclass
class GestureDictionary:
    clusters: list  # of (member unit ids, medoid unit id)
    pca_basis: np.ndarray
    pca_mean: np.ndarray
    explained_variance: float

    def __post_init__(self):
        seen = set()
        for members, med in self.clusters:
            if med not in members:
                raise ValueError("medoid must be a cluster member")
            for m in members:
                if m in seen:
                    raise ValueError(f"unit {m} appears in two clusters")
                seen.add(m)
        if not 0.0 <= self.explained_variance <= 1.0 + 1e-9:
            raise ValueError("explained variance outside [0, 1]")

    def to_json_dict(self):
        return {
            "clusters": [
                {"members": sorted(members), "medoid": med}
                for members, med in self.clusters
            ],
            "explained_variance": self.explained_variance,
            "pca_mean": self.pca_mean.tolist(),
            "pca_basis": self.pca_basis.tolist(),
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


@dataclass
class PosePredictor:
    coef: np.ndarray  # (K * 98, 98)
    bias: np.ndarray  # (98,)
    k: int = PRED_K

    def predict_next(self, window):
        window = np.asarray(window, dtype=np.float64)
        if window.shape != (self.k, POSE_DIM):
            raise ValueError(f"window must be {self.k} x {POSE_DIM}")
        return window.reshape(-1) @ self.coef + self.bias


def _centered_stack(interval):
    return center_on_neck(interval.poses).flat()


def train_pose_predictor(corpus: SpeakerCorpus, split_ids, k=PRED_K,
                         ridge=RIDGE_LAMBDA) -> PosePredictor:
    """Closed-form ridge regression from the concatenated previous k
    frames to the next one; the bias column is not penalized."""
    rows_x, rows_y = [], []
    for iv in sorted(corpus.intervals, key=lambda i: i.interval_id):
        if iv.interval_id not in split_ids or iv.n_frames < k + 1:
            continue
        stack = _centered_stack(iv)
        for t in range(k, stack.shape[0]):
            rows_x.append(stack[t - k : t].reshape(-1))
            rows_y.append(stack[t])
    if not rows_x:
        raise CorpusError(f"no interval in the split has {k + 1} consecutive frames")
    x = np.array(rows_x)
    y = np.array(rows_y)
    a = np.hstack([x, np.ones((x.shape[0], 1))])
    gram = a.T @ a
    reg = np.eye(a.shape[1]) * ridge
    reg[-1, -1] = 0.0
    sol = np.linalg.solve(gram + reg, a.T @ y)
    return PosePredictor(coef=sol[:-1], bias=sol[-1], k=k)


def prediction_error_curve(predictor: PosePredictor, stack) -> np.ndarray:
    """Per-frame L2 prediction error for a T x 98 neck-centered stack;
    the first k frames (no full history) get error 0."""
    stack = np.asarray(stack, dtype=np.float64)
    k = predictor.k
    t_total = stack.shape[0]
    if t_total < k + 1:
        raise ValueError(f"need at least {k + 1} frames, got {t_total}")
    windows = np.stack([stack[t - k : t].reshape(-1) for t in range(k, t_total)])
    preds = windows @ predictor.coef + predictor.bias
    err = np.zeros(t_total)
    err[k:] = np.sqrt(((preds - stack[k:]) ** 2).sum(axis=1))
    return err


def error_threshold(curves, k=PRED_K) -> float:
    """mean + 1.5 std of the pooled per-frame errors, excluding the
    zero-filled warmup prefix of each curve."""
    vals = np.concatenate([np.asarray(c)[k:] for c in curves])
    if vals.size == 0:
        raise ValueError("no error values to pool")
    return float(vals.mean() + THRESH_SIGMAS * vals.std())


def segment_spans(error_curve, threshold, quiet_run=QUIET_RUN,
                  min_frames=MIN_UNIT_FRAMES):
    """[start, end) spans: each starts at an upward threshold crossing
    and ends after the error has stayed below threshold for quiet_run
    consecutive frames (those quiet frames are part of the unit, as the
    return to rest). A span still open at the end of the curve closes
    there. Spans shorter than min_frames are dropped."""
    err = np.asarray(error_curve, dtype=np.float64)
    t_total = err.shape[0]
    spans = []
    start = None
    quiet = 0
    for t in range(t_total):
        if start is None:
            if err[t] >= threshold:
                start = t
                quiet = 0
        else:
            if err[t] < threshold:
                quiet += 1
                if quiet >= quiet_run:
                    spans.append((start, t + 1))
                    start = None
            else:
                quiet = 0
    if start is not None:
        spans.append((start, t_total))
    return [(a, b) for a, b in spans if b - a >= min_frames]


def segment_units(corpus: SpeakerCorpus, split_ids, predictor=None,
                  threshold=None):
    """Segment every interval of the split into gesture units. Fits the
    predictor on the same split when one is not supplied; the threshold
    pools error stats over the whole split."""
    if predictor is None:
        predictor = train_pose_predictor(corpus, split_ids)
    ivs = [iv for iv in sorted(corpus.intervals, key=lambda i: i.interval_id)
           if iv.interval_id in split_ids and iv.n_frames >= predictor.k + 1]
    if not ivs:
        raise CorpusError("no interval long enough to segment")
    stacks = {iv.interval_id: _centered_stack(iv) for iv in ivs}
    curves = {iid: prediction_error_curve(predictor, s) for iid, s in stacks.items()}
    if threshold is None:
        threshold = error_threshold(list(curves.values()), k=predictor.k)
    units = []
    for iv in ivs:
        flat = stacks[iv.interval_id]
        for a, b in segment_spans(curves[iv.interval_id], threshold):
            units.append(GestureUnit(
                interval_id=iv.interval_id,
                start_frame=a,
                end_frame=b,
                poses=PoseSequence(flat[a:b].reshape(b - a, POSE_DIM // 2, 2)),
            ))
    return units, predictor, threshold


def fit_pca(units, n_components=N_COMPONENTS):
    """PCA over all unit frames. Returns (basis (n, 98), mean (98,),
    explained_variance). Components are orthonormal with the
    largest-magnitude entry of each made positive; rank-deficient data
    simply leaves trailing components with zero variance."""
    frames = np.concatenate([u.poses.flat() for u in units], axis=0)
    if frames.shape[0] < n_components:
        raise ValueError(f"need at least {n_components} frames, got {frames.shape[0]}")
    mean = frames.mean(axis=0)
    xc = frames - mean
    cov = (xc.T @ xc) / frames.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    basis = evecs[:, order[:n_components]].T.copy()
    for i in range(basis.shape[0]):
        j = int(np.argmax(np.abs(basis[i])))
        if basis[i, j] < 0:
            basis[i] = -basis[i]
    total = float(evals.sum())
    explained = 1.0 if total == 0.0 else float(evals[:n_components].sum() / total)
    return basis, mean, min(explained, 1.0)


def describe(unit: GestureUnit, basis, mean) -> GestureDescriptor:
    return GestureDescriptor((unit.poses.flat() - mean) @ basis.T)


def dtw_distance(a: GestureDescriptor, b: GestureDescriptor) -> float:
    """Unnormalized DTW with steps (1,0), (0,1), (1,1) and Euclidean
    local cost."""
    ca, cb = a.coords, b.coords
    la, lb = ca.shape[0], cb.shape[0]
    # direct differences: identical frames cost exactly 0, so the
    # self-distance is an exact 0.0 (the expanded x^2+y^2-2xy form
    # leaves cancellation residue on the diagonal)
    diff = ca[:, None, :] - cb[None, :, :]
    cost = np.sqrt((diff * diff).sum(axis=2))
    acc = np.full((la, lb), np.inf)
    acc[0, 0] = cost[0, 0]
    for i in range(la):
        for j in range(lb):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
                best = acc[i - 1, j - 1]
            acc[i, j] = cost[i, j] + best
    return float(acc[la - 1, lb - 1])


def pairwise_distances(descriptors, max_n=MAX_CLUSTER_SAMPLE, seed=0):
    """Symmetric DTW matrix over a seeded sample of at most max_n
    descriptors. Returns (selected original indices, matrix)."""
    n = len(descriptors)
    if n < 2:
        raise ValueError("need at least 2 units")
    if n > max_n:
        rng = np.random.default_rng(seed)
        sel = np.sort(rng.choice(n, size=max_n, replace=False))
    else:
        sel = np.arange(n)
    m = len(sel)
    mat = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            d = dtw_distance(descriptors[sel[i]], descriptors[sel[j]])
            mat[i, j] = mat[j, i] = d
    return sel, mat


def linkage_merges(matrix):
    """Average-linkage agglomeration via Lance-Williams updates.
    Returns (merges, final_members): merges is a list of
    (distance, cluster_a, cluster_b, new_cluster) over internal ids;
    final_members maps each internal id to its original indices."""
    d = np.asarray(matrix, dtype=np.float64).copy()
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("matrix must be square")
    members = {i: [i] for i in range(n)}
    active = list(range(n))
    np.fill_diagonal(d, np.inf)
    work = d  # m x m, rows/cols indexed by position in `active`
    merges = []
    next_id = n
    while len(active) > 1:
        m = len(active)
        i, j = divmod(int(np.argmin(work)), m)
        if i > j:
            i, j = j, i
        dist = float(work[i, j])
        a_id, b_id = active[i], active[j]
        na, nb = len(members[a_id]), len(members[b_id])
        new_row = (na * work[i, :] + nb * work[j, :]) / (na + nb)
        merges.append((dist, a_id, b_id, next_id))
        members[next_id] = members[a_id] + members[b_id]
        work[i, :] = new_row
        work[:, i] = new_row
        work[i, i] = np.inf
        work = np.delete(np.delete(work, j, axis=0), j, axis=1)
        active[i] = next_id
        del active[j]
        next_id += 1
    return merges, members


def hierarchical_cluster(matrix, k=DEFAULT_K_CLUSTERS):
    """Cut the average-linkage dendrogram at k clusters. Returns a list
    of sorted original-index lists, ordered by smallest member."""
    n = np.asarray(matrix).shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}]")
    merges, members = linkage_merges(matrix)
    alive = {i: True for i in range(n)}
    for _, a, b, new in merges[: n - k]:
        alive[a] = alive[b] = False
        alive[new] = True
    clusters = [sorted(members[cid]) for cid, ok in alive.items() if ok]
    return sorted(clusters, key=lambda c: c[0])


def medoid(cluster, matrix) -> int:
    """Member with the smallest mean distance to the cluster; ties go to
    the smallest index."""
    if not cluster:
        raise ValueError("empty cluster")
    sub = np.asarray(matrix)[np.ix_(cluster, cluster)]
    means = sub.mean(axis=1)
    best = int(np.argmin(means))
    return cluster[best]


def build_dictionary(corpus: SpeakerCorpus, split_ids, k_clusters=DEFAULT_K_CLUSTERS,
                     n_components=N_COMPONENTS, max_n=MAX_CLUSTER_SAMPLE, seed=0):
    """Full pipeline. Returns (GestureDictionary, units, threshold)."""
    units, _, threshold = segment_units(corpus, split_ids)
    if len(units) < 2:
        raise CorpusError(f"only {len(units)} gesture units found; need at least 2")
    basis, mean, explained = fit_pca(units, n_components=n_components)
    descriptors = [describe(u, basis, mean) for u in units]
    sel, mat = pairwise_distances(descriptors, max_n=max_n, seed=seed)
    k_eff = min(k_clusters, len(sel))
    clusters_idx = hierarchical_cluster(mat, k=k_eff)
    clusters = []
    for c in clusters_idx:
        med = medoid(c, mat)
        ids = [units[sel[i]].unit_id for i in c]
        clusters.append((ids, units[sel[med]].unit_id))
    return (
        GestureDictionary(clusters=clusters, pca_basis=basis, pca_mean=mean,
                          explained_variance=explained),
        units,
        threshold,
    )
