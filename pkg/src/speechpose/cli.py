"""Command-line surface.

Subcommands: synth-data, ingest, train, predict, evaluate, cross-eval,
segment, cluster, render, features. Exit codes: 0 success, 1 usage
error, 2 runtime error. Every command that draws randomness takes
--seed, and identical flags + seed produce byte-identical outputs.

Flags override --config JSON values, which override built-in defaults.
"""

import argparse
import json
import os
import sys

import numpy as np

from .audio import Waveform, log_mel, mfcc, pooled_embedding
from .baselines import MedianBaseline, NnBaseline, RandomBaseline, RepeatInitialBaseline
from .corpus import (
    CLIP_FRAMES,
    SyntheticSpec,
    generate_synthetic_corpus,
    load_corpus,
    read_wav,
    save_corpus,
    split_by_source,
)
from .dictionary import build_dictionary, segment_units
from .models import GeneratorConfig, GeneratorModel
from .pose import FPS, POSE_DIM, PoseSequence, denormalize, render_svg
from .training import (
    EvalReport,
    ModelPredictor,
    TrainConfig,
    cross_speaker_matrix,
    evaluate,
    fit_corpus_stats,
    set_corpus_norm_stats,
    train,
    write_history_csv,
)

MIN_PREDICT_SAMPLES = 32000  # 2 s: depth-5 U-Net needs 32 pose frames
PAD_QUANTUM = 1000           # 1000 samples -> 4 spectrogram frames -> 1 pose frame


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_seed(p):
    p.add_argument("--config", help="JSON file with defaults for this command")
    p.add_argument("--seed", type=int, default=None)


def _load_cfg(args):
    if getattr(args, "config", None):
        with open(args.config) as f:
            doc = json.load(f)
        if not isinstance(doc, dict):
            raise UsageError("--config must hold a JSON object")
        return doc
    return {}


def _eff(args, cfg, key, default):
    v = getattr(args, key, None)
    if v is not None:
        return v
    if key in cfg:
        return cfg[key]
    return default


def _load_split(corpus, split_seed):
    return split_by_source(corpus, seed=split_seed)


def _split_ids(split, name):
    if name not in ("train", "val", "test"):
        raise UsageError(f"unknown split {name!r}")
    return getattr(split, name)


def _write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_synth_data(args):
    cfg = _load_cfg(args)
    spec = SyntheticSpec(
        n_speakers=_eff(args, cfg, "speakers", 2),
        intervals_per_speaker=_eff(args, cfg, "intervals", 10),
        interval_seconds=_eff(args, cfg, "seconds", 24.0),
        mapping_seed=_eff(args, cfg, "mapping_seed", 777),
    )
    seed = _eff(args, cfg, "seed", 0)
    corpora = generate_synthetic_corpus(spec, seed=seed)
    os.makedirs(args.out, exist_ok=True)
    listing = []
    for c in corpora:
        root = os.path.join(args.out, c.speaker_id)
        save_corpus(c, root)
        listing.append(c.speaker_id)
    _write_json(os.path.join(args.out, "speakers.json"), {"speakers": listing})
    print(f"wrote {len(corpora)} speaker corpora under {args.out}")


def cmd_ingest(args):
    corpus = load_corpus(args.corpus)
    frames = sum(iv.n_frames for iv in corpus.intervals)
    seconds = sum(iv.audio.duration for iv in corpus.intervals)
    doc = {
        "speaker_id": corpus.speaker_id,
        "intervals": len(corpus.intervals),
        "total_frames": frames,
        "total_audio_seconds": round(seconds, 3),
        "sources": len({iv.source_id for iv in corpus.intervals}),
    }
    out = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(out + "\n")
    print(out)


def cmd_train(args):
    cfg = _load_cfg(args)
    corpus = load_corpus(args.corpus)
    split = _load_split(corpus, _eff(args, cfg, "split_seed", 0))
    gen_config = GeneratorConfig(
        base_channels=_eff(args, cfg, "base_channels", 32),
        unet_depth=_eff(args, cfg, "unet_depth", 5),
        lambda_l1=_eff(args, cfg, "lambda_l1", 1.0),
        conditioning=_eff(args, cfg, "conditioning", "none"),
        ablate_audio=bool(_eff(args, cfg, "ablate_audio", False)),
        minimax_g=bool(_eff(args, cfg, "minimax_g", False)),
    )
    train_config = TrainConfig(
        iterations=_eff(args, cfg, "iterations", 3000),
        batch_size=_eff(args, cfg, "batch_size", 32),
        lr=_eff(args, cfg, "lr", 1e-4),
        lambda_l1=gen_config.lambda_l1,
        seed=_eff(args, cfg, "seed", 0),
        eval_every=_eff(args, cfg, "eval_every", 250),
        mode=_eff(args, cfg, "mode", "l1_only"),
        val_clips=_eff(args, cfg, "val_clips", 128),
        disc_channels=_eff(args, cfg, "disc_channels", 32),
    )
    log = None if args.quiet else print
    result = train(corpus, split, gen_config, train_config, log=log)
    os.makedirs(args.out, exist_ok=True)
    result.model.save(args.out)
    if train_config.mode == "gan":
        result.disc.save(os.path.join(args.out, "disc"))
    write_history_csv(os.path.join(args.out, "history.csv"), result.history)
    _write_json(os.path.join(args.out, "train_summary.json"), {
        "best_iteration": result.best_iteration,
        "best_val_l1": result.best_val_l1,
        "seconds": round(result.seconds, 3),
        "iterations": train_config.iterations,
        "mode": train_config.mode,
        "seed": train_config.seed,
    })
    print(f"best val L1 {result.best_val_l1:.4f} at iteration "
          f"{result.best_iteration}; saved to {args.out}")


def _pad_for_predict(samples):
    n = samples.shape[0]
    target = max(MIN_PREDICT_SAMPLES, -(-n // PAD_QUANTUM) * PAD_QUANTUM)
    if target > n:
        samples = np.concatenate([samples, np.zeros(target - n)])
    return samples


def cmd_predict(args):
    model = GeneratorModel.load(args.model)
    samples, rate = read_wav(args.audio)
    duration = samples.shape[0] / rate
    padded = _pad_for_predict(samples)
    spec = log_mel(Waveform(padded)).values[None, :, :]
    kwargs = {}
    if model.config.conditioning == "initial_pose":
        if args.initial_pose:
            init = np.loadtxt(args.initial_pose, delimiter=",", ndmin=2)
            if init.shape[1] != POSE_DIM:
                raise ValueError(f"initial pose file must have {POSE_DIM} columns")
            init = init[0]
        else:
            init = np.zeros(POSE_DIM)
        kwargs["initial_pose"] = init[None, :]
    out_norm = model(spec, **kwargs).data[0]
    n_rows = int(duration * FPS)
    if n_rows < 1:
        raise ValueError("audio too short for a single pose frame")
    out_norm = out_norm[:n_rows]
    poses = denormalize(out_norm, model.norm_stats())
    np.savetxt(args.out, poses.flat(), fmt="%.17g", delimiter=",")
    print(f"wrote {n_rows} pose rows to {args.out}")
    if args.svg:
        paths = render_svg(poses, args.svg)
        print(f"rendered {len(paths)} SVG frames under {args.svg}")


def _build_baseline(name, corpus, split, seed):
    if name == "median":
        return MedianBaseline(corpus, split.train)
    if name == "random":
        return RandomBaseline(corpus, split.train, seed=seed)
    if name == "nn":
        return NnBaseline(corpus, split.train)
    if name == "repeat":
        return RepeatInitialBaseline()
    raise UsageError(f"unknown baseline {name!r}")


def _report_csv(path, report: EvalReport):
    cols = ["speaker_id", "n_clips", "l1", "pck_01", "pck_02", "pck_avg"]
    vals = [report.speaker_id, str(report.n_clips)] + [
        "%.17g" % getattr(report, c) for c in cols[2:]
    ]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        f.write(",".join(vals) + "\n")


def cmd_evaluate(args):
    cfg = _load_cfg(args)
    corpus = load_corpus(args.corpus)
    split = _load_split(corpus, _eff(args, cfg, "split_seed", 0))
    set_corpus_norm_stats(corpus, fit_corpus_stats(corpus, split.train))
    seed = _eff(args, cfg, "seed", 0)
    if args.baseline:
        predictor = _build_baseline(args.baseline, corpus, split, seed)
    else:
        if not args.model:
            raise UsageError("evaluate needs --model or --baseline")
        predictor = ModelPredictor(GeneratorModel.load(args.model))
    ids = _split_ids(split, _eff(args, cfg, "split", "test"))
    report = evaluate(predictor, corpus, ids,
                      n_clips=_eff(args, cfg, "n_clips", 200), seed=seed)
    _report_csv(args.out, report)
    if args.json:
        _write_json(args.json, report.to_dict())
    print(f"l1 {report.l1:.4f} pck_avg {report.pck_avg:.4f} "
          f"({report.n_clips} clips) -> {args.out}")


def cmd_cross_eval(args):
    cfg = _load_cfg(args)
    if len(args.corpora) != len(args.models):
        raise UsageError("need one --models entry per --corpora entry")
    seed = _eff(args, cfg, "seed", 0)
    split_seed = _eff(args, cfg, "split_seed", 0)
    corpora, splits, models = {}, {}, {}
    for c_dir, m_dir in zip(args.corpora, args.models):
        corpus = load_corpus(c_dir)
        split = _load_split(corpus, split_seed)
        set_corpus_norm_stats(corpus, fit_corpus_stats(corpus, split.train))
        corpora[corpus.speaker_id] = corpus
        splits[corpus.speaker_id] = split
        models[corpus.speaker_id] = GeneratorModel.load(m_dir)
    ids, mat = cross_speaker_matrix(models, corpora, splits,
                                    n_clips=_eff(args, cfg, "n_clips", 100),
                                    seed=seed)
    with open(args.out, "w") as f:
        f.write("eval_speaker," + ",".join(ids) + "\n")
        for i, sid in enumerate(ids):
            f.write(sid + "," + ",".join("%.17g" % v for v in mat[i]) + "\n")
    print(f"wrote {len(ids)}x{len(ids)} matrix to {args.out}")


def cmd_segment(args):
    cfg = _load_cfg(args)
    corpus = load_corpus(args.corpus)
    split = _load_split(corpus, _eff(args, cfg, "split_seed", 0))
    ids = _split_ids(split, _eff(args, cfg, "split", "train"))
    units, predictor, threshold = segment_units(corpus, ids)
    doc = {
        "threshold": threshold,
        "predictor_k": predictor.k,
        "units": [
            {"interval_id": u.interval_id, "start_frame": u.start_frame,
             "end_frame": u.end_frame}
            for u in units
        ],
    }
    _write_json(args.out, doc)
    print(f"{len(units)} units (threshold {threshold:.3f}) -> {args.out}")


def cmd_cluster(args):
    cfg = _load_cfg(args)
    corpus = load_corpus(args.corpus)
    split = _load_split(corpus, _eff(args, cfg, "split_seed", 0))
    ids = _split_ids(split, _eff(args, cfg, "split", "train"))
    dictionary, units, threshold = build_dictionary(
        corpus, ids,
        k_clusters=_eff(args, cfg, "k", 10),
        n_components=_eff(args, cfg, "components", 5),
        max_n=_eff(args, cfg, "max_units", 1000),
        seed=_eff(args, cfg, "seed", 0),
    )
    dictionary.save_json(args.out)
    if args.render_medoids:
        by_id = {u.unit_id: u for u in units}
        os.makedirs(args.render_medoids, exist_ok=True)
        for members, med in dictionary.clusters:
            render_svg(by_id[med].poses, args.render_medoids,
                       prefix=med.replace(":", "_"))
    print(f"{len(units)} units, {len(dictionary.clusters)} clusters, "
          f"explained {dictionary.explained_variance:.3f} -> {args.out}")


def cmd_render(args):
    corpus = load_corpus(args.corpus)
    iv = corpus.interval(args.interval)
    start = args.start
    count = args.frames if args.frames is not None else iv.n_frames - start
    if start < 0 or start + count > iv.n_frames:
        raise ValueError(f"frame range [{start}, {start + count}) outside interval "
                         f"of {iv.n_frames} frames")
    sub = PoseSequence(iv.poses.frames[start : start + count])
    paths = render_svg(sub, args.out, prefix=args.prefix)
    print(f"rendered {len(paths)} frames under {args.out}")


def cmd_features(args):
    samples, rate = read_wav(args.audio)
    w = Waveform(samples, sample_rate=rate)
    if args.kind == "logmel":
        vals = log_mel(w).values
    elif args.kind == "mfcc":
        vals = mfcc(w).values
    else:
        emb = pooled_embedding(w)
        vals = emb.vector[None, :]
        if emb.silent:
            print("note: silent input, zero embedding", file=sys.stderr)
    np.savetxt(args.out, vals, fmt="%.17g", delimiter=",")
    print(f"wrote {vals.shape[0]} x {vals.shape[1]} {args.kind} rows to {args.out}")


def build_parser():
    p = Parser(prog="speechpose",
               description="speech-to-gesture translation pipeline")
    sub = p.add_subparsers(dest="command", metavar="command")

    sp = sub.add_parser("synth-data", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--speakers", type=int, default=None)
    sp.add_argument("--intervals", type=int, default=None)
    sp.add_argument("--seconds", type=float, default=None)
    sp.add_argument("--mapping-seed", dest="mapping_seed", type=int, default=None)
    _add_config_seed(sp)
    sp.set_defaults(func=cmd_synth_data)

    sp = sub.add_parser("ingest", help="validate and summarize a corpus")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("train", help="train a generator")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=("l1_only", "gan"), default=None)
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--lambda-l1", dest="lambda_l1", type=float, default=None)
    sp.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    sp.add_argument("--val-clips", dest="val_clips", type=int, default=None)
    sp.add_argument("--base-channels", dest="base_channels", type=int, default=None)
    sp.add_argument("--unet-depth", dest="unet_depth", type=int, default=None)
    sp.add_argument("--disc-channels", dest="disc_channels", type=int, default=None)
    sp.add_argument("--conditioning", choices=("none", "initial_pose"), default=None)
    sp.add_argument("--ablate-audio", dest="ablate_audio",
                    action="store_const", const=True, default=None)
    sp.add_argument("--minimax-g", dest="minimax_g",
                    action="store_const", const=True, default=None)
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    sp.add_argument("--quiet", action="store_true")
    _add_config_seed(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="poses from a WAV file")
    sp.add_argument("--model", required=True)
    sp.add_argument("--audio", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg")
    sp.add_argument("--initial-pose", dest="initial_pose")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("evaluate", help="L1/PCK report on a split")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--model")
    sp.add_argument("--baseline", choices=("median", "random", "nn", "repeat"))
    sp.add_argument("--split", default=None)
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    sp.add_argument("--n-clips", dest="n_clips", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--json")
    _add_config_seed(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("cross-eval", help="cross-speaker L1 matrix")
    sp.add_argument("--corpora", nargs="+", required=True)
    sp.add_argument("--models", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-clips", dest="n_clips", type=int, default=None)
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    _add_config_seed(sp)
    sp.set_defaults(func=cmd_cross_eval)

    sp = sub.add_parser("segment", help="gesture-unit segmentation")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--split", default=None)
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    sp.add_argument("--out", required=True)
    _add_config_seed(sp)
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("cluster", help="gesture dictionary")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--split", default=None)
    sp.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--components", type=int, default=None)
    sp.add_argument("--max-units", dest="max_units", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--render-medoids", dest="render_medoids")
    _add_config_seed(sp)
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("render", help="SVG frames of corpus poses")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--interval", required=True)
    sp.add_argument("--start", type=int, default=0)
    sp.add_argument("--frames", type=int, default=None)
    sp.add_argument("--prefix", default="frame")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("features", help="audio features to CSV")
    sp.add_argument("--audio", required=True)
    sp.add_argument("--kind", choices=("logmel", "mfcc", "embedding"),
                    default="logmel")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_features)

    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            return 1
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        args.func(args)
        return 0
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
