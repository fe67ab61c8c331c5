"""Command-line entry point.

Subcommands: extract-music, extract-video, synth, train, eval,
retrieve.  Shared flags: --config (JSON file whose keys mirror the
long flag names), --seed, --out, --jobs; explicit flags win over the
config file, which wins over built-in defaults.

Exit codes: 0 success, 1 runtime failure, 2 partial per-file failure
(extraction commands), 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import (audio_features, dsp, evaluation, formats, network,
               training, video_pipeline)
from .datatypes import single_segment
from .errors import VmembedError
from .losses import LossWeights

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_PARTIAL = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 64, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class UsageError(Exception):
    pass


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in str(text).split(",") if p != "")
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def _layered(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults <- config file <- explicit flags."""
    merged = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path, "r", encoding="utf-8") as f:
            file_cfg = json.load(f)
        if not isinstance(file_cfg, dict):
            raise UsageError(f"{cfg_path}: config must be a JSON object")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise UsageError(f"{cfg_path}: unknown keys {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _collect_inputs(paths: list[str], suffix: str) -> list[str]:
    """Expand directories into sorted files with the given suffix."""
    out: list[str] = []
    for p in paths:
        if os.path.isdir(p):
            out.extend(sorted(
                os.path.join(p, name) for name in os.listdir(p)
                if name.endswith(suffix)))
        else:
            out.append(p)
    return out


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


# ---------------------------------------------------------------------------
# extract-music
# ---------------------------------------------------------------------------

_MUSIC_DEFAULTS = {"rate": dsp.DEFAULT_RATE, "trim_seconds": 29.12,
                   "full_scale": False, "ordinal_k": 1}


def cmd_extract_music(args: argparse.Namespace) -> int:
    opts = _layered(args, _MUSIC_DEFAULTS)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    cfg = (audio_features.full_scale() if opts["full_scale"]
           else audio_features.AudioFeatureConfig())
    files = _collect_inputs(args.inputs, ".wav")
    if not files:
        print("warning: no input WAV files found", file=sys.stderr)
        return EXIT_OK

    def one(path: str):
        clip = dsp.read_wav(path)
        clip = dsp.resample(clip, int(opts["rate"]))
        clip = dsp.trim_center(clip, float(opts["trim_seconds"]))
        feat = audio_features.extract_music_features(clip, cfg)
        track = audio_features.aggregate_music_level(feat,
                                                     int(opts["ordinal_k"]))
        dest = os.path.join(out_dir, _stem(path) + ".vmnf")
        formats.write_vmnf(dest, track.values[None, :])
        return dest

    failures = []
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for path, result in zip(files, pool.map(
                lambda p: _try(one, p), files)):
            if isinstance(result, Exception):
                failures.append((path, result))
                print(f"error: {path}: {result}", file=sys.stderr)
            else:
                print(result)

    k = int(opts["ordinal_k"])
    sidecar = {
        "frame_dim": cfg.frame_dim(),
        "segments": [{"feature": s.feature, "component": s.component,
                      "dim": s.dim} for s in cfg.layout()],
        "aggregate": {"ordinal_k": k,
                      "stats": ["mean", "var"] + [f"top{j+1}" for j in range(k)],
                      "dim": cfg.frame_dim() * (2 + k)},
    }
    with open(os.path.join(out_dir, "layout.json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
    return EXIT_PARTIAL if failures else EXIT_OK


def _try(fn, *a):
    try:
        return fn(*a)
    except (VmembedError, OSError, ValueError) as exc:
        return exc


# ---------------------------------------------------------------------------
# extract-video
# ---------------------------------------------------------------------------

_VIDEO_DEFAULTS = {"wpca_dim": 32, "pca_dim": 64, "ordinal_k": 5,
                   "fit": False, "models": ""}


def cmd_extract_video(args: argparse.Namespace) -> int:
    opts = _layered(args, _VIDEO_DEFAULTS)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    files = _collect_inputs(args.inputs, ".vmnf")
    if not files:
        print("warning: no input VMNF files found", file=sys.stderr)
        return EXIT_OK
    mats = {}
    failures = []
    for path in files:
        r = _try(formats.read_vmnf, path)
        if isinstance(r, Exception):
            failures.append((path, r))
            print(f"error: {path}: {r}", file=sys.stderr)
        else:
            mats[path] = r

    if opts["fit"]:
        frame_mats = [single_segment(m, "frame") for m in mats.values()]
        models = video_pipeline.fit_video_models(
            frame_mats, int(opts["wpca_dim"]), int(opts["pca_dim"]),
            int(opts["ordinal_k"]))
        model_path = os.path.join(out_dir, "video_models.vmpm")
        video_pipeline.save_video_models(model_path, models)
        print(model_path)
    elif opts["models"]:
        models = video_pipeline.load_video_models(opts["models"])
    else:
        raise UsageError("need --models FILE or --fit")

    for path, mat in mats.items():
        r = _try(lambda: _video_one(mat, models, out_dir, path))
        if isinstance(r, Exception):
            failures.append((path, r))
            print(f"error: {path}: {r}", file=sys.stderr)
        else:
            print(r)
    return EXIT_PARTIAL if failures else EXIT_OK


def _video_one(mat: np.ndarray, models, out_dir: str, path: str) -> str:
    feat = single_segment(mat, "frame")
    track = video_pipeline.video_track_vector(feat, models)
    dest = os.path.join(out_dir, _stem(path) + ".track.vmnf")
    formats.write_vmnf(dest, track.values[None, :])
    return dest


# ---------------------------------------------------------------------------
# synth / train / eval / retrieve
# ---------------------------------------------------------------------------

_SYNTH_DEFAULTS = {"pairs": 500, "latent_dim": 16, "video_dim": 48,
                   "music_dim": 40, "noise": 0.1, "splits": ""}


def cmd_synth(args: argparse.Namespace) -> int:
    opts = _layered(args, _SYNTH_DEFAULTS)
    split_sizes = None
    if opts["splits"]:
        parts = _int_tuple(opts["splits"])
        if len(parts) != 3:
            raise UsageError("--splits needs three comma-separated sizes")
        split_sizes = parts
    manifest = training.generate_synthetic_corpus(
        int(opts["pairs"]), int(opts["latent_dim"]), int(opts["video_dim"]),
        int(opts["music_dim"]), float(opts["noise"]), args.seed, args.out,
        split_sizes)
    print(os.path.join(args.out, "manifest.jsonl"))
    sizes = manifest.split_sizes()
    print(f"pairs={len(manifest.entries)} train={sizes['train']} "
          f"val={sizes['val']} test={sizes['test']}")
    return EXIT_OK


_TRAIN_DEFAULTS = {
    "manifest": "", "epochs": 30, "batch_size": 256, "lr": 3e-4,
    "video_layers": "256,64", "music_layers": "256,128,64",
    "dropout_keep": 0.9, "eval_every": 1,
    "lambda1": 3.0, "lambda2": 1.0, "lambda3": 1.0, "lambda4": 1.0,
    "margin": 0.2, "top_q": 128, "intra_t": -1, "intra_mode": "corrected",
}


def cmd_train(args: argparse.Namespace) -> int:
    opts = _layered(args, _TRAIN_DEFAULTS)
    if not opts["manifest"]:
        raise UsageError("--manifest is required")
    os.makedirs(args.out, exist_ok=True)
    intra_t = int(opts["intra_t"])
    weights = LossWeights(
        lambda1=float(opts["lambda1"]), lambda2=float(opts["lambda2"]),
        lambda3=float(opts["lambda3"]), lambda4=float(opts["lambda4"]),
        margin_e=float(opts["margin"]), top_q=int(opts["top_q"]),
        intra_samples_t=None if intra_t < 0 else intra_t,
        intra_mode=str(opts["intra_mode"]))
    config = training.TrainConfig(
        batch_size=int(opts["batch_size"]), epochs=int(opts["epochs"]),
        seed=args.seed, learning_rate=float(opts["lr"]), weights=weights,
        video_layers=_int_tuple(opts["video_layers"]),
        music_layers=_int_tuple(opts["music_layers"]),
        dropout_keep=float(opts["dropout_keep"]),
        eval_every=int(opts["eval_every"]))
    manifest = training.load_manifest(opts["manifest"])
    result = training.train(config, manifest)
    ckpt = os.path.join(args.out, "checkpoint.vmck")
    network.save_checkpoint(result.params, result.state, ckpt)
    training.write_trace(os.path.join(args.out, "trace.csv"), result.trace)
    print(ckpt)
    if result.val_history:
        epoch, r10 = max(result.val_history, key=lambda t: t[1])
        print(f"best validation R@10 {r10:.2f} at epoch {epoch}")
    if result.aborted:
        print("training aborted on non-finite loss; kept last good "
              "checkpoint", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


_EVAL_DEFAULTS = {"manifest": "", "checkpoint": "", "split": "test",
                  "trials": 10000}


def _embed_split(manifest, checkpoint, split):
    params, _ = network.load_checkpoint(checkpoint)
    videos, musics, ids = training.load_split_features(manifest, split)
    if videos.shape[0] == 0:
        raise UsageError(f"split {split!r} is empty")
    emb_v, _ = network.forward(params, "video", videos, "eval")
    emb_m, _ = network.forward(params, "music", musics, "eval")
    return emb_v, emb_m, ids


def cmd_eval(args: argparse.Namespace) -> int:
    opts = _layered(args, _EVAL_DEFAULTS)
    if not opts["manifest"] or not opts["checkpoint"]:
        raise UsageError("--manifest and --checkpoint are required")
    os.makedirs(args.out, exist_ok=True)
    manifest = training.load_manifest(opts["manifest"])
    emb_v, emb_m, _ = _embed_split(manifest, opts["checkpoint"],
                                   str(opts["split"]))
    s = emb_v @ emb_m.T
    report = evaluation.metrics_report(s, args.seed, int(opts["trials"]))
    dest = os.path.join(args.out, "metrics.json")
    with open(dest, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(dest)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


_RETRIEVE_DEFAULTS = {"manifest": "", "checkpoint": "", "split": "test",
                      "query": "", "direction": "video_to_music", "top_k": 10}


def cmd_retrieve(args: argparse.Namespace) -> int:
    opts = _layered(args, _RETRIEVE_DEFAULTS)
    for key in ("manifest", "checkpoint", "query"):
        if not opts[key]:
            raise UsageError(f"--{key} is required")
    direction = str(opts["direction"])
    if direction not in evaluation.DIRECTIONS:
        raise UsageError(f"--direction must be one of {evaluation.DIRECTIONS}")
    manifest = training.load_manifest(opts["manifest"])
    params, _ = network.load_checkpoint(opts["checkpoint"])
    query_vec = formats.read_vmnf(opts["query"])[0]
    videos, musics, ids = training.load_split_features(
        manifest, str(opts["split"]))
    if direction == "video_to_music":
        q, _ = network.forward(params, "video", query_vec[None, :], "eval")
        corpus, _ = network.forward(params, "music", musics, "eval")
    else:
        q, _ = network.forward(params, "music", query_vec[None, :], "eval")
        corpus, _ = network.forward(params, "video", videos, "eval")
    result = evaluation.retrieve(q[0], corpus, int(opts["top_k"]),
                                 query_id=_stem(opts["query"]),
                                 direction=direction)
    for idx, sim in result.ranked:
        print(f"{ids[idx]}\t{sim:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring
# ---------------------------------------------------------------------------

def _add_shared(p: _Parser) -> None:
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> _Parser:
    parser = _Parser(prog="vmembed",
                     description="content-based video--music retrieval")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("extract-music", help="WAV files -> music TrackVectors")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--rate", type=int, default=None)
    p.add_argument("--trim-seconds", dest="trim_seconds", type=float,
                   default=None)
    p.add_argument("--full-scale", dest="full_scale", action="store_const",
                   const=True, default=None)
    p.add_argument("--ordinal-k", dest="ordinal_k", type=int, default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_extract_music)

    p = sub.add_parser("extract-video",
                       help="frame-feature VMNF -> video TrackVectors")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--models", default=None)
    p.add_argument("--fit", action="store_const", const=True, default=None)
    p.add_argument("--wpca-dim", dest="wpca_dim", type=int, default=None)
    p.add_argument("--pca-dim", dest="pca_dim", type=int, default=None)
    p.add_argument("--ordinal-k", dest="ordinal_k", type=int, default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_extract_video)

    p = sub.add_parser("synth", help="generate a synthetic paired corpus")
    for name in ("pairs", "latent-dim", "video-dim", "music-dim"):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=int,
                       default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--splits", default=None,
                   help="explicit train,val,test sizes")
    _add_shared(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the two-branch network")
    p.add_argument("--manifest", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--video-layers", dest="video_layers", default=None)
    p.add_argument("--music-layers", dest="music_layers", default=None)
    p.add_argument("--dropout-keep", dest="dropout_keep", type=float,
                   default=None)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    for i in range(1, 5):
        p.add_argument(f"--lambda{i}", type=float, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--top-q", dest="top_q", type=int, default=None)
    p.add_argument("--intra-t", dest="intra_t", type=int, default=None)
    p.add_argument("--intra-mode", dest="intra_mode",
                   choices=("corrected", "literal"), default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Recall@K + machine preference")
    p.add_argument("--manifest", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--trials", type=int, default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("retrieve", help="rank a corpus against one query")
    p.add_argument("--manifest", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--query", default=None)
    p.add_argument("--direction", choices=evaluation.DIRECTIONS, default=None)
    p.add_argument("--split", default=None)
    p.add_argument("--top-k", dest="top_k", type=int, default=None)
    _add_shared(p)
    p.set_defaults(func=cmd_retrieve)
    return parser


def entry(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vmembed: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"vmembed: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VmembedError, OSError) as exc:
        print(f"vmembed: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(entry())


if __name__ == "__main__":
    main()
