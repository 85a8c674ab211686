"""Command-line entry point: magnify, stmap, train, predict, eval, selftest, import-weights."""
import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import build_config, load_config_file, parse_band, parse_floats
from .decide import MapPrediction, video_verdict
from .errors import ConfigMismatchError, InputError
from .ingest import FSEQ_VERSION, load_frames, load_landmarks, write_fseq
from .magnify import amplify_composite, gaussian_decompose, ideal_bandpass
from .stmap import (LABELS, MEMS_VERSION, build_maps, export_png, read_manifest, read_map, write_map)
from .train import evaluate, train_loop
from .vit import VITW_VERSION, forward, load_weights, save_weights

log = logging.getLogger("memstvit")


def _overrides(args):
    out = {}
    if getattr(args, "band", None):
        out["band.low"], out["band.high"] = parse_band(args.band)
    if getattr(args, "alphas", None):
        out["alphas"] = list(parse_floats(args.alphas))
    if getattr(args, "levels", None) is not None:
        out["levels"] = args.levels
    for key in ("learning_rate", "epochs", "batch_size", "dropout_rate", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            out[f"train.{key}"] = val
    return out


def _config(args):
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    return build_config(file_values, _overrides(args))


def _jobs(args):
    return 1 if args.strict else max(1, args.jobs)


def _video_maps(frames, landmarks, cfg, fps=None, label=None, source=None, jobs=1):
    video = load_frames(frames, fps=fps)
    track = load_landmarks(landmarks, n_frames=len(video))
    maps = build_maps(video, track, cfg.bandpass, cfg.alphas, source_video=source or str(frames),
                      label=label, stride_s=cfg.stride_s, jobs=jobs)
    return maps


# ---------------------------------------------------------------- subcommands


def cmd_magnify(args):
    cfg = _config(args)
    video = load_frames(args.frames, fps=args.fps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.bandpass.check(video.fps)
    written = []
    for octave, alpha in zip(gaussian_decompose(video, cfg.levels), cfg.alphas):
        seq = amplify_composite(video, ideal_bandpass(octave, cfg.bandpass), alpha)
        path = out / f"octave{octave.level}.fseq"
        write_fseq(seq, path)
        written.append(str(path))
    print(json.dumps({"written": written}))
    return 0


def cmd_stmap(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    maps = _video_maps(args.frames, args.landmarks, cfg, fps=args.fps, label=args.label,
                       source=args.source, jobs=_jobs(args))
    if maps is None:
        print(json.dumps({"discarded": True, "maps": 0}))
        return 0
    for m in maps:
        stem = out / f"map_{m.window_start:06d}"
        write_map(m, stem.with_suffix(".mems"))
        if args.export_png:
            export_png(m, stem.with_suffix(".png"))
    print(json.dumps({"discarded": False, "maps": len(maps)}))
    return 0


def _manifest_maps(manifest, cfg, jobs, splits):
    """Maps per manifest video, in manifest order: [(entry, maps or None)]."""
    entries = [e for e in read_manifest(manifest) if e.split in splits]

    def one(e):
        return e, _video_maps(e.video, e.landmarks, cfg, label=e.label, source=str(e.video))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, entries))
    return [one(e) for e in entries]


def _stack_split(results, split):
    maps, labels = [], []
    for e, ms in results:
        if e.split != split or not ms:
            continue
        maps.extend(m.values for m in ms)
        labels.extend(LABELS[m.label] for m in ms)
    if not maps:
        return np.zeros((0, 60, 196, 3)), np.zeros(0, dtype=np.int64)
    return np.stack(maps), np.array(labels, dtype=np.int64)


def cmd_train(args):
    cfg = _config(args)
    results = _manifest_maps(args.manifest, cfg, _jobs(args), {"train", "val"})
    train, val = _stack_split(results, "train"), _stack_split(results, "val")
    if len(train[0]) == 0:
        raise InputError("manifest yields no training maps")
    if len(val[0]) == 0:
        raise InputError("manifest yields no validation maps")
    res = train_loop(train, val, cfg.vit, cfg.train, log_path=args.log)
    save_weights(res.params, args.out)
    print(json.dumps({"weights": str(args.out), "best_epoch": res.best_epoch,
                      "best_val_acc": res.history[res.best_epoch - 1]["val_acc"]}))
    return 0


def _load_weights_checked(args):
    expect = None
    if getattr(args, "config", None):
        expect = _config(args).vit
    return load_weights(args.weights, expect=expect)


def _verdict_json(maps, params, video):
    probs = forward(np.stack([m.values for m in maps]), params)
    preds = [MapPrediction((float(p[0]), float(p[1])), f"{video}@{m.window_start}") for p, m in zip(probs, maps)]
    v = video_verdict(preds, video)
    per_map = [{"map": p.map_id, "probs": list(p.probs), "predicted": p.predicted} for p in preds]
    return v, v.to_dict(per_map)


def cmd_predict(args):
    params = _load_weights_checked(args)
    if args.maps:
        files = sorted(Path(args.maps).glob("*.mems"))
        maps = [read_map(f) for f in files]
        video = args.maps
    else:
        if not (args.frames and args.landmarks):
            raise InputError("predict needs --maps or both --frames and --landmarks")
        cfg = _config(args)
        maps = _video_maps(args.frames, args.landmarks, cfg, fps=args.fps, jobs=_jobs(args))
        video = args.frames
        if maps is None:
            print(json.dumps({"video": video, "verdict": None, "discarded": True}))
            return 0
    if not maps:
        print(json.dumps({"video": video, "verdict": None, "maps": 0}))
        return 0
    _, report = _verdict_json(maps, params, str(video))
    print(json.dumps(report))
    return 0


def cmd_eval(args):
    cfg = _config(args)
    params = _load_weights_checked(args)
    results = _manifest_maps(args.manifest, cfg, _jobs(args), {"train", "val", "test"})
    report = {"splits": {}}
    for split in ("train", "val", "test"):
        maps, labels = _stack_split(results, split)
        entry = {"maps": int(len(maps))}
        if len(maps):
            entry["map_accuracy"], entry["map_loss"] = evaluate(maps, labels, params)
        videos = []
        confusion = {"real": {"real": 0, "fake": 0}, "fake": {"real": 0, "fake": 0}}
        for e, ms in results:
            if e.split != split or not ms:
                continue
            v, _ = _verdict_json(ms, params, str(e.video))
            confusion[e.label][v.verdict] += 1
            videos.append({"video": str(e.video), "label": e.label, "verdict": v.verdict})
        if videos:
            entry["video_accuracy"] = sum(v["label"] == v["verdict"] for v in videos) / len(videos)
        entry["confusion"] = confusion
        entry["videos"] = videos
        report["splits"][split] = entry
    report["discarded"] = [str(e.video) for e, ms in results if ms is None]
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest

    ok = run_selftest(seed=args.seed, log_path=args.log, quick=not args.full)
    return 0 if ok else 1


def cmd_import(args):
    from .weights_import import import_npz

    params = import_npz(args.npz, seed=args.seed)
    save_weights(params, args.out)
    print(json.dumps({"weights": str(args.out), "hidden_dim": params.config.hidden_dim,
                      "num_layers": params.config.num_layers}))
    return 0


# ---------------------------------------------------------------- parser


def _add_pipeline(p, band=True):
    p.add_argument("--config", help="JSON config document (flat dotted or nested keys)")
    if band:
        p.add_argument("--band", help="pass band in Hz, LOW:HIGH (default 0.75:3.0)")
        p.add_argument("--alphas", help="per-octave amplification, e.g. 10,20,40")
        p.add_argument("--fps", type=float, help="override the stored frame rate")


def make_parser():
    version = (f"%(prog)s {__version__} (FSEQ v{FSEQ_VERSION}, MEMS v{MEMS_VERSION}, VITW v{VITW_VERSION})")
    parser = argparse.ArgumentParser(prog="memstvit", description=__doc__)
    parser.add_argument("--version", action="version", version=version)
    parser.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    parser.add_argument("--strict", action="store_true", help="sequential, bit-exact mode")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("magnify", help="write each magnified octave as FSEQ")
    p.add_argument("--frames", required=True)
    p.add_argument("--levels", type=int)
    p.add_argument("--out", required=True)
    _add_pipeline(p)
    p.set_defaults(func=cmd_magnify)

    p = sub.add_parser("stmap", help="build maps for one video")
    p.add_argument("--frames", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--label", choices=["real", "fake"])
    p.add_argument("--source", help="source id stored in each map")
    p.add_argument("--export-png", action="store_true", help="also render each map as PNG")
    _add_pipeline(p)
    p.set_defaults(func=cmd_stmap)

    p = sub.add_parser("train", help="train on a manifest's train/val splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="weights file (.vitw)")
    p.add_argument("--log", help="metrics JSON-lines, one object per epoch")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--dropout-rate", dest="dropout_rate", type=float)
    p.add_argument("--seed", type=int)
    _add_pipeline(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="video verdict from frames+landmarks or a map folder")
    p.add_argument("--weights", required=True)
    p.add_argument("--frames")
    p.add_argument("--landmarks")
    p.add_argument("--maps", help="folder of .mems files")
    _add_pipeline(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="accuracy per manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", help="write the JSON report here too")
    _add_pipeline(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="synthetic-oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="metrics JSON-lines")
    p.add_argument("--full", action="store_true", help="acceptance-scale trial counts")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("import-weights", help="map an exported ViT .npz onto the VITW layout")
    p.add_argument("--npz", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0, help="seed for the freshly initialized head")
    p.set_defaults(func=cmd_import)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ConfigMismatchError, OSError, ValueError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
