"""Command-line pipeline: synth, extract, train, predict, eval, bench.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import cnn, featex, ingest, metrics, synth
from .cnn.serialize import ModelFormatError
from .featex import FeatureConfig
from .ingest import DataError

log = logging.getLogger("rppgnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PAPER_WINDOWS = (4, 6, 8)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- shared helpers ---------------------------------------------------------

def feature_config(args):
    return FeatureConfig(pyramid_level=args.pyramid_level, fps=args.fps,
                         f_low=args.f_low, f_high=args.f_high)


def video_ids(manifest):
    return [f"{i:04d}_{e.frames_path.parent.name}" for i, e in enumerate(manifest.entries)]


def extract_entry(entry, cfg, threads=1):
    """Feature images, labels and window indices for one manifest entry."""
    wins = ingest.windows(entry)
    if threads > 1 and len(wins) > 1:
        with ThreadPoolExecutor(threads) as pool:
            images = list(pool.map(lambda w: featex.extract(w.roi_window, cfg), wins))
        images = np.asarray(images, dtype=np.float32).reshape((len(wins),) + cfg.shape)
        labels = np.array([w.label_bpm for w in wins])
        index = np.array([w.window_index for w in wins], dtype=np.int64)
        return images, labels, index
    return featex.extract_labeled(wins, cfg)


def write_series(path, seconds, values):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["second", "bpm"])
        for s, v in zip(seconds, values):
            writer.writerow([int(s), repr(float(v))])


def read_series(path):
    seconds, values = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["second", "bpm"]:
            raise DataError(f"{path}: expected header 'second,bpm'")
        for row in reader:
            try:
                seconds.append(int(row[0]))
                values.append(float(row[1]))
            except (IndexError, ValueError):
                raise DataError(f"{path}: malformed row {row}") from None
    return np.array(seconds, dtype=np.int64), np.array(values)


def load_features(features_dir):
    """Read labels.csv of an extract run: (videos, seconds, images, labels)."""
    path = Path(features_dir) / "labels.csv"
    if not path.is_file():
        raise DataError(f"no labels.csv in {features_dir}")
    try:
        rows = featex.read_labels(path)
        images = np.array([featex.read_fim(p) for p, _ in rows], dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from None
    if not rows:
        images = np.zeros((0,) + FeatureConfig().shape, dtype=np.float32)
    videos = [p.parent.name for p, _ in rows]
    seconds = np.array([int(p.stem) for p, _ in rows], dtype=np.int64)
    labels = np.array([bpm for _, bpm in rows])
    return videos, seconds, images, labels


def split_videos(names, test_fraction, seed):
    """Seeded video-level split; returns the sorted test video names."""
    unique = sorted(set(names))
    if len(unique) < 2 or test_fraction <= 0:
        return []
    n_test = min(len(unique) - 1, max(1, int(round(test_fraction * len(unique)))))
    order = np.random.default_rng(seed).permutation(len(unique))
    return sorted(unique[i] for i in order[:n_test])


# -- subcommands ------------------------------------------------------------

def cmd_synth(args):
    out = Path(args.out)
    tpl = synth.SynthSpec(duration_s=args.duration, fps=args.fps, float_frames=not args.png,
                          gt_rate=args.gt_rate)
    if args.step:
        hr = synth.HrTimeline.step(args.step[0], args.step[1], args.duration / 2, args.duration)
        specs = [replace(s, hr=hr) for s in synth.corpus_specs(args.n_clips, (60, 60), tpl, args.seed)]
        entries = [synth.generate(s, out, name=f"clip{i:04d}") for i, s in enumerate(specs)]
        ingest.write_manifest(out / "manifest.tsv", entries)
        print(out / "manifest.tsv")
        return EXIT_OK
    path, report = synth.make_training_corpus(args.n_clips, (args.hr_lo, args.hr_hi), out, tpl, args.seed)
    print(path)
    print(f"bpm coverage {report['counts']} chi2={report['chi2']:.2f}")
    return EXIT_OK


def cmd_extract(args):
    cfg = feature_config(args)
    manifest = ingest.load_manifest(args.manifest)
    out = Path(args.out)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    rows = []
    for vid, entry in zip(video_ids(manifest), manifest.entries):
        images, labels, index = extract_entry(entry, cfg, args.threads)
        vdir = out / vid
        vdir.mkdir(exist_ok=True)
        for img, s, bpm in zip(images, index, labels):
            path = vdir / f"{s:06d}.fim"
            featex.write_fim(path, img)
            rows.append((path.relative_to(out), bpm))
        write_series(out / "truth" / f"{vid}.csv", index, labels)
        log.info("%s: %d windows", vid, len(index))
    featex.write_labels(out / "labels.csv", rows)
    print(f"{len(rows)} feature images from {len(manifest.entries)} videos -> {out}")
    return EXIT_OK


def cmd_train(args):
    videos, _, images, labels = load_features(args.features)
    if len(labels) == 0:
        raise DataError("no feature images to train on")
    test = split_videos(videos, args.test_fraction, args.seed)
    keep = np.array([v not in set(test) for v in videos])
    cfg = cnn.TrainConfig(batch_size=args.batch_size, max_iterations=args.iters, base_lr=args.lr,
                          seed=args.seed, val_every=args.val_every)
    model = cnn.build_model(seed=args.seed)

    def progress(it, tr, va):
        log.info("iteration %d train %.6f val %.6f", it, tr, va)

    model, history = cnn.train(model, images[keep], labels[keep], cfg, progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cnn.save_model(model, out / "model.evmc")
    history.write_csv(out / "train_log.csv")
    (out / "test_videos.txt").write_text("".join(f"{v}\n" for v in test))
    print(f"trained on {int(keep.sum())} images, {len(test)} test videos held out -> {out}")
    return EXIT_OK


def cmd_predict(args):
    model = cnn.load_model(args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    subset = None
    if args.subset:
        subset = set(Path(args.subset).read_text().split())
    if args.features:
        videos, seconds, images, _ = load_features(args.features)
        groups = {}
        for k, v in enumerate(videos):
            groups.setdefault(v, []).append(k)
        items = [(v, seconds[idx], images[idx]) for v, idx in sorted(groups.items())]
    else:
        manifest = ingest.load_manifest(args.manifest)
        items = []
        for vid, entry in zip(video_ids(manifest), manifest.entries):
            if subset is None or vid in subset:
                images, _, index = extract_entry(entry, feature_config(args), args.threads)
                items.append((vid, index, images))
    n = 0
    for vid, secs, imgs in items:
        if subset is not None and vid not in subset:
            continue
        bpm = cnn.predict_hr(model, imgs) if len(imgs) else np.zeros(0)
        write_series(out / f"{vid}.csv", secs, bpm)
        n += 1
    print(f"predictions for {n} videos -> {out}")
    return EXIT_OK


def _load_pairs(pred_dir, truth_dir):
    pairs = {}
    for p in sorted(Path(pred_dir).glob("*.csv")):
        t = Path(truth_dir) / p.name
        if not t.is_file():
            raise DataError(f"no ground truth for {p.stem} in {truth_dir}")
        ps, pv = read_series(p)
        ts, tv = read_series(t)
        common, pi, ti = np.intersect1d(ps, ts, return_indices=True)
        if len(common) != len(ps):
            raise DataError(f"{p.stem}: predicted seconds missing from ground truth")
        if len(common):
            pairs[p.stem] = (pv[pi], tv[ti])
    if not pairs:
        raise DataError(f"no prediction CSVs in {pred_dir}")
    return pairs


def evaluate_runs(pairs, windows):
    """Named EvalReports: per-second, average HR, short-time per window."""
    reports = []
    hp = np.concatenate([p for p, _ in pairs.values()])
    hgt = np.concatenate([t for _, t in pairs.values()])
    reports.append(("per-second", metrics.evaluate(hp, hgt)))
    avg_p = [metrics.average_hr_protocol(p) for p, _ in pairs.values()]
    avg_t = [metrics.average_hr_protocol(t) for _, t in pairs.values()]
    reports.append(("average-hr", metrics.evaluate(avg_p, avg_t)))
    # short-time protocol on the most variable 20% of videos by truth SD
    names = sorted(pairs, key=lambda v: (-float(np.std(pairs[v][1])), v))
    chosen = names[:max(1, math.ceil(0.2 * len(names)))]
    for w in windows:
        wp, wt, per_video = [], [], []
        for v in sorted(chosen):
            p, t = pairs[v]
            if len(p) < w:
                continue
            a, b = metrics.short_time_protocol(p, t, w)
            wp.append(a)
            wt.append(b)
            per_video.append((f"short-{w}s/{v}", metrics.evaluate(a, b)))
        if not wp:
            log.warning("no selected video is at least %d s long", w)
            continue
        reports.append((f"short-{w}s", metrics.evaluate(np.concatenate(wp), np.concatenate(wt))))
        reports.extend(per_video)
    return reports


def cmd_eval(args):
    windows = args.window or list(PAPER_WINDOWS)
    for w in windows:
        if w not in PAPER_WINDOWS:
            log.warning("window %d s differs from the 4/6/8 s protocol", w)
    reports = evaluate_runs(_load_pairs(args.predictions, args.truth), windows)
    table = metrics.format_table(reports)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.csv").write_text(metrics.reports_csv(reports))
        (out / "eval.txt").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def _bench_stage1(entries, cfg, threads):
    frames = 0
    t0 = time.perf_counter()
    images = []
    for entry in entries:
        clip = ingest.load_clip(entry)
        im, _, _ = extract_entry(clip, cfg, threads)
        frames += int(len(im) * clip.fps)
        images.append(im)
    return frames, time.perf_counter() - t0, images


def bench_report(manifest_path, model, cfg=FeatureConfig(), threads=None):
    """Throughput of stage 1 (frames/s) and stage 2 (predictions/s)."""
    entries = ingest.load_manifest(manifest_path).entries
    max_threads = threads or os.cpu_count() or 1
    report = {"threads": max_threads}
    for label, n in (("serial", 1), ("parallel", max_threads)):
        with threadpool_limits(limits=n):
            frames, dt1, images = _bench_stage1(entries, cfg, n)
            images = np.concatenate(images) if images else np.zeros((0,) + cfg.shape, np.float32)
            if len(images) == 0:
                return {"windows": 0}
            t0 = time.perf_counter()
            for img in images:
                cnn.predict_hr(model, img)
            dt2 = time.perf_counter() - t0
        report[label] = {"frames": frames, "stage1_fps": frames / dt1,
                         "predictions": len(images), "stage2_pps": len(images) / dt2}
    report["windows"] = report["serial"]["predictions"]
    return report


def cmd_bench(args):
    model = cnn.load_model(args.model) if args.model else cnn.build_model(seed=args.seed)
    report = bench_report(args.manifest, model, feature_config(args), args.threads)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------

def _add_features(p):
    g = p.add_argument_group("feature extraction")
    g.add_argument("--fps", type=int, default=25, help="frames per one-second window")
    g.add_argument("--pyramid-level", type=int, default=4)
    g.add_argument("--f-low", type=float, default=0.75, help="low cut-off in Hz")
    g.add_argument("--f-high", type=float, default=4.0, help="high cut-off in Hz")


def build_parser():
    parser = _Parser(prog="rppgnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic corpus and manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--n-clips", type=int, default=200)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--hr-lo", type=float, default=60.0)
    p.add_argument("--hr-hi", type=float, default=120.0)
    p.add_argument("--step", type=float, nargs=2, metavar=("BEFORE", "AFTER"),
                   help="programmed bpm step at mid-clip instead of constant rates")
    p.add_argument("--fps", type=float, default=25.0)
    p.add_argument("--gt-rate", type=float, default=1000.0)
    p.add_argument("--png", action="store_true", help="8-bit PNG frames instead of float")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="feature images and labels for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    _add_features(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the regressor on extracted features")
    p.add_argument("--features", required=True, help="output directory of extract")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--iters", type=int, default=15000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--val-every", type=int, default=250)
    p.add_argument("--test-fraction", type=float, default=0.125)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="per-second bpm CSV per video")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features")
    src.add_argument("--manifest")
    p.add_argument("--subset", help="file listing the videos to predict")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    _add_features(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="average-HR and short-time evaluation")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--window", type=int, action="append",
                   help="short-time window in seconds (repeatable; default 4, 6, 8)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="stage 1 and stage 2 throughput")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_features(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("rppgnet: a subcommand is required (see --help)")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = getattr(args, "threads", None) or 1
    try:
        with threadpool_limits(limits=threads):
            return args.func(args)
    except cnn.NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ModelFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
