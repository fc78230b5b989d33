"""kneeloc command line: synth, train, detect, evaluate, sweep, bench.

Exit codes: 0 success, 1 usage/contract error, 2 partial data failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import linsvm
from .config import RunConfig
from .detector import (DEFAULT_P_LIST, DEFAULT_THRESHOLDS, build_trainset, detect_batch, evaluate,
                       phantom_corpus, proposal_recall_sweep)
from .detector.evaluation import write_per_leg_csv, write_report_csv, write_sweep_csv
from .detector.pipeline import resolve_threads
from .detector.records import load_corpus, read_annotations, read_detections, write_jsonl
from .imagio import DecodeError, read_image, write_image

log = logging.getLogger("kneeloc")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2
IMAGE_SUFFIXES = (".png", ".pgm")
MS_PER_DAY = 86_400_000


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")
    return w, h


def load_config(path) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig()


def thread_count(args, cfg: RunConfig) -> int:
    if getattr(args, "threads", None) is not None:
        return resolve_threads(args.threads)
    env = os.environ.get("KNEELOC_THREADS")
    if env:
        return resolve_threads(int(env))
    return resolve_threads(cfg.threads)


def list_images(images_dir) -> list[Path]:
    d = Path(images_dir)
    if not d.is_dir():
        raise UsageError(f"not a directory: {d}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_model(path):
    try:
        return linsvm.load_file(path)
    except FileNotFoundError:
        raise UsageError(f"model file not found: {path}") from None


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width, height = args.size
    anns = []
    for img, ann in phantom_corpus(args.seed, args.count, width, height, args.noise):
        write_image(out / ann.image_id, img)
        anns.append(ann)
        print(ann.image_id)
    write_jsonl(out / "annotations.jsonl", anns)
    print(f"wrote {len(anns)} phantoms ({width}x{height}, noise sd {args.noise}) "
          f"and annotations.jsonl to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    corpus = load_corpus(args.images, read_annotations(args.annotations))
    data = build_trainset(corpus, cfg.proposer, cfg.hog, cfg.trainset.pos_iou,
                          cfg.trainset.augment)
    n_aug = data.n_augmented
    n_orig = data.n_pos - n_aug
    if data.n_pos == 0:
        raise UsageError(f"zero positives: no proposal reaches IoU >= {cfg.trainset.pos_iou} "
                         "against its annotation; pos_iou is too strict for this corpus")
    if data.n_neg == 0:
        raise UsageError("zero negatives: every proposal matched its annotation")
    factor = data.n_pos / n_orig if n_orig else 0.0
    print(f"trainset: {len(data.labels)} samples, positives {data.n_pos} "
          f"({n_orig} original + {n_aug} augmented, {factor:g}x), negatives {data.n_neg}")
    s = cfg.svm
    sol = linsvm.fit_dual(data, s.c_reg, s.tol, s.max_epochs, s.seed, s.loss)
    linsvm.save_file(args.model, sol.model)
    status = "converged" if sol.converged else "epoch limit reached"
    print(f"svm: {status} after {sol.epochs} epochs, max violation {sol.violation:.3g}, "
          f"dual objective {sol.dual_objective:.10g}")
    print(f"model written to {args.model}")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    model = load_model(args.model)
    paths = list_images(args.images)
    items = [(p.name, p) for p in paths]
    results = detect_batch(items, model, cfg.proposer, cfg.hog, thread_count(args, cfg))
    dets = [d for d in results if d is not None]
    write_jsonl(args.out, dets)
    failed = len(results) - len(dets)
    mean_ms = float(np.mean([d.elapsed for d in dets])) if dets else 0.0
    print(f"detected {len(dets)} images, {failed} skipped, mean {mean_ms:.1f} ms/image "
          "(decode excluded)")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_evaluate(args) -> int:
    dets = read_detections(args.detections)
    anns = read_annotations(args.annotations)
    try:
        report = evaluate(dets, anns, args.thresholds)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    out = args.out or str(Path(args.detections).with_suffix(".eval.csv"))
    write_report_csv(out, report)
    if args.per_leg:
        write_per_leg_csv(args.per_leg, report)
    print(f"legs: {len(report.per_image_iou)}  mean IoU: {report.mean_iou:.4f}  "
          f"mean time: {report.mean_ms:.1f} ms/image")
    print("threshold  recall")
    for t, r in report.recall_at.items():
        print(f"{t:9g}  {r:.4f}")
    print(f"written to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    corpus = load_corpus(args.images, read_annotations(args.annotations))
    rows = proposal_recall_sweep(corpus, cfg.proposer, args.p_list, args.thresholds)
    write_sweep_csv(args.out, rows)
    print("p  threshold  recall")
    for p, t, r in rows:
        print(f"{p}  {t:g}  {r:.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    model = load_model(args.model)
    threads = thread_count(args, cfg)
    items, skipped = [], 0
    for p in list_images(args.images):
        try:
            items.append((p.name, read_image(p)))
        except (OSError, DecodeError) as exc:
            log.warning("skipping %s: %s", p.name, exc)
            skipped += 1
    if not items:
        raise UsageError("no decodable images")
    print(f"bench: {len(items)} images, {threads} thread(s), {args.repeat} run(s); "
          "decode excluded from timing")
    # untimed warm-up: loads compiled kernels and the HoG vote table
    detect_batch(items[:1], model, cfg.proposer, cfg.hog, 1)
    totals = []
    for run in range(args.repeat):
        t0 = time.perf_counter()
        detect_batch(items, model, cfg.proposer, cfg.hog, threads)
        total = time.perf_counter() - t0
        totals.append(total)
        print(f"run {run + 1}: {total:.4f} s, {1000 * total / len(items):.1f} ms/image")
    mean = float(np.mean(totals))
    ms = 1000 * mean / len(items)
    print(f"mean: {mean:.4f} s, {ms:.1f} ms/image, "
          f"~{MS_PER_DAY / ms:,.0f} images/day at {threads} thread(s)")
    return EXIT_PARTIAL if skipped else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kneeloc", description=__doc__.splitlines()[0])
    parser.add_argument("--dump-config", action="store_true",
                        help="print the effective RunConfig as JSON and exit")
    parser.add_argument("--config", help="RunConfig JSON (used with --dump-config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="write seeded phantom radiographs + annotations")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_size, default=(2400, 2000), help="WxH (default 2400x2000)")
    p.add_argument("--noise", type=float, default=8.0, help="Gaussian noise sd")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="build the HoG trainset and fit the SVM")
    p.add_argument("--images", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="localise both knee joints in every image")
    p.add_argument("--images", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="mean IoU and recall at IoU thresholds")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--thresholds", type=_floats, default=list(DEFAULT_THRESHOLDS))
    p.add_argument("--out", help="CSV path (default: <detections>.eval.csv)")
    p.add_argument("--per-leg", help="optional per-leg IoU CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="best-proposal recall over x steps")
    p.add_argument("--images", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--config")
    p.add_argument("--p-list", type=_ints, default=list(DEFAULT_P_LIST))
    p.add_argument("--thresholds", type=_floats, default=list(DEFAULT_THRESHOLDS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time detection over a corpus")
    p.add_argument("--images", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--config")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.dump_config:
            sys.stdout.write(load_config(args.config).dumps())
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except (UsageError, ValueError, FileNotFoundError, OSError, json.JSONDecodeError) as exc:
        print(f"kneeloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
