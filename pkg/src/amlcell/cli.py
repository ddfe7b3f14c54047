"""Command-line driver: fixture -> segment -> split -> train-eval, plus the
attention benchmark and a standalone metrics report.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Logs go to stderr; ``--json`` prints a machine-readable summary on stdout.

Option values may also come from ``--config FILE.json``. Top-level keys use
the option's destination name (``per_class``, ``seed``, ...) and apply to
every subcommand that has that option; an object keyed by a subcommand name
(``{"segment": {"method": "hue"}}``) applies to that subcommand only and wins
over top-level keys. Flags given on the command line win over both.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import area_attention as aa
from .dataset import CLASS_NAMES, ClassLabel, Split, SplitManifest, check_fractions, make_fixture, scan, stratified_split
from .image_core import apply_mask, dice, read_image, read_mask, resize, write_image, write_mask
from .metrics import ConfusionMatrix, report
from .segmentation import CELL_BAND, NUCLEUS_BAND, HueBand, SegConfig, SegMethod, segment_masks
from .trainer import TrainConfig, fit, load_features, predict_batch, save_params

log = logging.getLogger("amlcell")


class UsageError(Exception):
    """Bad flags or inputs; reported with exit code 2."""


# --- helpers ---------------------------------------------------------------

def _size(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)[xX](\d+)", text.strip())
    if not m or int(m.group(1)) < 1 or int(m.group(2)) < 1:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT with positive sides, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _band(text: str) -> HueBand:
    try:
        lo, hi, sat = (float(x) for x in text.split(","))
        return HueBand(lo, hi, sat)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LO,HI,MIN_SAT hue band, got {text!r} ({exc})")


def _emit(args, payload: dict, human: str | None = None) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif human:
        print(human)


# --- fixture -----------------------------------------------------------------

def cmd_fixture(args) -> int:
    if args.out is None:
        raise UsageError("fixture: --out is required")
    out = make_fixture(args.out, args.per_class, args.seed, args.size, jobs=args.jobs)
    n = args.per_class * len(ClassLabel)
    log.info("wrote %d fixture images under %s", n, out)
    _emit(args, {"out": str(out), "images": n, "masks": 2 * n},
          f"wrote {n} images and {2 * n} ground-truth masks to {out}")
    return 0


# --- segment -----------------------------------------------------------------

def _segment_one(task):
    src, dst, mask_dst, truth, seg, cfg, size = task
    img = read_image(src)
    cell, nucleus = segment_masks(img, seg.method, cfg)
    mask = cell if seg.target.value == "cell" else nucleus
    write_image(dst, resize(apply_mask(img, mask), *size))
    if mask_dst is not None:
        write_mask(mask_dst, mask)
    score = None
    if truth is not None:
        if not truth.is_file():
            raise FileNotFoundError(f"ground-truth mask {truth} is missing")
        score = dice(mask, read_mask(truth))
    return {
        "foreground": float(mask.mean()),
        "dice": score,
        "nucleus_in_cell": bool(np.all(nucleus <= cell)),
    }


def cmd_segment(args) -> int:
    if args.root is None:
        raise UsageError("segment: --root is required")
    if args.resize is None:
        raise UsageError("segment: --resize WIDTHxHEIGHT is required (the model input size)")
    root = Path(args.root)
    try:
        samples = scan(root)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(f"segment: bad input tree: {exc}") from exc
    seg = SegMethod(args.method, args.target)
    out = Path(args.out) if args.out else root.with_name(f"{root.name}-{seg.method.value}-{seg.target.value}")
    mask_root = out.parent / "masks" / out.name if args.save_masks else None
    truth_root = Path(args.truth) / seg.target.value if args.truth else None
    if truth_root is not None and not truth_root.is_dir():
        raise UsageError(f"segment: ground-truth directory {truth_root} does not exist")
    cfg = SegConfig(cell_band=args.cell_band, nucleus_band=args.nucleus_band)

    tasks = [
        (root / p, out / p, mask_root / p if mask_root else None,
         truth_root / p if truth_root else None, seg, cfg, args.resize)
        for p, _ in samples
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_segment_one, tasks, chunksize=8))
    else:
        results = [_segment_one(t) for t in tasks]

    per_class = {}
    for (_, label), res in zip(samples, results):
        per_class.setdefault(label.dirname, []).append(res)
    summary = {"variant": seg.variant, "out": str(out), "classes": {}}
    lines = []
    for name, rows in per_class.items():
        fg = [r["foreground"] for r in rows]
        stats = {
            "images": len(rows),
            "foreground_mean": float(np.mean(fg)),
            "foreground_min": float(np.min(fg)),
            "foreground_max": float(np.max(fg)),
            "nucleus_in_cell": sum(r["nucleus_in_cell"] for r in rows),
        }
        line = (f"{seg.variant} {name}: n={len(rows)} fg mean={stats['foreground_mean']:.4f} "
                f"min={stats['foreground_min']:.4f} max={stats['foreground_max']:.4f} "
                f"nucleus-in-cell={stats['nucleus_in_cell']}/{len(rows)}")
        if truth_root is not None:
            d = [r["dice"] for r in rows]
            stats.update(dice_mean=float(np.mean(d)), dice_min=float(np.min(d)))
            line += f" dice mean={stats['dice_mean']:.4f} min={stats['dice_min']:.4f}"
        summary["classes"][name] = stats
        lines.append(line)
    summary["nucleus_in_cell_all"] = all(r["nucleus_in_cell"] for r in results)
    _emit(args, summary, "\n".join(lines))
    return 0


# --- split -------------------------------------------------------------------

def cmd_split(args) -> int:
    if args.root is None or args.out is None:
        raise UsageError("split: --root and --out are required")
    try:
        fractions = check_fractions(args.fractions)
        samples = scan(args.root)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(f"split: {exc}") from exc
    manifest = stratified_split(samples, fractions, args.seed)
    manifest.write(args.out)
    counts = manifest.counts()
    table = {c.dirname: {s.value: counts.get((c, s), 0) for s in Split} for c in ClassLabel}
    _emit(args, {"manifest": str(args.out), "counts": table},
          "\n".join(f"{c}: " + " / ".join(str(v) for v in t.values()) for c, t in table.items()))
    return 0


# --- train-eval -------------------------------------------------------------

_VARIANT_SUFFIX = re.compile(r"-(hue|otsu)-(cell|nucleus)$")


def _parse_seg_root(text: str) -> tuple[str, Path]:
    if "=" in text:
        name, path = text.split("=", 1)
        return name, Path(path)
    path = Path(text)
    m = _VARIANT_SUFFIX.search(path.name)
    return (f"{m.group(2)}-{m.group(1)}" if m else path.name), path


def cmd_train_eval(args) -> int:
    if args.manifest is None or not args.seg_root or args.out is None:
        raise UsageError("train-eval: --manifest, --seg-root and --out are required")
    if not Path(args.manifest).is_file():
        raise UsageError(f"train-eval: manifest {args.manifest} does not exist")
    variants = [_parse_seg_root(s) for s in args.seg_root]
    for name, path in variants:
        if not path.is_dir():
            raise UsageError(f"train-eval: segmented tree for {name} not found: {path}")
    if len({n for n, _ in variants}) != len(variants):
        raise UsageError("train-eval: variant names must be unique")
    try:
        cfg = TrainConfig(args.epochs, args.lr, args.batch_size, args.seed, args.l2)
    except ValueError as exc:
        raise UsageError(f"train-eval: {exc}") from exc
    manifest = SplitManifest.read(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for name, path in variants:
        vdir = out / name
        vdir.mkdir(parents=True, exist_ok=True)
        X_tr, y_tr = load_features(manifest, path, "train")
        X_va, y_va = load_features(manifest, path, "val")
        W, curve = fit(X_tr, y_tr, X_va, y_va, cfg)
        del X_tr, y_tr
        # the test split is loaded once, after all fitting is finished
        X_te, y_te = load_features(manifest, path, "test")

        accs = {}
        for split, X, y in (("val", X_va, y_va), ("test", X_te, y_te)):
            cm = ConfusionMatrix.from_labels(len(ClassLabel), y, predict_batch(W, X))
            (vdir / f"confusion_{split}.csv").write_text(cm.to_csv(CLASS_NAMES), encoding="utf-8")
            rep = report(cm, CLASS_NAMES)
            rep.write(vdir / f"metrics_{split}.json")
            accs[split] = rep.overall_accuracy
        (vdir / "loss_curve.csv").write_text(curve.to_csv(), encoding="utf-8")
        save_params(vdir / "model.bin", W)
        log.info("%s: val %.4f test %.4f", name, accs["val"], accs["test"])
        rows.append({"variant": name, "val_accuracy": accs["val"], "test_accuracy": accs["test"]})

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "val_accuracy", "test_accuracy"])
    for r in rows:
        w.writerow([r["variant"], f"{r['val_accuracy']:.6f}", f"{r['test_accuracy']:.6f}"])
    (out / "summary.csv").write_text(buf.getvalue(), encoding="utf-8")
    _emit(args, {"out": str(out), "variants": rows}, buf.getvalue().rstrip("\n"))
    return 0


# --- attn-bench --------------------------------------------------------------

def cmd_attn_bench(args) -> int:
    rows = list(aa.benchmark(args.n, args.heads, args.dim, args.l, args.axis, args.seed, args.repeats))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=aa.BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    if args.json:
        print(json.dumps(rows, indent=2))
    elif not args.out:
        sys.stdout.write(buf.getvalue())
    return 0


# --- report ------------------------------------------------------------------

def cmd_report(args) -> int:
    if args.confusion is None:
        raise UsageError("report: --confusion is required")
    path = Path(args.confusion)
    if not path.is_file():
        raise UsageError(f"report: {path} does not exist")
    try:
        cm, labels = ConfusionMatrix.from_csv(path.read_text(encoding="utf-8"))
        rep = report(cm, labels)
    except ValueError as exc:
        raise UsageError(f"report: {path}: {exc}") from exc
    if args.out:
        rep.write(args.out)
    if args.json:
        sys.stdout.write(rep.to_json())
    else:
        d = rep.to_dict()
        lines = [f"overall accuracy {d['overall_accuracy']} over {d['total']} samples"]
        for name, m in d["per_class"].items():
            lines.append(f"  {name:16s} " + " ".join(f"{k}={v}" for k, v in m.items()))
        lines.append("  macro            " + " ".join(f"{k}={v}" for k, v in d["macro"].items()))
        print("\n".join(lines))
    return 0


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--json", action="store_true", help="print a machine-readable summary on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="amlcell", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fixture", parents=[common], help="generate a synthetic stained-cell corpus")
    sp.add_argument("--out")
    sp.add_argument("--per-class", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=int, default=128, help="image side in pixels")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_fixture)

    sp = sub.add_parser("segment", parents=[common], help="segment a class-per-directory image tree")
    sp.add_argument("--root", help="input tree root/<class>/<image>")
    sp.add_argument("--out", help="output tree (default: <root>-<method>-<target>)")
    sp.add_argument("--method", choices=["hue", "otsu"], default="otsu")
    sp.add_argument("--target", choices=["cell", "nucleus"], default="cell")
    sp.add_argument("--resize", type=_size, help="output size WIDTHxHEIGHT (required)")
    sp.add_argument("--cell-band", type=_band, default=CELL_BAND, help="LO,HI,MIN_SAT")
    sp.add_argument("--nucleus-band", type=_band, default=NUCLEUS_BAND, help="LO,HI,MIN_SAT")
    sp.add_argument("--truth", help="ground-truth mask root with cell/ and nucleus/ subtrees")
    sp.add_argument("--save-masks", action="store_true",
                    help="also write masks to <out parent>/masks/<out name>/")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("split", parents=[common], help="write a stratified split manifest")
    sp.add_argument("--root")
    sp.add_argument("--out", help="manifest CSV path")
    sp.add_argument("--fractions", type=float, nargs=3, default=[0.70, 0.15, 0.15],
                    metavar=("TRAIN", "VAL", "TEST"))
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train-eval", parents=[common], help="train and evaluate on segmented trees")
    sp.add_argument("--manifest")
    sp.add_argument("--seg-root", action="append", default=[],
                    help="segmented tree, optionally NAME=PATH; repeat per variant")
    sp.add_argument("--out")
    sp.add_argument("--epochs", type=int, default=50)
    sp.add_argument("--lr", type=float, default=0.1)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--l2", type=float, default=1e-4)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train_eval)

    sp = sub.add_parser("attn-bench", parents=[common], help="full vs area attention MACs and timing")
    sp.add_argument("--n", type=int, nargs="+", default=[64, 256, 1024])
    sp.add_argument("--heads", type=int, nargs="+", default=[2])
    sp.add_argument("--dim", type=int, nargs="+", default=[8])
    sp.add_argument("--l", type=int, nargs="+", default=[1, 2, 4, 8])
    sp.add_argument("--axis", choices=[a.value for a in aa.Axis], default="token")
    sp.add_argument("--repeats", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="CSV path (default: stdout)")
    sp.set_defaults(func=cmd_attn_bench)

    sp = sub.add_parser("report", parents=[common], help="metrics from a confusion-matrix CSV")
    sp.add_argument("--confusion")
    sp.add_argument("--out", help="write the metrics JSON here")
    sp.set_defaults(func=cmd_report)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(cfg, dict):
        parser.error(f"config {known.config} must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subparsers.choices.items():
        dests = {a.dest: a for a in sp._actions}
        values = {k: v for k, v in cfg.items() if k in dests and not isinstance(v, dict)}
        values.update({k: v for k, v in cfg.get(name, {}).items() if k in dests})
        for k, v in values.items():
            action = dests[k]
            if action.type is not None and isinstance(v, str):
                v = action.type(v)
            sp.set_defaults(**{k: v})


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"amlcell: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        print(f"amlcell: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
