"""End-to-end desk run: synthetic fixture -> four segmented datasets ->
stratified split -> train/eval, printing the accuracy summary table.

Usage:
    python scripts/run_desk_pipeline.py --workdir runs/desk
    python scripts/run_desk_pipeline.py --workdir runs/big --per-class 300 --jobs 4
"""

import argparse
import sys
import time
from pathlib import Path

from amlcell.cli import main as amlcell


def run(*argv):
    code = amlcell([str(a) for a in argv])
    if code != 0:
        sys.exit(f"step failed ({code}): amlcell {' '.join(map(str, argv))}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--workdir", type=Path, default=Path("runs/desk"))
    parser.add_argument("--per-class", type=int, default=100)
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    t0 = time.perf_counter()
    fx = args.workdir / "fixture"
    run("fixture", "--out", fx, "--per-class", args.per_class, "--size", args.size,
        "--seed", args.seed, "--jobs", args.jobs)

    roots = []
    for target in ("cell", "nucleus"):
        for method in ("hue", "otsu"):
            out = args.workdir / f"images-{method}-{target}"
            run("segment", "--root", fx / "images", "--out", out, "--method", method, "--target", target,
                "--resize", f"{args.size}x{args.size}", "--truth", fx / "masks", "--jobs", args.jobs)
            roots.append(out)

    manifest = args.workdir / "manifest.csv"
    run("split", "--root", fx / "images", "--out", manifest, "--seed", args.seed)

    seg_args = [a for r in roots for a in ("--seg-root", r)]
    run("train-eval", "--manifest", manifest, *seg_args, "--out", args.workdir / "results",
        "--epochs", args.epochs, "--seed", args.seed)
    print(f"done in {time.perf_counter() - t0:.1f}s; artifacts under {args.workdir / 'results'}")


if __name__ == "__main__":
    main()
