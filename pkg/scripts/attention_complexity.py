"""Compare full and area attention: exact MAC counts and best-of-N wall time.

Prints the MAC ratio (always exactly l) next to the measured speed-up.

Usage:
    python scripts/attention_complexity.py
    python scripts/attention_complexity.py --n 256 1024 4096 --axis horizontal
"""

import argparse

from amlcell.area_attention import benchmark


def main():
    parser = argparse.ArgumentParser(description="Area attention complexity check")
    parser.add_argument("--n", type=int, nargs="+", default=[256, 1024, 2304])
    parser.add_argument("--heads", type=int, default=4)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--l", type=int, nargs="+", default=[1, 2, 4, 8])
    parser.add_argument("--axis", default="token", choices=["token", "horizontal", "vertical"])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"{'n':>6} {'l':>3} {'MACs full':>14} {'MACs area':>14} {'ratio':>6} {'speed-up':>9}")
    for r in benchmark(args.n, [args.heads], [args.dim], args.l, args.axis, repeats=args.repeats):
        ratio = r["macs_full"] / r["macs_area"]
        speedup = r["wall_ns_full"] / r["wall_ns_area"]
        print(f"{r['n']:>6} {r['l']:>3} {r['macs_full']:>14,} {r['macs_area']:>14,} {ratio:>6.2f} {speedup:>8.2f}x")


if __name__ == "__main__":
    main()
