"""Parameter and FLOP counts over the stages x channels grid.

Prints the default (width-scaled stem) counts next to the fixed
(64, 128, 128) stem variant.

    python3 scripts/cost_table.py [--json out.json]
"""
import argparse
import json

from fastpose.network import HourglassConfig, count_params, estimate_flops

GRID = ((8, 256), (4, 256), (2, 256), (1, 256), (4, 128), (4, 64), (4, 32))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--json", help="also write the rows to this file")
    args = ap.parse_args()
    rows = []
    for s, c in GRID:
        scaled = HourglassConfig(s, c)
        fixed = HourglassConfig(s, c, stem_channels=(64, 128, 128))
        rows.append({
            "stages": s, "channels": c,
            "params": count_params(scaled), "flops": estimate_flops(scaled),
            "params_fixed_stem": count_params(fixed), "flops_fixed_stem": estimate_flops(fixed),
        })
    print(f"{'stages':>6} {'ch':>4} | {'params':>8} {'FLOPs':>8} | {'params*':>8} {'FLOPs*':>8}")
    for r in rows:
        print(f"{r['stages']:>6} {r['channels']:>4} | {r['params'] / 1e6:>7.2f}M "
              f"{r['flops'] / 1e9:>7.2f}G | {r['params_fixed_stem'] / 1e6:>7.2f}M "
              f"{r['flops_fixed_stem'] / 1e9:>7.2f}G")
    print("* stem fixed at (64, 128, 128)")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rows, f, indent=2)


if __name__ == "__main__":
    main()
