"""Distilled vs ground-truth-only students on labels with 20% of joints corrupted.

    python3 scripts/corrupted_labels.py --seeds 0 1 2 --out runs/corrupted
"""
import argparse
import dataclasses
import json
import time
from pathlib import Path

from fastpose.experiments import corrupted_label_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--fraction", type=float, default=0.2)
    ap.add_argument("--teacher-steps", type=int, default=1000)
    ap.add_argument("--student-steps", type=int, default=800)
    ap.add_argument("--out", default="runs/corrupted")
    args = ap.parse_args()
    out = Path(args.out)
    rows = []
    for seed in args.seeds:
        t0 = time.time()
        r = corrupted_label_experiment(
            seed, alpha=args.alpha, corrupt_fraction=args.fraction,
            teacher_steps=args.teacher_steps, student_steps=args.student_steps,
            out_dir=out / f"seed{seed}",
        )
        row = dataclasses.asdict(r) | {"seconds": round(time.time() - t0, 1)}
        rows.append(row)
        print(json.dumps(row))
    wins = sum(r["distilled_pckh"] >= r["baseline_pckh"] for r in rows)
    print(f"distilled >= baseline on {wins}/{len(rows)} seeds")
    (out / "results.json").write_text(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
