"""Overfit a 1-stage, 32-channel network on 16 synthetic samples.

Stops once train-set PCKh@0.5 reaches the target or after --max-steps.

    python3 scripts/overfit_sanity.py --out runs/overfit
"""
import argparse
import json
import time
from pathlib import Path

from fastpose.experiments import overfit_sanity
from fastpose.network import HourglassConfig
from fastpose.training import TrainLog


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-steps", type=int, default=2000)
    ap.add_argument("--target", type=float, default=0.95)
    ap.add_argument("--out", default="runs/overfit")
    args = ap.parse_args()
    out = Path(args.out)
    log = TrainLog(out / "train_log.jsonl")
    t0 = time.time()
    ckpt, _ = overfit_sanity(args.seed, max_steps=args.max_steps, target=args.target,
                             config=HourglassConfig(1, 32), trainlog=log)
    summary = {"seed": args.seed, "train_pckh": ckpt.best_metric, "steps": ckpt.step,
               "seconds": round(time.time() - t0, 1)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
