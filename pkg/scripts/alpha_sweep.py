"""Distillation-weight sweep on synthetic data.

Trains one teacher, then one student per alpha, and reports each student's
validation PCKh@0.5. Per-step loss terms land in <out>/alpha_<a>/train_log.jsonl.
With real data, use ``fastpose distill --alpha ...`` instead.

    python3 scripts/alpha_sweep.py --out runs/alpha_sweep
"""
import argparse
import json
from pathlib import Path

from fastpose.data import synth_dataset
from fastpose.experiments import DESK_AUGMENT, DESK_GAUSSIAN, alpha_sweep
from fastpose.network import HourglassConfig
from fastpose.training import TrainConfig, save_checkpoint, train_teacher

ALPHAS = (0.0, 0.05, 0.1, 0.5, 0.95, 0.99)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alphas", type=float, nargs="+", default=list(ALPHAS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--n-train", type=int, default=48)
    ap.add_argument("--n-valid", type=int, default=32)
    ap.add_argument("--teacher-steps", type=int, default=1000)
    ap.add_argument("--student-steps", type=int, default=600)
    ap.add_argument("--out", default="runs/alpha_sweep")
    args = ap.parse_args()
    out = Path(args.out)

    train = [s for s, _ in synth_dataset(args.n_train, 16, rng_seed=args.seed, size=args.size)]
    valid = [s for s, _ in synth_dataset(args.n_valid, 16, rng_seed=args.seed + 10_000,
                                         size=args.size)]

    def tc(steps):
        return TrainConfig(epochs=10**6, max_steps=steps, gaussian=DESK_GAUSSIAN,
                           augment=DESK_AUGMENT, seed=args.seed, eval_interval=10**9,
                           eval_every_steps=max(steps // 4, 1))

    teacher = train_teacher(train, HourglassConfig(2, 64, input_size=args.size),
                            tc(args.teacher_steps), valid_items=valid,
                            log_path=out / "teacher.jsonl")
    save_checkpoint(teacher, out / "teacher.pt")
    print(f"teacher val PCKh@0.5 {teacher.best_metric:.3f}")
    results = alpha_sweep(args.alphas, train, teacher, HourglassConfig(1, 32, input_size=args.size),
                          tc(args.student_steps), valid_items=valid, out_dir=out)
    summary = {f"{a:g}": ck.best_metric for a, (ck, _) in results.items()}
    for a, v in summary.items():
        print(f"alpha={a:>5}: student val PCKh@0.5 {v:.3f}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
