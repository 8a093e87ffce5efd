"""Desk-scale experiments on the synthetic stick-figure data.

These are small, seeded re-enactments of the training protocol that finish
in minutes on a CPU. They exercise the same training code that a full run on
the real benchmarks would use.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import AugmentParams, PoseDataset, Sample, corrupt_joints, synth_dataset
from .heatmap import GaussianConfig
from .losses import LossConfig
from .network import HourglassConfig
from .training import (
    Checkpoint,
    TrainConfig,
    TrainLog,
    distill_student,
    evaluate_model,
    save_checkpoint,
    train_teacher,
)

__all__ = [
    "DESK_GAUSSIAN",
    "DESK_AUGMENT",
    "overfit_sanity",
    "CorruptionResult",
    "corrupted_label_experiment",
    "alpha_sweep",
]

# unit-peak targets train far faster than the 1/(2 pi sigma^2) ones at this scale
DESK_GAUSSIAN = GaussianConfig(sigma=2.0, normalized_peak=False)
# colour-coded joints make mirrored samples ambiguous, so no flipping
DESK_AUGMENT = AugmentParams(scale_range=(0.75, 1.25), max_rotation=30.0, hflip_prob=0.0,
                             flip_pairs=())


def _samples(n: int, k: int, seed: int, size: int) -> list[Sample]:
    return [s for s, _ in synth_dataset(n, k, rng_seed=seed, size=size)]


def overfit_sanity(seed: int = 0, n: int = 16, max_steps: int = 2000, target: float = 0.95,
                   config: HourglassConfig = HourglassConfig(1, 32), trainlog=None):
    """Train on ``n`` synthetic samples and stop once train-set PCKh@0.5 hits ``target``.

    Returns ``(checkpoint, train_log)``; ``checkpoint.best_metric`` is the best
    train-set PCKh seen and ``checkpoint.step`` the number of steps taken.
    """
    data = _samples(n, config.num_joints, seed, config.input_size)
    tc = TrainConfig(
        epochs=max_steps, max_steps=max_steps, augment=None, gaussian=DESK_GAUSSIAN,
        seed=seed, eval_interval=10**9, eval_every_steps=100, target_metric=target,
    )
    trainlog = trainlog or TrainLog()
    ckpt = train_teacher(data, config, tc, valid_items=data, trainlog=trainlog)
    return ckpt, trainlog


@dataclasses.dataclass
class CorruptionResult:
    seed: int
    teacher_pckh: float
    distilled_pckh: float
    baseline_pckh: float
    alpha: float
    corrupted_fraction: float


def corrupted_label_experiment(
    seed: int,
    alpha: float = 0.5,
    corrupt_fraction: float = 0.2,
    n_train: int = 48,
    n_valid: int = 32,
    input_size: int = 128,
    teacher_config: Optional[HourglassConfig] = None,
    student_config: Optional[HourglassConfig] = None,
    teacher_steps: int = 1000,
    student_steps: int = 800,
    out_dir=None,
) -> CorruptionResult:
    """Noisy-label comparison of a distilled student against a ground-truth-only one.

    A teacher is trained on clean labels. Two identical students are then
    trained on copies of the same images in which ``corrupt_fraction`` of the
    joint labels were moved to random positions: one with the given ``alpha``
    and one with ``alpha = 0``. Both are scored on clean held-out samples.
    """
    tcfg = teacher_config or HourglassConfig(2, 64, input_size=input_size)
    scfg = student_config or HourglassConfig(1, 32, input_size=input_size)
    k = scfg.num_joints
    rng = np.random.default_rng([seed, 7])
    train = _samples(n_train, k, seed, input_size)
    valid = _samples(n_valid, k, seed + 10_000, input_size)

    noisy = []
    for s in train:
        joints, _ = corrupt_joints(s.joints, corrupt_fraction, rng, size=input_size,
                                   margin=input_size / 32)
        noisy.append(dataclasses.replace(s, joints=joints))

    def tc(steps: int, a: float) -> TrainConfig:
        return TrainConfig(
            epochs=10**6, max_steps=steps, augment=DESK_AUGMENT, gaussian=DESK_GAUSSIAN,
            seed=seed, eval_interval=10**9, eval_every_steps=steps // 4,
            loss=LossConfig(alpha=a),
        )

    out = Path(out_dir) if out_dir is not None else None
    logp = (lambda name: out / f"{name}.jsonl") if out else (lambda name: None)

    teacher = train_teacher(train, tcfg, tc(teacher_steps, 0.0), valid_items=valid,
                            log_path=logp("teacher"))
    distilled = distill_student(noisy, teacher, scfg, tc(student_steps, alpha),
                                valid_items=valid, log_path=logp(f"student_alpha{alpha}"))
    baseline = distill_student(noisy, teacher, scfg, tc(student_steps, 0.0),
                               valid_items=valid, log_path=logp("student_alpha0"))
    if out is not None:
        save_checkpoint(teacher, out / "teacher.pt")
        save_checkpoint(distilled, out / f"student_alpha{alpha}.pt")
        save_checkpoint(baseline, out / "student_alpha0.pt")

    spec_valid = PoseDataset(valid, scfg.image_spec, DESK_GAUSSIAN)
    scores = [evaluate_model(c.build(), spec_valid).mean_pck for c in (teacher, distilled, baseline)]
    return CorruptionResult(seed, *scores, alpha=alpha, corrupted_fraction=corrupt_fraction)


def alpha_sweep(
    alphas: Sequence[float],
    train_items,
    teacher,
    student_config: HourglassConfig,
    tc: TrainConfig,
    valid_items=None,
    out_dir=None,
    image_root=None,
) -> dict[float, tuple[Checkpoint, TrainLog]]:
    """One distillation run per ``alpha``, each with its own log and checkpoint."""
    results = {}
    for a in alphas:
        run_dir = Path(out_dir) / f"alpha_{a:g}" if out_dir is not None else None
        trainlog = TrainLog(run_dir / "train_log.jsonl" if run_dir else None)
        cfg = dataclasses.replace(tc, loss=dataclasses.replace(tc.loss, alpha=float(a)))
        ckpt = distill_student(train_items, teacher, student_config, cfg, valid_items=valid_items,
                               image_root=image_root, trainlog=trainlog)
        if run_dir is not None:
            save_checkpoint(ckpt, run_dir / "student.pt")
        results[float(a)] = (ckpt, trainlog)
    return results
