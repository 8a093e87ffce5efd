"""Two-stage training: a teacher on ground truth, then a student distilled from it."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
from torch import nn

from .data import AnnotationRecord, AugmentParams, PoseDataset, Sample
from .heatmap import GaussianConfig, decode_batch
from .losses import LossConfig, fpd_loss
from .metrics import EvalResult, evaluate
from .network import HourglassConfig, PoseNet, build_model

__all__ = [
    "TrainConfig",
    "Checkpoint",
    "CheckpointError",
    "IncompatibleCheckpointError",
    "ContractError",
    "TrainingDivergedError",
    "TrainLog",
    "train_teacher",
    "distill_student",
    "save_checkpoint",
    "load_checkpoint",
    "weight_digest",
    "predict",
    "evaluate_model",
    "GroundTruthTeacher",
]

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class ContractError(ValueError):
    pass


class CheckpointError(RuntimeError):
    pass


class IncompatibleCheckpointError(CheckpointError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2.5e-4
    rmsprop_alpha: float = 0.99
    rmsprop_eps: float = 1e-8
    batch_size: int = 4
    epochs: int = 130
    max_steps: Optional[int] = None
    """Stop after this many optimiser steps even if epochs remain."""
    loss: LossConfig = LossConfig()
    gaussian: GaussianConfig = GaussianConfig()
    augment: Optional[AugmentParams] = AugmentParams()
    seed: int = 0
    eval_interval: int = 1
    """Validate every this many epochs (and at the end)."""
    eval_every_steps: Optional[int] = None
    """Also validate every this many steps; useful for tiny datasets."""
    target_metric: Optional[float] = None
    """Stop as soon as validation mean PCK reaches this value."""
    lr_step: Optional[int] = None
    lr_gamma: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            d["loss"] = LossConfig(**d["loss"])
        if isinstance(d.get("gaussian"), dict):
            d["gaussian"] = GaussianConfig(**d["gaussian"])
        aug = d.get("augment")
        if isinstance(aug, dict):
            aug = dict(aug)
            aug["scale_range"] = tuple(aug.get("scale_range", (0.75, 1.25)))
            aug["flip_pairs"] = tuple(tuple(p) for p in aug.get("flip_pairs", ()))
            d["augment"] = AugmentParams(**aug)
        return cls(**d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _config_to_dict(cfg: HourglassConfig) -> dict:
    return _plain(dataclasses.asdict(cfg))


def _config_from_dict(d: dict) -> HourglassConfig:
    d = dict(d)
    if d.get("stem_channels") is not None:
        d["stem_channels"] = tuple(d["stem_channels"])
    return HourglassConfig(**d)


@dataclasses.dataclass
class Checkpoint:
    state_dict: dict
    model_config: HourglassConfig
    train_config: dict
    epoch: int = 0
    step: int = 0
    best_metric: Optional[float] = None
    rng_state: Optional[torch.Tensor] = None
    role: str = "student"

    def build(self) -> PoseNet:
        model = PoseNet(self.model_config)
        model.load_state_dict(self.state_dict)
        model.eval()
        return model

    def digest(self) -> str:
        return _state_digest(self.state_dict)


def _state_digest(state: dict) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def weight_digest(model: nn.Module) -> str:
    return _state_digest(model.state_dict())


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write atomically: a crash mid-save never leaves a half-written file at ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": "fastpose-checkpoint",
        "version": CHECKPOINT_VERSION,
        "role": ckpt.role,
        "model_config": _config_to_dict(ckpt.model_config),
        "train_config": ckpt.train_config,
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "best_metric": ckpt.best_metric,
        "rng_state": ckpt.rng_state,
        "state_dict": {k: v.detach().cpu() for k, v in ckpt.state_dict.items()},
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def load_checkpoint(path, expected_config: Optional[HourglassConfig] = None) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:  # torch raises several types for damaged archives
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    if not isinstance(payload, dict) or payload.get("format") != "fastpose-checkpoint":
        raise CheckpointError(f"{path} is not a fastpose checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise IncompatibleCheckpointError(
            f"{path} has checkpoint version {payload.get('version')}, expected {CHECKPOINT_VERSION}"
        )
    cfg = _config_from_dict(payload["model_config"])
    if expected_config is not None and cfg != expected_config:
        raise ContractError(f"checkpoint {path} holds {cfg}, expected {expected_config}")
    return Checkpoint(
        state_dict=payload["state_dict"],
        model_config=cfg,
        train_config=payload["train_config"],
        epoch=payload["epoch"],
        step=payload["step"],
        best_metric=payload["best_metric"],
        rng_state=payload["rng_state"],
        role=payload["role"],
    )


class TrainLog:
    """Line-delimited JSON records, kept in memory and optionally appended to a file."""

    def __init__(self, path=None):
        self.records: list[dict] = []
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, **rec):
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a") as f:
                f.write(json.dumps(rec) + "\n")

    def steps(self) -> list[dict]:
        return [r for r in self.records if r.get("kind") == "step"]

    def losses(self) -> list[float]:
        return [r["total"] for r in self.steps()]


# -- inference -------------------------------------------------------------


def _as_dataset(items, cfg: HourglassConfig, tc: TrainConfig, train: bool, image_root=None):
    if isinstance(items, PoseDataset):
        return items
    return PoseDataset(
        items,
        spec=cfg.image_spec,
        gaussian=tc.gaussian,
        augment_params=tc.augment if train else None,
        image_root=image_root,
        seed=tc.seed,
    )


@torch.no_grad()
def predict(model: nn.Module, dataset: PoseDataset, batch_size: int = 8, refine: bool = True):
    """Final-stage predictions mapped back to each item's source image frame.

    Returns ``(coords, maxvals)`` shaped ``(N, K, 2)`` and ``(N, K)``.
    """
    was_training = model.training
    model.eval()
    coords, vals = [], []
    stride = dataset.spec.stride
    try:
        for start in range(0, len(dataset), batch_size):
            samples = [dataset.sample(i) for i in range(start, min(start + batch_size, len(dataset)))]
            x = torch.from_numpy(np.stack([s.image for s in samples]))
            maps = model(x)[-1]
            c, v = decode_batch(maps, stride, refine=refine)
            for j, s in enumerate(samples):
                if s.transform is not None:
                    m = np.vstack([s.transform, [0, 0, 1]])
                    inv = np.linalg.inv(m)[:2]
                    c[j] = c[j] @ inv[:, :2].T + inv[:, 2]
            coords.append(c)
            vals.append(v)
    finally:
        model.train(was_training)
    return np.concatenate(coords), np.concatenate(vals)


def _records_of(dataset: PoseDataset) -> list[AnnotationRecord]:
    out = []
    for item in dataset.items:
        rec = item.meta if isinstance(item, Sample) else item
        if rec is None:
            raise ValueError("evaluation needs samples that carry their AnnotationRecord")
        out.append(rec)
    return out


def evaluate_model(model: nn.Module, dataset: PoseDataset, protocol: str = "pckh_05",
                   batch_size: int = 8) -> EvalResult:
    coords, _ = predict(model, dataset, batch_size)
    return evaluate(coords, _records_of(dataset), protocol)


# -- training loop ---------------------------------------------------------


class GroundTruthTeacher:
    """Stand-in teacher that answers with the batch's own ground-truth maps."""

    def __call__(self, batch: dict) -> torch.Tensor:
        return batch["target"]


def _seed_everything(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)


def _stage_reports(outputs, teacher_maps, target, mask, loss_cfg: LossConfig):
    reports = [fpd_loss(o, teacher_maps, target, loss_cfg, mask) for o in outputs]
    total = sum(r.total for r in reports)
    mse = sum(float(r.mse_term.detach()) for r in reports)
    dist = sum(float(r.distill_term.detach()) for r in reports)
    return total, mse, dist


def _fit(
    model: PoseNet,
    train_ds: PoseDataset,
    valid_ds: Optional[PoseDataset],
    tc: TrainConfig,
    loss_cfg: LossConfig,
    teacher_fn: Optional[Callable[[dict], torch.Tensor]],
    trainlog: TrainLog,
    role: str,
) -> Checkpoint:
    _seed_everything(tc.seed)
    optimizer = torch.optim.RMSprop(
        model.parameters(), lr=tc.learning_rate, alpha=tc.rmsprop_alpha, eps=tc.rmsprop_eps
    )
    scheduler = (
        torch.optim.lr_scheduler.StepLR(optimizer, tc.lr_step, tc.lr_gamma) if tc.lr_step else None
    )
    gen = torch.Generator().manual_seed(tc.seed)
    loader = torch.utils.data.DataLoader(
        train_ds, batch_size=tc.batch_size, shuffle=True, generator=gen, num_workers=0
    )

    best_state = copy.deepcopy(model.state_dict())
    best_metric: Optional[float] = None
    best_epoch, step, epoch = 0, 0, 0
    done = False

    def validate(epoch_now: int):
        nonlocal best_state, best_metric, best_epoch, done
        if valid_ds is None:
            return
        res = evaluate_model(model, valid_ds)
        trainlog.write(kind="eval", step=step, epoch=epoch_now, mean_pck=res.mean_pck, auc=res.auc)
        if best_metric is None or res.mean_pck > best_metric:
            best_metric, best_epoch = res.mean_pck, epoch_now
            best_state = copy.deepcopy(model.state_dict())
        if tc.target_metric is not None and res.mean_pck >= tc.target_metric:
            done = True

    for epoch in range(1, tc.epochs + 1):
        train_ds.set_epoch(epoch)
        model.train()
        for batch in loader:
            target, mask = batch["target"], batch["mask"]
            if teacher_fn is None:
                teacher_maps = target
            else:
                # teacher inference for this batch completes before the student update
                with torch.no_grad():
                    teacher_maps = teacher_fn(batch).detach()
                if teacher_maps.shape != target.shape:
                    raise ContractError(
                        f"teacher maps {tuple(teacher_maps.shape)} do not match targets "
                        f"{tuple(target.shape)}"
                    )
            outputs = model(batch["image"])
            total, mse, dist = _stage_reports(outputs, teacher_maps, target, mask, loss_cfg)
            if not torch.isfinite(total):
                raise TrainingDivergedError(
                    f"{role} loss became {float(total.detach())} at step {step} (epoch {epoch}); "
                    f"mse={mse} distill={dist}"
                )
            optimizer.zero_grad(set_to_none=True)
            total.backward()
            optimizer.step()
            step += 1
            trainlog.write(kind="step", role=role, step=step, epoch=epoch, total=float(total.detach()),
                           mse=mse, distill=dist, alpha=loss_cfg.alpha,
                           lr=optimizer.param_groups[0]["lr"])
            if tc.eval_every_steps and step % tc.eval_every_steps == 0:
                validate(epoch)
            if done or (tc.max_steps is not None and step >= tc.max_steps):
                done = True
                break
        if scheduler is not None:
            scheduler.step()
        if not done and (epoch % tc.eval_interval == 0 or epoch == tc.epochs):
            validate(epoch)
        if done:
            break

    if valid_ds is None:
        best_state = copy.deepcopy(model.state_dict())
        best_epoch = epoch
    elif step > 0 and best_metric is None:
        validate(epoch)
    model.load_state_dict(best_state)
    return Checkpoint(
        state_dict=best_state,
        model_config=model.config,
        train_config=tc.to_dict(),
        epoch=best_epoch,
        step=step,
        best_metric=best_metric,
        rng_state=torch.get_rng_state(),
        role=role,
    )


def train_teacher(
    train_items,
    config: HourglassConfig,
    tc: TrainConfig = TrainConfig(),
    valid_items=None,
    log_path=None,
    image_root=None,
    trainlog: Optional[TrainLog] = None,
) -> Checkpoint:
    """Train a pose network on ground-truth maps only, summed over all stages.

    Returns the best-validation weights (the last weights without a
    validation set). ``epochs=0`` returns the initial weights.
    """
    if len(train_items) == 0:
        raise ValueError("training data is empty")
    trainlog = trainlog or TrainLog(log_path)
    model = build_model(config, seed=tc.seed)
    train_ds = _as_dataset(train_items, config, tc, True, image_root)
    valid_ds = None if valid_items is None else _as_dataset(valid_items, config, tc, False, image_root)
    return _fit(model, train_ds, valid_ds, tc, LossConfig(alpha=0.0), None, trainlog, "teacher")


def _teacher_callable(teacher, num_joints: int):
    if isinstance(teacher, (str, os.PathLike)):
        teacher = load_checkpoint(teacher)
    if isinstance(teacher, Checkpoint):
        teacher = teacher.build()
    if isinstance(teacher, nn.Module):
        cfg = getattr(teacher, "config", None)
        if cfg is not None and cfg.num_joints != num_joints:
            raise ContractError(
                f"teacher predicts {cfg.num_joints} joints but the student predicts {num_joints}"
            )
        teacher.eval()
        for p in teacher.parameters():
            p.requires_grad_(False)
        module = teacher

        def run(batch):
            return module(batch["image"])[-1]

        return run, module
    if callable(teacher):
        return teacher, None
    raise TypeError(f"unsupported teacher {type(teacher).__name__}")


def distill_student(
    train_items,
    teacher,
    config: HourglassConfig,
    tc: TrainConfig = TrainConfig(),
    valid_items=None,
    log_path=None,
    image_root=None,
    trainlog: Optional[TrainLog] = None,
) -> Checkpoint:
    """Train the student with the alpha-weighted distillation + ground-truth loss.

    ``teacher`` is a checkpoint (object or path), a network, or any callable
    mapping a batch dict to ``(B, K, H, W)`` maps. Every student stage is
    matched against the teacher's final-stage maps; the teacher is never
    updated and its weight digest is checked after training.
    """
    if len(train_items) == 0:
        raise ValueError("training data is empty")
    teacher_fn, teacher_module = _teacher_callable(teacher, config.num_joints)
    before = weight_digest(teacher_module) if teacher_module is not None else None

    trainlog = trainlog or TrainLog(log_path)
    model = build_model(config, seed=tc.seed)
    train_ds = _as_dataset(train_items, config, tc, True, image_root)
    valid_ds = None if valid_items is None else _as_dataset(valid_items, config, tc, False, image_root)
    ckpt = _fit(model, train_ds, valid_ds, tc, tc.loss, teacher_fn, trainlog, "student")

    if teacher_module is not None and weight_digest(teacher_module) != before:
        raise RuntimeError("teacher weights changed during distillation")
    return ckpt
