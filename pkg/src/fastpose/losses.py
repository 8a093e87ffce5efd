"""Supervision, distillation and combined losses over confidence-map stacks.

All functions take torch tensors shaped ``(..., K, H, W)``; the optional mask
is shaped ``(..., K)`` and selects the joints that take part in the average.
The squared L2 norm of a map is a sum over its pixels, and the result is the
mean over the selected (sample, joint) pairs.
"""
from __future__ import annotations

import dataclasses
from typing import Literal

import torch
from torch import Tensor

__all__ = [
    "LossConfig",
    "LossReport",
    "mse_loss",
    "distill_loss",
    "ce_distill_loss",
    "fpd_loss",
    "per_joint_sq_error",
]

CE_EPS = 1e-12


@dataclasses.dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.5
    """Weight of the distillation term; ``1 - alpha`` goes to ground truth."""
    distill_divergence: Literal["mse", "ce"] = "mse"
    distill_all_joints: bool = True
    """Match the teacher on every joint, including ones without a label."""

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.distill_divergence not in ("mse", "ce"):
            raise ValueError(
                f"distill_divergence must be 'mse' or 'ce', got {self.distill_divergence!r}"
            )


@dataclasses.dataclass
class LossReport:
    total: Tensor
    mse_term: Tensor
    distill_term: Tensor
    alpha: float
    per_joint_mse: Tensor
    per_joint_distill: Tensor

    def as_floats(self) -> dict:
        return {
            "total": float(self.total),
            "mse": float(self.mse_term),
            "distill": float(self.distill_term),
            "alpha": self.alpha,
        }


def _check_shapes(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() < 3:
        raise ValueError(f"expected (..., K, H, W) maps, got shape {tuple(a.shape)}")


def _mask_like(per_joint: Tensor, mask) -> Tensor:
    if mask is None:
        return torch.ones_like(per_joint)
    m = torch.as_tensor(mask, device=per_joint.device).to(per_joint.dtype)
    if m.shape != per_joint.shape:
        raise ValueError(f"mask shape {tuple(m.shape)} does not match {tuple(per_joint.shape)}")
    return m


def _masked_mean(per_joint: Tensor, mask) -> Tensor:
    m = _mask_like(per_joint, mask)
    count = m.sum()
    if count == 0:
        return per_joint.sum() * 0.0
    return (per_joint * m).sum() / count


def _per_joint_summary(per_joint: Tensor, mask) -> Tensor:
    """Average each joint's term over the leading (batch) dims it is labelled in."""
    m = _mask_like(per_joint, mask)
    flat = (per_joint * m).reshape(-1, per_joint.shape[-1])
    counts = m.reshape(-1, per_joint.shape[-1]).sum(0)
    return (flat.sum(0) / counts.clamp_min(1)).detach()


def per_joint_sq_error(a: Tensor, b: Tensor) -> Tensor:
    _check_shapes(a, b)
    return ((a - b) ** 2).sum(dim=(-2, -1))


def mse_loss(pred: Tensor, gt: Tensor, mask=None, reduction: str = "mean") -> Tensor:
    """Mean over joints of the pixel-summed squared difference to ground truth."""
    per_joint = per_joint_sq_error(pred, gt)
    if reduction == "none":
        return per_joint * _mask_like(per_joint, mask)
    return _masked_mean(per_joint, mask)


def distill_loss(student: Tensor, teacher: Tensor, mask=None, reduction: str = "mean") -> Tensor:
    """Same form as :func:`mse_loss` with the teacher's maps as a constant target."""
    return mse_loss(student, teacher.detach(), mask, reduction)


def ce_distill_loss(
    student: Tensor, teacher: Tensor, mask=None, reduction: str = "mean", eps: float = CE_EPS
) -> Tensor:
    """Cross-entropy of L1-normalised student maps under L1-normalised teacher maps.

    Per joint: ``-sum_p t(p) * log(s(p) + eps)``. Not symmetric: the teacher
    is the target distribution.
    """
    _check_shapes(student, teacher)
    teacher = teacher.detach()
    if bool((student < 0).any()) or bool((teacher < 0).any()):
        raise ValueError("cross-entropy distillation needs non-negative maps")
    per_joint_shape = student.shape[:-2]
    m = _mask_like(student.new_zeros(per_joint_shape), mask).bool()

    s_sum = student.sum(dim=(-2, -1), keepdim=True)
    t_sum = teacher.sum(dim=(-2, -1), keepdim=True)
    if bool(((s_sum[..., 0, 0] <= 0) & m).any()) or bool(((t_sum[..., 0, 0] <= 0) & m).any()):
        raise ValueError("cannot L1-normalise an all-zero map of a selected joint")
    # masked joints may be all-zero; divide those by 1 so they stay finite
    s = student / torch.where(s_sum > 0, s_sum, torch.ones_like(s_sum))
    t = teacher / torch.where(t_sum > 0, t_sum, torch.ones_like(t_sum))
    per_joint = -(t * torch.log(s + eps)).sum(dim=(-2, -1))
    if reduction == "none":
        return per_joint * m.to(per_joint.dtype)
    return _masked_mean(per_joint, m)


def fpd_loss(
    student: Tensor,
    teacher: Tensor,
    gt: Tensor,
    cfg: LossConfig = LossConfig(),
    mask=None,
) -> LossReport:
    """``alpha * distillation + (1 - alpha) * ground-truth MSE`` for one output stage."""
    _check_shapes(student, gt)
    _check_shapes(student, teacher)
    distill_mask = None if cfg.distill_all_joints else mask

    pj_mse = mse_loss(student, gt, mask, reduction="none")
    l_mse = mse_loss(student, gt, mask)
    if cfg.distill_divergence == "mse":
        pj_pd = distill_loss(student, teacher, distill_mask, reduction="none")
        l_pd = distill_loss(student, teacher, distill_mask)
    else:
        s, t = student.clamp_min(0), teacher.clamp_min(0)
        pj_pd = ce_distill_loss(s, t, distill_mask, reduction="none")
        l_pd = ce_distill_loss(s, t, distill_mask)

    total = cfg.alpha * l_pd + (1.0 - cfg.alpha) * l_mse
    return LossReport(
        total=total,
        mse_term=l_mse,
        distill_term=l_pd,
        alpha=cfg.alpha,
        per_joint_mse=_per_joint_summary(pj_mse, mask),
        per_joint_distill=_per_joint_summary(pj_pd, distill_mask),
    )
