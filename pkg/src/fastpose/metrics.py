"""PCK / PCKh accuracy, PCK curves and AUC.

A joint counts as correct when its prediction lies within ``tau * normalizer``
pixels of the ground truth (boundary inclusive). Unlabelled ground-truth joints
are left out of every count.
"""
from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np

from .data import AnnotationRecord

__all__ = [
    "PROTOCOLS",
    "AUC_THRESHOLDS",
    "PckCurve",
    "EvalResult",
    "pck",
    "pck_curve",
    "auc",
    "evaluate",
    "joint_groups",
    "format_report",
]

PROTOCOLS = {"pckh_05": ("head", 0.5), "pck_02": ("torso", 0.2)}
AUC_THRESHOLDS = np.round(np.arange(0, 51) * 0.01, 2)

_GROUPS_16 = {
    "Head": (8, 9), "Sho.": (12, 13), "Elbo.": (11, 14), "Wri.": (10, 15),
    "Hip": (2, 3), "Knee": (1, 4), "Ank.": (0, 5),
}  # fmt: skip
_GROUPS_14 = {
    "Head": (12, 13), "Sho.": (8, 9), "Elbo.": (7, 10), "Wri.": (6, 11),
    "Hip": (2, 3), "Knee": (1, 4), "Ank.": (0, 5),
}  # fmt: skip


def joint_groups(num_joints: int) -> dict[str, tuple[int, ...]]:
    if num_joints == 16:
        return _GROUPS_16
    if num_joints == 14:
        return _GROUPS_14
    return {f"J{k}": (k,) for k in range(num_joints)}


def _scored_joints(num_joints: int) -> np.ndarray:
    # MPII scores 14 joints: pelvis and thorax are left out
    keep = np.ones(num_joints, dtype=bool)
    if num_joints == 16:
        keep[[6, 7]] = False
    return keep


@dataclasses.dataclass
class PckCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray
    normalizer_kind: str = "head"

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.accuracy = np.asarray(self.accuracy, dtype=np.float64)
        if self.thresholds.shape != self.accuracy.shape:
            raise ValueError("thresholds and accuracy differ in length")

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.tolist(),
            "accuracy": self.accuracy.tolist(),
            "normalizer_kind": self.normalizer_kind,
        }


@dataclasses.dataclass
class EvalResult:
    protocol: str
    tau: float
    per_joint_pck: np.ndarray
    mean_pck: float
    auc: float
    num_joints_evaluated: int
    groups: dict
    curve: PckCurve
    cost: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "tau": self.tau,
            "per_joint_pck": [None if np.isnan(v) else float(v) for v in self.per_joint_pck],
            "mean_pck": self.mean_pck,
            "auc": self.auc,
            "num_joints_evaluated": self.num_joints_evaluated,
            "groups": self.groups,
            "curve": self.curve.to_dict(),
            "cost": self.cost,
        }


def _distances(pred, gt) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 2:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} must match (..., K, 2)")
    return np.linalg.norm(pred - gt, axis=-1)


def pck(pred, gt, normalizer, tau: float, labelled=None) -> np.ndarray:
    """Per-joint correctness flags, shape ``(..., K)``.

    ``normalizer`` broadcasts against the leading dims (one value per person).
    Joints not ``labelled`` come back False; count them with the same mask.
    """
    norm = np.asarray(normalizer, dtype=np.float64)
    if (norm <= 0).any():
        raise ValueError("normalizer must be positive")
    d = _distances(pred, gt)
    ok = d <= tau * norm[..., None]
    if labelled is not None:
        ok &= np.asarray(labelled, dtype=bool)
    return ok


def _per_joint_accuracy(dist, norm, labelled, tau) -> np.ndarray:
    ok = (dist <= tau * norm[:, None]) & labelled
    counts = labelled.sum(0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, ok.sum(0) / counts, np.nan)


def pck_curve(pred, gt, normalizer, labelled, thresholds=AUC_THRESHOLDS,
              kind: str = "head", joints: Optional[np.ndarray] = None) -> PckCurve:
    """Mean-over-joints PCK at every threshold."""
    dist = _distances(pred, gt)
    norm = np.asarray(normalizer, dtype=np.float64)
    lab = np.asarray(labelled, dtype=bool)
    keep = np.ones(dist.shape[-1], dtype=bool) if joints is None else joints
    acc = []
    for t in thresholds:
        per_joint = _per_joint_accuracy(dist, norm, lab, t)[keep]
        acc.append(float(np.nanmean(per_joint)) if np.isfinite(per_joint).any() else 0.0)
    return PckCurve(np.asarray(thresholds, dtype=np.float64), np.asarray(acc), kind)


def auc(curve: PckCurve) -> float:
    """Trapezoidal area under the PCK curve divided by its threshold span."""
    t, a = curve.thresholds, curve.accuracy
    if len(t) < 2:
        raise ValueError("AUC needs at least two thresholds")
    if np.any(np.diff(t) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    area = float(np.sum((t[1:] - t[:-1]) * (a[1:] + a[:-1]) / 2.0))
    return area / float(t[-1] - t[0])


def evaluate(predictions, records: Sequence[AnnotationRecord], protocol: str = "pckh_05",
             joints_gt=None, thresholds=AUC_THRESHOLDS) -> EvalResult:
    """Score ``(N, K, 2)`` predictions against annotation records.

    ``joints_gt`` optionally supplies the ground truth in the prediction's
    frame (e.g. the cropped image); it defaults to the records' joints.
    ``mean_pck`` averages the per-joint accuracies (MPII leaves pelvis and
    thorax out of the mean).
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {list(PROTOCOLS)}")
    kind, tau = PROTOCOLS[protocol]
    pred = np.asarray(predictions, dtype=np.float64)
    if len(pred) != len(records):
        raise ValueError(f"{len(pred)} predictions for {len(records)} records")
    field = "head_size" if kind == "head" else "torso_diag"
    norm = []
    for i, r in enumerate(records):
        v = getattr(r, field)
        if v is None or not v > 0:
            raise ValueError(f"record {i} ({r.image_path}) has no usable {field} for {protocol}")
        norm.append(v)
    norm = np.asarray(norm)
    if joints_gt is None:
        gt = np.stack([r.joints.joints for r in records])
    else:
        gt = np.asarray(joints_gt, dtype=np.float64)
    lab = np.stack([r.joints.labelled for r in records])

    dist = _distances(pred, gt)
    per_joint = _per_joint_accuracy(dist, norm, lab, tau)
    keep = _scored_joints(pred.shape[1])
    scored = per_joint[keep]
    mean = float(np.nanmean(scored)) if np.isfinite(scored).any() else 0.0
    groups = {}
    for name, idx in joint_groups(pred.shape[1]).items():
        vals = per_joint[list(idx)]
        groups[name] = float(np.nanmean(vals)) if np.isfinite(vals).any() else float("nan")
    curve = pck_curve(pred, gt, norm, lab, thresholds, kind, keep)
    return EvalResult(
        protocol=protocol,
        tau=tau,
        per_joint_pck=per_joint,
        mean_pck=mean,
        auc=auc(curve),
        num_joints_evaluated=int(lab[:, keep].sum()),
        groups=groups,
        curve=curve,
    )


def format_report(result: EvalResult, title: str = "model") -> str:
    """One table row in the layout of the usual pose benchmark tables (percent)."""
    names = list(result.groups)
    head = ["Method", *names, "Mean", "AUC"]
    row = [title, *(f"{100 * result.groups[n]:.1f}" for n in names),
           f"{100 * result.mean_pck:.1f}", f"{100 * result.auc:.1f}"]
    if result.cost:
        head += ["# Param", "FLOPs"]
        row += [f"{result.cost['params'] / 1e6:.2f}M", f"{result.cost['flops'] / 1e9:.2f}G"]
    widths = [max(len(h), len(v)) for h, v in zip(head, row)]
    fmt = " | ".join(f"{{:>{w}}}" for w in widths)
    label = f"{'PCKh' if result.protocol == 'pckh_05' else 'PCK'}@{result.tau}"
    return "\n".join([label, fmt.format(*head), fmt.format(*row)])
