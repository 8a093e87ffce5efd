"""Fast pose distillation: stacked-hourglass teacher/student training on heatmaps."""
from .heatmap import GaussianConfig, ImageSpec, JointSet, Visibility, decode_heatmaps, encode_joints
from .losses import LossConfig, LossReport, distill_loss, fpd_loss, mse_loss
from .metrics import EvalResult, auc, evaluate, pck, pck_curve
from .network import STUDENT, TEACHER, HourglassConfig, PoseNet, build_model, count_params, estimate_flops
from .training import (
    Checkpoint,
    TrainConfig,
    distill_student,
    load_checkpoint,
    save_checkpoint,
    train_teacher,
)

__version__ = "0.1.0"

__all__ = [
    "GaussianConfig", "ImageSpec", "JointSet", "Visibility", "decode_heatmaps", "encode_joints",
    "LossConfig", "LossReport", "distill_loss", "fpd_loss", "mse_loss",
    "EvalResult", "auc", "evaluate", "pck", "pck_curve",
    "STUDENT", "TEACHER", "HourglassConfig", "PoseNet", "build_model", "count_params",
    "estimate_flops",
    "Checkpoint", "TrainConfig", "distill_student", "load_checkpoint", "save_checkpoint",
    "train_teacher",
]
