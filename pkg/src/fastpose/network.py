"""Stacked Hourglass pose networks and their analytic cost.

The layout follows the original stacked-hourglass design: a stride-4 stem,
``num_stages`` recursive hourglass modules with 2x max-pool / nearest-upsample
levels, a per-stage heatmap head, and a remap of each intermediate prediction
back into the trunk. Every residual unit is the pre-activation bottleneck
(BN-ReLU-1x1, BN-ReLU-3x3, BN-ReLU-1x1) at half width.
"""
from __future__ import annotations

import dataclasses
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from .heatmap import ImageSpec

__all__ = [
    "HourglassConfig",
    "ModelSpec",
    "TEACHER",
    "STUDENT",
    "PoseNet",
    "build_model",
    "count_params",
    "estimate_flops",
    "model_spec",
    "count_params_brute_force",
    "count_flops_traced",
]


@dataclasses.dataclass(frozen=True)
class HourglassConfig:
    num_stages: int = 4
    channels: int = 128
    num_joints: int = 16
    input_size: int = 256
    depth: int = 4
    """Down/up-sampling levels inside one hourglass."""
    modules_per_site: int = 1
    """Residual units at each hourglass site (the original ``nModules``)."""
    stem_channels: Optional[tuple[int, int, int]] = None
    """Widths of the stem conv and its first two residual units.

    ``None`` scales them with ``channels`` as ``(C/4, C/2, C/2)``, which is the
    original ``(64, 128, 128)`` stem at ``C = 256``.
    """

    def __post_init__(self):
        if self.num_stages < 1:
            raise ValueError(f"num_stages must be >= 1, got {self.num_stages}")
        if self.channels < 8 or self.channels % 2:
            raise ValueError(f"channels must be an even number >= 8, got {self.channels}")
        if self.num_joints < 1:
            raise ValueError(f"num_joints must be >= 1, got {self.num_joints}")
        if self.depth < 1 or self.modules_per_site < 1:
            raise ValueError("depth and modules_per_site must be >= 1")
        if self.input_size % (4 * 2**self.depth):
            raise ValueError(
                f"input_size {self.input_size} must be divisible by {4 * 2**self.depth}"
            )
        if self.stem_channels is not None:
            object.__setattr__(self, "stem_channels", tuple(int(c) for c in self.stem_channels))
            if len(self.stem_channels) != 3 or min(self.stem_channels) < 2:
                raise ValueError(f"stem_channels must be three widths >= 2, got {self.stem_channels}")

    @property
    def stem(self) -> tuple[int, int, int]:
        if self.stem_channels is not None:
            return self.stem_channels
        c = self.channels
        return max(c // 4, 2), max(c // 2, 2), max(c // 2, 2)

    @property
    def heatmap_size(self) -> int:
        return self.input_size // 4

    @property
    def image_spec(self) -> ImageSpec:
        return ImageSpec(self.input_size, self.input_size, 4)

    def replace(self, **kw) -> "HourglassConfig":
        return dataclasses.replace(self, **kw)


TEACHER = HourglassConfig(num_stages=8, channels=256)
STUDENT = HourglassConfig(num_stages=4, channels=128)


@dataclasses.dataclass(frozen=True)
class ModelSpec:
    config: HourglassConfig
    param_count: int
    flops_per_forward: int


# -- modules ---------------------------------------------------------------


class Residual(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        mid = cout // 2
        self.bn1 = nn.BatchNorm2d(cin)
        self.conv1 = nn.Conv2d(cin, mid, 1)
        self.bn2 = nn.BatchNorm2d(mid)
        self.conv2 = nn.Conv2d(mid, mid, 3, padding=1)
        self.bn3 = nn.BatchNorm2d(mid)
        self.conv3 = nn.Conv2d(mid, cout, 1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else None

    def forward(self, x):
        out = self.conv1(F.relu(self.bn1(x)))
        out = self.conv2(F.relu(self.bn2(out)))
        out = self.conv3(F.relu(self.bn3(out)))
        return out + (x if self.skip is None else self.skip(x))


def _residuals(c: int, n: int) -> nn.Sequential:
    return nn.Sequential(*[Residual(c, c) for _ in range(n)])


class Hourglass(nn.Module):
    def __init__(self, depth: int, c: int, n_mod: int):
        super().__init__()
        self.up1 = _residuals(c, n_mod)
        self.low1 = _residuals(c, n_mod)
        self.low2 = Hourglass(depth - 1, c, n_mod) if depth > 1 else _residuals(c, n_mod)
        self.low3 = _residuals(c, n_mod)

    def forward(self, x):
        up1 = self.up1(x)
        low = self.low3(self.low2(self.low1(F.max_pool2d(x, 2))))
        return up1 + F.interpolate(low, scale_factor=2, mode="nearest")


class PoseNet(nn.Module):
    """Stacked hourglass returning one ``(B, K, H/4, W/4)`` map per stage."""

    def __init__(self, config: HourglassConfig):
        super().__init__()
        self.config = config
        c, k = config.channels, config.num_joints
        s0, s1, s2 = config.stem
        self.stem_conv = nn.Conv2d(3, s0, 7, stride=2, padding=3)
        self.stem_bn = nn.BatchNorm2d(s0)
        self.stem_res1 = Residual(s0, s1)
        self.stem_res2 = Residual(s1, s2)
        self.stem_res3 = Residual(s2, c)

        n = config.num_stages
        self.hourglasses = nn.ModuleList(
            Hourglass(config.depth, c, config.modules_per_site) for _ in range(n)
        )
        self.post = nn.ModuleList(_residuals(c, config.modules_per_site) for _ in range(n))
        self.lin = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, c, 1), nn.BatchNorm2d(c), nn.ReLU(inplace=True))
            for _ in range(n)
        )
        self.heads = nn.ModuleList(nn.Conv2d(c, k, 1) for _ in range(n))
        self.remap_feat = nn.ModuleList(nn.Conv2d(c, c, 1) for _ in range(n - 1))
        self.remap_pred = nn.ModuleList(nn.Conv2d(k, c, 1) for _ in range(n - 1))

    def forward(self, x) -> list[torch.Tensor]:
        x = F.relu(self.stem_bn(self.stem_conv(x)))
        x = F.max_pool2d(self.stem_res1(x), 2)
        x = self.stem_res3(self.stem_res2(x))
        outputs = []
        for i, hg in enumerate(self.hourglasses):
            feat = self.lin[i](self.post[i](hg(x)))
            pred = self.heads[i](feat)
            outputs.append(pred)
            if i < len(self.hourglasses) - 1:
                x = x + self.remap_feat[i](feat) + self.remap_pred[i](pred)
        return outputs


def build_model(config: HourglassConfig, seed: Optional[int] = None) -> PoseNet:
    """Construct a :class:`PoseNet`; ``seed`` makes the initial weights reproducible.

    Convolutions use PyTorch's default fan-in scaled uniform initialisation.
    """
    if seed is None:
        return PoseNet(config)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return PoseNet(config)


# -- analytic cost ---------------------------------------------------------


def _conv_params(cin, cout, k):
    return cin * cout * k * k + cout


def _bn_params(c):
    return 2 * c


def _residual_params(cin, cout):
    mid = cout // 2
    n = _bn_params(cin) + _conv_params(cin, mid, 1)
    n += _bn_params(mid) + _conv_params(mid, mid, 3)
    n += _bn_params(mid) + _conv_params(mid, cout, 1)
    if cin != cout:
        n += _conv_params(cin, cout, 1)
    return n


def _hourglass_sites(depth: int) -> int:
    # three residual sites per level plus the innermost low2
    return 3 * depth + 1


def count_params(config: HourglassConfig) -> int:
    """Exact number of learnable parameters of ``build_model(config)``."""
    c, k, n = config.channels, config.num_joints, config.num_stages
    m = config.modules_per_site
    s0, s1, s2 = config.stem
    total = _conv_params(3, s0, 7) + _bn_params(s0)
    total += _residual_params(s0, s1) + _residual_params(s1, s2) + _residual_params(s2, c)
    per_stage = (_hourglass_sites(config.depth) + 1) * m * _residual_params(c, c)
    per_stage += _conv_params(c, c, 1) + _bn_params(c) + _conv_params(c, k, 1)
    total += n * per_stage
    total += (n - 1) * (_conv_params(c, c, 1) + _conv_params(k, c, 1))
    return total


def _conv_macs(cin, cout, k, hw):
    return cin * cout * k * k * hw


def _residual_macs(cin, cout, hw):
    mid = cout // 2
    macs = _conv_macs(cin, mid, 1, hw) + _conv_macs(mid, mid, 3, hw) + _conv_macs(mid, cout, 1, hw)
    if cin != cout:
        macs += _conv_macs(cin, cout, 1, hw)
    return macs


def _hourglass_macs(depth, c, m, side):
    up = m * _residual_macs(c, c, side * side)
    half = (side // 2) ** 2
    low = 2 * m * _residual_macs(c, c, half)
    inner = (
        _hourglass_macs(depth - 1, c, m, side // 2)
        if depth > 1
        else m * _residual_macs(c, c, half)
    )
    return up + low + inner


def estimate_flops(config: HourglassConfig, spec: Optional[ImageSpec] = None) -> int:
    """Convolution FLOPs of one forward pass, counted as 2 x multiply-accumulates.

    Only convolutions are counted (they are >99% of the arithmetic); batch
    norm, activations, pooling, upsampling and skip additions are ignored.
    ``spec`` overrides the square input size of ``config``.
    """
    size = config.input_size
    if spec is not None:
        if spec.height != spec.width:
            raise ValueError("estimate_flops expects a square input")
        size = spec.height
    c, k, n = config.channels, config.num_joints, config.num_stages
    m = config.modules_per_site
    s0, s1, s2 = config.stem
    half, quarter = (size // 2) ** 2, (size // 4) ** 2
    side = size // 4

    macs = _conv_macs(3, s0, 7, half)
    macs += _residual_macs(s0, s1, half)
    macs += _residual_macs(s1, s2, quarter) + _residual_macs(s2, c, quarter)
    per_stage = _hourglass_macs(config.depth, c, m, side)
    per_stage += m * _residual_macs(c, c, quarter)
    per_stage += _conv_macs(c, c, 1, quarter) + _conv_macs(c, k, 1, quarter)
    macs += n * per_stage
    macs += (n - 1) * (_conv_macs(c, c, 1, quarter) + _conv_macs(k, c, 1, quarter))
    return 2 * macs


def model_spec(config: HourglassConfig) -> ModelSpec:
    return ModelSpec(config, count_params(config), estimate_flops(config))


# -- independent measurements on an instantiated network -------------------


def count_params_brute_force(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def count_flops_traced(config: HourglassConfig, batch: int = 1) -> int:
    """Count convolution FLOPs by running a forward pass with hooks.

    The network is built on the ``meta`` device, so no memory is allocated
    and the pass is shape-only.
    """
    total = 0

    def hook(mod: nn.Conv2d, inp, out):
        nonlocal total
        kh, kw = mod.kernel_size
        cin = mod.in_channels // mod.groups
        total += 2 * out.numel() * cin * kh * kw

    with torch.device("meta"):
        model = PoseNet(config)
        x = torch.empty(batch, 3, config.input_size, config.input_size)
    handles = [m.register_forward_hook(hook) for m in model.modules() if isinstance(m, nn.Conv2d)]
    try:
        with torch.no_grad():
            model.eval()
            model(x)
    finally:
        for h in handles:
            h.remove()
    return total // batch
