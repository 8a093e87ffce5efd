"""Joint coordinates <-> Gaussian confidence maps.

Coordinate convention: pixel centres sit on the integer lattice in both the
image and the heatmap, and the two grids share their outer pixel edges, so
image coordinate ``x`` maps to heatmap coordinate ``(x + 0.5) / stride - 0.5``.
Every point inside the image therefore has its nearest heatmap pixel on the
grid, and joints placed on heatmap pixel centres round-trip exactly.
"""
from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np
import torch

__all__ = [
    "Visibility",
    "ImageSpec",
    "JointSet",
    "GaussianConfig",
    "encode_joints",
    "decode_heatmaps",
    "decode_batch",
    "image_to_heatmap",
    "heatmap_to_image",
    "l1_normalize",
    "CorruptedPredictionError",
    "DegenerateMapError",
]

UNLABELLED_COORD = -1.0


class CorruptedPredictionError(ValueError):
    """Predicted maps contain NaN or Inf."""


class DegenerateMapError(ValueError):
    """A map that must carry mass sums to zero."""


class Visibility(enum.IntEnum):
    UNLABELLED = 0
    OCCLUDED = 1
    VISIBLE = 2


@dataclasses.dataclass(frozen=True)
class ImageSpec:
    """Input image size and its integer downsampling to the heatmap grid."""

    height: int = 256
    width: int = 256
    stride: int = 4

    def __post_init__(self):
        for name in ("height", "width", "stride"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.height % self.stride or self.width % self.stride:
            raise ValueError(
                f"image {self.height}x{self.width} is not divisible by stride {self.stride}"
            )

    @property
    def heatmap_height(self) -> int:
        return self.height // self.stride

    @property
    def heatmap_width(self) -> int:
        return self.width // self.stride

    @property
    def heatmap_shape(self) -> tuple[int, int]:
        return self.heatmap_height, self.heatmap_width


@dataclasses.dataclass
class JointSet:
    """K labelled (x, y) joints of one person plus per-joint visibility."""

    joints: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 2)
        self.visibility = np.asarray(self.visibility, dtype=np.int64).reshape(-1)
        if len(self.joints) != len(self.visibility):
            raise ValueError(
                f"{len(self.joints)} joints but {len(self.visibility)} visibility flags"
            )
        # unlabelled entries always carry the sentinel coordinate
        self.joints[~self.labelled] = UNLABELLED_COORD

    @classmethod
    def from_coords(cls, joints, visibility=None) -> "JointSet":
        joints = np.asarray(joints, dtype=np.float64).reshape(-1, 2)
        if visibility is None:
            visibility = np.full(len(joints), Visibility.VISIBLE)
        return cls(joints, visibility)

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    @property
    def labelled(self) -> np.ndarray:
        return self.visibility != Visibility.UNLABELLED

    def copy(self) -> "JointSet":
        return JointSet(self.joints.copy(), self.visibility.copy())


@dataclasses.dataclass(frozen=True)
class GaussianConfig:
    """Target kernel settings.

    ``normalized_peak=True`` keeps the ``1 / (2 pi sigma^2)`` prefactor so the
    kernel integrates to one; ``False`` gives a unit peak.
    """

    sigma: float = 1.0
    normalized_peak: bool = True
    truncate: float = 3.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.truncate > 0:
            raise ValueError(f"truncate must be positive, got {self.truncate}")

    @property
    def peak(self) -> float:
        return 1.0 / (2.0 * math.pi * self.sigma**2) if self.normalized_peak else 1.0


def image_to_heatmap(points, stride: int):
    return (np.asarray(points, dtype=np.float64) + 0.5) / stride - 0.5


def heatmap_to_image(points, stride: int):
    return (np.asarray(points, dtype=np.float64) + 0.5) * stride - 0.5


def encode_joints(
    joints: JointSet, spec: ImageSpec, cfg: GaussianConfig = GaussianConfig()
) -> np.ndarray:
    """Render one Gaussian confidence map per joint.

    Returns a float64 array of shape ``(K, heatmap_height, heatmap_width)``.
    The kernel is centred at the joint's continuous heatmap position and set
    to zero outside a ``+-truncate*sigma`` square window. Unlabelled joints get
    an all-zero map.
    """
    hh, hw = spec.heatmap_shape
    maps = np.zeros((joints.num_joints, hh, hw), dtype=np.float64)
    lab = joints.labelled
    pts = joints.joints
    bad = lab & (
        (pts[:, 0] < 0) | (pts[:, 0] >= spec.width) | (pts[:, 1] < 0) | (pts[:, 1] >= spec.height)
    )
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(
            f"joint {k} at {tuple(pts[k])} lies outside the {spec.width}x{spec.height} image"
        )

    xs = np.arange(hw, dtype=np.float64)
    ys = np.arange(hh, dtype=np.float64)
    radius = cfg.truncate * cfg.sigma
    two_var = 2.0 * cfg.sigma**2
    for k in np.flatnonzero(lab):
        cx, cy = image_to_heatmap(pts[k], spec.stride)
        dx2 = (xs - cx) ** 2
        dy2 = (ys - cy) ** 2
        gx = np.where(np.abs(xs - cx) <= radius, np.exp(-dx2 / two_var), 0.0)
        gy = np.where(np.abs(ys - cy) <= radius, np.exp(-dy2 / two_var), 0.0)
        # exp(-(dx^2 + dy^2)/2s^2) factorises into an outer product
        maps[k] = cfg.peak * np.outer(gy, gx)
    return maps


def _as_numpy(maps) -> np.ndarray:
    if isinstance(maps, torch.Tensor):
        return maps.detach().cpu().double().numpy()
    return np.asarray(maps, dtype=np.float64)


def decode_batch(maps, stride: int = 4, refine: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Arg-max decode of ``(..., K, H, W)`` maps to image coordinates.

    Returns ``(coords, maxvals)`` with shapes ``(..., K, 2)`` and ``(..., K)``.
    With ``refine`` each coordinate moves a quarter heatmap pixel toward the
    larger of its two neighbours along that axis.
    """
    hm = _as_numpy(maps)
    if not np.isfinite(hm).all():
        raise CorruptedPredictionError("confidence maps contain NaN or Inf")
    *lead, h, w = hm.shape
    flat = hm.reshape(-1, h * w)
    idx = flat.argmax(axis=1)
    maxvals = flat[np.arange(len(flat)), idx]
    px = (idx % w).astype(np.int64)
    py = (idx // w).astype(np.int64)
    coords = np.stack([px, py], axis=1).astype(np.float64)

    if refine:
        rows = np.arange(len(flat))
        grid = hm.reshape(-1, h, w)
        xl = np.clip(px - 1, 0, w - 1)
        xr = np.clip(px + 1, 0, w - 1)
        yu = np.clip(py - 1, 0, h - 1)
        yd = np.clip(py + 1, 0, h - 1)
        # border pixels have one neighbour only; leave them unrefined
        dx = np.where((px > 0) & (px < w - 1), grid[rows, py, xr] - grid[rows, py, xl], 0.0)
        dy = np.where((py > 0) & (py < h - 1), grid[rows, yd, px] - grid[rows, yu, px], 0.0)
        coords[:, 0] += 0.25 * np.sign(dx)
        coords[:, 1] += 0.25 * np.sign(dy)

    coords = heatmap_to_image(coords, stride)
    empty = ~(flat != 0).any(axis=1)
    coords[empty] = UNLABELLED_COORD
    return coords.reshape(*lead, 2), maxvals.reshape(*lead)


def decode_heatmaps(maps, spec: ImageSpec, refine: bool = True) -> JointSet:
    """Decode a single ``(K, H, W)`` stack to a :class:`JointSet`.

    All-zero maps decode to unlabelled joints.
    """
    hm = _as_numpy(maps)
    if hm.ndim != 3:
        raise ValueError(f"expected a (K, H, W) stack, got shape {hm.shape}")
    if hm.shape[1:] != spec.heatmap_shape:
        raise ValueError(f"map shape {hm.shape[1:]} does not match spec {spec.heatmap_shape}")
    coords, _ = decode_batch(hm, spec.stride, refine=refine)
    empty = ~(hm.reshape(len(hm), -1) != 0).any(axis=1)
    vis = np.where(empty, Visibility.UNLABELLED, Visibility.VISIBLE)
    return JointSet(coords, vis)


def l1_normalize(maps, eps: float = 0.0):
    """Scale every ``(H, W)`` map in ``maps`` to unit sum.

    Works on numpy arrays and torch tensors (gradients flow through the
    division). Raises :class:`DegenerateMapError` if any map sums to zero.
    """
    if isinstance(maps, torch.Tensor):
        total = maps.sum(dim=(-2, -1), keepdim=True)
        if bool((total <= 0).any()):
            raise DegenerateMapError("cannot L1-normalise a map with non-positive sum")
        return maps / (total + eps)
    arr = np.asarray(maps, dtype=np.float64)
    total = arr.sum(axis=(-2, -1), keepdims=True)
    if (total <= 0).any():
        raise DegenerateMapError("cannot L1-normalise a map with non-positive sum")
    return arr / (total + eps)
