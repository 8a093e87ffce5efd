"""Annotations, person-centred cropping, augmentation and a synthetic dataset."""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Optional, Sequence, Union

import cv2
import numpy as np
import torch

from .heatmap import GaussianConfig, ImageSpec, JointSet, Visibility, encode_joints

__all__ = [
    "MPII_JOINTS",
    "LSP_JOINTS",
    "MPII_FLIP_PAIRS",
    "LSP_FLIP_PAIRS",
    "AnnotationRecord",
    "AugmentParams",
    "Sample",
    "AnnotationParseError",
    "DegenerateCropError",
    "flip_pairs_for",
    "flip_permutation",
    "load_annotations",
    "save_annotations",
    "split_train_valid",
    "crop_transform",
    "crop_and_resize",
    "augment",
    "synth_dataset",
    "render_figure",
    "corrupt_joints",
    "PoseDataset",
]

INPUT_SIZE = 256
PIXEL_STD = 200.0  # MPII convention: scale = person height / 200 px

MPII_JOINTS = (
    "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "pelvis", "thorax",
    "upper_neck", "head_top", "r_wrist", "r_elbow", "r_shoulder", "l_shoulder",
    "l_elbow", "l_wrist",
)  # fmt: skip
LSP_JOINTS = (
    "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "r_wrist", "r_elbow",
    "r_shoulder", "l_shoulder", "l_elbow", "l_wrist", "neck", "head_top",
)  # fmt: skip
MPII_FLIP_PAIRS = ((0, 5), (1, 4), (2, 3), (10, 15), (11, 14), (12, 13))
LSP_FLIP_PAIRS = ((0, 5), (1, 4), (2, 3), (6, 11), (7, 10), (8, 9))

# joints whose distance defines the torso size (right shoulder, left hip)
_TORSO = {16: (12, 3), 14: (8, 3)}
# (upper neck, head top) used for the synthetic head box
_HEAD = {16: (8, 9), 14: (12, 13)}


class AnnotationParseError(ValueError):
    pass


class DegenerateCropError(ValueError):
    pass


def flip_pairs_for(num_joints: int) -> tuple[tuple[int, int], ...]:
    return {16: MPII_FLIP_PAIRS, 14: LSP_FLIP_PAIRS}.get(num_joints, ())


def flip_permutation(num_joints: int, pairs) -> np.ndarray:
    perm = np.arange(num_joints)
    for a, b in pairs:
        perm[a], perm[b] = b, a
    return perm


@dataclasses.dataclass
class AnnotationRecord:
    image_path: str
    center: tuple[float, float]
    scale: float
    joints: JointSet
    head_size: Optional[float] = None
    torso_diag: Optional[float] = None
    split: Optional[str] = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        self.center = (float(self.center[0]), float(self.center[1]))
        if self.torso_diag is None:
            self.torso_diag = torso_size(self.joints)

    @property
    def num_joints(self) -> int:
        return self.joints.num_joints


def torso_size(joints: JointSet) -> Optional[float]:
    pair = _TORSO.get(joints.num_joints)
    if pair is None or not joints.labelled[list(pair)].all():
        return None
    a, b = pair
    return float(np.linalg.norm(joints.joints[a] - joints.joints[b]))


@dataclasses.dataclass
class Sample:
    image: np.ndarray
    """``(3, 256, 256)`` float32 in [0, 1]."""
    joints: JointSet
    meta: Optional[AnnotationRecord] = None
    transform: Optional[np.ndarray] = None
    """2x3 affine taking source-image coordinates to this sample's pixels."""


@dataclasses.dataclass(frozen=True)
class AugmentParams:
    scale_range: tuple[float, float] = (0.75, 1.25)
    max_rotation: float = 30.0
    hflip_prob: float = 0.5
    flip_pairs: tuple[tuple[int, int], ...] = MPII_FLIP_PAIRS

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad scale_range {self.scale_range}")
        if self.max_rotation < 0 or not 0 <= self.hflip_prob <= 1:
            raise ValueError("max_rotation must be >= 0 and hflip_prob in [0, 1]")
        seen = [i for pair in self.flip_pairs for i in pair]
        if len(seen) != len(set(seen)):
            raise ValueError(f"flip_pairs must be disjoint, got {self.flip_pairs}")

    @classmethod
    def none(cls, flip_pairs=()) -> "AugmentParams":
        return cls((1.0, 1.0), 0.0, 0.0, tuple(flip_pairs))


# -- annotation files ------------------------------------------------------


def _read_json(path: Path):
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    # fall back to JSON lines
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise AnnotationParseError(f"{path}:{lineno}: {e.msg}") from None
    return records


def _mpii_record(obj: dict) -> AnnotationRecord:
    joints = np.asarray(obj["joints"], dtype=np.float64)
    if joints.ndim != 2 or joints.shape[1] < 2:
        raise ValueError(f"joints must be a list of [x, y] pairs, got shape {joints.shape}")
    xy = joints[:, :2]
    vis = np.asarray(obj.get("joints_vis", np.ones(len(xy))), dtype=np.float64)
    if len(vis) != len(xy):
        raise ValueError("joints_vis length differs from joints")
    missing = (xy < 0).any(axis=1)
    flags = np.where(missing, Visibility.UNLABELLED,
                     np.where(vis > 0, Visibility.VISIBLE, Visibility.OCCLUDED))
    head = obj.get("head_size")
    if head is None and obj.get("head_box") is not None:
        x1, y1, x2, y2 = obj["head_box"]
        head = 0.6 * math.hypot(x2 - x1, y2 - y1)
    return AnnotationRecord(
        image_path=str(obj["image"]),
        center=tuple(obj["center"]),
        scale=float(obj["scale"]),
        joints=JointSet(xy, flags),
        head_size=None if head is None else float(head),
        split=obj.get("split"),
    )


def _lsp_records(obj: dict) -> list[AnnotationRecord]:
    joints = np.asarray(obj["joints"], dtype=np.float64)
    if joints.ndim != 3 or joints.shape[1:] != (14, 3):
        raise ValueError(f"joints must have shape (N, 14, 3), got {joints.shape}")
    images = obj.get("images") or [f"im{i + 1:04d}.jpg" for i in range(len(joints))]
    if len(images) != len(joints):
        raise ValueError("images and joints differ in length")
    splits = obj.get("splits") or [None] * len(joints)
    out = []
    for i, (j, name) in enumerate(zip(joints, images)):
        try:
            missing = (j[:, :2] < 0).any(axis=1)
            flags = np.where(missing, Visibility.UNLABELLED,
                             np.where(j[:, 2] > 0, Visibility.VISIBLE, Visibility.OCCLUDED))
            pts = j[~missing, :2]
            if len(pts) == 0:
                raise ValueError("no labelled joints")
            lo, hi = pts.min(0), pts.max(0)
            # LSP has no person box; take the joint extent with a 25% margin
            scale = max(float((hi - lo).max()) * 1.25 / PIXEL_STD, 1e-3)
            out.append(AnnotationRecord(name, tuple((lo + hi) / 2), scale,
                                        JointSet(j[:, :2], flags), split=splits[i]))
        except (ValueError, TypeError) as e:
            raise AnnotationParseError(f"record {i}: {e}") from None
    return out


def load_annotations(path, format: str = "mpii_json") -> list[AnnotationRecord]:
    """Read person annotations.

    ``mpii_json`` is a JSON array (or JSON lines) of objects with keys
    ``image``, ``center``, ``scale``, ``joints`` and optional ``joints_vis``,
    ``head_box`` / ``head_size`` and ``split``. ``lsp_mat_export`` is a JSON
    object holding the LSP ``joints.mat`` array as ``joints`` with shape
    ``(N, 14, 3)`` plus optional ``images`` and ``splits`` lists. Negative
    coordinates mark unlabelled joints in both formats.
    """
    if format not in ("mpii_json", "lsp_mat_export"):
        raise ValueError(f"unknown annotation format {format!r}")
    path = Path(path)
    try:
        data = _read_json(path)
    except AnnotationParseError:
        raise
    except OSError as e:
        raise AnnotationParseError(f"{path}: {e}") from None

    if format == "lsp_mat_export":
        if not isinstance(data, dict) or "joints" not in data:
            raise AnnotationParseError(f"{path}: expected an object with a 'joints' array")
        try:
            return _lsp_records(data)
        except AnnotationParseError as e:
            raise AnnotationParseError(f"{path}: {e}") from None
        except (ValueError, TypeError) as e:
            raise AnnotationParseError(f"{path}: {e}") from None

    if isinstance(data, dict) and "annotations" in data:
        data = data["annotations"]
    if not isinstance(data, list):
        raise AnnotationParseError(f"{path}: expected a list of person records")
    out = []
    for i, obj in enumerate(data):
        try:
            out.append(_mpii_record(obj))
        except (KeyError, ValueError, TypeError) as e:
            raise AnnotationParseError(f"{path}: record {i}: {e!r}") from None
    return out


def save_annotations(records: Sequence[AnnotationRecord], path) -> None:
    """Write records in the ``mpii_json`` schema."""
    rows = []
    for r in records:
        vis = r.joints.visibility
        xy = np.where(r.joints.labelled[:, None], r.joints.joints, -1.0)
        row = {
            "image": r.image_path,
            "center": list(r.center),
            "scale": r.scale,
            "joints": xy.tolist(),
            "joints_vis": (vis == Visibility.VISIBLE).astype(int).tolist(),
        }
        if r.head_size is not None:
            row["head_size"] = r.head_size
        if r.split is not None:
            row["split"] = r.split
        rows.append(row)
    Path(path).write_text(json.dumps(rows, indent=1))


def split_train_valid(records, n_valid: int = 3000, seed: int = 0):
    """Hold out ``n_valid`` randomly chosen records for validation."""
    if n_valid > len(records):
        raise ValueError(f"cannot hold out {n_valid} of {len(records)} records")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    held = set(order[:n_valid].tolist())
    train = [r for i, r in enumerate(records) if i not in held]
    valid = [records[i] for i in sorted(held)]
    return train, valid


# -- geometry --------------------------------------------------------------


def _to3(m: np.ndarray) -> np.ndarray:
    return np.vstack([m, [0.0, 0.0, 1.0]])


def apply_affine(m: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ m[:, :2].T + m[:, 2]


def crop_transform(center, scale, out_size: int = INPUT_SIZE) -> np.ndarray:
    """Affine mapping a ``200*scale`` square around ``center`` onto ``out_size`` pixels."""
    f = out_size / (PIXEL_STD * scale)
    cx, cy = center
    return np.array([[f, 0.0, out_size / 2 - f * cx], [0.0, f, out_size / 2 - f * cy]])


def _warp(image_hwc: np.ndarray, m: np.ndarray, size: int) -> np.ndarray:
    return cv2.warpAffine(
        image_hwc, m, (size, size), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0,
    )


def _transform_joints(joints: JointSet, m: np.ndarray, size: int) -> JointSet:
    pts = apply_affine(m, joints.joints)
    vis = joints.visibility.copy()
    inside = (pts[:, 0] >= 0) & (pts[:, 0] < size) & (pts[:, 1] >= 0) & (pts[:, 1] < size)
    vis[~inside] = Visibility.UNLABELLED
    return JointSet(pts, vis)


def _to_chw_float(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.dtype == np.uint8:
        img = img.astype(np.float32) / 255.0
    return np.ascontiguousarray(img.astype(np.float32).transpose(2, 0, 1))


def crop_and_resize(record: AnnotationRecord, image: np.ndarray, out_size: int = INPUT_SIZE) -> Sample:
    """Cut the person-centred square out of an ``(H, W, 3)`` image and resize it.

    Joints go through the same affine map; any that leave the crop become
    unlabelled.
    """
    h, w = image.shape[:2]
    side = PIXEL_STD * record.scale
    cx, cy = record.center
    if cx + side / 2 <= 0 or cy + side / 2 <= 0 or cx - side / 2 >= w or cy - side / 2 >= h:
        raise DegenerateCropError(
            f"crop around {record.center} with side {side:.1f} misses the {w}x{h} image"
        )
    m = crop_transform(record.center, record.scale, out_size)
    img = image.astype(np.float32) / 255.0 if image.dtype == np.uint8 else image.astype(np.float32)
    crop = _warp(img, m, out_size)
    return Sample(_to_chw_float(crop), _transform_joints(record.joints, m, out_size), record, m)


def augment_matrix(size: int, scale: float, rotation_deg: float, flip: bool) -> np.ndarray:
    """Scale and rotate about the image centre, then optionally mirror."""
    c = size / 2
    a = math.radians(rotation_deg)
    cos, sin = math.cos(a) * scale, math.sin(a) * scale
    # positive angles turn counter-clockwise on screen (y axis points down)
    m = np.array([[cos, sin, c - cos * c - sin * c], [-sin, cos, c + sin * c - cos * c]])
    if flip:
        m = (_to3(np.array([[-1.0, 0.0, size - 1.0], [0.0, 1.0, 0.0]])) @ _to3(m))[:2]
    return m


def augment(sample: Sample, params: AugmentParams, rng_seed=None) -> Sample:
    """Random scale, rotation and horizontal flip, applied to image and joints alike.

    Deterministic given ``rng_seed``. Flipping also swaps left/right joint
    indices via ``params.flip_pairs``.
    """
    rng = np.random.default_rng(rng_seed)
    s = rng.uniform(*params.scale_range)
    r = rng.uniform(-params.max_rotation, params.max_rotation)
    flip = bool(rng.random() < params.hflip_prob)
    return apply_augmentation(sample, params, s, r, flip)


def apply_augmentation(sample: Sample, params: AugmentParams, scale: float,
                       rotation_deg: float, flip: bool) -> Sample:
    size = sample.image.shape[-1]
    m = augment_matrix(size, scale, rotation_deg, flip)
    img = _warp(np.ascontiguousarray(sample.image.transpose(1, 2, 0)), m, size)
    joints = _transform_joints(sample.joints, m, size)
    if flip and params.flip_pairs:
        perm = flip_permutation(joints.num_joints, params.flip_pairs)
        joints = JointSet(joints.joints[perm], joints.visibility[perm])
    composed = m if sample.transform is None else (_to3(m) @ _to3(sample.transform))[:2]
    return Sample(_to_chw_float(img), joints, sample.meta, composed)


# -- synthetic stick figures -----------------------------------------------

_PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
], dtype=np.float64) / 255.0  # fmt: skip

_MPII_LIMBS = ((0, 1), (1, 2), (2, 6), (3, 6), (3, 4), (4, 5), (6, 7), (7, 8), (8, 9),
               (7, 12), (7, 13), (12, 11), (11, 10), (13, 14), (14, 15))
_LSP_LIMBS = ((0, 1), (1, 2), (3, 4), (4, 5), (2, 8), (3, 9), (8, 7), (7, 6), (9, 10),
              (10, 11), (8, 12), (9, 12), (12, 13))


def joint_color(k: int) -> np.ndarray:
    return _PALETTE[k % len(_PALETTE)]


def _limbs(k: int):
    if k == 16:
        return _MPII_LIMBS
    if k == 14:
        return _LSP_LIMBS
    return tuple((i, i + 1) for i in range(k - 1))


def _polar(origin, length, angle_deg):
    a = math.radians(angle_deg)
    return origin + length * np.array([math.sin(a), math.cos(a)])


def _mpii_pose(rng: np.random.Generator, height: float) -> np.ndarray:
    """Joint positions (y down) for a figure of the given pixel height, pelvis at 0."""
    u = height / 8.0
    j = np.zeros((16, 2))
    lean = rng.uniform(-15, 15)
    j[6] = 0.0
    j[7] = _polar(j[6], -2.4 * u, lean)  # thorax above the pelvis
    j[8] = _polar(j[7], -0.5 * u, lean + rng.uniform(-10, 10))
    j[9] = _polar(j[8], -1.1 * u, lean + rng.uniform(-15, 15))
    hip = 0.55 * u
    j[2] = j[6] + [-hip, 0.0]
    j[3] = j[6] + [hip, 0.0]
    for hi, ki, ai, side in ((2, 1, 0, -1), (3, 4, 5, 1)):
        thigh = rng.uniform(-35, 35) + 5 * side
        j[ki] = _polar(j[hi], 1.9 * u, thigh)
        j[ai] = _polar(j[ki], 1.8 * u, thigh + rng.uniform(-40, 10) * side)
    sho = 0.9 * u
    j[12] = j[7] + [-sho, 0.3 * u]
    j[13] = j[7] + [sho, 0.3 * u]
    for si, ei, wi, side in ((12, 11, 10, -1), (13, 14, 15, 1)):
        upper = side * rng.uniform(10, 150)
        j[ei] = _polar(j[si], 1.4 * u, upper)
        j[wi] = _polar(j[ei], 1.3 * u, upper + side * rng.uniform(-20, 110))
    return j


def _random_pose(rng: np.random.Generator, k: int, height: float) -> np.ndarray:
    if k == 16:
        return _mpii_pose(rng, height)
    if k == 14:
        m = _mpii_pose(rng, height)
        # LSP order from the MPII joints (LSP "neck" is the MPII upper neck)
        return m[[0, 1, 2, 3, 4, 5, 10, 11, 12, 13, 14, 15, 8, 9]]
    step = height / max(k - 1, 1)
    pts = [np.zeros(2)]
    angle = rng.uniform(0, 360)
    for _ in range(k - 1):
        angle += rng.uniform(-60, 60)
        pts.append(_polar(pts[-1], step, angle))
    return np.array(pts)


def render_figure(joints: np.ndarray, size: int = INPUT_SIZE, rng=None,
                  limbs: bool = True, background: bool = True, marker_radius: int = 4) -> np.ndarray:
    """Draw a stick figure with one colour-coded disc per joint.

    Returns an ``(H, W, 3)`` float32 image in [0, 1]. Joint ``k`` is drawn as
    a filled disc of :func:`joint_color` ``(k)`` centred at its coordinate.
    """
    rng = np.random.default_rng(rng)
    k = len(joints)
    if background:
        c0, c1 = rng.uniform(0.0, 0.35, 3), rng.uniform(0.0, 0.35, 3)
        t = np.linspace(0, 1, size)[:, None, None]
        img = (c0 * (1 - t) + c1 * t) * np.ones((size, size, 3))
        img += rng.normal(0, 0.03, img.shape)
    else:
        img = np.zeros((size, size, 3))
    img = np.clip(img, 0, 1).astype(np.float32)
    # cv2 draws with 4 fractional bits
    shift = 4
    fp = np.round(np.asarray(joints) * (1 << shift)).astype(np.int32)
    if limbs:
        limb_color = tuple(float(v) for v in rng.uniform(0.45, 0.75, 3))
        for a, b in _limbs(k):
            cv2.line(img, tuple(fp[a]), tuple(fp[b]), limb_color, 3, cv2.LINE_AA, shift)
    for i in range(k):
        color = tuple(float(v) for v in joint_color(i))
        cv2.circle(img, tuple(fp[i]), marker_radius << shift, color, -1, cv2.LINE_AA, shift)
    return img


def synth_dataset(n: int, k: int = 16, rng_seed=0, size: int = INPUT_SIZE,
                  margin: float = 8.0) -> list[tuple[Sample, AnnotationRecord]]:
    """Procedural stick-figure people with exactly known joints.

    16 and 14 joints follow the MPII and LSP orderings; any other ``k`` gives
    a random chain. Every joint is labelled and lies at least ``margin``
    pixels inside the image.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be >= 1")
    rng = np.random.default_rng(rng_seed)
    out = []
    for i in range(n):
        height = rng.uniform(0.55, 0.8) * size
        pose = _random_pose(rng, k, height)
        lo, hi = pose.min(0), pose.max(0)
        extent = (hi - lo).max()
        room = size - 2 * margin
        if extent > room:
            pose = (pose - lo) * (room / extent) + lo
            lo, hi = pose.min(0), pose.max(0)
        # place the figure uniformly where it still fits
        offset = np.array([rng.uniform(margin - lo[d], size - margin - hi[d]) for d in range(2)])
        pose = pose + offset
        img = render_figure(pose, size, rng)
        joints = JointSet.from_coords(pose)
        if k in _HEAD:
            a, b = _HEAD[k]
            # square head box whose side is the neck-to-crown distance
            head = 0.6 * math.sqrt(2) * float(np.linalg.norm(pose[a] - pose[b]))
        else:
            head = 0.1 * float(extent)
        record = AnnotationRecord(
            image_path=f"synthetic://{rng_seed}/{i}",
            center=(size / 2, size / 2),
            scale=size / PIXEL_STD,
            joints=joints,
            head_size=head,
        )
        out.append((Sample(_to_chw_float(img), joints.copy(), record, np.eye(3)[:2]), record))
    return out


def corrupt_joints(joints: JointSet, fraction: float, rng, size: int = INPUT_SIZE,
                   margin: float = 8.0) -> tuple[JointSet, np.ndarray]:
    """Move a random ``fraction`` of labelled joints to uniform random positions."""
    rng = np.random.default_rng(rng)
    out = joints.copy()
    lab = np.flatnonzero(out.labelled)
    n_bad = int(round(fraction * len(lab)))
    bad = rng.choice(lab, size=n_bad, replace=False) if n_bad else np.array([], dtype=int)
    out.joints[bad] = rng.uniform(margin, size - margin, size=(len(bad), 2))
    flags = np.zeros(joints.num_joints, dtype=bool)
    flags[bad] = True
    return out, flags


# -- torch dataset ---------------------------------------------------------


class PoseDataset(torch.utils.data.Dataset):
    """Yields image tensors with Gaussian targets for training and evaluation.

    ``items`` are ready :class:`Sample` objects or :class:`AnnotationRecord`
    objects whose images are read from ``image_root`` and cropped on access.
    Augmentation randomness is derived from ``(seed, epoch, index)``.
    """

    def __init__(
        self,
        items: Sequence[Union[Sample, AnnotationRecord]],
        spec: ImageSpec = ImageSpec(),
        gaussian: GaussianConfig = GaussianConfig(),
        augment_params: Optional[AugmentParams] = None,
        image_root=None,
        seed: int = 0,
    ):
        self.items = list(items)
        self.spec = spec
        self.gaussian = gaussian
        self.augment_params = augment_params
        self.image_root = Path(image_root) if image_root is not None else None
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int):
        self.epoch = epoch

    def __len__(self):
        return len(self.items)

    def sample(self, idx: int) -> Sample:
        item = self.items[idx]
        if isinstance(item, Sample):
            s = item
        else:
            path = Path(item.image_path)
            if self.image_root is not None and not path.is_absolute():
                path = self.image_root / path
            image = cv2.imread(str(path), cv2.IMREAD_COLOR)
            if image is None:
                raise FileNotFoundError(f"cannot read image {path}")
            s = crop_and_resize(item, cv2.cvtColor(image, cv2.COLOR_BGR2RGB), self.spec.height)
        if s.image.shape[-2:] != (self.spec.height, self.spec.width):
            raise ValueError(f"sample image {s.image.shape} does not match {self.spec}")
        if self.augment_params is not None:
            seed = np.random.SeedSequence([self.seed, self.epoch, idx])
            s = augment(s, self.augment_params, seed)
        return s

    def __getitem__(self, idx: int) -> dict:
        s = self.sample(idx)
        target = encode_joints(s.joints, self.spec, self.gaussian)
        return {
            "image": torch.from_numpy(s.image),
            "target": torch.from_numpy(target.astype(np.float32)),
            "mask": torch.from_numpy(s.joints.labelled.astype(np.float32)),
            "joints": torch.from_numpy(s.joints.joints.astype(np.float32)),
            "index": idx,
        }
