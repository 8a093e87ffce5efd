import cv2
import numpy as np
import pytest
import torch
from torch import nn

from fastpose.data import AnnotationRecord, AugmentParams, PoseDataset, synth_dataset
from fastpose.heatmap import GaussianConfig, JointSet, encode_joints
from fastpose.losses import LossConfig
from fastpose.network import TEACHER, HourglassConfig, build_model
from fastpose.training import (
    Checkpoint,
    CheckpointError,
    ContractError,
    GroundTruthTeacher,
    IncompatibleCheckpointError,
    TrainConfig,
    TrainingDivergedError,
    TrainLog,
    distill_student,
    load_checkpoint,
    predict,
    save_checkpoint,
    train_teacher,
    weight_digest,
)

TINY = HourglassConfig(1, 16, input_size=64)
TINY_T = HourglassConfig(1, 24, input_size=64)


def tc(**kw):
    base = dict(epochs=3, max_steps=6, batch_size=2, gaussian=GaussianConfig(2.0, False),
                augment=AugmentParams(hflip_prob=0.0, flip_pairs=()), seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def items():
    return [s for s, _ in synth_dataset(8, 16, rng_seed=0, size=64)]


@pytest.fixture(scope="module")
def teacher_ckpt(items):
    return train_teacher(items, TINY_T, tc(max_steps=4))


def _probe(model):
    x = torch.rand(2, 3, 64, 64, generator=torch.Generator().manual_seed(0))
    with torch.no_grad():
        return model.eval()(x)[-1]


# -- config and checkpoints


def test_train_config_defaults_and_roundtrip():
    t = TrainConfig()
    assert (t.learning_rate, t.batch_size, t.loss.alpha) == (2.5e-4, 4, 0.5)
    assert TrainConfig.from_dict(t.to_dict()) == t
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_checkpoint_roundtrip(tmp_path, teacher_ckpt):
    p = save_checkpoint(teacher_ckpt, tmp_path / "t.pt")
    back = load_checkpoint(p)
    assert back.digest() == teacher_ckpt.digest()
    assert back.model_config == TINY_T and back.role == "teacher"
    assert torch.equal(_probe(back.build()), _probe(teacher_ckpt.build()))
    assert [f.name for f in tmp_path.iterdir()] == ["t.pt"]


def test_truncated_and_missing_checkpoint(tmp_path, teacher_ckpt):
    p = save_checkpoint(teacher_ckpt, tmp_path / "t.pt")
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "none.pt")
    (tmp_path / "junk.pt").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.pt")


def test_version_mismatch(tmp_path, teacher_ckpt):
    p = save_checkpoint(teacher_ckpt, tmp_path / "t.pt")
    payload = torch.load(p, weights_only=True)
    payload["version"] = 99
    torch.save(payload, p)
    with pytest.raises(IncompatibleCheckpointError):
        load_checkpoint(p)


def test_config_mismatch_is_contract_error(tmp_path, teacher_ckpt):
    p = save_checkpoint(teacher_ckpt, tmp_path / "t.pt")
    with pytest.raises(ContractError):
        load_checkpoint(p, expected_config=TINY)
    assert load_checkpoint(p, expected_config=TINY_T).model_config == TINY_T


def test_teacher_preset_checkpoint_as_student(tmp_path):
    ck = Checkpoint({}, TEACHER, {}, role="teacher")
    p = save_checkpoint(ck, tmp_path / "big.pt")
    with pytest.raises(ContractError):
        load_checkpoint(p, expected_config=HourglassConfig(4, 128))


# -- training loop


def test_epochs_zero_returns_initial_weights(items):
    ck = train_teacher(items, TINY, tc(epochs=0))
    init = build_model(TINY, seed=0)
    assert ck.step == 0
    assert ck.digest() == weight_digest(init)


def test_empty_data_rejected():
    with pytest.raises(ValueError):
        train_teacher([], TINY, tc())


def test_determinism(items):
    a, b = TrainLog(), TrainLog()
    ca = train_teacher(items, TINY, tc(), trainlog=a)
    cb = train_teacher(items, TINY, tc(), trainlog=b)
    assert a.losses() == b.losses() and len(a.losses()) == 6
    assert ca.digest() == cb.digest()


def test_loss_decreases(items):
    log = TrainLog()
    train_teacher(items[:4], TINY, tc(epochs=100, max_steps=60, augment=None), trainlog=log)
    losses = log.losses()
    assert np.mean(losses[-10:]) < np.mean(losses[:10])


def test_log_file_and_eval_records(tmp_path, items):
    ck = train_teacher(items, TINY, tc(eval_every_steps=3), valid_items=items[:2],
                       log_path=tmp_path / "log.jsonl")
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert any('"kind": "eval"' in line for line in lines)
    assert ck.best_metric is not None and 0 <= ck.best_metric <= 1


def test_alpha_zero_matches_teacher_training(items, teacher_ckpt):
    a, b = TrainLog(), TrainLog()
    train_teacher(items, TINY, tc(), trainlog=a)
    distill_student(items, teacher_ckpt, TINY, tc(loss=LossConfig(alpha=0.0)), trainlog=b)
    assert a.losses() == b.losses()


def test_ground_truth_teacher_equals_alpha_zero(items):
    a, b = TrainLog(), TrainLog()
    distill_student(items, GroundTruthTeacher(), TINY, tc(loss=LossConfig(alpha=0.0)), trainlog=a)
    distill_student(items, GroundTruthTeacher(), TINY, tc(loss=LossConfig(alpha=0.5)), trainlog=b)
    assert a.losses() == b.losses()


def test_logged_terms_affine_in_alpha(items, teacher_ckpt):
    log = TrainLog()
    distill_student(items, teacher_ckpt, TINY, tc(loss=LossConfig(alpha=0.3)), trainlog=log)
    for r in log.steps():
        expect = 0.3 * r["distill"] + 0.7 * r["mse"]
        assert r["total"] == pytest.approx(expect, rel=1e-5)
        assert r["distill"] > 0 and r["mse"] > 0


def test_teacher_untouched(items, teacher_ckpt, tmp_path):
    before = teacher_ckpt.digest()
    model = teacher_ckpt.build()
    distill_student(items, model, TINY, tc())
    assert weight_digest(model) == before == teacher_ckpt.digest()
    assert not any(p.requires_grad for p in model.parameters())
    # a checkpoint path works as well
    p = save_checkpoint(teacher_ckpt, tmp_path / "t.pt")
    distill_student(items, str(p), TINY, tc(max_steps=1))


def test_joint_mismatch(items, teacher_ckpt):
    with pytest.raises(ContractError):
        distill_student(items, teacher_ckpt, TINY.replace(num_joints=14), tc())
    bad = lambda batch: batch["target"][:, :3]  # noqa: E731
    with pytest.raises(ContractError):
        distill_student(items, bad, TINY, tc())


def test_divergence_detected(items):
    nan_teacher = lambda batch: torch.full_like(batch["target"], float("nan"))  # noqa: E731
    with pytest.raises(TrainingDivergedError, match="step 0"):
        distill_student(items, nan_teacher, TINY, tc(loss=LossConfig(alpha=1.0)))


class _Replay(nn.Module):
    """Answers with precomputed maps, one per dataset index in order."""

    def __init__(self, maps):
        super().__init__()
        self.maps = maps
        self.i = 0

    def forward(self, x):
        out = self.maps[self.i : self.i + len(x)]
        self.i += len(x)
        return [out]


def test_predict_maps_back_to_source_frame(tmp_path):
    img = (np.random.default_rng(0).random((300, 400, 3)) * 255).astype(np.uint8)
    cv2.imwrite(str(tmp_path / "p.png"), img)
    rng = np.random.default_rng(1)
    recs = []
    for i in range(5):
        c = rng.uniform(150, 250, 2)
        pts = c + rng.uniform(-60, 60, size=(16, 2))
        recs.append(AnnotationRecord("p.png", c, 0.8, JointSet.from_coords(pts), head_size=20.0))
    ds = PoseDataset(recs, image_root=tmp_path)
    maps = torch.from_numpy(np.stack([encode_joints(ds.sample(i).joints, ds.spec) for i in range(5)]))
    coords, _ = predict(_Replay(maps), ds, batch_size=2)
    # one heatmap pixel is 4 crop pixels = 4 * 160 / 256 source pixels
    tol = 0.5 * 4 * 160 / 256
    for i, r in enumerate(recs):
        assert np.abs(coords[i] - r.joints.joints).max() <= tol + 1e-9
