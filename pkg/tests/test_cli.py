import json
from types import SimpleNamespace

import pytest
import yaml

from fastpose import cli
from fastpose.network import STUDENT, TEACHER

TINY_DATA = {"kind": "synthetic", "n_train": 8, "n_valid": 4}
TINY_TRAIN = {"max_steps": 4, "batch_size": 2, "epochs": 100, "eval_every_steps": 2}


def write_cfg(tmp_path, name="cfg.yaml", **over):
    cfg = {"model": {"input_size": 64}, "data": dict(TINY_DATA), "train": dict(TINY_TRAIN)}
    for k, v in over.items():
        if isinstance(v, dict):
            cfg.setdefault(k, {}).update(v)
        else:
            cfg[k] = v
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def teacher(tmp_path_factory):
    d = tmp_path_factory.mktemp("teacher")
    cfg = write_cfg(d)
    assert run("train-teacher", "--config", cfg, "--stages", 1, "--channels", 16,
               "--out-dir", d / "out") == 0
    return d / "out"


# -- arch-report


def test_arch_report_default_grid(capsys):
    assert run("arch-report") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split("|")[0].strip() == "# Stage"
    assert len(lines) == 8
    assert "25.43M" in lines[1] and "54.88G" in lines[1]


def test_arch_report_empty_grid(capsys):
    assert run("arch-report", "--grid", "") == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 1


def test_arch_report_paper_grid(capsys):
    assert run("arch-report", "--grid", "8x256,4x128", "--json") == 0
    rows = json.loads(capsys.readouterr().out)
    t, s = rows
    assert abs(t["params"] / 26e6 - 1) <= 0.15 and abs(t["flops"] / 55e9 - 1) <= 0.25
    assert abs(s["params"] / 3e6 - 1) <= 0.20 and abs(s["flops"] / 9e9 - 1) <= 0.25


def test_arch_report_width_ratio(capsys):
    assert run("arch-report", "--grid", "4x256,4x64", "--json") == 0
    a, b = json.loads(capsys.readouterr().out)
    ratio = a["params"] / b["params"]
    assert abs(ratio / (13 / 0.95) - 1) <= 0.15


def test_arch_report_fixed_stem(capsys):
    assert run("arch-report", "--grid", "4x64", "--fixed-stem", "--json") == 0
    (row,) = json.loads(capsys.readouterr().out)
    assert abs(row["params"] / 0.95e6 - 1) <= 0.02


def test_arch_report_bad_grid(capsys):
    assert run("arch-report", "--grid", "4by64") == 1
    assert "--grid" in capsys.readouterr().err


# -- config resolution


def _args(**kw):
    base = dict(config=None, seed=None, out_dir=None, stages=None, channels=None, alpha=None)
    base.update(kw)
    return SimpleNamespace(**base)


def test_precedence_file_env_flag(tmp_path):
    cfg = write_cfg(tmp_path, seed=1, out_dir="from_file")
    r = cli.resolve_config(_args(config=cfg), STUDENT, environ={})
    assert r.seed == 1 and r.train.seed == 1 and r.out_dir == "from_file"
    env = {"FASTPOSE_SEED": "2", "FASTPOSE_ALPHA": "0.25", "FASTPOSE_CHANNELS": "32"}
    r = cli.resolve_config(_args(config=cfg), STUDENT, environ=env)
    assert r.seed == 2 and r.train.loss.alpha == 0.25 and r.model.channels == 32
    r = cli.resolve_config(_args(config=cfg, seed=3, alpha=[0.75], channels=64), STUDENT,
                           environ=env)
    assert r.seed == 3 and r.train.loss.alpha == 0.75 and r.model.channels == 64


def test_defaults(tmp_path):
    r = cli.resolve_config(_args(), TEACHER, environ={})
    assert (r.model.num_stages, r.model.channels) == (8, 256)
    assert r.train.loss.alpha == 0.5 and r.train.learning_rate == 2.5e-4


def test_json_config_accepted(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"model": {"num_stages": 2}, "train": {"loss": {"alpha": 0.1}}}))
    r = cli.resolve_config(_args(config=str(p)), STUDENT, environ={})
    assert r.model.num_stages == 2 and r.train.loss.alpha == 0.1


def test_bad_config_values(tmp_path, capsys):
    cfg = write_cfg(tmp_path, model={"num_stages": 0})
    assert run("train-teacher", "--config", cfg, "--out-dir", tmp_path / "o") == 1
    assert "invalid configuration" in capsys.readouterr().err


# -- train / distill / eval


def test_train_teacher_outputs(teacher):
    assert (teacher / "teacher.pt").is_file()
    assert (teacher / "train_log.jsonl").read_text().strip()
    resolved = json.loads((teacher / "resolved_config.json").read_text())
    assert resolved["model"]["channels"] == 16 and resolved["command"] == "train-teacher"


def test_train_teacher_rerun_reproduces_final_loss(tmp_path, teacher):
    cfg = write_cfg(tmp_path)
    assert run("train-teacher", "--config", cfg, "--stages", 1, "--channels", 16,
               "--out-dir", tmp_path / "again") == 0

    def last(path):
        steps = [json.loads(x) for x in path.read_text().splitlines()]
        return [s for s in steps if s["kind"] == "step"][-1]["total"]

    assert last(tmp_path / "again" / "train_log.jsonl") == last(teacher / "train_log.jsonl")


def test_missing_dataset_path(tmp_path, capsys):
    cfg = write_cfg(tmp_path, data={"kind": "mpii_json", "annotations": str(tmp_path / "no.json")})
    assert run("train-teacher", "--config", cfg, "--out-dir", tmp_path / "o") != 0
    assert "data.annotations" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert run("train-teacher", "--config", tmp_path / "nope.yaml") != 0
    assert "--config" in capsys.readouterr().err


def test_distill_alpha_sweep(tmp_path, teacher):
    cfg = write_cfg(tmp_path)
    assert run("distill", "--config", cfg, "--teacher-ckpt", teacher / "teacher.pt",
               "--stages", 1, "--channels", 8, "--out-dir", tmp_path / "sweep",
               "--alpha", 0, "--alpha", 0.5, "--alpha", 1) == 0
    for a in ("0", "0.5", "1"):
        run_dir = tmp_path / "sweep" / f"alpha_{a}"
        assert (run_dir / "student.pt").is_file()
        alpha = float(a)
        for line in (run_dir / "train_log.jsonl").read_text().splitlines():
            r = json.loads(line)
            if r["kind"] == "step":
                assert r["alpha"] == alpha
                assert r["total"] == pytest.approx(alpha * r["distill"] + (1 - alpha) * r["mse"],
                                                   rel=1e-5)


def test_distill_default_alpha(tmp_path, teacher):
    cfg = write_cfg(tmp_path)
    assert run("distill", "--config", cfg, "--teacher-ckpt", teacher / "teacher.pt",
               "--stages", 1, "--channels", 8, "--out-dir", tmp_path / "one") == 0
    resolved = json.loads((tmp_path / "one" / "resolved_config.json").read_text())
    assert resolved["train"]["loss"]["alpha"] == 0.5
    assert (tmp_path / "one" / "student.pt").is_file()


def test_distill_joint_mismatch(tmp_path, teacher, capsys):
    cfg = write_cfg(tmp_path, data={"num_joints": 14})
    assert run("distill", "--config", cfg, "--teacher-ckpt", teacher / "teacher.pt",
               "--stages", 1, "--channels", 8, "--out-dir", tmp_path / "mm") != 0
    assert "joints" in capsys.readouterr().err


def test_distill_bad_teacher(tmp_path, capsys):
    bad = tmp_path / "bad.pt"
    bad.write_bytes(b"\x00" * 10)
    cfg = write_cfg(tmp_path)
    assert run("distill", "--config", cfg, "--teacher-ckpt", bad, "--out-dir", tmp_path / "x") != 0
    assert "bad.pt" in capsys.readouterr().err


def test_eval_loads_only_student(tmp_path, teacher, monkeypatch, capsys):
    cfg = write_cfg(tmp_path)
    assert run("distill", "--config", cfg, "--teacher-ckpt", teacher / "teacher.pt",
               "--stages", 1, "--channels", 8, "--out-dir", tmp_path / "s") == 0
    loaded = []
    real = cli.load_checkpoint
    monkeypatch.setattr(cli, "load_checkpoint", lambda p, *a, **k: loaded.append(str(p)) or real(p))
    capsys.readouterr()
    assert run("eval", "--config", cfg, "--ckpt", tmp_path / "s" / "student.pt",
               "--protocol", "pckh05", "--out-dir", tmp_path / "e") == 0
    assert loaded == [str(tmp_path / "s" / "student.pt")]
    out = capsys.readouterr().out
    assert "PCKh@0.5" in out and "Mean" in out and "# Param" in out
    curve = json.loads((tmp_path / "e" / "pck_curve.json").read_text())
    assert len(curve["thresholds"]) == 51
    result = json.loads((tmp_path / "e" / "eval.json").read_text())
    assert result["protocol"] == "pckh_05" and result["cost"]["params"] > 0


def test_eval_pck02(tmp_path, teacher, capsys):
    cfg = write_cfg(tmp_path)
    assert run("eval", "--config", cfg, "--ckpt", teacher / "teacher.pt", "--protocol", "pck02",
               "--out-dir", tmp_path / "e2") == 0
    assert "PCK@0.2" in capsys.readouterr().out


# -- plots


def test_plot_curves(tmp_path, teacher):
    curve = tmp_path / "curve.json"
    curve.write_text(json.dumps({"thresholds": [0, 0.25, 0.5], "accuracy": [0, 0.6, 0.9]}))
    log = teacher / "train_log.jsonl"
    assert run("plot-curves", curve, log, "--out", tmp_path / "p1") == 0
    assert run("plot-curves", curve, log, "--out", tmp_path / "p2") == 0
    pngs = sorted(p.name for p in (tmp_path / "p1").iterdir())
    assert pngs == ["curve.png", "train_log.png"]
    for name in pngs:
        a = (tmp_path / "p1" / name).read_bytes()
        assert a[:8] == b"\x89PNG\r\n\x1a\n"
        assert a == (tmp_path / "p2" / name).read_bytes()


def test_plot_curves_errors(tmp_path, capsys):
    assert run("plot-curves", "--out", tmp_path / "p") != 0
    assert "no input" in capsys.readouterr().err
    junk = tmp_path / "junk.json"
    junk.write_text("{}")
    assert run("plot-curves", junk, "--out", tmp_path / "p") != 0
