"""Command-line entry point: ``fastpose {train-teacher,distill,eval,arch-report,plot-curves}``.

Settings resolve as config file < ``FASTPOSE_*`` environment variables <
flags, and every run writes the fully resolved config to
``<out-dir>/resolved_config.json``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .data import (
    AnnotationParseError,
    AugmentParams,
    flip_pairs_for,
    load_annotations,
    split_train_valid,
    synth_dataset,
)
from .experiments import DESK_AUGMENT, DESK_GAUSSIAN, alpha_sweep
from .metrics import format_report
from .network import STUDENT, TEACHER, HourglassConfig, count_params, estimate_flops
from .training import (
    CheckpointError,
    ContractError,
    TrainConfig,
    TrainingDivergedError,
    distill_student,
    evaluate_model,
    load_checkpoint,
    save_checkpoint,
    train_teacher,
)
from .training import _as_dataset

log = logging.getLogger("fastpose")

PROTOCOL_FLAGS = {"pckh05": "pckh_05", "pck02": "pck_02"}
TABLE6_GRID = ((8, 256), (4, 256), (2, 256), (1, 256), (4, 128), (4, 64), (4, 32))
ENV_PREFIX = "FASTPOSE_"


class ConfigError(ValueError):
    pass


@dataclasses.dataclass
class DataConfig:
    kind: str = "synthetic"
    """``synthetic``, ``mpii_json`` or ``lsp_mat_export``."""
    annotations: Optional[str] = None
    valid_annotations: Optional[str] = None
    image_root: Optional[str] = None
    n_valid: int = 3000
    """Records held out of ``annotations`` when no validation file is given."""
    n_train: int = 64
    num_joints: int = 16


@dataclasses.dataclass
class RunConfig:
    model: HourglassConfig
    train: TrainConfig
    data: DataConfig
    out_dir: str = "runs/default"
    seed: int = 0

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


# -- config resolution -----------------------------------------------------


def _deep_update(base: dict, new: dict) -> dict:
    for k, v in new.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _env_overrides(environ) -> dict:
    out: dict = {}
    casts = {"SEED": ("seed", int), "OUT_DIR": ("out_dir", str), "ALPHA": ("alpha", float),
             "STAGES": ("stages", int), "CHANNELS": ("channels", int)}
    for key, (name, cast) in casts.items():
        if ENV_PREFIX + key in environ:
            out[name] = cast(environ[ENV_PREFIX + key])
    return out


def resolve_config(args, default_model: HourglassConfig, environ=os.environ) -> RunConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"--config: file not found: {path}")
        raw = yaml.safe_load(path.read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"--config: {path} must hold a mapping")

    scalar = _env_overrides(environ)
    for name in ("seed", "out_dir", "stages", "channels"):
        v = getattr(args, name, None)
        if v is not None:
            scalar[name] = v
    alphas = getattr(args, "alpha", None)
    if alphas:
        scalar["alpha"] = alphas[0]

    model = dataclasses.asdict(default_model)
    _deep_update(model, raw.get("model", {}))
    if "stages" in scalar:
        model["num_stages"] = scalar["stages"]
    if "channels" in scalar:
        model["channels"] = scalar["channels"]
    if model.get("stem_channels") is not None:
        model["stem_channels"] = tuple(model["stem_channels"])

    data = dataclasses.asdict(DataConfig())
    _deep_update(data, raw.get("data", {}))
    model.setdefault("num_joints", data["num_joints"])
    if "num_joints" not in raw.get("model", {}):
        model["num_joints"] = data["num_joints"]

    seed = scalar.get("seed", raw.get("seed", 0))
    train = TrainConfig().to_dict()
    if data["kind"] == "synthetic":
        # synthetic figures use the desk-scale target and augmentation settings
        train["gaussian"] = dataclasses.asdict(DESK_GAUSSIAN)
        train["augment"] = json.loads(json.dumps(dataclasses.asdict(DESK_AUGMENT)))
    else:
        aug = dataclasses.asdict(AugmentParams(flip_pairs=flip_pairs_for(data["num_joints"])))
        train["augment"] = json.loads(json.dumps(aug))
    _deep_update(train, raw.get("train", {}))
    train["seed"] = seed
    if "alpha" in scalar:
        train["loss"]["alpha"] = scalar["alpha"]

    try:
        return RunConfig(
            model=HourglassConfig(**model),
            train=TrainConfig.from_dict(train),
            data=DataConfig(**data),
            out_dir=str(scalar.get("out_dir", raw.get("out_dir", "runs/default"))),
            seed=seed,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}") from None


def write_resolved(cfg: RunConfig, extra: Optional[dict] = None) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = cfg.to_dict()
    if extra:
        d.update(extra)
    path = out / "resolved_config.json"
    path.write_text(json.dumps(d, indent=2, sort_keys=True))
    return path


# -- data ------------------------------------------------------------------


def load_data(cfg: RunConfig):
    """Return ``(train_items, valid_items)`` for the configured source."""
    d = cfg.data
    if d.kind == "synthetic":
        size = cfg.model.input_size
        k = cfg.model.num_joints
        train = [s for s, _ in synth_dataset(d.n_train, k, rng_seed=cfg.seed, size=size)]
        n_valid = min(d.n_valid, 256)
        valid = [s for s, _ in synth_dataset(n_valid, k, rng_seed=cfg.seed + 10_000, size=size)]
        return train, valid
    if d.kind not in ("mpii_json", "lsp_mat_export"):
        raise ConfigError(f"data.kind: unknown dataset kind {d.kind!r}")
    if not d.annotations:
        raise ConfigError("data.annotations: no annotation file configured")
    if not Path(d.annotations).is_file():
        raise ConfigError(f"data.annotations: file not found: {d.annotations}")
    if d.image_root is None or not Path(d.image_root).is_dir():
        raise ConfigError(f"data.image_root: directory not found: {d.image_root}")
    records = load_annotations(d.annotations, d.kind)
    if d.valid_annotations:
        if not Path(d.valid_annotations).is_file():
            raise ConfigError(f"data.valid_annotations: file not found: {d.valid_annotations}")
        return records, load_annotations(d.valid_annotations, d.kind)
    return split_train_valid(records, min(d.n_valid, len(records) // 2), seed=cfg.seed)


def _dataset(cfg: RunConfig, items, train: bool):
    return _as_dataset(items, cfg.model, cfg.train, train, cfg.data.image_root)


# -- commands --------------------------------------------------------------


def cmd_train_teacher(args) -> int:
    cfg = resolve_config(args, TEACHER)
    write_resolved(cfg, {"command": "train-teacher"})
    train, valid = load_data(cfg)
    out = Path(cfg.out_dir)
    ckpt = train_teacher(train, cfg.model, cfg.train, valid_items=valid,
                         log_path=out / "train_log.jsonl", image_root=cfg.data.image_root)
    save_checkpoint(ckpt, out / "teacher.pt")
    print(f"teacher checkpoint: {out / 'teacher.pt'} (best mean PCK {ckpt.best_metric})")
    return 0


def cmd_distill(args) -> int:
    cfg = resolve_config(args, STUDENT)
    alphas = args.alpha or [cfg.train.loss.alpha]
    teacher = load_checkpoint(args.teacher_ckpt)
    if teacher.model_config.num_joints != cfg.model.num_joints:
        raise ContractError(
            f"teacher predicts {teacher.model_config.num_joints} joints, student config has "
            f"{cfg.model.num_joints}"
        )
    write_resolved(cfg, {"command": "distill", "alphas": alphas,
                         "teacher_ckpt": str(args.teacher_ckpt)})
    train, valid = load_data(cfg)
    out = Path(cfg.out_dir)
    if len(alphas) == 1:
        tc = dataclasses.replace(cfg.train, loss=dataclasses.replace(cfg.train.loss,
                                                                      alpha=alphas[0]))
        ckpt = distill_student(train, teacher, cfg.model, tc, valid_items=valid,
                               log_path=out / "train_log.jsonl", image_root=cfg.data.image_root)
        save_checkpoint(ckpt, out / "student.pt")
        print(f"student checkpoint: {out / 'student.pt'} (alpha={alphas[0]:g}, "
              f"best mean PCK {ckpt.best_metric})")
        return 0
    results = alpha_sweep(alphas, train, teacher, cfg.model, cfg.train, valid_items=valid,
                          out_dir=out, image_root=cfg.data.image_root)
    for a, (ckpt, _) in results.items():
        print(f"alpha={a:g}: {out / f'alpha_{a:g}' / 'student.pt'} best mean PCK {ckpt.best_metric}")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args, STUDENT)
    # deployment uses the student alone; no teacher is loaded here
    ckpt = load_checkpoint(args.ckpt)
    cfg = dataclasses.replace(cfg, model=ckpt.model_config)
    protocol = PROTOCOL_FLAGS[args.protocol]
    write_resolved(cfg, {"command": "eval", "ckpt": str(args.ckpt), "protocol": protocol})
    _, valid = load_data(cfg)
    model = ckpt.build()
    result = evaluate_model(model, _dataset(cfg, valid, False), protocol)
    result.cost = {"params": count_params(ckpt.model_config),
                   "flops": estimate_flops(ckpt.model_config)}
    out = Path(cfg.out_dir)
    (out / "eval.json").write_text(json.dumps(result.to_dict(), indent=2))
    (out / "pck_curve.json").write_text(json.dumps(result.curve.to_dict(), indent=2))
    print(format_report(result, title=Path(args.ckpt).stem))
    return 0


def _parse_grid(text: Optional[str]):
    if text is None:
        return list(TABLE6_GRID)
    if not text.strip():
        return []
    grid = []
    for item in text.split(","):
        try:
            s, c = item.lower().split("x")
            grid.append((int(s), int(c)))
        except ValueError:
            raise ConfigError(f"--grid: cannot parse {item!r}; expected STAGESxCHANNELS") from None
    return grid


def cmd_arch_report(args) -> int:
    grid = _parse_grid(args.grid)
    stem = (64, 128, 128) if args.fixed_stem else None
    rows = []
    for s, c in grid:
        cfg = HourglassConfig(num_stages=s, channels=c, num_joints=args.joints, stem_channels=stem)
        rows.append({"stages": s, "channels": c, "params": count_params(cfg),
                     "flops": estimate_flops(cfg)})
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    print(f"{'# Stage':>7} | {'# Channel':>9} | {'# Param':>9} | {'FLOPs':>8}")
    for r in rows:
        print(f"{r['stages']:>7} | {r['channels']:>9} | {r['params'] / 1e6:>8.2f}M | "
              f"{r['flops'] / 1e9:>7.2f}G")
    return 0


def cmd_plot_curves(args) -> int:
    if not args.files:
        raise ConfigError("plot-curves: no input files given")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f in map(Path, args.files):
        if not f.is_file():
            raise ConfigError(f"plot-curves: file not found: {f}")
        fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
        if f.suffix == ".jsonl":
            steps = [json.loads(line) for line in f.read_text().splitlines() if line.strip()]
            steps = [r for r in steps if r.get("kind") == "step"]
            if not steps:
                raise ConfigError(f"plot-curves: {f} holds no training steps")
            x = [r["step"] for r in steps]
            for key in ("total", "mse", "distill"):
                ax.plot(x, [r[key] for r in steps], label=key, linewidth=1)
            ax.set_xlabel("step")
            ax.set_ylabel("loss (summed over stages)")
            ax.set_yscale("log")
        else:
            d = json.loads(f.read_text())
            curve = d.get("curve", d)
            if "thresholds" not in curve:
                raise ConfigError(f"plot-curves: {f} is neither a PCK curve nor a training log")
            ax.plot(curve["thresholds"], [100 * a for a in curve["accuracy"]], marker=".")
            kind = curve.get("normalizer_kind", "head")
            ax.set_xlabel(f"threshold (fraction of {kind} size)")
            ax.set_ylabel("PCK (%)")
            ax.set_ylim(0, 100)
        ax.set_title(f.stem)
        ax.grid(True, alpha=0.3)
        if f.suffix == ".jsonl":
            ax.legend()
        fig.tight_layout()
        target = out / f"{f.stem}.png"
        fig.savefig(target, metadata={"Software": None})
        plt.close(fig)
        print(target)
    return 0


# -- parser ----------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--stages", type=int, help="number of hourglass stages")
    p.add_argument("--channels", type=int, help="channels per layer")
    p.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastpose", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train the teacher on ground-truth maps")
    _common(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="train a student against a frozen teacher")
    _common(p)
    p.add_argument("--teacher-ckpt", required=True)
    p.add_argument("--alpha", type=float, action="append",
                   help="distillation weight; repeat for an alpha sweep (default 0.5)")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval", help="evaluate a student checkpoint")
    _common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--protocol", choices=sorted(PROTOCOL_FLAGS), default="pckh05")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("arch-report", help="parameter and FLOP counts per (stages, channels)")
    p.add_argument("--grid", help="comma-separated STAGESxCHANNELS, e.g. 8x256,4x128")
    p.add_argument("--joints", type=int, default=16)
    p.add_argument("--fixed-stem", action="store_true",
                   help="keep the stem at (64, 128, 128) for every width")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_arch_report)

    p = sub.add_parser("plot-curves", help="render PCK curves and training logs to PNG")
    p.add_argument("files", nargs="*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_curves)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ContractError, CheckpointError, AnnotationParseError,
            TrainingDivergedError, FileNotFoundError) as e:
        print(f"fastpose {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
