"""Command-line front end: gen, train, attack, eval, sweep.

One JSON config document drives every command; flags override config fields
which override built-in defaults. Every run is bit-reproducible from its
master seed, and every JSON/CSV output embeds the config hash so that eval
refuses to mix score files from different configurations.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import svgplot
from .attack import AttackConfig, attack_sample
from .baselines import BaselineConfig, baseline_record
from .datasets import (
    generate_synthetic,
    load_dataset,
    load_manifest,
    save_dataset,
    save_manifest,
    split,
)
from .denoiser import TrainConfig, init_predictor, load_checkpoint, save_checkpoint, train
from .diffusion import build_linear_schedule
from .errors import (
    CheckpointCorruptError,
    DatasetCorruptError,
    EvalDegenerateError,
    InvalidArgumentError,
    NumericDegenerateError,
    TrainingDivergedError,
)
from .evaluation import emit_plots, emit_report, evaluate_records, read_records, write_records
from .numerics import SeededRng

log = logging.getLogger("dmia")

# Exit codes, one per error class.
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID_CONFIG = 2
EXIT_MISSING_FILE = 3
EXIT_CORRUPT_FILE = 4
EXIT_DEGENERATE_EVAL = 5
EXIT_NUMERIC = 6
EXIT_DIVERGED = 7

# Stream purposes for the pipeline; per-sample substreams use the index slot.
STREAM_DATA = 1
STREAM_SPLIT = 2
STREAM_MODEL_INIT = 3
STREAM_ATTACK = 4
STREAM_NAIVE_LOSS = 5

SWEEP_AXES = ("attack_t", "sigma", "k", "stride_m", "metric")

DEFAULT_CONFIG = {
    "master_seed": 1,
    "out_dir": "runs/out",
    "dataset": {"kind": "patterned-patches-8x8", "count": 512, "name": "data"},
    "split": {"fraction": 0.5},
    "schedule": {"total_steps": 1000, "beta_start": 1e-4, "beta_end": 0.02},
    "model": {"hidden_dims": [128, 128], "time_embed_dim": 16},
    "train": {
        "epochs": 2000,
        "batch_size": 32,
        "learning_rate": 2e-3,
        "optimizer": "momentum-sgd",
        "momentum": 0.9,
    },
    "attack": {
        "attack_t": 80,
        "k": 5,
        "stride_m": 10,
        "sigma": 0.1,
        "injection_mode": "schedule",
        "metric": "l2",
        "delta": 1e-10,
    },
    "baseline": {"baseline_t": 80, "n_eps_draws": 1, "secmi_num_steps": 10, "stride": 8},
    "attacks": ["aggregation", "naive_loss", "secmi"],
    "eval": {"fpr_targets": [0.01, 0.001]},
    "sweep": {"parallel": False},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_run_config(config_path=None, seed=None, out_dir=None) -> dict:
    """Merged run config with precedence flag > config file > default."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InvalidArgumentError("config root must be a JSON object")
        cfg = _merge(cfg, loaded)
    if seed is not None:
        cfg["master_seed"] = int(seed)
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    return cfg


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _schedule_from(cfg: dict):
    sc = cfg["schedule"]
    return build_linear_schedule(
        int(sc["total_steps"]), float(sc["beta_start"]), float(sc["beta_end"])
    )


def _attack_config_from(cfg: dict) -> AttackConfig:
    at = cfg["attack"]
    return AttackConfig(
        attack_t=int(at["attack_t"]),
        k=int(at["k"]),
        stride_m=int(at["stride_m"]),
        sigma=float(at["sigma"]),
        injection_mode=str(at["injection_mode"]),
        metric=str(at["metric"]),
        delta=float(at["delta"]),
    )


def _baseline_config_from(cfg: dict) -> BaselineConfig:
    bl = cfg["baseline"]
    return BaselineConfig(
        baseline_t=int(bl["baseline_t"]),
        n_eps_draws=int(bl["n_eps_draws"]),
        secmi_num_steps=int(bl["secmi_num_steps"]),
        stride=int(bl["stride"]),
    )


def _paths(cfg: dict) -> dict:
    out = Path(cfg["out_dir"])
    return {
        "out": out,
        "dataset": out / f"{cfg['dataset']['name']}.dset",
        "manifest": out / "split.json",
        "checkpoint": out / "model.ckpt",
        "loss_trace": out / "loss_trace.json",
        "records": out / "records.jsonl",
        "plots": out / "plots",
    }


def cmd_gen(cfg: dict) -> None:
    """Generate the dataset and its member/non-member split manifest."""
    paths = _paths(cfg)
    paths["out"].mkdir(parents=True, exist_ok=True)
    rng = SeededRng(cfg["master_seed"])
    dataset = generate_synthetic(
        cfg["dataset"]["kind"],
        int(cfg["dataset"]["count"]),
        rng.stream(STREAM_DATA),
        name=cfg["dataset"]["name"],
    )
    manifest = split(dataset, float(cfg["split"]["fraction"]), rng.stream(STREAM_SPLIT))
    save_dataset(dataset, paths["dataset"])
    save_manifest(manifest, paths["manifest"], config_hash=config_hash(cfg))
    log.info("wrote %s (%d x %d) and %s", paths["dataset"], len(dataset), dataset.dim,
             paths["manifest"])


def cmd_train(cfg: dict) -> None:
    """Train the denoiser on the member split; write checkpoint and trace."""
    paths = _paths(cfg)
    dataset = load_dataset(_require(paths["dataset"]))
    manifest = load_manifest(_require(paths["manifest"]))
    schedule = _schedule_from(cfg)
    rng = SeededRng(cfg["master_seed"])
    model = init_predictor(
        dataset.dim,
        [int(h) for h in cfg["model"]["hidden_dims"]],
        rng.stream(STREAM_MODEL_INIT),
        time_embed_dim=int(cfg["model"]["time_embed_dim"]),
    )
    tc = cfg["train"]
    train_config = TrainConfig(
        epochs=int(tc["epochs"]),
        batch_size=int(tc["batch_size"]),
        learning_rate=float(tc["learning_rate"]),
        seed=int(cfg["master_seed"]),
        optimizer=str(tc["optimizer"]),
        momentum=float(tc["momentum"]),
    )
    members = dataset.samples[list(manifest.member_indices)]
    trace = train(model, schedule, members, train_config)
    save_checkpoint(model, paths["checkpoint"])
    paths["loss_trace"].write_text(
        json.dumps(
            {"config_hash": config_hash(cfg), "epochs": len(trace), "loss_trace": trace},
            sort_keys=True,
        )
        + "\n"
    )
    log.info("trained %d epochs, final probe loss %.4f", len(trace), trace[-1])


def _require(path: Path) -> Path:
    if not Path(path).exists():
        raise FileNotFoundError(f"missing required file: {path}")
    return Path(path)


def _score_all(cfg: dict, dataset, manifest, model, schedule) -> list:
    """Score every member and non-member with each configured attack."""
    attack_config = _attack_config_from(cfg)
    baseline_config = _baseline_config_from(cfg)
    rng = SeededRng(cfg["master_seed"])
    chash = config_hash(cfg)
    labelled = [(i, True) for i in manifest.member_indices] + [
        (i, False) for i in manifest.nonmember_indices
    ]
    records = []
    for kind in cfg["attacks"]:
        for sample_id, is_member in labelled:
            x0 = dataset.samples[sample_id]
            if kind == "aggregation":
                rec = attack_sample(
                    schedule, model, x0, attack_config,
                    rng.stream(STREAM_ATTACK, sample_id),
                    sample_id=sample_id, is_member=is_member,
                    attack_tag="aggregation", config_hash=chash,
                )
            elif kind in ("naive_loss", "secmi"):
                rec = baseline_record(
                    schedule, model, x0, baseline_config, kind,
                    rng=rng.stream(STREAM_NAIVE_LOSS, sample_id),
                    sample_id=sample_id, is_member=is_member, config_hash=chash,
                )
            else:
                raise InvalidArgumentError(
                    f"attacks: unknown attack {kind!r}; expected aggregation, "
                    "naive_loss, or secmi"
                )
            records.append(rec)
    return records


def cmd_attack(cfg: dict) -> None:
    """Score the full split with the configured attacks; write JSON lines."""
    paths = _paths(cfg)
    dataset = load_dataset(_require(paths["dataset"]))
    manifest = load_manifest(_require(paths["manifest"]))
    model = load_checkpoint(_require(paths["checkpoint"]))
    schedule = _schedule_from(cfg)
    records = _score_all(cfg, dataset, manifest, model, schedule)
    write_records(records, paths["records"])
    log.info("wrote %d records to %s", len(records), paths["records"])


def cmd_eval(cfg: dict) -> None:
    """Evaluate the score file into report JSON/text and SVG plots."""
    paths = _paths(cfg)
    records = read_records(_require(paths["records"]))
    if not records:
        raise EvalDegenerateError("records file is empty")
    hashes = sorted({r.config_hash for r in records})
    if len(hashes) != 1:
        raise InvalidArgumentError(f"records mix config hashes {hashes}")
    targets = [float(t) for t in cfg["eval"]["fpr_targets"]]
    tags = sorted({r.attack_tag for r in records})
    reports = [
        evaluate_records([r for r in records if r.attack_tag == tag], targets)
        for tag in tags
    ]
    emit_report(reports, paths["out"], config_hash=hashes[0])
    emit_plots(records, paths["plots"])
    for rep in reports:
        log.info("%s: ASR %.4f AUC %.4f", rep.attack_tag, rep.asr, rep.auc)


def _sweep_value_config(cfg: dict, axis: str, value) -> dict:
    point = copy.deepcopy(cfg)
    point["attack"][axis] = value
    point["out_dir"] = str(Path(cfg["out_dir"]) / f"sweep_{axis}" / str(value))
    point["attacks"] = ["aggregation"]
    return point


def _run_sweep_point(point_cfg: dict, dataset, manifest, checkpoint_path) -> dict:
    model = load_checkpoint(checkpoint_path)
    schedule = _schedule_from(point_cfg)
    records = _score_all(point_cfg, dataset, manifest, model, schedule)
    paths = _paths(point_cfg)
    paths["out"].mkdir(parents=True, exist_ok=True)
    write_records(records, paths["records"])
    targets = [float(t) for t in point_cfg["eval"]["fpr_targets"]]
    report = evaluate_records(records, targets)
    emit_report([report], paths["out"], config_hash=config_hash(point_cfg))
    return {"report": report, "config_hash": config_hash(point_cfg)}


def parse_sweep_values(axis: str, raw: str) -> list:
    if axis not in SWEEP_AXES:
        raise InvalidArgumentError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise InvalidArgumentError("sweep values must not be empty")
    if axis == "metric":
        return values
    if axis == "sigma":
        return [float(v) for v in values]
    return [int(v) for v in values]


def cmd_sweep(cfg: dict, axis: str, values) -> None:
    """Repeat attack + eval across a parameter grid; write a combined CSV."""
    paths = _paths(cfg)
    dataset = load_dataset(_require(paths["dataset"]))
    manifest = load_manifest(_require(paths["manifest"]))
    _require(paths["checkpoint"])
    point_cfgs = [_sweep_value_config(cfg, axis, v) for v in values]
    for point in point_cfgs:
        _attack_config_from(point)  # validate before any work

    if cfg["sweep"].get("parallel", False):
        with concurrent.futures.ThreadPoolExecutor(max_workers=len(point_cfgs)) as pool:
            results = list(
                pool.map(
                    lambda p: _run_sweep_point(p, dataset, manifest, paths["checkpoint"]),
                    point_cfgs,
                )
            )
    else:
        results = [
            _run_sweep_point(p, dataset, manifest, paths["checkpoint"]) for p in point_cfgs
        ]

    csv_path = paths["out"] / f"sweep_{axis}.csv"
    lines = ["axis,value,asr,auc,tpr_at_1pct,tpr_at_0p1pct,mean_queries,config_hash"]
    for value, result in zip(values, results):
        rep = result["report"]
        lines.append(
            f"{axis},{value},{rep.asr:.6f},{rep.auc:.6f},"
            f"{rep.tpr_at_fpr.get(0.01, float('nan')):.6f},"
            f"{rep.tpr_at_fpr.get(0.001, float('nan')):.6f},"
            f"{rep.mean_queries:.2f},{result['config_hash']}"
        )
    csv_path.write_text("\n".join(lines) + "\n")

    if axis != "metric":
        chart = svgplot.line_chart(
            [
                ("AUC", [float(v) for v in values], [r["report"].auc for r in results]),
                ("ASR", [float(v) for v in values], [r["report"].asr for r in results]),
            ],
            title=f"sweep over {axis}",
            xlabel=axis,
            ylabel="rate",
        )
        (paths["out"] / f"sweep_{axis}.svg").write_text(chart)
    log.info("sweep over %s: %d points -> %s", axis, len(values), csv_path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmia",
        description="Membership inference lab for diffusion models: "
        "generate data, train a denoiser, attack, evaluate, sweep.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen", "generate dataset and split manifest"),
        ("train", "train the denoiser on the member split"),
        ("attack", "score members and non-members"),
        ("eval", "compute reports and plots from scores"),
        ("sweep", "repeat attack+eval over a parameter grid"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=str, default=None, help="JSON config path")
        cmd.add_argument("--seed", type=int, default=None, help="master seed override")
        cmd.add_argument("--out", type=str, default=None, help="output directory override")
        if name == "sweep":
            cmd.add_argument("--axis", type=str, required=True, choices=SWEEP_AXES)
            cmd.add_argument(
                "--values", type=str, required=True, help="comma-separated grid values"
            )
    return parser


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("DMIA_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.seed, args.out)
        if args.command == "gen":
            cmd_gen(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "attack":
            cmd_attack(cfg)
        elif args.command == "eval":
            cmd_eval(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg, args.axis, parse_sweep_values(args.axis, args.values))
    except InvalidArgumentError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (CheckpointCorruptError, DatasetCorruptError) as exc:
        print(f"corrupt input: {exc}", file=sys.stderr)
        return EXIT_CORRUPT_FILE
    except EvalDegenerateError as exc:
        print(f"degenerate evaluation: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE_EVAL
    except NumericDegenerateError as exc:
        print(f"numeric degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
