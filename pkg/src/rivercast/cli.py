"""Command-line pipeline: gen | train | eval | domain | probe | gradcheck.

Every command reads a JSON config (flags override file values, file values
override built-in defaults), writes only under the output directory, and
embeds the effective config hash plus seed in everything it produces. Exit
codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .diagnostics import run_variant_grad_check
from .models import VariantConfig
from .traffic import GeneratorConfig, generate_situation, load_situations, save_situations, window_situation
from .training import TrainConfig, TrainingDiverged, train
from .waterway import WaterwayAxis, load_axis, make_curved_axis, make_straight_axis, save_axis

log = logging.getLogger(__name__)

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out": "runs/out",
    "workers": 1,
    "axis": {
        "kind": "curved",  # curved | straight | file
        "length_km": 16.0,
        "start_wkm": 595.0,
        "bend_heading_rad": 0.35,
        "bend_wavelength_m": 4000.0,
        "step_m": 25.0,
        "fairway_half_width_m": 75.0,
        "csv": None,
    },
    "generator": {
        "n_train": 500,
        "n_val": 60,
        "n_test": 60,
        "duration_min": 10,
        "speed_range": [0.15, 0.35],
        "lane_offset_m": 15.0,
        "lane_jitter_m": 4.0,
        "headon_fraction": 0.2,
        "overtaker_fraction": 0.25,
        "extra_arrival_rate": 0.02,
        "evasive_trigger_wkm": 0.5,
        "evasive_max_m": 10.0,
        "evasive_rate_m_min": 6.0,
        "overtake_trigger_wkm": 0.3,
        "overtake_shift_m": 8.0,
        "overtake_clear_wkm": 0.15,
        "noise_lateral_m": 1.0,
        "noise_longitudinal_wkm": 0.002,
        "rules_enabled": True,
        "spawn_margin_wkm": 0.5,
    },
    "model": {"variant": "E-DA", "hidden_size": 64, "horizon": 5, "s_init": 0.1},
    "training": {"epochs": 100, "lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "data": {"dir": None, "checkpoint": None},
    "eval": {"split": "test"},
    "probe": {
        "split": "test",
        "situation_id": None,
        "window_start": None,
        "target": None,
        "neighbor": None,
        "kind": "lateral_shift",
        "amount": 10.0,
    },
    "gradcheck": {
        "variants": ["EA-DA", "E-DA", "E-DDA"],
        "hidden_size": 8,
        "horizon": 3,
        "tolerance": 1e-4,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ValueError(f"config file not found: {path}")
        cfg = _deep_merge(cfg, json.loads(path.read_text()))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.workers is not None:
        cfg["workers"] = args.workers
    if getattr(args, "variant", None):
        cfg["model"]["variant"] = args.variant
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _stamp(cfg: dict) -> str:
    return f"config_hash={config_hash(cfg)} seed={cfg['seed']}"


def _build_axis(cfg: dict) -> WaterwayAxis:
    a = cfg["axis"]
    if a["kind"] == "file":
        if not a.get("csv"):
            raise ValueError("axis.kind is 'file' but axis.csv is not set")
        return load_axis(a["csv"])
    if a["kind"] == "straight":
        return make_straight_axis(a["length_km"], a["start_wkm"], a["step_m"], a["fairway_half_width_m"])
    if a["kind"] == "curved":
        return make_curved_axis(
            a["length_km"], a["start_wkm"], a["bend_heading_rad"],
            a["bend_wavelength_m"], a["step_m"], a["fairway_half_width_m"],
        )
    raise ValueError(f"unknown axis.kind {a['kind']!r}")


def _data_dir(cfg: dict) -> Path:
    d = cfg["data"]["dir"] or cfg["out"]
    path = Path(d)
    if not path.exists():
        raise ValueError(f"dataset directory not found: {path}")
    return path


def _load_split(cfg: dict, split: str):
    path = _data_dir(cfg) / f"{split}.ndjson"
    if not path.exists():
        raise ValueError(f"dataset file not found: {path}")
    return load_situations(path)


def _load_data_axis(cfg: dict) -> WaterwayAxis:
    path = _data_dir(cfg) / "axis.csv"
    if not path.exists():
        raise ValueError(f"axis file not found: {path}")
    return load_axis(path)


def _generate_many(axis, gen_cfg, seed, indices, workers):
    if workers <= 1:
        return [generate_situation(axis, gen_cfg, seed, i) for i in indices]
    chunks = np.array_split(np.asarray(indices), workers)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = ex.map(_gen_chunk, [(axis, gen_cfg, seed, list(c)) for c in chunks])
        return [s for part in parts for s in part]


def _gen_chunk(task):
    axis, gen_cfg, seed, indices = task
    return [generate_situation(axis, gen_cfg, seed, int(i)) for i in indices]


def cmd_gen(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    axis = _build_axis(cfg)
    g = dict(cfg["generator"])
    n_train, n_val, n_test = g.pop("n_train"), g.pop("n_val"), g.pop("n_test")
    gen_cfg = GeneratorConfig(n_situations=0, **{k: v for k, v in g.items()})
    gen_cfg.validate()
    total = n_train + n_val + n_test
    seed = cfg["seed"]
    situations = _generate_many(axis, gen_cfg, seed, range(total), cfg["workers"])
    splits = {
        "train": situations[:n_train],
        "val": situations[n_train : n_train + n_val],
        "test": situations[n_train + n_val :],
    }
    save_axis(axis, out / "axis.csv", comment=_stamp(cfg))
    for name, subset in splits.items():
        save_situations(out / f"{name}.ndjson", subset)
    meta = {
        "config_hash": config_hash(cfg),
        "seed": seed,
        "counts": {k: len(v) for k, v in splits.items()},
        "total_tracks": sum(len(s.tracks) for s in situations),
    }
    (out / "dataset_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    log.info("gen: wrote %s situations to %s", meta["counts"], out)
    return 0


def cmd_train(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    axis = _load_data_axis(cfg)
    train_situations = _load_split(cfg, "train")
    val_path = _data_dir(cfg) / "val.ndjson"
    val_situations = load_situations(val_path) if val_path.exists() else []
    m = cfg["model"]
    variant_cfg = VariantConfig(
        variant=m["variant"], hidden_size=m["hidden_size"], horizon=m["horizon"],
        seed=cfg["seed"], s_init=m["s_init"],
    )
    t = cfg["training"]
    train_cfg = TrainConfig(epochs=t["epochs"], lr=t["lr"], beta1=t["beta1"],
                            beta2=t["beta2"], eps=t["eps"])
    ckpt, metrics = train(axis, train_situations, val_situations, variant_cfg, train_cfg)
    ckpt.meta["config_hash"] = config_hash(cfg)
    save_checkpoint(out / "checkpoint.rcp", ckpt)
    from .training import write_metrics

    write_metrics(out / "metrics.csv", metrics, comment=_stamp(cfg))
    log.info("train: wrote checkpoint and metrics to %s", out)
    return 0


def _eval_chunk(task):
    ckpt, axis, situations, horizon = task
    model = ckpt.to_model()
    records = []
    for s in situations:
        for ws in window_situation(s, axis, horizon, horizon):
            pred = model.predict(ws, mode="autoregressive")
            records.extend(evaluation.fde(pred, ws, axis))
    return records


def cmd_eval(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = cfg["data"]["checkpoint"] or (out / "checkpoint.rcp")
    if not Path(ckpt_path).exists():
        raise ValueError(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    axis = _load_data_axis(cfg)
    situations = _load_split(cfg, cfg["eval"]["split"])
    horizon = ckpt.config.horizon
    workers = cfg["workers"]
    if workers <= 1:
        records = _eval_chunk((ckpt, axis, situations, horizon))
    else:
        chunks = np.array_split(np.arange(len(situations)), workers)
        tasks = [(ckpt, axis, [situations[int(i)] for i in c], horizon) for c in chunks]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = [r for part in ex.map(_eval_chunk, tasks) for r in part]
    records.sort(key=lambda r: (r.situation_id, r.vessel_id, r.horizon))
    if not records:
        raise ValueError("evaluation produced no records")
    summary = evaluation.summarize(records, ckpt.config.variant)
    stamp = _stamp(cfg)
    evaluation.write_fde_records_csv(out / "fde_records.csv", records, comment=stamp)
    evaluation.write_summary_csv(out / "fde_summary.csv", [summary], comment=stamp)
    evaluation.boxplot_export(out / "boxplot.csv", [summary], comment=stamp)
    log.info("eval: %d records over %d situations", len(records), len(situations))
    print(evaluation.summary_table([summary], horizon))
    return 0


def cmd_domain(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = cfg["data"]["checkpoint"] or (out / "checkpoint.rcp")
    if not Path(ckpt_path).exists():
        raise ValueError(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    rows = evaluation.domain_report(ckpt)
    evaluation.write_domain_csv(out / "domain_report.csv", rows, comment=_stamp(cfg))
    log.info("domain: wrote %d rows", len(rows))
    return 0


def cmd_probe(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = cfg["data"]["checkpoint"] or (out / "checkpoint.rcp")
    if not Path(ckpt_path).exists():
        raise ValueError(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    model = ckpt.to_model()
    axis = _load_data_axis(cfg)
    situations = _load_split(cfg, cfg["probe"]["split"])
    p = cfg["probe"]
    horizon = ckpt.config.horizon

    chosen = None
    for s in situations:
        if p["situation_id"] and s.situation_id != p["situation_id"]:
            continue
        for ws in window_situation(s, axis, horizon, horizon):
            if p["window_start"] is not None and ws.start_minute != p["window_start"]:
                continue
            if len(ws.vessels) >= 2:
                chosen = ws
                break
        if chosen:
            break
    if chosen is None:
        raise ValueError("no window with at least two vessels matches the probe selection")
    target = p["target"] or chosen.vessels[0].vessel_id
    neighbor = p["neighbor"] or next(
        v.vessel_id for v in chosen.vessels if v.vessel_id != target
    )
    pert = evaluation.Perturbation(kind=p["kind"], amount=p["amount"])
    result = evaluation.counterfactual_probe(model, chosen, target, neighbor, pert, axis)
    payload = {
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "situation_id": chosen.situation_id,
        "window_start": chosen.start_minute,
        "target": result.target_id,
        "neighbor": result.neighbor_id,
        "perturbation": {"kind": pert.kind, "amount": pert.amount},
        "max_displacement_m": result.max_displacement_m,
        "displacement_per_horizon": result.displacement_per_horizon,
        "decoder_weight_trace": result.decoder_weight_trace,
        "encoder_weight_trace": result.encoder_weight_trace,
    }
    (out / "probe.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    log.info("probe: max displacement %.3f m", result.max_displacement_m)
    return 0


def cmd_gradcheck(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    g = cfg["gradcheck"]
    reports = {}
    all_pass = True
    for variant in g["variants"]:
        rep = run_variant_grad_check(
            variant, hidden_size=g["hidden_size"], horizon=g["horizon"],
            tolerance=g["tolerance"], seed=cfg["seed"],
        )
        reports[variant] = {
            "max_rel_error": rep.max_rel_error,
            "worst_param": rep.worst_param,
            "n_checked": rep.n_checked,
            "n_skipped": rep.n_skipped,
            "passed": rep.passed,
        }
        all_pass = all_pass and rep.passed
        print(f"{'PASS' if rep.passed else 'FAIL'} {variant}: "
              f"max rel error {rep.max_rel_error:.3e} ({rep.n_checked} components)")
    payload = {"config_hash": config_hash(cfg), "seed": cfg["seed"], "reports": reports}
    (out / "gradcheck.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0 if all_pass else 2


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "domain": cmd_domain,
    "probe": cmd_probe,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rivercast",
        description="Interaction-aware inland vessel trajectory prediction pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--variant", default=None, choices=["E-D", "EA-DA", "E-DA", "E-DDA"])
        p.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("RIVERCAST_LOG", "INFO").upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (ValueError, FileNotFoundError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
