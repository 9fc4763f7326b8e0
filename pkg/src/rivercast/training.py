"""Seeded, deterministic training loop over situations."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .checkpoint import Checkpoint, from_model
from .models import TrajectoryModel, VariantConfig
from .optim import OptimizerState, adam_step, zero_grads
from .traffic import Situation, fit_normalizer, window_situation
from .waterway import WaterwayAxis

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle: bool = True


def train(
    axis: WaterwayAxis,
    train_situations: list[Situation],
    val_situations: list[Situation],
    variant_cfg: VariantConfig,
    train_cfg: TrainConfig,
    metrics_path=None,
    model: TrajectoryModel | None = None,
) -> tuple[Checkpoint, list[dict]]:
    """Teacher-forced training, one optimizer step per situation.

    Situations are shuffled each epoch with a seeded generator; the
    checkpoint keeps the parameters of the best validation epoch (final
    parameters when no validation data is given). A non-finite loss aborts
    with a diagnostic.
    """
    T = variant_cfg.horizon
    per_situation = [window_situation(s, axis, T, T) for s in train_situations]
    per_situation = [w for w in per_situation if w]
    if not per_situation:
        raise ValueError("empty training dataset: no usable windows")
    flat_train = [ws for group in per_situation for ws in group]
    if model is None:
        normalizer = fit_normalizer(flat_train)
        model = TrajectoryModel.build(variant_cfg, normalizer)
    val_windows = [
        ws for s in val_situations for ws in window_situation(s, axis, T, T)
    ]

    params = model.parameters()
    state = OptimizerState.for_params(
        params, lr=train_cfg.lr, beta1=train_cfg.beta1, beta2=train_cfg.beta2, eps=train_cfg.eps
    )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((variant_cfg.seed, 1))))

    def val_loss() -> float:
        if not val_windows:
            return float("nan")
        with ad.no_grad():
            return model.training_loss(val_windows).item()

    metrics: list[dict] = []
    best_val = np.inf
    best_epoch = 0
    best_tensors = None
    last_train = float("nan")
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(per_situation)) if train_cfg.shuffle else np.arange(len(per_situation))
        epoch_losses = []
        for si in order:
            zero_grads(params)
            loss = model.training_loss(per_situation[si])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, situation index {int(si)}"
                )
            ad.backward(loss)
            adam_step(params, state)
            epoch_losses.append(value)
        last_train = float(np.mean(epoch_losses))
        v = val_loss()
        metrics.append({"epoch": epoch, "train_loss": last_train, "val_loss": v})
        log.info("epoch %d train_loss=%.6f val_loss=%.6f", epoch, last_train, v)
        if np.isfinite(v) and v < best_val:
            best_val = v
            best_epoch = epoch
            best_tensors = {name: p.data.copy() for name, p in params.items()}

    if best_tensors is not None:
        for name, p in params.items():
            p.data = best_tensors[name].copy()
    meta = {
        "epochs_run": train_cfg.epochs,
        "best_epoch": best_epoch if best_tensors is not None else train_cfg.epochs,
        "best_val_loss": None if not np.isfinite(best_val) else best_val,
        "final_train_loss": last_train,
        "seed": variant_cfg.seed,
    }
    ckpt = from_model(model, meta)
    if metrics_path is not None:
        write_metrics(metrics_path, metrics)
    return ckpt, metrics


def write_metrics(path, metrics: list[dict], comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("epoch,train_loss,val_loss")
    for row in metrics:
        lines.append(f"{row['epoch']},{row['train_loss']!r},{row['val_loss']!r}")
    Path(path).write_text("\n".join(lines) + "\n")
