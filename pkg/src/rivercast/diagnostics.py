"""Built-in gradient diagnostics on a tiny hand-crafted encounter scenario."""

from __future__ import annotations

import numpy as np

from .gradcheck import GradCheckReport, grad_check
from .models import TrajectoryModel, VariantConfig
from .traffic import FeatureWindow, Normalizer, WindowSet


def gradcheck_window(horizon: int = 3) -> tuple[WindowSet, Normalizer]:
    """Two opposing vessels whose gap crosses the awareness range.

    Gaps are kept well away from the 0.1 wkm hinge location and the bucket
    edges so central finite differences see a smooth loss. With the default
    horizon the encounter activates several distinct ship-domain cells during
    both encoding and decoding.
    """
    T = horizon
    steps = 2 * T + 1
    k_a = 600.00 + 0.03 * np.arange(steps)
    k_b = 600.19 - 0.04 * np.arange(steps)
    f_a = -2.0 - 0.08 * np.arange(steps)
    f_b = 3.0 + 0.06 * np.arange(steps)

    def build(k, f, vid):
        poses = np.stack([k, f], axis=1)
        obs = np.zeros((T, 6))
        for r in range(1, T + 1):
            obs[r - 1] = (
                poses[r, 0],
                poses[r, 1],
                poses[r, 0] - poses[r - 1, 0],
                poses[r, 1] - poses[r - 1, 1],
                2e-4 * np.sin(0.7 * r),
                float((-1) ** r),
            )
        target = np.diff(poses[T:], axis=0)
        return FeatureWindow(
            vessel_id=vid,
            obs_x=obs,
            target_y=target,
            presence_mask=np.ones(T, dtype=np.int8),
            anchor_pose=poses[T].copy(),
            raw_poses=poses[: T + 1].copy(),
        )

    ws = WindowSet("diag", 0, [build(k_a, f_a, "va"), build(k_b, f_b, "vb")])
    normalizer = Normalizer(
        obs_mean=np.array([600.1, 0.0, 0.0, 0.0, 0.0, 0.0]),
        obs_std=np.array([0.1, 3.0, 0.05, 0.5, 2e-4, 1.0]),
        target_mean=np.array([0.0, 0.0]),
        target_std=np.array([0.05, 0.5]),
    )
    return ws, normalizer


def run_variant_grad_check(
    variant: str,
    hidden_size: int = 8,
    horizon: int = 3,
    tolerance: float = 1e-4,
    seed: int = 0,
) -> GradCheckReport:
    """Check the full model gradient of one variant against finite differences."""
    ws, normalizer = gradcheck_window(horizon)
    cfg = VariantConfig(variant=variant, hidden_size=hidden_size, horizon=horizon, seed=seed)
    model = TrajectoryModel.build(cfg, normalizer)
    return grad_check(lambda: model.training_loss([ws]), model.parameters(), tolerance=tolerance)
