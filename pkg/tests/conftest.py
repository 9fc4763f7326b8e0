import numpy as np
import pytest

from rivercast.models import VariantConfig
from rivercast.traffic import FeatureWindow, Normalizer, Situation, VesselTrack, WindowSet
from rivercast.waterway import make_curved_axis, make_straight_axis


@pytest.fixture(scope="session")
def straight_axis():
    return make_straight_axis(length_km=16.0, start_wkm=595.0)


@pytest.fixture(scope="session")
def curved_axis():
    return make_curved_axis(length_km=16.0, start_wkm=595.0)


def make_track(vessel_id, direction, t0, k0, speed, f_values):
    """Constant-speed track; f_values gives the lateral offset per step."""
    n = len(f_values)
    t = np.arange(t0, t0 + n)
    k = k0 + direction * speed * np.arange(n)
    return VesselTrack(
        vessel_id=vessel_id,
        direction=direction,
        t=t,
        poses=np.stack([k, np.asarray(f_values, dtype=float)], axis=1),
    )


def window_from_poses(tracks: dict, horizon: int, situation_id="t") -> WindowSet:
    """Hand-built window set from full pose arrays of shape (2*horizon+1, 2).

    Curvature features are zero; pair it with `simple_normalizer()`.
    """
    vessels = []
    for vid in sorted(tracks):
        poses = np.asarray(tracks[vid], dtype=float)
        assert poses.shape == (2 * horizon + 1, 2)
        obs = np.zeros((horizon, 6))
        for r in range(1, horizon + 1):
            obs[r - 1] = (
                poses[r, 0],
                poses[r, 1],
                poses[r, 0] - poses[r - 1, 0],
                poses[r, 1] - poses[r - 1, 1],
                0.0,
                0.0,
            )
        target = np.diff(poses[horizon:], axis=0)
        vessels.append(
            FeatureWindow(
                vessel_id=vid,
                obs_x=obs,
                target_y=target,
                presence_mask=np.ones(horizon, dtype=np.int8),
                anchor_pose=poses[horizon].copy(),
                raw_poses=poses[: horizon + 1].copy(),
            )
        )
    return WindowSet(situation_id, 0, vessels)


def simple_normalizer() -> Normalizer:
    return Normalizer(
        obs_mean=np.array([600.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        obs_std=np.array([2.0, 15.0, 0.25, 3.0, 1.0, 1.0]),
        target_mean=np.array([0.0, 0.0]),
        target_std=np.array([0.25, 3.0]),
    )


def constant_speed_poses(k0, dk, f0, df, horizon):
    """(2T+1, 2) pose array with constant increments."""
    steps = 2 * horizon + 1
    return np.stack(
        [k0 + dk * np.arange(steps), f0 + df * np.arange(steps)], axis=1
    )


def variant_cfg(variant, hidden=8, horizon=5, seed=0):
    return VariantConfig(variant=variant, hidden_size=hidden, horizon=horizon, seed=seed)
