"""Synthetic inland traffic, CSV ingestion, windowing and normalization.

Situations are time-aligned sets of vessel tracks sampled at 1-minute steps
over one river section. The generator injects causal encounter behavior
(evasive offsets for opposing traffic, lane shifts for overtaking) so that
interaction-aware models have a real signal to pick up; everything is a pure
function of (config, seed).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .waterway import CurvilinearPose, WaterwayAxis

log = logging.getLogger(__name__)

MAX_SPEED_WKM_MIN = 0.6  # sanity bound, roughly 36 km/h

OBS_FEATURE_NAMES = ("k", "f", "dk", "df", "c", "c_dir")
TARGET_FEATURE_NAMES = ("dk", "df")


@dataclass
class VesselTrack:
    """One vessel's samples on the common 1-minute grid of a situation."""

    vessel_id: str
    direction: int  # +1 travelling towards increasing k, -1 decreasing
    t: np.ndarray  # minutes, strictly increasing ints
    poses: np.ndarray  # (n, 2) columns k (wkm), f (m)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.poses = np.asarray(self.poses, dtype=np.float64)
        if self.t.ndim != 1 or self.poses.shape != (self.t.shape[0], 2):
            raise ValueError("track arrays are inconsistent")
        if self.t.shape[0] == 0:
            raise ValueError("track has no samples")
        dt = np.diff(self.t)
        if np.any(dt <= 0):
            raise ValueError(f"non-monotone timestamps for vessel {self.vessel_id}")
        if self.direction not in (-1, 1):
            raise ValueError("direction must be +1 or -1")
        if self.t.shape[0] > 1:
            rate = np.abs(np.diff(self.poses[:, 0])) / dt
            if np.any(rate > MAX_SPEED_WKM_MIN):
                raise ValueError(
                    f"vessel {self.vessel_id} exceeds the {MAX_SPEED_WKM_MIN} wkm/min speed bound"
                )

    def pose_at(self, minute: int) -> CurvilinearPose | None:
        idx = np.searchsorted(self.t, minute)
        if idx < len(self.t) and self.t[idx] == minute:
            return CurvilinearPose(k=float(self.poses[idx, 0]), f=float(self.poses[idx, 1]))
        return None


@dataclass
class Situation:
    """All vessel tracks present in the river section over one time window."""

    situation_id: str
    tracks: list[VesselTrack]

    def __post_init__(self):
        if not self.tracks:
            raise ValueError("situation needs at least one track")
        self.tracks = sorted(self.tracks, key=lambda tr: tr.vessel_id)

    @property
    def time_range(self) -> tuple[int, int]:
        return (
            int(min(tr.t[0] for tr in self.tracks)),
            int(max(tr.t[-1] for tr in self.tracks)),
        )


def validate_against_axis(situation: Situation, axis: WaterwayAxis) -> None:
    lo, hi = axis.wkm_range
    for tr in situation.tracks:
        ks = tr.poses[:, 0]
        if np.any(ks < lo) or np.any(ks > hi):
            raise ValueError(
                f"situation {situation.situation_id} vessel {tr.vessel_id} leaves the axis wkm range"
            )


# ---------------------------------------------------------------------------
# synthetic generation


@dataclass(frozen=True)
class SpawnSpec:
    vessel_id: str
    t_start: int
    direction: int
    k0: float
    speed_wkm_min: float
    lane_f_m: float


@dataclass
class GeneratorConfig:
    n_situations: int = 100
    duration_min: int = 10
    speed_range: tuple[float, float] = (0.15, 0.35)
    lane_offset_m: float = 15.0
    lane_jitter_m: float = 4.0
    headon_fraction: float = 0.2
    overtaker_fraction: float = 0.25
    extra_arrival_rate: float = 0.02  # spawns per minute per axis end
    evasive_trigger_wkm: float = 0.5
    evasive_max_m: float = 10.0
    evasive_rate_m_min: float = 6.0
    overtake_trigger_wkm: float = 0.3
    overtake_shift_m: float = 8.0
    overtake_clear_wkm: float = 0.15
    noise_lateral_m: float = 1.0
    noise_longitudinal_wkm: float = 0.002
    rules_enabled: bool = True
    spawn_margin_wkm: float = 0.5

    def validate(self) -> None:
        if self.n_situations < 0:
            raise ValueError("n_situations must be non-negative")
        if self.duration_min < 1:
            raise ValueError("duration_min must be positive")
        lo, hi = self.speed_range
        if not (0.0 < lo <= hi <= MAX_SPEED_WKM_MIN):
            raise ValueError("speed_range must lie within (0, 0.6] wkm/min")
        if self.extra_arrival_rate < 0:
            raise ValueError("extra_arrival_rate must be non-negative")

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["speed_range"] = list(self.speed_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        if "speed_range" in d:
            d["speed_range"] = tuple(d["speed_range"])
        return cls(**d)


def simulate_tracks(axis: WaterwayAxis, cfg: GeneratorConfig, rng: np.random.Generator,
                    spawns: list[SpawnSpec], duration_min: int | None = None) -> list[VesselTrack]:
    """Advance all spawned vessels minute by minute under the encounter rules.

    Each minute: rule offsets are updated from a common position snapshot,
    poses are recorded with additive noise, then vessels advance. A vessel
    that leaves the axis wkm range is dropped and never re-enters.
    """
    duration = cfg.duration_min if duration_min is None else duration_min
    k_lo, k_hi = axis.wkm_range
    state: dict[str, dict] = {}
    samples: dict[str, list[tuple[int, float, float]]] = {sp.vessel_id: [] for sp in spawns}
    spawn_order = list(spawns)

    for minute in range(duration + 1):
        for sp in spawn_order:
            if sp.t_start == minute and k_lo <= sp.k0 <= k_hi:
                state[sp.vessel_id] = {"spec": sp, "k": sp.k0, "evade": 0.0, "ot": 0.0}
        alive = [state[sp.vessel_id] for sp in spawn_order if sp.vessel_id in state]

        if cfg.rules_enabled:
            snapshot = {
                id(st): (st["k"], st["spec"].lane_f_m + st["evade"] + st["ot"]) for st in alive
            }
            for st in alive:
                sp = st["spec"]
                k_i, f_i = snapshot[id(st)]
                evade_target = 0.0
                nearest = None
                for other in alive:
                    if other is st or other["spec"].direction == sp.direction:
                        continue
                    k_j, f_j = snapshot[id(other)]
                    gap = abs(k_i - k_j)
                    ahead = (k_j - k_i) * sp.direction > 0
                    if ahead and gap < cfg.evasive_trigger_wkm:
                        if nearest is None or gap < nearest[0]:
                            nearest = (gap, f_j)
                if nearest is not None:
                    side = np.sign(f_i - nearest[1])
                    if side == 0.0:
                        side = float(sp.direction)
                    evade_target = side * cfg.evasive_max_m
                st["evade_target"] = evade_target

                ot_target = 0.0
                for other in alive:
                    if other is st or other["spec"].direction != sp.direction:
                        continue
                    if other["spec"].speed_wkm_min >= sp.speed_wkm_min - 0.01:
                        continue
                    k_j, _ = snapshot[id(other)]
                    along = (k_j - k_i) * sp.direction
                    if -cfg.overtake_clear_wkm < along < cfg.overtake_trigger_wkm:
                        ot_target = -sp.direction * cfg.overtake_shift_m
                        break
                st["ot_target"] = ot_target
            for st in alive:
                rate = cfg.evasive_rate_m_min
                st["evade"] += float(np.clip(st.pop("evade_target") - st["evade"], -rate, rate))
                st["ot"] += float(np.clip(st.pop("ot_target") - st["ot"], -rate, rate))

        for st in alive:
            sp = st["spec"]
            f = sp.lane_f_m + st["evade"] + st["ot"] + rng.normal(0.0, cfg.noise_lateral_m)
            samples[sp.vessel_id].append((minute, st["k"], f))

        for st in alive:
            sp = st["spec"]
            st["k"] += sp.direction * sp.speed_wkm_min + rng.normal(0.0, cfg.noise_longitudinal_wkm)
            if not (k_lo <= st["k"] <= k_hi):
                del state[sp.vessel_id]

    tracks = []
    for sp in spawn_order:
        rows = samples[sp.vessel_id]
        if len(rows) < 2:
            continue
        arr = np.asarray(rows, dtype=np.float64)
        tracks.append(
            VesselTrack(
                vessel_id=sp.vessel_id,
                direction=sp.direction,
                t=arr[:, 0].astype(np.int64),
                poses=arr[:, 1:3],
            )
        )
    return tracks


def _situation_spawns(axis: WaterwayAxis, cfg: GeneratorConfig, rng: np.random.Generator) -> list[SpawnSpec]:
    k_lo, k_hi = axis.wkm_range
    margin = cfg.spawn_margin_wkm
    lo_s, hi_s = cfg.speed_range
    spawns: list[SpawnSpec] = []
    next_id = 0

    def vid() -> str:
        nonlocal next_id
        s = f"v{next_id:02d}"
        next_id += 1
        return s

    def lane(direction: int, mirrored: bool = False) -> float:
        side = -direction if mirrored else direction
        return side * cfg.lane_offset_m + rng.normal(0.0, cfg.lane_jitter_m)

    # guaranteed opposing pair meeting inside the section
    u_up = rng.uniform(lo_s, hi_s)
    u_dn = rng.uniform(lo_s, hi_s)
    t_meet = rng.uniform(0.45, 0.7) * cfg.duration_min
    lo_b = k_lo + margin + u_up * t_meet
    hi_b = k_hi - margin - u_dn * t_meet
    meet_k = rng.uniform(lo_b, hi_b) if lo_b < hi_b else (k_lo + k_hi) / 2.0
    mirrored_up = rng.random() < cfg.headon_fraction
    up = SpawnSpec(vid(), 0, 1, meet_k - u_up * t_meet, u_up, lane(1, mirrored_up))
    dn = SpawnSpec(vid(), 0, -1, meet_k + u_dn * t_meet, u_dn, lane(-1))
    spawns += [up, dn]

    # occasional faster follower that has to overtake the upstream vessel
    if rng.random() < cfg.overtaker_fraction and u_up < hi_s - 0.06:
        u_f = rng.uniform(u_up + 0.05, hi_s)
        k0 = up.k0 - rng.uniform(0.35, 0.6)
        if k0 > k_lo + margin / 2.0:
            spawns.append(SpawnSpec(vid(), 0, 1, k0, u_f, lane(1)))

    # background arrivals from both axis ends
    for minute in range(cfg.duration_min + 1):
        for direction, k0 in ((1, k_lo + margin), (-1, k_hi - margin)):
            for _ in range(rng.poisson(cfg.extra_arrival_rate)):
                spawns.append(
                    SpawnSpec(vid(), minute, direction, k0, rng.uniform(lo_s, hi_s), lane(direction))
                )
    return spawns


def _situation_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


def generate_situation(axis: WaterwayAxis, cfg: GeneratorConfig, seed: int, index: int) -> Situation:
    rng = _situation_rng(seed, index)
    spawns = _situation_spawns(axis, cfg, rng)
    tracks = simulate_tracks(axis, cfg, rng, spawns)
    if not tracks:
        raise RuntimeError(f"generated situation {index} has no usable tracks")
    situation = Situation(situation_id=f"s{index:05d}", tracks=tracks)
    validate_against_axis(situation, axis)
    return situation


def generate_scenarios(axis: WaterwayAxis, cfg: GeneratorConfig, seed: int) -> list[Situation]:
    """Deterministic synthetic traffic: a pure function of (axis, cfg, seed)."""
    cfg.validate()
    if axis.length_m <= 0:
        raise ValueError("axis is empty")
    return [generate_situation(axis, cfg, seed, i) for i in range(cfg.n_situations)]


# ---------------------------------------------------------------------------
# dataset files (newline-delimited JSON, one situation per line)


def situation_to_json(situation: Situation) -> str:
    obj = {
        "situation_id": situation.situation_id,
        "tracks": [
            {
                "vessel_id": tr.vessel_id,
                "direction": int(tr.direction),
                "t": [int(v) for v in tr.t],
                "k": [float(v) for v in tr.poses[:, 0]],
                "f": [float(v) for v in tr.poses[:, 1]],
            }
            for tr in situation.tracks
        ],
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def situation_from_json(line: str) -> Situation:
    obj = json.loads(line)
    tracks = [
        VesselTrack(
            vessel_id=t["vessel_id"],
            direction=int(t["direction"]),
            t=np.asarray(t["t"], dtype=np.int64),
            poses=np.stack([np.asarray(t["k"]), np.asarray(t["f"])], axis=1),
        )
        for t in obj["tracks"]
    ]
    return Situation(situation_id=obj["situation_id"], tracks=tracks)


def save_situations(path, situations: list[Situation]) -> None:
    Path(path).write_text("".join(situation_to_json(s) + "\n" for s in situations))


def load_situations(path) -> list[Situation]:
    lines = Path(path).read_text().splitlines()
    return [situation_from_json(ln) for ln in lines if ln.strip()]


# ---------------------------------------------------------------------------
# CSV ingestion / export

PLANAR_HEADER = "situation_id,vessel_id,t_min,x_m,y_m"
CURVILINEAR_HEADER = "situation_id,vessel_id,t_min,wkm,offset_m"


@dataclass
class IngestResult:
    situations: list[Situation]
    dropped_rows: int  # rows rejected by the speed sanity bound


def ingest_csv(path, axis: WaterwayAxis) -> IngestResult:
    """Parse AIS-like logs in planar or curvilinear form into situations.

    Rows whose implied speed exceeds the sanity bound are dropped and
    counted; direction is inferred from the median sign of the longitudinal
    increments.
    """
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty CSV")
    header = lines[0].strip()
    if header == PLANAR_HEADER:
        planar = True
    elif header == CURVILINEAR_HEADER:
        planar = False
    else:
        raise ValueError(f"{path}: malformed header {header!r}")

    by_vessel: dict[tuple[str, str], list[tuple[int, float, float]]] = {}
    for ln in lines[1:]:
        sid, vid, t_s, a_s, b_s = ln.split(",")
        minute = int(t_s)
        a, b = float(a_s), float(b_s)
        if planar:
            pose = axis.to_curvilinear((a, b))
            k, f = pose.k, pose.f
        else:
            k, f = a, b
        by_vessel.setdefault((sid, vid), []).append((minute, k, f))

    dropped = 0
    by_situation: dict[str, list[VesselTrack]] = {}
    for (sid, vid), rows in by_vessel.items():
        ts = [r[0] for r in rows]
        if any(t2 <= t1 for t1, t2 in zip(ts, ts[1:])):
            raise ValueError(f"{path}: non-monotone timestamps for vessel {vid} in {sid}")
        kept: list[tuple[int, float, float]] = []
        for row in rows:
            if kept:
                t0, k0, _ = kept[-1]
                if abs(row[1] - k0) / (row[0] - t0) > MAX_SPEED_WKM_MIN:
                    dropped += 1
                    continue
            kept.append(row)
        if not kept:
            continue
        arr = np.asarray(kept, dtype=np.float64)
        if len(kept) > 1:
            med = float(np.median(np.sign(np.diff(arr[:, 1]))))
        else:
            med = 1.0
        direction = 1 if med >= 0 else -1
        by_situation.setdefault(sid, []).append(
            VesselTrack(vessel_id=vid, direction=direction, t=arr[:, 0].astype(np.int64), poses=arr[:, 1:3])
        )
    if dropped:
        log.warning("ingest_csv dropped %d rows violating the speed bound", dropped)
    situations = [Situation(sid, tracks) for sid, tracks in sorted(by_situation.items())]
    return IngestResult(situations=situations, dropped_rows=dropped)


def export_csv(path, situations: list[Situation], axis: WaterwayAxis,
               frame: str = "planar", comment: str | None = None) -> None:
    if frame not in ("planar", "curvilinear"):
        raise ValueError("frame must be 'planar' or 'curvilinear'")
    out = []
    if comment:
        out.append(f"# {comment}")
    out.append(PLANAR_HEADER if frame == "planar" else CURVILINEAR_HEADER)
    for s in situations:
        for tr in s.tracks:
            for i in range(len(tr.t)):
                k, f = float(tr.poses[i, 0]), float(tr.poses[i, 1])
                if frame == "planar":
                    x, y = axis.to_cartesian(CurvilinearPose(k=k, f=f))
                    out.append(f"{s.situation_id},{tr.vessel_id},{int(tr.t[i])},{float(x)!r},{float(y)!r}")
                else:
                    out.append(f"{s.situation_id},{tr.vessel_id},{int(tr.t[i])},{k!r},{f!r}")
    Path(path).write_text("\n".join(out) + "\n")


# ---------------------------------------------------------------------------
# feature windows


@dataclass
class FeatureWindow:
    """One vessel inside one window: observed features, targets and masks."""

    vessel_id: str
    obs_x: np.ndarray  # (T_obs, 6) raw physical features k,f,dk,df,c,c_dir
    target_y: np.ndarray  # (T_pred, 2) raw dk,df; zero rows where masked
    presence_mask: np.ndarray  # (T_pred,) int8, monotone non-increasing
    anchor_pose: np.ndarray  # (2,) pose at the last observed step
    raw_poses: np.ndarray  # (T_obs + 1, 2) poses at window steps 0..T_obs

    @property
    def truth_poses(self) -> np.ndarray:
        """Ground-truth poses over the prediction steps (valid where masked)."""
        return self.anchor_pose[None, :] + np.cumsum(self.target_y, axis=0)


@dataclass
class WindowSet:
    """All vessels observable over one window of a situation."""

    situation_id: str
    start_minute: int
    vessels: list[FeatureWindow]


def _track_feature_table(track: VesselTrack, axis: WaterwayAxis):
    """Per-sample feature rows; row i is valid when sample i-1 is the previous minute."""
    n = len(track.t)
    feats = np.zeros((n, 6), dtype=np.float64)
    valid = np.zeros(n, dtype=bool)
    curv = [axis.curvature_at(float(k)) for k in track.poses[:, 0]]
    for i in range(n):
        feats[i, 0] = track.poses[i, 0]
        feats[i, 1] = track.poses[i, 1]
        feats[i, 4] = curv[i].c
        feats[i, 5] = curv[i].c_dir
        if i > 0 and track.t[i] == track.t[i - 1] + 1:
            feats[i, 2] = track.poses[i, 0] - track.poses[i - 1, 0]
            feats[i, 3] = track.poses[i, 1] - track.poses[i - 1, 1]
            valid[i] = True
    return feats, valid


def window_situation(situation: Situation, axis: WaterwayAxis,
                     t_obs: int, t_pred: int) -> list[WindowSet]:
    """Slide stride-1 windows over the situation's common time grid.

    A vessel joins a window only when present over all observation steps
    (including the extra leading step that supplies the first increments);
    partial presence over the prediction horizon is captured in the mask.
    Windows in which no vessel has any valid prediction step are dropped.
    """
    if t_obs <= 0 or t_pred <= 0:
        raise ValueError("horizons must be positive")
    t_min, t_max = situation.time_range
    tables = {}
    index_of = {}
    for tr in situation.tracks:
        tables[tr.vessel_id] = _track_feature_table(tr, axis)
        index_of[tr.vessel_id] = {int(m): i for i, m in enumerate(tr.t)}

    out: list[WindowSet] = []
    for a in range(t_min, t_max - t_obs + 1):
        vessels = []
        any_target = False
        for tr in situation.tracks:
            idx = index_of[tr.vessel_id]
            feats, valid = tables[tr.vessel_id]
            if a not in idx:
                continue
            i0 = idx[a]
            # full presence over steps a..a+t_obs means consecutive samples
            if i0 + t_obs >= len(tr.t) or tr.t[i0 + t_obs] != a + t_obs:
                continue
            if not np.all(valid[i0 + 1 : i0 + t_obs + 1]):
                continue
            obs = feats[i0 + 1 : i0 + t_obs + 1].copy()
            raw = tr.poses[i0 : i0 + t_obs + 1].copy()
            mask = np.zeros(t_pred, dtype=np.int8)
            target = np.zeros((t_pred, 2), dtype=np.float64)
            for r in range(t_pred):
                j = i0 + t_obs + 1 + r
                if j < len(tr.t) and tr.t[j] == a + t_obs + 1 + r and (r == 0 or mask[r - 1]):
                    mask[r] = 1
                    target[r, 0] = tr.poses[j, 0] - tr.poses[j - 1, 0]
                    target[r, 1] = tr.poses[j, 1] - tr.poses[j - 1, 1]
            if mask.any():
                any_target = True
            vessels.append(
                FeatureWindow(
                    vessel_id=tr.vessel_id,
                    obs_x=obs,
                    target_y=target,
                    presence_mask=mask,
                    anchor_pose=raw[-1].copy(),
                    raw_poses=raw,
                )
            )
        if vessels and any_target:
            out.append(WindowSet(situation_id=situation.situation_id, start_minute=a, vessels=vessels))
    return out


def window_dataset(situations: list[Situation], axis: WaterwayAxis, horizon: int) -> list[list[WindowSet]]:
    """Window every situation; returns one list of window sets per situation."""
    return [window_situation(s, axis, horizon, horizon) for s in situations]


# ---------------------------------------------------------------------------
# normalization


@dataclass
class Normalizer:
    """Per-feature z-scoring, fit on the training split only."""

    obs_mean: np.ndarray
    obs_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    def normalize_obs(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.obs_mean) / self.obs_std

    def normalize_target(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def invert_target(self, y_norm: np.ndarray) -> np.ndarray:
        return np.asarray(y_norm, dtype=np.float64) * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "obs_mean": self.obs_mean.tolist(),
            "obs_std": self.obs_std.tolist(),
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(
            obs_mean=np.asarray(d["obs_mean"], dtype=np.float64),
            obs_std=np.asarray(d["obs_std"], dtype=np.float64),
            target_mean=np.asarray(d["target_mean"], dtype=np.float64),
            target_std=np.asarray(d["target_std"], dtype=np.float64),
        )

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(np.zeros(6), np.ones(6), np.zeros(2), np.ones(2))


def fit_normalizer(window_sets: list[WindowSet]) -> Normalizer:
    """Population z-score statistics over all observed rows and valid targets."""
    if len(window_sets) < 2:
        raise ValueError("need at least 2 windows to fit a normalizer")
    obs_rows = []
    tgt_rows = []
    for ws in window_sets:
        for v in ws.vessels:
            obs_rows.append(v.obs_x)
            sel = v.presence_mask.astype(bool)
            if sel.any():
                tgt_rows.append(v.target_y[sel])
    obs = np.concatenate(obs_rows, axis=0)
    tgt = np.concatenate(tgt_rows, axis=0)
    obs_std = obs.std(axis=0)
    tgt_std = tgt.std(axis=0)
    for names, stds in ((OBS_FEATURE_NAMES, obs_std), (TARGET_FEATURE_NAMES, tgt_std)):
        for name, s in zip(names, stds):
            if s < 1e-12:
                raise ValueError(f"degenerate feature: {name} has zero variance")
    return Normalizer(
        obs_mean=obs.mean(axis=0),
        obs_std=obs_std,
        target_mean=tgt.mean(axis=0),
        target_std=tgt_std,
    )
