"""Displacement-error evaluation, interpretability reports and probes.

Errors are planar Euclidean distances in metres: predicted and ground-truth
curvilinear poses are both mapped through the axis transform before
comparison. On a straight axis the mapping is an isometry, which the hand
tests exploit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import encounter
from .checkpoint import Checkpoint, CheckpointError
from .models import ForwardTrace, PredictionSet, TrajectoryModel
from .traffic import FeatureWindow, WindowSet
from .waterway import CurvilinearPose, WaterwayAxis

log = logging.getLogger(__name__)

EXTREME_OUTLIER_M = 300.0


@dataclass(frozen=True)
class FdeRecord:
    situation_id: str
    vessel_id: str
    horizon: int  # 1-based prediction step
    error_m: float


@dataclass
class HorizonStats:
    horizon: int
    count: int
    mean: float
    median: float
    std: float  # population standard deviation
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    n_beyond_whiskers: int
    extreme_outliers: list[float]  # errors beyond EXTREME_OUTLIER_M


@dataclass
class FdeSummary:
    model: str
    per_horizon: dict[int, HorizonStats] = field(default_factory=dict)


def fde(predictions: PredictionSet, truths: WindowSet, axis: WaterwayAxis) -> list[FdeRecord]:
    """One record per valid (vessel, horizon); poses outside the axis are skipped."""
    records: list[FdeRecord] = []
    skipped = 0
    windows = {v.vessel_id: v for v in truths.vessels}
    for track in predictions.tracks:
        v = windows[track.vessel_id]
        truth = v.truth_poses
        for t in range(len(track.presence_mask)):
            if not track.presence_mask[t]:
                continue
            try:
                p_pred = axis.to_cartesian(CurvilinearPose(*track.poses[t]))
                p_true = axis.to_cartesian(CurvilinearPose(*truth[t]))
            except ValueError:
                skipped += 1
                continue
            records.append(
                FdeRecord(
                    situation_id=predictions.situation_id,
                    vessel_id=track.vessel_id,
                    horizon=t + 1,
                    error_m=float(np.hypot(*(p_pred - p_true))),
                )
            )
    if skipped:
        log.warning("fde skipped %d poses outside the axis range", skipped)
    return records


def summarize(records: list[FdeRecord], model_label: str) -> FdeSummary:
    """Per-horizon statistics; quartiles use linear interpolation."""
    if not records:
        raise ValueError("cannot summarize an empty record list")
    summary = FdeSummary(model=model_label)
    horizons = sorted({r.horizon for r in records})
    for h in horizons:
        errs = np.asarray([r.error_m for r in records if r.horizon == h], dtype=np.float64)
        q1, med, q3 = np.percentile(errs, [25.0, 50.0, 75.0])
        iqr = q3 - q1
        lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = errs[(errs >= lo_fence) & (errs <= hi_fence)]
        summary.per_horizon[h] = HorizonStats(
            horizon=h,
            count=int(errs.size),
            mean=float(errs.mean()),
            median=float(med),
            std=float(errs.std()),
            q1=float(q1),
            q3=float(q3),
            whisker_low=float(inside.min()) if inside.size else float(errs.min()),
            whisker_high=float(inside.max()) if inside.size else float(errs.max()),
            n_beyond_whiskers=int(errs.size - inside.size),
            extreme_outliers=sorted(float(e) for e in errs[errs > EXTREME_OUTLIER_M]),
        )
    return summary


def naive_horizon_stats(records: list[FdeRecord], horizon: int) -> tuple[int, float, float, float]:
    """Independent brute-force pass: count, mean, median, population std."""
    errs = sorted(r.error_m for r in records if r.horizon == horizon)
    n = len(errs)
    mean = sum(errs) / n
    if n % 2:
        median = errs[n // 2]
    else:
        median = (errs[n // 2 - 1] + errs[n // 2]) / 2.0
    var = sum((e - mean) ** 2 for e in errs) / n
    return n, mean, median, var**0.5


# ---------------------------------------------------------------------------
# CSV exports


def _write_csv(path, header: str, rows: list[str], comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(header)
    lines.extend(rows)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_fde_records_csv(path, records: list[FdeRecord], comment: str | None = None) -> None:
    rows = [f"{r.situation_id},{r.vessel_id},{r.horizon},{r.error_m!r}" for r in records]
    _write_csv(path, "situation_id,vessel_id,horizon,error_m", rows, comment)


def write_summary_csv(path, summaries: list[FdeSummary], comment: str | None = None) -> None:
    rows = []
    for s in summaries:
        for h in sorted(s.per_horizon):
            st = s.per_horizon[h]
            rows.append(
                f"{s.model},{st.horizon},{st.count},{st.mean!r},{st.median!r},{st.std!r},"
                f"{st.q1!r},{st.q3!r},{len(st.extreme_outliers)}"
            )
    _write_csv(
        path,
        "model,horizon,count,mean_m,median_m,std_m,q1_m,q3_m,n_extreme_outliers",
        rows,
        comment,
    )


def summary_table(summaries: list[FdeSummary], horizon: int) -> str:
    """Compact comparison table at one horizon: stat rows, one column per model."""
    cols = [s.model for s in summaries]
    rows = []
    for label, attr in (("Mean", "mean"), ("Median", "median"), ("Std", "std")):
        cells = []
        for s in summaries:
            st = s.per_horizon.get(horizon)
            cells.append(f"{getattr(st, attr):.1f}" if st else "-")
        rows.append((label, cells))
    width = max(8, *(len(c) for c in cols)) + 2
    out = [f"FDE_{horizon} (m)".ljust(10) + "".join(c.rjust(width) for c in cols)]
    for label, cells in rows:
        out.append(label.ljust(10) + "".join(c.rjust(width) for c in cells))
    return "\n".join(out)


def boxplot_rows(summaries: list[FdeSummary]) -> list[str]:
    rows = []
    for s in summaries:
        for h in sorted(s.per_horizon):
            st = s.per_horizon[h]
            rows.append(
                f"{s.model},{st.horizon},{st.count},{st.whisker_low!r},{st.q1!r},"
                f"{st.median!r},{st.q3!r},{st.whisker_high!r},{st.n_beyond_whiskers}"
            )
    return rows


def boxplot_export(path, summaries: list[FdeSummary], comment: str | None = None) -> None:
    """Plot-ready whisker/quartile/outlier data per (model, horizon)."""
    _write_csv(
        path,
        "model,horizon,count,whisker_low,q1,median,q3,whisker_high,n_outliers",
        boxplot_rows(summaries),
        comment,
    )


# ---------------------------------------------------------------------------
# ship-domain report


def domain_report(ckpt: Checkpoint) -> list[dict]:
    """Cell-level ship-domain table with change findings plus per-(direction,
    rate) aggregates (mean over the four lateral buckets).

    A cell counts as grown/shrunk when it moved more than 10% of the initial
    value away from it.
    """
    if "ship_domain" not in ckpt.tensors:
        raise CheckpointError("variant has no ship-domain tensor")
    init = ckpt.config.s_init
    tol = 0.1 * init
    domain = encounter.ShipDomainTensor(values=ckpt.tensors["ship_domain"], init_value=init)
    rows = []
    for row in encounter.export_domain(domain):
        value = row["value_wkm"]
        if value > init + tol:
            finding = "grown"
        elif value < init - tol:
            finding = "shrunk"
        else:
            finding = "unchanged"
        rows.append({"row_type": "cell", **row, "finding": finding})
    arr = domain.values
    for d in range(3):
        for r in range(4):
            p_lo, p_hi = encounter.rate_interval(r)
            g_lo, g_hi = encounter.lateral_interval(0)[0], encounter.lateral_interval(3)[1]
            mean = float(arr[d, r, :].mean())
            rows.append(
                {
                    "row_type": "direction_rate_mean",
                    "theta": encounter.DIRECTION_LABELS[d],
                    "phi_lo": p_lo,
                    "phi_hi": p_hi,
                    "gamma_lo": g_lo,
                    "gamma_hi": g_hi,
                    "value_wkm": mean,
                    "delta_vs_init": mean - init,
                    "finding": "",
                }
            )
    return rows


def write_domain_csv(path, rows: list[dict], comment: str | None = None) -> None:
    body = [
        f"{r['row_type']},{r['theta']},{r['phi_lo']!r},{r['phi_hi']!r},"
        f"{r['gamma_lo']!r},{r['gamma_hi']!r},{r['value_wkm']!r},{r['delta_vs_init']!r},{r['finding']}"
        for r in rows
    ]
    _write_csv(
        path,
        "row_type,theta,phi_lo,phi_hi,gamma_lo,gamma_hi,value_wkm,delta_vs_init,finding",
        body,
        comment,
    )


# ---------------------------------------------------------------------------
# counterfactual probe


@dataclass(frozen=True)
class Perturbation:
    kind: str  # lateral_shift | speed_scale | remove
    amount: float = 0.0

    def __post_init__(self):
        if self.kind not in ("lateral_shift", "speed_scale", "remove"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")


@dataclass
class ProbeResult:
    target_id: str
    neighbor_id: str
    perturbation: Perturbation
    max_displacement_m: float
    displacement_per_horizon: list[float]
    decoder_weight_trace: list[float | None]  # baseline w(target, neighbor) per decode step
    encoder_weight_trace: list[float | None]


def _full_poses(v: FeatureWindow) -> np.ndarray:
    """Pose rows for window steps 0..2T (rows beyond the mask are unused)."""
    return np.concatenate([v.raw_poses, v.truth_poses], axis=0)


def _rebuild_window(v: FeatureWindow, poses: np.ndarray, axis: WaterwayAxis) -> FeatureWindow:
    t_obs = v.raw_poses.shape[0] - 1
    t_pred = v.target_y.shape[0]
    lo, hi = axis.wkm_range
    used = poses[: t_obs + 1 + int(v.presence_mask.sum())]
    if np.any(used[:, 0] < lo) or np.any(used[:, 0] > hi):
        raise ValueError("perturbation pushes the vessel outside the axis range")
    obs = np.zeros((t_obs, 6))
    for r in range(1, t_obs + 1):
        curv = axis.curvature_at(float(poses[r, 0]))
        obs[r - 1] = (
            poses[r, 0],
            poses[r, 1],
            poses[r, 0] - poses[r - 1, 0],
            poses[r, 1] - poses[r - 1, 1],
            curv.c,
            curv.c_dir,
        )
    target = np.zeros((t_pred, 2))
    for r in range(t_pred):
        if v.presence_mask[r]:
            target[r] = poses[t_obs + 1 + r] - poses[t_obs + r]
    return FeatureWindow(
        vessel_id=v.vessel_id,
        obs_x=obs,
        target_y=target,
        presence_mask=v.presence_mask.copy(),
        anchor_pose=poses[t_obs].copy(),
        raw_poses=poses[: t_obs + 1].copy(),
    )


def perturb_window_set(ws: WindowSet, vessel_id: str, pert: Perturbation,
                       axis: WaterwayAxis) -> WindowSet:
    if pert.kind == "remove":
        vessels = [v for v in ws.vessels if v.vessel_id != vessel_id]
        if len(vessels) == len(ws.vessels):
            raise ValueError(f"vessel {vessel_id} not present in the window")
        return WindowSet(ws.situation_id, ws.start_minute, vessels)
    vessels = []
    found = False
    for v in ws.vessels:
        if v.vessel_id != vessel_id:
            vessels.append(v)
            continue
        found = True
        poses = _full_poses(v)
        if pert.kind == "lateral_shift":
            poses[:, 1] += pert.amount
        else:  # speed_scale
            poses[:, 0] = poses[0, 0] + pert.amount * (poses[:, 0] - poses[0, 0])
        vessels.append(_rebuild_window(v, poses, axis))
    if not found:
        raise ValueError(f"vessel {vessel_id} not present in the window")
    return WindowSet(ws.situation_id, ws.start_minute, vessels)


def _pair_trace(trace_steps: list[dict], target_id: str, neighbor_id: str) -> list[float | None]:
    key = tuple(sorted((target_id, neighbor_id)))
    return [step.get(key) for step in trace_steps]


def counterfactual_probe(
    model: TrajectoryModel,
    ws: WindowSet,
    target_id: str,
    neighbor_id: str,
    pert: Perturbation,
    axis: WaterwayAxis,
) -> ProbeResult:
    """Re-run the frozen model with one neighbor perturbed.

    Returns the maximal planar displacement of the target's autoregressive
    prediction across horizons plus the baseline per-step weight trace of the
    (target, neighbor) pair.
    """
    if target_id == neighbor_id:
        raise ValueError("target and neighbor must differ")
    base_pred, trace = model.predict(ws, mode="autoregressive", want_trace=True)
    pert_ws = perturb_window_set(ws, neighbor_id, pert, axis)
    pert_pred = model.predict(pert_ws, mode="autoregressive")
    base_track = base_pred.track(target_id)
    pert_track = pert_pred.track(target_id)
    displacements = []
    for t in range(base_track.poses.shape[0]):
        p0 = axis.to_cartesian(CurvilinearPose(*base_track.poses[t]))
        p1 = axis.to_cartesian(CurvilinearPose(*pert_track.poses[t]))
        displacements.append(float(np.hypot(*(p0 - p1))))
    return ProbeResult(
        target_id=target_id,
        neighbor_id=neighbor_id,
        perturbation=pert,
        max_displacement_m=max(displacements),
        displacement_per_horizon=displacements,
        decoder_weight_trace=_pair_trace(trace.decoder_weights, target_id, neighbor_id),
        encoder_weight_trace=_pair_trace(trace.encoder_weights, target_id, neighbor_id),
    )
