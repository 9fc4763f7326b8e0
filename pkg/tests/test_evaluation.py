import numpy as np
import pytest

from conftest import constant_speed_poses, simple_normalizer, variant_cfg, window_from_poses
from rivercast import evaluation
from rivercast.checkpoint import CheckpointError, from_model
from rivercast.evaluation import (
    FdeRecord,
    Perturbation,
    boxplot_rows,
    counterfactual_probe,
    domain_report,
    fde,
    naive_horizon_stats,
    perturb_window_set,
    summarize,
)
from rivercast.models import PredictedTrack, PredictionSet, TrajectoryModel
from rivercast.traffic import GeneratorConfig, generate_scenarios, window_situation
from rivercast.waterway import make_curved_axis, make_straight_axis

T = 5
STRAIGHT = make_straight_axis(length_km=16.0, start_wkm=595.0)


def truth_prediction(ws):
    """PredictionSet equal to the ground truth."""
    tracks = []
    for v in ws.vessels:
        delta = v.target_y.copy()
        tracks.append(
            PredictedTrack(
                vessel_id=v.vessel_id,
                delta=delta,
                poses=v.anchor_pose[None, :] + np.cumsum(delta, axis=0),
                presence_mask=v.presence_mask.copy(),
            )
        )
    return PredictionSet(ws.situation_id, ws.start_minute, tracks)


def case_window(mask_tail_zero=0):
    ws = window_from_poses(
        {"va": constant_speed_poses(600.0, 0.05, -10.0, 0.0, T)}, T
    )
    if mask_tail_zero:
        ws.vessels[0].presence_mask[-mask_tail_zero:] = 0
        ws.vessels[0].target_y[-mask_tail_zero:] = 0.0
    return ws


# --- fde -----------------------------------------------------------------------


def test_fde_zero_for_perfect_prediction():
    ws = case_window()
    records = fde(truth_prediction(ws), ws, STRAIGHT)
    assert len(records) == T
    assert all(r.error_m == 0.0 for r in records)
    assert [r.horizon for r in records] == [1, 2, 3, 4, 5]


def test_fde_longitudinal_miss_on_straight_axis_is_isometric():
    # a pure 0.03 wkm longitudinal offset maps to exactly 30 m planar error
    ws = case_window()
    pred = truth_prediction(ws)
    pred.tracks[0].delta[0, 0] += 0.03
    pred.tracks[0].poses = ws.vessels[0].anchor_pose[None, :] + np.cumsum(pred.tracks[0].delta, axis=0)
    records = fde(pred, ws, STRAIGHT)
    for r in records:
        assert abs(r.error_m - 30.0) < 1e-9


def test_fde_skips_masked_horizons():
    ws = case_window(mask_tail_zero=2)
    records = fde(truth_prediction(ws), ws, STRAIGHT)
    assert [r.horizon for r in records] == [1, 2, 3]


def test_fde_skips_out_of_range_poses(caplog):
    ws = case_window()
    pred = truth_prediction(ws)
    pred.tracks[0].poses[-1, 0] = 650.0  # far beyond the axis end
    records = fde(pred, ws, STRAIGHT)
    assert [r.horizon for r in records] == [1, 2, 3, 4]


def test_fde_translation_invariant():
    curved = make_curved_axis(length_km=8.0, start_wkm=595.0)
    shifted_vertices = curved.vertices + np.array([12345.0, -6789.0])
    from rivercast.waterway import WaterwayAxis

    shifted = WaterwayAxis(shifted_vertices, start_wkm=595.0)
    ws = case_window()
    pred = truth_prediction(ws)
    pred.tracks[0].delta[:, 1] += 2.5
    pred.tracks[0].poses = ws.vessels[0].anchor_pose[None, :] + np.cumsum(pred.tracks[0].delta, axis=0)
    r1 = fde(pred, ws, curved)
    r2 = fde(pred, ws, shifted)
    for a, b in zip(r1, r2):
        assert abs(a.error_m - b.error_m) < 1e-9


# --- summarize -------------------------------------------------------------------


def rec(h, e, sid="s0", vid="v0"):
    return FdeRecord(situation_id=sid, vessel_id=vid, horizon=h, error_m=float(e))


def test_summary_singleton():
    s = summarize([rec(1, 30.0)], "E-D")
    st = s.per_horizon[1]
    assert st.count == 1 and st.mean == 30.0 and st.median == 30.0 and st.std == 0.0


def test_summary_three_record_hand_case():
    s = summarize([rec(5, 10.0), rec(5, 20.0), rec(5, 30.0)], "E-DA")
    st = s.per_horizon[5]
    assert st.mean == 20.0
    assert st.median == 20.0
    assert abs(st.std - np.sqrt(200.0 / 3.0)) < 1e-12


def test_summary_matches_naive_recomputation():
    rng = np.random.default_rng(3)
    records = [rec(int(h), e) for h in rng.integers(1, 6, 500) for e in [rng.uniform(0, 400)]]
    s = summarize(records, "m")
    for h, st in s.per_horizon.items():
        n, mean, median, std = naive_horizon_stats(records, h)
        assert st.count == n
        assert abs(st.mean - mean) < 1e-12
        assert abs(st.median - median) < 1e-12
        assert abs(st.std - std) < 1e-12
        assert st.whisker_low >= min(r.error_m for r in records if r.horizon == h)


def test_summary_flags_extreme_outliers():
    s = summarize([rec(1, 10.0), rec(1, 350.0)], "m")
    assert s.per_horizon[1].extreme_outliers == [350.0]


def test_summary_rejects_empty():
    with pytest.raises(ValueError):
        summarize([], "m")


def test_record_counts_non_increasing_on_generated_data():
    axis = make_curved_axis(length_km=8.0, start_wkm=595.0)
    situations = generate_scenarios(axis, GeneratorConfig(n_situations=6, duration_min=10), seed=2)
    windows = [w for s in situations for w in window_situation(s, axis, T, T)]
    norm_windows = windows  # masks only matter here
    records = []
    for ws in norm_windows:
        records.extend(fde(truth_prediction(ws), ws, axis))
    counts = [sum(1 for r in records if r.horizon == h) for h in range(1, T + 1)]
    assert counts[0] > 0
    assert all(a >= b for a, b in zip(counts, counts[1:]))


# --- boxplot export ----------------------------------------------------------------


def test_boxplot_empty_is_header_only(tmp_path):
    path = tmp_path / "box.csv"
    evaluation.boxplot_export(path, [])
    assert path.read_text().splitlines() == [
        "model,horizon,count,whisker_low,q1,median,q3,whisker_high,n_outliers"
    ]


def test_boxplot_four_models_five_horizons(tmp_path):
    summaries = []
    rng = np.random.default_rng(0)
    for m in ("E-D", "EA-DA", "E-DA", "E-DDA"):
        records = [rec(h, e) for h in range(1, 6) for e in rng.uniform(0, 100, 30)]
        summaries.append(summarize(records, m))
    rows = boxplot_rows(summaries)
    assert len(rows) == 20


def test_summary_table_one_column_per_model():
    rng = np.random.default_rng(4)
    summaries = [
        summarize([rec(h, e) for h in range(1, 6) for e in rng.uniform(10, 60, 8)], m)
        for m in ("E-D", "EA-DA", "E-DA", "E-DDA")
    ]
    table = evaluation.summary_table(summaries, horizon=5)
    lines = table.splitlines()
    assert lines[0].split() == ["FDE_5", "(m)", "E-D", "EA-DA", "E-DA", "E-DDA"]
    assert [ln.split()[0] for ln in lines[1:]] == ["Mean", "Median", "Std"]
    assert all(len(ln.split()) == 5 for ln in lines[1:])


def test_boxplot_quartiles_five_point_hand_case():
    records = [rec(1, e) for e in (10.0, 20.0, 30.0, 40.0, 100.0)]
    s = summarize(records, "m")
    st = s.per_horizon[1]
    # linear interpolation: q1 at index 1, median at 2, q3 at 3
    assert st.q1 == 20.0 and st.median == 30.0 and st.q3 == 40.0
    # fences at q1 - 1.5 IQR = -10 and q3 + 1.5 IQR = 70
    assert st.whisker_low == 10.0 and st.whisker_high == 40.0
    assert st.n_beyond_whiskers == 1


# --- domain report -----------------------------------------------------------------


def trained_checkpoint(variant="E-DA"):
    model = TrajectoryModel.build(variant_cfg(variant, hidden=8, horizon=T), simple_normalizer())
    return from_model(model, meta={"seed": 0})


def test_domain_report_untrained_all_unchanged():
    rows = domain_report(trained_checkpoint())
    cells = [r for r in rows if r["row_type"] == "cell"]
    assert len(cells) == 48
    assert all(r["finding"] == "unchanged" for r in cells)


def test_domain_report_flags_growth_and_shrink():
    ckpt = trained_checkpoint()
    ckpt.tensors["ship_domain"][0, 0, 0] = 0.25
    ckpt.tensors["ship_domain"][1, 1, 1] = 0.05
    ckpt.tensors["ship_domain"][2, 2, 2] = 0.1005  # within the 10% band
    rows = [r for r in domain_report(ckpt) if r["row_type"] == "cell"]
    by_delta = {round(r["value_wkm"], 4): r["finding"] for r in rows}
    assert by_delta[0.25] == "grown"
    assert by_delta[0.05] == "shrunk"
    assert by_delta[0.1005] == "unchanged"


def test_domain_report_aggregates_mean_of_lateral_cells():
    ckpt = trained_checkpoint()
    rng = np.random.default_rng(1)
    ckpt.tensors["ship_domain"][:] = rng.uniform(0.0, 0.5, (3, 4, 4))
    rows = domain_report(ckpt)
    aggs = [r for r in rows if r["row_type"] == "direction_rate_mean"]
    assert len(aggs) == 12
    arr = ckpt.tensors["ship_domain"]
    labels = ["opposing", "aligned", "stationary"]
    for r in aggs:
        d = labels.index(r["theta"])
        rate_idx = [(-np.inf), -0.2, -0.05, 0.05].index(r["phi_lo"])
        assert abs(r["value_wkm"] - arr[d, rate_idx, :].mean()) < 1e-12


def test_domain_report_rejects_baseline():
    with pytest.raises(CheckpointError, match="no ship-domain tensor"):
        domain_report(trained_checkpoint("E-D"))


# --- counterfactual probe ------------------------------------------------------------


def far_pair():
    a = constant_speed_poses(599.0, 0.02, -15.0, 0.1, T)
    b = constant_speed_poses(601.0, 0.025, 15.0, -0.1, T)
    return window_from_poses({"va": a, "vb": b}, T)


def near_pair():
    a = constant_speed_poses(600.0, 0.03, -5.0, 0.2, T)
    b = constant_speed_poses(600.33, -0.03, 5.0, -0.2, T)
    return window_from_poses({"va": a, "vb": b}, T)


def model_for(variant):
    return TrajectoryModel.build(variant_cfg(variant, hidden=8, horizon=T), simple_normalizer())


@pytest.mark.parametrize("kind,amount", [
    ("lateral_shift", 12.0),
    ("speed_scale", 1.3),
    ("remove", 0.0),
])
def test_probe_zero_weight_invariance(kind, amount):
    model = model_for("E-DA")
    result = counterfactual_probe(
        model, far_pair(), "va", "vb", Perturbation(kind=kind, amount=amount), STRAIGHT
    )
    assert result.max_displacement_m == 0.0
    assert all(w == 0.0 for w in result.decoder_weight_trace)


def test_probe_baseline_always_invariant():
    model = model_for("E-D")
    result = counterfactual_probe(
        model, near_pair(), "va", "vb", Perturbation(kind="remove"), STRAIGHT
    )
    assert result.max_displacement_m == 0.0


def test_probe_reports_displacement_for_active_pair():
    model = model_for("E-DA")
    result = counterfactual_probe(
        model, near_pair(), "va", "vb", Perturbation(kind="lateral_shift", amount=12.0), STRAIGHT
    )
    assert any(w > 0 for w in result.decoder_weight_trace)
    assert result.max_displacement_m > 0.0
    assert len(result.displacement_per_horizon) == T


def test_probe_rejects_same_target_and_neighbor():
    with pytest.raises(ValueError):
        counterfactual_probe(
            model_for("E-DA"), near_pair(), "va", "va", Perturbation(kind="remove"), STRAIGHT
        )


def test_perturbation_validation():
    with pytest.raises(ValueError):
        Perturbation(kind="teleport")
    with pytest.raises(ValueError, match="not present"):
        perturb_window_set(near_pair(), "zz", Perturbation(kind="remove"), STRAIGHT)
    with pytest.raises(ValueError, match="outside the axis"):
        perturb_window_set(near_pair(), "vb", Perturbation(kind="speed_scale", amount=8000.0), STRAIGHT)


def test_perturbed_features_recomputed():
    ws = near_pair()
    shifted = perturb_window_set(ws, "vb", Perturbation(kind="lateral_shift", amount=5.0), STRAIGHT)
    vb_old = ws.vessels[1]
    vb_new = shifted.vessels[1]
    assert np.allclose(vb_new.obs_x[:, 1], vb_old.obs_x[:, 1] + 5.0)
    assert np.allclose(vb_new.obs_x[:, 2:4], vb_old.obs_x[:, 2:4], atol=1e-12)  # increments unchanged
    assert np.allclose(vb_new.anchor_pose[1], vb_old.anchor_pose[1] + 5.0)
