"""LSTM encoder-decoder variants with ship-domain-gated hidden-state fusion.

Four variants share one code path:

* ``E-D``: per-vessel encoder and decoder, no cross-vessel pathway. The
  interaction-blind baseline.
* ``EA-DA``: cross-vessel fusion feeds both the encoder and the decoder.
* ``E-DA``: fusion only in the decoder.
* ``E-DDA``: the decoder is split into an interaction-blind LSTM over the
  vessel's own outputs and an attention LSTM fed by foreign vessels only.

Fusion weighs each neighbor's previous hidden state by a hinge on the
ship-domain tensor: ``max(awareness(encounter type) - longitudinal gap, 0)``.
Pairs outside their awareness range contribute exactly nothing, so a vessel's
prediction is bit-for-bit invariant to neighbors whose weights are zero
throughout. Relation values are treated as constants during differentiation;
gradients flow into the ship-domain tensor and the hidden states only.

Every decoder also runs global dot-product attention over the same vessel's
encoder states; the attended context feeds the output head together with the
decoder state(s).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import encounter
from .autodiff import Tensor
from .layers import LstmParams, lstm_cell, luong_attention
from .traffic import FeatureWindow, Normalizer, WindowSet
from .waterway import CurvilinearPose

VARIANTS = ("E-D", "EA-DA", "E-DA", "E-DDA")


@dataclass
class VariantConfig:
    variant: str
    hidden_size: int = 64
    horizon: int = 5
    seed: int = 0
    s_init: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.hidden_size < 1 or self.horizon < 1:
            raise ValueError("hidden_size and horizon must be >= 1")

    @property
    def has_ship_domain(self) -> bool:
        return self.variant != "E-D"

    @property
    def include_self(self) -> bool:
        # E-DDA explicitly excludes the vessel itself from its neighbor set
        return self.variant in ("EA-DA", "E-DA")

    @property
    def encoder_fusion(self) -> bool:
        return self.variant == "EA-DA"

    @property
    def decoder_fusion(self) -> bool:
        return self.variant in ("EA-DA", "E-DA", "E-DDA")

    @property
    def dual_decoder(self) -> bool:
        return self.variant == "E-DDA"

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "hidden_size": self.hidden_size,
            "horizon": self.horizon,
            "seed": self.seed,
            "s_init": self.s_init,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VariantConfig":
        return cls(**d)


@dataclass
class PredictedTrack:
    vessel_id: str
    delta: np.ndarray  # (T, 2) physical dk, df; zero rows where not decoded
    poses: np.ndarray  # (T, 2) anchor + cumulative sums of delta
    presence_mask: np.ndarray  # copied from the window

@dataclass
class PredictionSet:
    situation_id: str
    start_minute: int
    tracks: list[PredictedTrack]

    def track(self, vessel_id: str) -> PredictedTrack:
        for tr in self.tracks:
            if tr.vessel_id == vessel_id:
                return tr
        raise KeyError(vessel_id)


@dataclass
class ForwardTrace:
    """Optional per-step internals for interpretability tests and probes."""

    encoder_weights: list[dict] = field(default_factory=list)
    encoder_fusion: list[dict] = field(default_factory=list)
    decoder_weights: list[dict] = field(default_factory=list)
    decoder_fusion: list[dict] = field(default_factory=list)
    blind_hidden: dict = field(default_factory=dict)  # vessel_id -> [np arrays]
    att_hidden: dict = field(default_factory=dict)


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Mean squared error over valid (step, component) entries.

    The mean runs over valid vessel-step pairs and both output components;
    masked steps contribute nothing. Raises when everything is masked.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask)
    if pred.shape != target.shape or pred.shape[:-1] != mask.shape:
        raise ValueError("shape mismatch between predictions, targets and mask")
    sel = mask.astype(bool)
    if not sel.any():
        raise ValueError("all steps are masked; loss is undefined")
    diff = pred[sel] - target[sel]
    return float(np.sum(diff * diff) / (2.0 * diff.shape[0]))


def _pose(arr) -> CurvilinearPose:
    return CurvilinearPose(k=float(arr[0]), f=float(arr[1]))


class TrajectoryModel:
    """One variant instance: parameters, normalizer and the forward passes."""

    def __init__(self, config: VariantConfig, normalizer: Normalizer, params: dict[str, Tensor]):
        self.config = config
        self.normalizer = normalizer
        self.params = params
        hidden = config.hidden_size
        self._enc = self._collect("enc")
        if config.dual_decoder:
            self._blind = self._collect("blind")
            self._att = self._collect("att")
            self._dec = None
        else:
            self._dec = self._collect("dec")
            self._blind = None
            self._att = None
        self._zero_h = np.zeros(hidden)

    def _collect(self, prefix: str) -> LstmParams:
        return LstmParams(
            w_x=self.params[f"{prefix}.w_x"],
            w_h=self.params[f"{prefix}.w_h"],
            b=self.params[f"{prefix}.b"],
        )

    @classmethod
    def build(cls, config: VariantConfig, normalizer: Normalizer) -> "TrajectoryModel":
        rng = np.random.Generator(np.random.PCG64(config.seed))
        hidden = config.hidden_size
        params: dict[str, Tensor] = {}

        def register(p: LstmParams):
            params.update(p.tensors())

        enc_in = 6 + (hidden if config.encoder_fusion else 0)
        register(LstmParams.init(rng, enc_in, hidden, "enc"))
        if config.dual_decoder:
            register(LstmParams.init(rng, 2, hidden, "blind"))
            register(LstmParams.init(rng, 2 + hidden, hidden, "att"))
            head_in = 3 * hidden
        else:
            dec_in = 2 + (hidden if config.decoder_fusion else 0)
            register(LstmParams.init(rng, dec_in, hidden, "dec"))
            head_in = 2 * hidden
        scale = 1.0 / np.sqrt(hidden)
        params["head.w"] = ad.parameter(rng.uniform(-scale, scale, (hidden, head_in)), "head.w")
        params["head.b"] = ad.parameter(np.zeros(hidden), "head.b")
        params["out.w"] = ad.parameter(rng.uniform(-scale, scale, (2, hidden)), "out.w")
        params["out.b"] = ad.parameter(np.zeros(2), "out.b")
        if config.has_ship_domain:
            params["ship_domain"] = ad.parameter(
                np.full(encounter.TENSOR_SHAPE, config.s_init), "ship_domain"
            )
        return cls(config, normalizer, params)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    @property
    def ship_domain(self) -> Tensor | None:
        return self.params.get("ship_domain")

    # -- fusion helpers -----------------------------------------------------

    def _weight(self, cache: dict, tag, poses_now, poses_prev, i: int, j: int):
        """Hinge weight for the (i, j) pair as (float, node-or-None).

        Weights are symmetric in (i, j), so one node per unordered pair per
        step is shared by both fusion directions. Inactive pairs (weight
        exactly zero) build no graph node at all.
        """
        key_c = (tag, min(i, j), max(i, j))
        if key_c in cache:
            return cache[key_c]
        rv = encounter.relation_values(
            _pose(poses_now[i]), _pose(poses_prev[i]), _pose(poses_now[j]), _pose(poses_prev[j])
        )
        k = encounter.discretize(rv)
        s_tensor = self.ship_domain
        w = encounter.pair_weight(s_tensor.data, k, rv.gap_wkm)
        node = None
        if w > 0.0 and s_tensor.requires_grad and ad.is_grad_enabled():
            node = ad.select(s_tensor, k.as_tuple()) + (-rv.gap_wkm)
        entry = (w, node)
        cache[key_c] = entry
        return entry

    def _fuse(self, cache, tag, poses_now, poses_prev, i, neighbors, states, trace_w) -> Tensor:
        terms = []
        for j in neighbors:
            w, node = self._weight(cache, tag, poses_now, poses_prev, i, j)
            if trace_w is not None:
                trace_w[(min(i, j), max(i, j))] = w
            if w == 0.0:
                continue
            if node is not None:
                terms.append(ad.scale_vec(node, states[j]))
            else:
                terms.append(ad.mul_const(states[j], w))
        if not terms:
            return Tensor(self._zero_h)
        return ad.add_n(terms)

    # -- forward passes -----------------------------------------------------

    def encode(self, ws: WindowSet, trace: ForwardTrace | None = None):
        """Run the encoder over all vessels; returns per-vessel state lists.

        Index t of each list holds the state after step t (index 0 is the
        zero initial state).
        """
        cfg = self.config
        T = cfg.horizon
        vessels = ws.vessels
        V = len(vessels)
        xs = [self.normalizer.normalize_obs(v.obs_x) for v in vessels]
        for v in vessels:
            if v.obs_x.shape[0] != T:
                raise ValueError("window observation length does not match the configured horizon")
        hs = [[Tensor(self._zero_h)] for _ in range(V)]
        cs = [[Tensor(self._zero_h)] for _ in range(V)]
        for t in range(1, T + 1):
            fused = [None] * V
            if cfg.encoder_fusion:
                cache: dict = {}
                poses_now = [v.raw_poses[t] for v in vessels]
                poses_prev = [v.raw_poses[t - 1] for v in vessels]
                trace_w = {} if trace is not None else None
                if t == 1:
                    # no hidden history yet: the fused input is exactly zero
                    fused = [Tensor(self._zero_h) for _ in range(V)]
                    if trace_w is not None:
                        for i in range(V):
                            for j in range(i, V):
                                w, _ = self._weight(cache, t, poses_now, poses_prev, i, j)
                                trace_w[(i, j)] = w
                else:
                    states = [hs[j][t - 1] for j in range(V)]
                    fused = [
                        self._fuse(cache, t, poses_now, poses_prev, i, range(V), states, trace_w)
                        for i in range(V)
                    ]
                if trace is not None:
                    trace.encoder_weights.append({
                        (vessels[a].vessel_id, vessels[b].vessel_id): w
                        for (a, b), w in trace_w.items()
                    })
                    trace.encoder_fusion.append(
                        {vessels[i].vessel_id: fused[i].data.copy() for i in range(V)}
                    )
            for i in range(V):
                x_row = Tensor(xs[i][t - 1])
                x_in = ad.concat([x_row, fused[i]]) if cfg.encoder_fusion else x_row
                h, c = lstm_cell(x_in, hs[i][t - 1], cs[i][t - 1], self._enc)
                hs[i].append(h)
                cs[i].append(c)
        return hs, cs

    def decode(self, ws: WindowSet, enc_states, mode: str = "autoregressive",
               trace: ForwardTrace | None = None):
        """Decode all vessels; returns (per-vessel per-step outputs, PredictionSet).

        In ``teacher_forced`` mode the decoder consumes ground-truth previous
        targets and ground-truth poses for the fusion weights, and vessels
        stop decoding once their presence mask ends. In ``autoregressive``
        mode every vessel decodes the full horizon, feeding back its own
        outputs and poses reconstructed from them.
        """
        if mode not in ("teacher_forced", "autoregressive"):
            raise ValueError(f"unknown decode mode {mode!r}")
        teacher = mode == "teacher_forced"
        cfg = self.config
        T = cfg.horizon
        vessels = ws.vessels
        V = len(vessels)
        hs, cs = enc_states
        norm = self.normalizer
        masks = [v.presence_mask for v in vessels]
        if teacher and not any(m.any() for m in masks):
            raise ValueError("teacher-forced decoding needs ground-truth targets")

        keys = [ad.stack_rows(hs[i][1:]) for i in range(V)]
        # pose history per vessel over absolute window steps 0..2T
        pose_hist = [[v.raw_poses[s].copy() for s in range(T + 1)] for v in vessels]
        if teacher:
            for i, v in enumerate(vessels):
                truths = v.truth_poses
                for r in range(T):
                    pose_hist[i].append(truths[r].copy() if masks[i][r] else None)

        y_prev: list[Tensor] = [
            Tensor(norm.normalize_target(v.obs_x[T - 1, 2:4])) for v in vessels
        ]
        if cfg.dual_decoder:
            hb = [hs[i][T] for i in range(V)]
            cb = [cs[i][T] for i in range(V)]
            ha = [hs[i][T] for i in range(V)]
            ca = [cs[i][T] for i in range(V)]
        else:
            hd = [hs[i][T] for i in range(V)]
            cd = [cs[i][T] for i in range(V)]
        outputs: list[list[Tensor | None]] = [[None] * T for _ in range(V)]

        for t in range(1, T + 1):
            if teacher:
                active = [bool(masks[i][t - 1]) for i in range(V)]
                participants = [j for j in range(V) if t == 1 or masks[j][t - 2]]
            else:
                active = [True] * V
                participants = list(range(V))

            fused = [None] * V
            if cfg.decoder_fusion:
                cache: dict = {}
                s = T + t - 1
                poses_now = [pose_hist[j][s] if s < len(pose_hist[j]) else None for j in range(V)]
                poses_prev = [pose_hist[j][s - 1] for j in range(V)]
                states = ha if cfg.dual_decoder else hd
                trace_w = {} if trace is not None else None
                for i in range(V):
                    if not active[i]:
                        continue
                    neigh = [
                        j for j in participants
                        if (cfg.include_self or j != i) and poses_now[j] is not None
                    ]
                    fused[i] = self._fuse(cache, t, poses_now, poses_prev, i, neigh,
                                          states, trace_w)
                if trace is not None:
                    trace.decoder_weights.append({
                        (vessels[a].vessel_id, vessels[b].vessel_id): w
                        for (a, b), w in trace_w.items()
                    })
                    trace.decoder_fusion.append({
                        vessels[i].vessel_id: fused[i].data.copy()
                        for i in range(V) if fused[i] is not None
                    })

            for i in range(V):
                if not active[i]:
                    continue
                if cfg.dual_decoder:
                    hb[i], cb[i] = lstm_cell(y_prev[i], hb[i], cb[i], self._blind)
                    att_in = ad.concat([y_prev[i], fused[i]])
                    ha[i], ca[i] = lstm_cell(att_in, ha[i], ca[i], self._att)
                    context = luong_attention(hb[i], keys[i])
                    head_in = ad.concat([context, hb[i], ha[i]])
                    if trace is not None:
                        trace.blind_hidden.setdefault(vessels[i].vessel_id, []).append(hb[i].data.copy())
                        trace.att_hidden.setdefault(vessels[i].vessel_id, []).append(ha[i].data.copy())
                else:
                    if cfg.decoder_fusion:
                        dec_in = ad.concat([y_prev[i], fused[i]])
                    else:
                        dec_in = y_prev[i]
                    hd[i], cd[i] = lstm_cell(dec_in, hd[i], cd[i], self._dec)
                    context = luong_attention(hd[i], keys[i])
                    head_in = ad.concat([context, hd[i]])
                h_tilde = ad.tanh(ad.linear(head_in, self.params["head.w"], self.params["head.b"]))
                out = ad.linear(h_tilde, self.params["out.w"], self.params["out.b"])
                outputs[i][t - 1] = out

                if teacher:
                    if t < T and masks[i][t - 1]:
                        y_prev[i] = Tensor(norm.normalize_target(vessels[i].target_y[t - 1]))
                else:
                    y_prev[i] = out
                    delta = norm.invert_target(out.data)
                    pose_hist[i].append(pose_hist[i][-1] + delta)

        pred = self._prediction_set(ws, outputs)
        return outputs, pred

    def _prediction_set(self, ws: WindowSet, outputs) -> PredictionSet:
        T = self.config.horizon
        tracks = []
        for i, v in enumerate(ws.vessels):
            delta = np.zeros((T, 2), dtype=np.float64)
            for t in range(T):
                if outputs[i][t] is not None:
                    delta[t] = self.normalizer.invert_target(outputs[i][t].data)
            poses = v.anchor_pose[None, :] + np.cumsum(delta, axis=0)
            tracks.append(
                PredictedTrack(
                    vessel_id=v.vessel_id,
                    delta=delta,
                    poses=poses,
                    presence_mask=v.presence_mask.copy(),
                )
            )
        return PredictionSet(ws.situation_id, ws.start_minute, tracks)

    def predict(self, ws: WindowSet, mode: str = "autoregressive", want_trace: bool = False):
        """Forward-only pass; no computation graph is recorded."""
        trace = ForwardTrace() if want_trace else None
        with ad.no_grad():
            enc = self.encode(ws, trace)
            _, pred = self.decode(ws, enc, mode=mode, trace=trace)
        return (pred, trace) if want_trace else pred

    def training_loss(self, window_sets) -> Tensor:
        """Teacher-forced masked MSE over normalized targets, pooled over the sets."""
        if isinstance(window_sets, WindowSet):
            window_sets = [window_sets]
        terms = []
        n_valid = 0
        for ws in window_sets:
            enc = self.encode(ws)
            outputs, _ = self.decode(ws, enc, mode="teacher_forced")
            for i, v in enumerate(ws.vessels):
                tgt = self.normalizer.normalize_target(v.target_y)
                for t in range(self.config.horizon):
                    if v.presence_mask[t] and outputs[i][t] is not None:
                        diff = outputs[i][t] + (-tgt[t])
                        terms.append(ad.dot(diff, diff))
                        n_valid += 1
        if not terms:
            raise ValueError("all steps are masked; loss is undefined")
        return ad.mul_const(ad.add_n(terms), 1.0 / (2.0 * n_valid))
