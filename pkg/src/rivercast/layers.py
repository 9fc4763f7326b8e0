"""Recurrent and attention building blocks on top of the autodiff kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class LstmParams:
    """LSTM weights for input dimension D and hidden dimension H.

    The four gates are stored row-packed as (4H, D), (4H, H) and (4H,)
    tensors in the order [input, forget, output, candidate]; the per-gate
    (H, D) / (H, H) / (H,) blocks are exposed as views.
    """

    w_x: Tensor
    w_h: Tensor
    b: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.b.data.shape[0] // 4

    @property
    def input_dim(self) -> int:
        return self.w_x.data.shape[1]

    def _block(self, tensor: Tensor, gate: int) -> np.ndarray:
        hd = self.hidden_dim
        return tensor.data[gate * hd : (gate + 1) * hd]

    # per-gate views: input (i), forget (f), output (o), candidate (g)
    @property
    def w_xi(self):
        return self._block(self.w_x, 0)

    @property
    def w_xf(self):
        return self._block(self.w_x, 1)

    @property
    def w_xo(self):
        return self._block(self.w_x, 2)

    @property
    def w_xg(self):
        return self._block(self.w_x, 3)

    @property
    def w_hi(self):
        return self._block(self.w_h, 0)

    @property
    def w_hf(self):
        return self._block(self.w_h, 1)

    @property
    def w_ho(self):
        return self._block(self.w_h, 2)

    @property
    def w_hg(self):
        return self._block(self.w_h, 3)

    @property
    def b_i(self):
        return self._block(self.b, 0)

    @property
    def b_f(self):
        return self._block(self.b, 1)

    @property
    def b_o(self):
        return self._block(self.b, 2)

    @property
    def b_g(self):
        return self._block(self.b, 3)

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden_dim: int, prefix: str) -> "LstmParams":
        scale = 1.0 / np.sqrt(hidden_dim)
        return cls(
            w_x=ad.parameter(rng.uniform(-scale, scale, (4 * hidden_dim, input_dim)), f"{prefix}.w_x"),
            w_h=ad.parameter(rng.uniform(-scale, scale, (4 * hidden_dim, hidden_dim)), f"{prefix}.w_h"),
            b=ad.parameter(np.zeros(4 * hidden_dim), f"{prefix}.b"),
        )

    def tensors(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.w_x, self.w_h, self.b)}


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmParams) -> tuple[Tensor, Tensor]:
    """One LSTM step with sigmoid gates and tanh candidate/output.

    Implemented as a single fused node (packed [h, c] output plus two slice
    views) so long unrolls stay cheap; the backward pass is the standard
    analytic cell gradient.
    """
    hd = params.hidden_dim
    if x.data.ndim != 1 or x.data.shape[0] != params.input_dim:
        raise ValueError(f"lstm_cell input dim {x.data.shape} != {params.input_dim}")
    if h_prev.data.shape != (hd,) or c_prev.data.shape != (hd,):
        raise ValueError("lstm_cell state dims do not match the parameters")

    p = params
    xv, hv, cv = x.data, h_prev.data, c_prev.data
    z = p.w_x.data @ xv + p.w_h.data @ hv + p.b.data
    ifo = ad._sigmoid(z[: 3 * hd])
    gate_g = np.tanh(z[3 * hd :])
    gate_i = ifo[:hd]
    gate_f = ifo[hd : 2 * hd]
    gate_o = ifo[2 * hd :]
    c_new = gate_f * cv + gate_i * gate_g
    tc = np.tanh(c_new)
    h_new = gate_o * tc

    def bwd(g):
        gh = g[:hd]
        gc = g[hd:] + gh * gate_o * (1.0 - tc * tc)
        pre_ifo = np.concatenate([gc * gate_g, gc * cv, gh * tc])
        gz = np.concatenate([pre_ifo * ifo * (1.0 - ifo), gc * gate_i * (1.0 - gate_g * gate_g)])
        if x.requires_grad:
            x._accumulate(p.w_x.data.T @ gz)
        if h_prev.requires_grad:
            h_prev._accumulate(p.w_h.data.T @ gz)
        if c_prev.requires_grad:
            c_prev._accumulate(gc * gate_f)
        if p.w_x.requires_grad:
            p.w_x._accumulate(gz[:, None] * xv[None, :])
        if p.w_h.requires_grad:
            p.w_h._accumulate(gz[:, None] * hv[None, :])
        if p.b.requires_grad:
            p.b._accumulate(gz)

    packed = ad._make(
        np.concatenate([h_new, c_new]),
        (x, h_prev, c_prev, p.w_x, p.w_h, p.b),
        bwd,
    )
    return ad.slice_vec(packed, 0, hd), ad.slice_vec(packed, hd, 2 * hd)


def luong_attention(query: Tensor, keys) -> Tensor:
    """Global dot-product attention over a vessel's own encoder states.

    `keys` is either a list of (H,) tensors or an already stacked (T, H)
    tensor. Raises on an empty key set.
    """
    if isinstance(keys, Tensor):
        stacked = keys
        if stacked.data.ndim != 2 or stacked.data.shape[0] == 0:
            raise ValueError("luong_attention needs a non-empty (T, H) key matrix")
    else:
        keys = list(keys)
        if not keys:
            raise ValueError("luong_attention needs at least one key")
        stacked = ad.stack_rows(keys)
    return ad.attend(query, stacked)
