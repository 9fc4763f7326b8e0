"""Ship-to-ship encounter relations and the trainable ship-domain tensor.

Every pair of vessels at a time step is characterised by four relation
values: relative direction of movement, rate of change of the longitudinal
gap, lateral distance, and the longitudinal gap itself. The first three are
discretized into a fixed 3x4x4 grid of encounter types; the ship-domain
tensor stores one learnable awareness range (in wkm) per type. A pair
contributes to hidden-state fusion only while its longitudinal gap is inside
the awareness range of its encounter type.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# a longitudinal speed below this magnitude counts as stationary (wkm/min)
EPS_STATIONARY_WKM_MIN = 0.005

# bucket edges for the gap-change rate (wkm/min): (-inf,-0.2) [-0.2,-0.05) [-0.05,0.05] (0.05,inf)
RATE_EDGES = (-0.2, -0.05, 0.05)
# bucket edges for lateral distance (m): [0,10) [10,20) [20,40) [40,inf)
LATERAL_EDGES = (10.0, 20.0, 40.0)

DIRECTION_LABELS = ("opposing", "aligned", "stationary")
DIRECTION_VALUES = (-1, 1, 0)  # value encoded by each direction index
TENSOR_SHAPE = (3, 4, 4)
DEFAULT_INIT_WKM = 0.1


def sign_with_deadband(v: float, eps: float = EPS_STATIONARY_WKM_MIN) -> int:
    if abs(v) < eps:
        return 0
    return 1 if v > 0 else -1


@dataclass(frozen=True)
class RelationValues:
    """Raw relation values between two vessels at one time step."""

    lateral_m: float  # |f_i - f_j|
    direction: int  # -1 opposing, +1 aligned, 0 when either vessel is (near) stationary
    rate_wkm_min: float  # gap(t) - gap(t-1)
    gap_wkm: float  # |k_i - k_j|


@dataclass(frozen=True)
class EncounterKey:
    """Discretized encounter type, indexing into the ship-domain tensor."""

    direction_idx: int  # 0 opposing, 1 aligned, 2 stationary
    rate_idx: int  # 0..3, ascending rate buckets
    lateral_idx: int  # 0..3, ascending lateral-distance buckets

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.direction_idx, self.rate_idx, self.lateral_idx)


def relation_values(pose_i, prev_i, pose_j, prev_j) -> RelationValues:
    """Relation values from consecutive-step poses of vessels i and j.

    Total on finite inputs; i == j yields zero lateral distance, zero gap,
    zero rate, and an aligned direction while moving.
    """
    dk_i = pose_i.k - prev_i.k
    dk_j = pose_j.k - prev_j.k
    direction = sign_with_deadband(dk_i) * sign_with_deadband(dk_j)
    gap_now = abs(pose_i.k - pose_j.k)
    gap_prev = abs(prev_i.k - prev_j.k)
    return RelationValues(
        lateral_m=abs(pose_i.f - pose_j.f),
        direction=direction,
        rate_wkm_min=gap_now - gap_prev,
        gap_wkm=gap_now,
    )


def direction_index(direction: int) -> int:
    if direction == -1:
        return 0
    if direction == 1:
        return 1
    if direction == 0:
        return 2
    raise ValueError(f"direction must be -1, 0 or +1, got {direction}")


def rate_index(rate: float) -> int:
    if rate < RATE_EDGES[0]:
        return 0
    if rate < RATE_EDGES[1]:
        return 1
    if rate <= RATE_EDGES[2]:
        return 2
    return 3


def lateral_index(lateral: float) -> int:
    if lateral < LATERAL_EDGES[0]:
        return 0
    if lateral < LATERAL_EDGES[1]:
        return 1
    if lateral < LATERAL_EDGES[2]:
        return 2
    return 3


def discretize(rv: RelationValues) -> EncounterKey:
    return EncounterKey(
        direction_idx=direction_index(rv.direction),
        rate_idx=rate_index(rv.rate_wkm_min),
        lateral_idx=lateral_index(rv.lateral_m),
    )


def rate_interval(idx: int) -> tuple[float, float]:
    edges = (-np.inf,) + RATE_EDGES + (np.inf,)
    return (float(edges[idx]), float(edges[idx + 1]))


def lateral_interval(idx: int) -> tuple[float, float]:
    edges = (0.0,) + LATERAL_EDGES + (np.inf,)
    return (float(edges[idx]), float(edges[idx + 1]))


@dataclass
class ShipDomainTensor:
    """Trainable 3x4x4 grid of awareness ranges (wkm), one per encounter type."""

    values: np.ndarray
    init_value: float = DEFAULT_INIT_WKM

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != TENSOR_SHAPE:
            raise ValueError(f"ship-domain tensor must have shape {TENSOR_SHAPE}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("ship-domain tensor contains non-finite values")

    @classmethod
    def initialized(cls, value: float = DEFAULT_INIT_WKM) -> "ShipDomainTensor":
        return cls(values=np.full(TENSOR_SHAPE, value, dtype=np.float64), init_value=value)

    def copy(self) -> "ShipDomainTensor":
        return ShipDomainTensor(values=self.values.copy(), init_value=self.init_value)


def _domain_array(domain) -> np.ndarray:
    if isinstance(domain, ShipDomainTensor):
        return domain.values
    return np.asarray(domain, dtype=np.float64)


def domain_lookup(domain, key: EncounterKey) -> float:
    return float(_domain_array(domain)[key.as_tuple()])


def pair_weight(domain, key: EncounterKey, gap_wkm: float) -> float:
    """Hinge weight max(awareness - gap, 0); zero means the pair is excluded."""
    if gap_wkm < 0:
        raise ValueError("gap_wkm must be non-negative")
    return max(domain_lookup(domain, key) - gap_wkm, 0.0)


def fuse_hidden(weights, hidden_states, hidden_dim: int | None = None) -> np.ndarray:
    """Weighted sum of neighbor hidden states; empty or all-zero weights give zeros."""
    weights = list(weights)
    hidden_states = [np.asarray(h, dtype=np.float64) for h in hidden_states]
    if len(weights) != len(hidden_states):
        raise ValueError("weights and hidden states must have equal counts")
    if hidden_states:
        dims = {h.shape for h in hidden_states}
        if len(dims) != 1:
            raise ValueError(f"hidden states disagree on dimension: {sorted(dims)}")
        dim = hidden_states[0].shape
    elif hidden_dim is not None:
        dim = (hidden_dim,)
    else:
        raise ValueError("hidden_dim required when the neighbor set is empty")
    out = np.zeros(dim, dtype=np.float64)
    for w, h in zip(weights, hidden_states):
        if w != 0.0:
            out += w * h
    return out


DOMAIN_CSV_HEADER = "theta,phi_lo,phi_hi,gamma_lo,gamma_hi,value_wkm,delta_vs_init"


def export_domain(domain) -> list[dict]:
    """Flat 48-row table of the tensor, ordered by (direction, rate, lateral) indices.

    Column names follow the report convention: theta is the relative
    direction, phi the gap-change-rate interval, gamma the lateral-distance
    interval.
    """
    arr = _domain_array(domain)
    init = domain.init_value if isinstance(domain, ShipDomainTensor) else DEFAULT_INIT_WKM
    rows = []
    for d in range(3):
        for r in range(4):
            for g in range(4):
                p_lo, p_hi = rate_interval(r)
                g_lo, g_hi = lateral_interval(g)
                value = float(arr[d, r, g])
                rows.append(
                    {
                        "theta": DIRECTION_LABELS[d],
                        "phi_lo": p_lo,
                        "phi_hi": p_hi,
                        "gamma_lo": g_lo,
                        "gamma_hi": g_hi,
                        "value_wkm": value,
                        "delta_vs_init": value - init,
                    }
                )
    return rows


def write_domain_csv(path, domain, comment: str | None = None) -> None:
    """Write the flat 48-row ship-domain table."""
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append(DOMAIN_CSV_HEADER)
    for r in export_domain(domain):
        lines.append(
            f"{r['theta']},{r['phi_lo']!r},{r['phi_hi']!r},{r['gamma_lo']!r},"
            f"{r['gamma_hi']!r},{r['value_wkm']!r},{r['delta_vs_init']!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
