"""Curvilinear waterway frame.

A river section is described by a planar centerline polyline calibrated in
waterway kilometres (wkm). Positions are expressed as (k, f): kilometre along
the axis plus signed lateral offset from the fairway center in metres,
positive to the left of the direction of increasing k. Axis curvature is
estimated from the polyline and shares the same left-positive sign.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# |c| below this threshold counts as straight for the bend-direction flag.
CURVATURE_ZERO_EPS = 1e-5
DEFAULT_PROJECTION_MARGIN_M = 500.0
DEFAULT_CURVATURE_WINDOW_M = 200.0


@dataclass(frozen=True)
class CurvilinearPose:
    """Axis-relative position: kilometre along the axis and lateral offset."""

    k: float  # wkm
    f: float  # metres, positive left of increasing-k direction


@dataclass(frozen=True)
class CurvatureSample:
    c: float  # signed curvature, 1/m, positive when bending left
    c_dir: int  # -1, 0 or +1


class WaterwayAxis:
    """Planar centerline calibrated in waterway kilometres.

    Immutable after construction; every query is a pure function, so a single
    axis instance can be shared freely between concurrent readers.
    """

    def __init__(self, vertices, start_wkm: float, fairway_half_width_m: float = 75.0):
        pts = np.asarray(vertices, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("axis needs at least 2 planar points")
        if fairway_half_width_m <= 0:
            raise ValueError("fairway_half_width_m must be positive")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len == 0.0):
            raise ValueError("duplicate consecutive vertices in axis polyline")
        self.vertices = pts
        self.start_wkm = float(start_wkm)
        self.fairway_half_width_m = float(fairway_half_width_m)
        self._segs = seg
        self._seg_len = seg_len
        self._dirs = seg / seg_len[:, None]
        # left normal of each segment
        self._normals = np.stack([-self._dirs[:, 1], self._dirs[:, 0]], axis=1)
        self._cum_m = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.length_m = float(self._cum_m[-1])

    @property
    def wkm_at_vertex(self) -> np.ndarray:
        return self.start_wkm + self._cum_m / 1000.0

    @property
    def wkm_range(self) -> tuple[float, float]:
        return (self.start_wkm, self.start_wkm + self.length_m / 1000.0)

    def contains_wkm(self, k: float, margin_km: float = 0.0) -> bool:
        lo, hi = self.wkm_range
        return lo - margin_km <= k <= hi + margin_km

    def _point_at_arc(self, s_m: float) -> tuple[np.ndarray, int]:
        """Point on the polyline at arc position s_m; also returns the segment index."""
        idx = int(np.searchsorted(self._cum_m, s_m, side="right")) - 1
        idx = min(max(idx, 0), len(self._seg_len) - 1)
        local = s_m - self._cum_m[idx]
        return self.vertices[idx] + self._dirs[idx] * local, idx

    def to_curvilinear(self, point, margin_m: float | None = None) -> CurvilinearPose:
        """Project a planar point onto the axis.

        k is taken at the closest-point projection (ties resolve to the
        lower-k segment), f is the signed distance to that projection. Points
        farther than the lateral margin from the axis are rejected.
        """
        if margin_m is None:
            margin_m = DEFAULT_PROJECTION_MARGIN_M
        p = np.asarray(point, dtype=np.float64)
        rel = p[None, :] - self.vertices[:-1]
        t = np.einsum("ij,ij->i", rel, self._segs) / (self._seg_len**2)
        t = np.clip(t, 0.0, 1.0)
        proj = self.vertices[:-1] + t[:, None] * self._segs
        d2 = np.einsum("ij,ij->i", p[None, :] - proj, p[None, :] - proj)
        i = int(np.argmin(d2))
        dist = math.sqrt(float(d2[i]))
        if dist > margin_m:
            raise ValueError(
                f"point {p.tolist()} is {dist:.1f} m from the axis, beyond the {margin_m:.1f} m margin"
            )
        off = p - proj[i]
        side = float(np.dot(off, self._normals[i]))
        f = dist if side >= 0.0 else -dist
        k = self.start_wkm + (self._cum_m[i] + float(t[i]) * self._seg_len[i]) / 1000.0
        return CurvilinearPose(k=float(k), f=float(f))

    def to_cartesian(self, pose: CurvilinearPose) -> np.ndarray:
        """Planar point at arc position pose.k displaced pose.f metres along the left normal."""
        s = (pose.k - self.start_wkm) * 1000.0
        if s < -1e-9 or s > self.length_m + 1e-9:
            raise ValueError(f"wkm {pose.k} outside axis range {self.wkm_range}")
        s = min(max(s, 0.0), self.length_m)
        base, idx = self._point_at_arc(s)
        return base + pose.f * self._normals[idx]

    def curvature_at(self, k: float, window_m: float | None = None) -> CurvatureSample:
        """Signed curvature from a three-point circumcircle over an arc window around k."""
        if window_m is None:
            window_m = DEFAULT_CURVATURE_WINDOW_M
        s = (k - self.start_wkm) * 1000.0
        if s < -1e-9 or s > self.length_m + 1e-9:
            raise ValueError(f"wkm {k} outside axis range {self.wkm_range}")
        s = min(max(s, 0.0), self.length_m)
        if self.length_m <= window_m:
            a, b = 0.0, self.length_m
        else:
            a = min(max(s - window_m / 2.0, 0.0), self.length_m - window_m)
            b = a + window_m
        p1, _ = self._point_at_arc(a)
        p2, _ = self._point_at_arc((a + b) / 2.0)
        p3, _ = self._point_at_arc(b)
        c = _circumcircle_curvature(p1, p2, p3)
        c_dir = 0 if abs(c) < CURVATURE_ZERO_EPS else (1 if c > 0 else -1)
        return CurvatureSample(c=c, c_dir=c_dir)


def _circumcircle_curvature(p1: np.ndarray, p2: np.ndarray, p3: np.ndarray) -> float:
    """Signed inverse radius of the circle through three points (left turn positive)."""
    a = p2 - p1
    b = p3 - p2
    c = p3 - p1
    cross = a[0] * b[1] - a[1] * b[0]
    denom = np.hypot(*a) * np.hypot(*b) * np.hypot(*c)
    if denom == 0.0:
        return 0.0
    return float(2.0 * cross / denom)


def build_axis(points, start_wkm: float, fairway_half_width_m: float = 75.0) -> WaterwayAxis:
    """Build an axis from an ordered planar polyline calibrated at start_wkm."""
    return WaterwayAxis(points, start_wkm, fairway_half_width_m)


def make_straight_axis(
    length_km: float = 16.0,
    start_wkm: float = 595.0,
    step_m: float = 100.0,
    fairway_half_width_m: float = 75.0,
) -> WaterwayAxis:
    n = max(2, int(round(length_km * 1000.0 / step_m)) + 1)
    xs = np.linspace(0.0, length_km * 1000.0, n)
    pts = np.stack([xs, np.zeros_like(xs)], axis=1)
    return WaterwayAxis(pts, start_wkm, fairway_half_width_m)


def make_curved_axis(
    length_km: float = 16.0,
    start_wkm: float = 595.0,
    bend_heading_rad: float = 0.35,
    bend_wavelength_m: float = 4000.0,
    step_m: float = 25.0,
    fairway_half_width_m: float = 75.0,
) -> WaterwayAxis:
    """Gently meandering axis built by integrating a sinusoidal heading.

    Parametrised by arc length, so the calibrated wkm range is length_km long
    (up to chord-vs-arc discretisation error, which is negligible at the
    default step). Curvature alternates sign along the run.
    """
    total = length_km * 1000.0
    n = max(2, int(round(total / step_m)) + 1)
    s = np.linspace(0.0, total, n)
    heading = bend_heading_rad * np.sin(2.0 * np.pi * s / bend_wavelength_m)
    ds = np.diff(s)
    # integrate with midpoint headings so the polyline stays close to arc length
    mid = (heading[:-1] + heading[1:]) / 2.0
    xs = np.concatenate([[0.0], np.cumsum(ds * np.cos(mid))])
    ys = np.concatenate([[0.0], np.cumsum(ds * np.sin(mid))])
    return WaterwayAxis(np.stack([xs, ys], axis=1), start_wkm, fairway_half_width_m)


def save_axis(axis: WaterwayAxis, csv_path, comment: str | None = None) -> None:
    """Write vertices as `x_m,y_m` CSV plus a JSON sidecar with calibration."""
    csv_path = Path(csv_path)
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("x_m,y_m")
    for x, y in axis.vertices:
        lines.append(f"{float(x)!r},{float(y)!r}")
    csv_path.write_text("\n".join(lines) + "\n")
    sidecar = {
        "start_wkm": axis.start_wkm,
        "fairway_half_width_m": axis.fairway_half_width_m,
    }
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def load_axis(csv_path) -> WaterwayAxis:
    csv_path = Path(csv_path)
    rows = [ln for ln in csv_path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows or rows[0].strip() != "x_m,y_m":
        raise ValueError(f"malformed axis CSV header in {csv_path}")
    pts = [tuple(float(v) for v in ln.split(",")) for ln in rows[1:]]
    sidecar = json.loads(csv_path.with_suffix(".json").read_text())
    return WaterwayAxis(
        pts,
        start_wkm=float(sidecar["start_wkm"]),
        fairway_half_width_m=float(sidecar["fairway_half_width_m"]),
    )
