"""Box-counting dimension of point clouds (trajectory samples)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


MIN_CELLS = 8


class InsufficientResolution(ValueError):
    pass


@dataclass(frozen=True)
class CoveringCurve:
    deltas: np.ndarray
    counts: np.ndarray
    n_points: int

    def __post_init__(self):
        if len(self.deltas) != len(self.counts):
            raise ValueError("deltas and counts differ in length")
        if np.any(np.diff(self.deltas) >= 0):
            raise ValueError("deltas must be strictly decreasing")
        if np.any(self.counts < 1):
            raise ValueError("counts must be >= 1")


@dataclass(frozen=True)
class DimensionEstimate:
    gamma_hat: float
    fit_window: tuple[int, int]
    r_squared: float
    curve: CoveringCurve

    def to_dict(self) -> dict:
        return {"gamma_hat": self.gamma_hat, "window": list(self.fit_window), "r2": self.r_squared}


def _points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise ValueError("empty point set")
    return pts


def covering_number(points, delta: float, anchor=None) -> int:
    """Occupied cells of the axis-aligned grid of side ``delta`` anchored at
    the cloud's minimum corner (or at ``anchor``)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    pts = _points(points)
    origin = pts.min(axis=0) if anchor is None else np.asarray(anchor, dtype=float)
    cells = np.floor((pts - origin) / delta).astype(np.int64)
    return int(np.unique(cells, axis=0).shape[0])


def covering_curve(points, delta_max: float, delta_min: float, levels: int) -> CoveringCurve:
    """Counts on a geometric schedule from ``delta_max`` down to ``delta_min``.

    All levels share the anchor. When the schedule ratio is an integer (e.g.
    dyadic) coarse cells are unions of fine ones and the counts are exactly
    monotone; otherwise anchor effects can break monotonicity by a few cells.
    """
    if levels < 4:
        raise ValueError("need at least 4 levels")
    if not (0 < delta_min < delta_max) or not math.isfinite(delta_max):
        raise ValueError("degenerate delta schedule")
    pts = _points(points)
    anchor = pts.min(axis=0)
    q = (delta_max / delta_min) ** (1.0 / (levels - 1))
    if abs(q - round(q)) < 1e-9 * q:
        # integer ratio: exact division keeps the grids nested and scale-covariant
        deltas = delta_max / float(round(q)) ** np.arange(levels)
    else:
        deltas = np.geomspace(delta_max, delta_min, levels)
    counts = np.array([covering_number(pts, d, anchor) for d in deltas])
    return CoveringCurve(deltas=deltas, counts=counts, n_points=pts.shape[0])


def dyadic_curve(points, levels: int = 16, top=None) -> CoveringCurve:
    """Dyadic schedule starting at the cloud's largest side length (or ``top``)."""
    pts = _points(points)
    extent = float(np.max(pts.max(axis=0) - pts.min(axis=0))) if top is None else float(top)
    if extent == 0.0:
        extent = 1.0  # a single repeated point: any scale sees one cell
    return covering_curve(pts, extent, extent * 2.0 ** (1 - levels), levels)


def estimate_box_dimension(curve: CoveringCurve) -> DimensionEstimate:
    """Least-squares slope of ``log N`` against ``log(1/delta)``.

    The coarsest level is dropped, as is every level where ``N`` exceeds half
    the point count (the grid is then resolving individual samples) and every
    level with fewer than ``MIN_CELLS`` cells (a few large jumps decide those
    counts). A cloud whose counts never change has dimension 0.
    """
    if len(curve.deltas) < 4:
        raise ValueError("need at least 4 levels")
    if np.all(curve.counts == curve.counts[0]):
        return DimensionEstimate(gamma_hat=0.0, fit_window=(0, len(curve.deltas) - 1),
                                 r_squared=1.0, curve=curve)
    keep = np.ones(len(curve.deltas), dtype=bool)
    keep[0] = False
    keep &= curve.counts <= curve.n_points / 2.0
    if np.count_nonzero(keep & (curve.counts >= MIN_CELLS)) >= 2:
        keep &= curve.counts >= MIN_CELLS
    idx = np.flatnonzero(keep)
    if idx.size < 2:
        raise InsufficientResolution("insufficient resolution")
    # contiguous window starting at the first usable level
    stop = idx[0]
    while stop + 1 < len(keep) and keep[stop + 1]:
        stop += 1
    window = (int(idx[0]), int(stop))
    if stop - idx[0] < 1:
        raise InsufficientResolution("insufficient resolution")
    x = np.log(1.0 / curve.deltas[idx[0]:stop + 1])
    y = np.log(curve.counts[idx[0]:stop + 1].astype(float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float(np.sum(resid ** 2)) / ss_tot)
    gamma = max(0.0, float(slope))
    if abs(gamma) < 1e-12:
        gamma = 0.0
    return DimensionEstimate(gamma_hat=gamma, fit_window=window, r_squared=r2, curve=curve)


def box_dimension(points, levels: int = 16) -> DimensionEstimate:
    return estimate_box_dimension(dyadic_curve(points, levels))
