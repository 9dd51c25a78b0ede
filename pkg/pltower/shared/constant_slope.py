from typing import NamedTuple

import numpy as np

from pltower.models.dynamics import CriticalValueVector
from pltower.shared import errors
from pltower.shared.pl_core import CANONICAL_EPS, PLMap, canonical_knots, critical_values

# critical value vectors closer than this are considered equal
CV_TOLERANCE = 1e-12


class ConstantSlopeModel(NamedTuple):
    g: PLMap
    slope: float
    turning: tuple[float, ...]


def constant_slope_model(cv: CriticalValueVector) -> ConstantSlopeModel:
    values = np.asarray(cv.values, dtype=float)
    steps = np.diff(values)
    slope = float(np.sum(np.abs(steps)))
    if not slope > 0 or np.any(steps == 0):
        raise errors.DegenerateCV(values=list(cv.values))

    expected = cv.direction * (-1) ** np.arange(len(steps))
    if np.any(np.sign(steps) != expected):
        raise errors.DegenerateCV(values=list(cv.values))

    turning = np.concatenate([[0.0], np.cumsum(np.abs(steps)) / slope])
    turning[-1] = 1.0
    return ConstantSlopeModel(PLMap(turning, values), slope, tuple(turning.tolist()))


def _matching(left: CriticalValueVector, right: CriticalValueVector) -> bool:
    if left.degree != right.degree or left.direction != right.direction:
        return False
    return max(abs(a - b) for a, b in zip(left.values, right.values)) <= CV_TOLERANCE


def factor_homeomorphism(f: PLMap, g: PLMap) -> PLMap:
    """The increasing h with f = g∘h, obtained lap by lap as g⁻¹∘f."""
    cv_f, cv_g = critical_values(f), critical_values(g)
    if not _matching(cv_f, cv_g):
        raise errors.CVMismatch(left=list(cv_f.values), right=list(cv_g.values))

    targets = g.lap_bounds
    values = np.asarray(cv_g.values)
    lap = np.searchsorted(f.turning_points, f.xs, side="right")
    lo_v, hi_v = values[lap], values[lap + 1]
    lo_c, hi_c = targets[lap], targets[lap + 1]
    hs = lo_c + (f.ys - lo_v) * (hi_c - lo_c) / (hi_v - lo_v)
    hs[f.turning_indices] = targets[1:-1]
    hs[0], hs[-1] = 0.0, 1.0
    hs = np.clip(hs, 0.0, 1.0)
    if np.any(np.diff(hs) <= 0):
        raise ValueError("factor map is not strictly increasing")
    return PLMap(*canonical_knots(np.array(f.xs), hs, CANONICAL_EPS))
