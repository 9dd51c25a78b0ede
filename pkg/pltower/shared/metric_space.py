import logging
from typing import Sequence

import numpy as np

from pltower.shared import errors
from pltower.shared.pl_core import (
    CANONICAL_EPS,
    ArcLike,
    PLMap,
    as_bounds,
    canonical_knots,
    check_grid,
    finish_knots,
    refine,
    sup_distance_arrays,
)

logger = logging.getLogger("pltower.shared.metric_space")
# a unit metric may miss total mass 1 by this much after normalization round-off
UNIT_TOLERANCE = 1e-9


class PLMetric:
    """Metric on [0, 1] stored as its continuous, nondecreasing, piecewise-linear cumulative mass function."""

    __slots__ = ("xs", "cs")

    def __init__(self, xs: Sequence[float] | np.ndarray, cs: Sequence[float] | np.ndarray):
        xs = np.array(xs, dtype=float)
        cs = np.array(cs, dtype=float)
        check_grid(xs, cs)
        scale = max(1.0, float(np.max(np.abs(cs))))
        if abs(cs[0]) > 1e-12 * scale:
            raise errors.InvalidKnots(message=f"cumulative mass must start at 0, got {cs[0]}")
        if np.any(np.diff(cs) < -1e-12 * scale):
            raise errors.InvalidKnots(message="cumulative mass must be nondecreasing")
        xs[0], xs[-1] = 0.0, 1.0
        cs[0] = 0.0
        cs = np.maximum.accumulate(cs)
        xs.setflags(write=False)
        cs.setflags(write=False)
        self.xs = xs
        self.cs = cs

    @classmethod
    def from_cmf(cls, knots: Sequence[Sequence[float]]) -> "PLMetric":
        pairs = np.asarray(knots, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise errors.InvalidKnots(message="cmf must be a list of [x, y] pairs")
        return cls(pairs[:, 0], pairs[:, 1])

    @classmethod
    def lebesgue(cls) -> "PLMetric":
        return cls([0.0, 1.0], [0.0, 1.0])

    @classmethod
    def zero(cls) -> "PLMetric":
        return cls([0.0, 1.0], [0.0, 0.0])

    @classmethod
    def block(cls, lo: float, hi: float) -> "PLMetric":
        """Lebesgue measure restricted to [lo, hi], normalized to unit mass."""
        if not 0 <= lo < hi <= 1:
            raise ValueError(f"Invalid block [{lo}, {hi}]")
        xs = [0.0, lo, hi, 1.0]
        cs = [0.0, 0.0, 1.0, 1.0]
        if lo == 0:
            xs, cs = xs[1:], cs[1:]
        if hi == 1:
            xs, cs = xs[:-1], cs[:-1]
        return cls(xs, cs)

    @classmethod
    def alpha_block(cls, alpha: float, I0: ArcLike, I1: ArcLike) -> "PLMetric":
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        return alpha * cls.block(*as_bounds(I0)) + (1 - alpha) * cls.block(*as_bounds(I1))

    def __call__(self, x):
        result = np.interp(x, self.xs, self.cs)
        return float(result) if np.ndim(result) == 0 else result

    def __len__(self) -> int:
        return len(self.xs)

    def __repr__(self) -> str:
        return f"PLMetric({len(self.xs)} knots, mass {self.total_mass:.6g})"

    def __add__(self, other: "PLMetric") -> "PLMetric":
        grid = np.union1d(self.xs, other.xs)
        xs, cs = canonical_knots(grid, self(grid) + other(grid), 0.0)
        return PLMetric(xs, cs)

    def __mul__(self, factor: float) -> "PLMetric":
        if factor < 0:
            raise ValueError("metrics can only be scaled by non-negative factors")
        return PLMetric(self.xs, self.cs * factor)

    __rmul__ = __mul__

    @property
    def total_mass(self) -> float:
        return float(self.cs[-1])

    @property
    def has_full_support(self) -> bool:
        return bool(np.all(np.diff(self.cs) > 0))

    def mass(self, J: ArcLike) -> float:
        lo, hi = as_bounds(J)
        return self(hi) - self(lo)

    def to_dict(self) -> dict:
        return {"cmf": [[x, c] for x, c in zip(self.xs.tolist(), self.cs.tolist())]}


def simplify_metric(m: PLMetric, eps: float = CANONICAL_EPS) -> PLMetric:
    xs, cs = canonical_knots(np.array(m.xs), np.array(m.cs), eps, max(1.0, m.total_mass))
    return PLMetric(xs, cs)


def pullback(f: PLMap, m: PLMetric, budget: int | None = None) -> PLMetric:
    """f*m: the mass of J is the sum over laps of the m-mass of f(J ∩ I_k)."""
    xs, ys, hit = refine(f.xs, f.ys, m.xs)
    levels = np.where(hit >= 0, m.cs[np.maximum(hit, 0)], np.interp(ys, m.xs, m.cs))
    cs = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(levels)))])
    return PLMetric(*finish_knots(xs, cs, budget, CANONICAL_EPS))


def normalize(m: PLMetric) -> PLMetric:
    total = m.total_mass
    if not total > 0:
        raise errors.ZeroMass()
    cs = m.cs / total
    cs[-1] = 1.0
    return PLMetric(m.xs, cs)


def metric_to_map(m: PLMetric) -> PLMap:
    """x ↦ m([0, x]). Weakly monotone (flat segments) when m lacks full support."""
    if abs(m.total_mass - 1) > UNIT_TOLERANCE:
        raise ValueError(f"metric_to_map needs a unit metric, total mass is {m.total_mass}")
    h = PLMap(m.xs, m.cs)
    if h.is_weakly_monotone:
        logger.debug("Metric without full support gives a weakly monotone map")
    return h


def strong_distance(m1: PLMetric, m2: PLMetric) -> float:
    """sup over arcs J of |m1(J) − m2(J)|."""
    grid = np.union1d(m1.xs, m2.xs)
    difference = m1(grid) - m2(grid)
    return float(difference.max() - difference.min())


def cmf_distance(m1: PLMetric, m2: PLMetric) -> float:
    return sup_distance_arrays(m1.xs, m1.cs, m2.xs, m2.cs)


def is_linearly_expanded(f: PLMap, m: PLMetric, tol: float = 1e-9) -> float | None:
    if not m.total_mass > 0:
        raise errors.ZeroMass()
    pulled = pullback(f, m)
    factor = pulled.total_mass / m.total_mass
    if factor > 0 and strong_distance(pulled, factor * m) <= tol * factor:
        return factor
    return None
