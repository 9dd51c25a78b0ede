import logging
from typing import Iterator, Sequence

import numpy as np

from pltower.models.dynamics import Arc, Classification, CriticalValueVector
from pltower.shared import errors
from pltower.shared.helpers import get_knot_budget, get_numerics

logger = logging.getLogger("pltower.shared.pl_core")
_knots_cfg = get_numerics("knots")
CANONICAL_EPS = float(_knots_cfg["canonical-eps"])
BUDGET_EPS = float(_knots_cfg["budget-simplify-eps"])
LAP_CEILING = int(_knots_cfg["lap-count-ceiling"])
# composition noise can push values this far outside [0, 1]
RANGE_SLACK = 1e-9
# endpoints of lap images are rounded to this many digits before they are merged
IMAGE_DIGITS = 12

Interval = tuple[float, float]
ArcLike = Arc | tuple[float, float] | list[float]


def as_bounds(J: ArcLike | None) -> Interval:
    if J is None:
        return 0.0, 1.0
    arc = Arc.of(J)
    return arc.lo, arc.hi


def check_grid(xs: np.ndarray, ys: np.ndarray) -> None:
    if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 2:
        raise errors.InvalidKnots(message="need at least two (x, y) pairs")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise errors.InvalidKnots(message="coordinates must be finite")
    if abs(xs[0]) > 1e-12 or abs(xs[-1] - 1) > 1e-12:
        raise errors.InvalidKnots(message=f"knots must span [0, 1], got [{xs[0]}, {xs[-1]}]")
    if np.any(np.diff(xs) <= 0):
        raise errors.InvalidKnots(message="x coordinates must be strictly increasing")


class PLMap:
    """Continuous self-map of [0, 1], linear between consecutive knots."""

    __slots__ = ("xs", "ys")

    def __init__(self, xs: Sequence[float] | np.ndarray, ys: Sequence[float] | np.ndarray):
        xs = np.array(xs, dtype=float)
        ys = np.array(ys, dtype=float)
        check_grid(xs, ys)
        if np.any(ys < -RANGE_SLACK) or np.any(ys > 1 + RANGE_SLACK):
            raise errors.InvalidKnots(message="values must lie in [0, 1]")
        xs[0], xs[-1] = 0.0, 1.0
        ys = np.clip(ys, 0.0, 1.0)
        xs.setflags(write=False)
        ys.setflags(write=False)
        self.xs = xs
        self.ys = ys

    @classmethod
    def from_knots(cls, knots: Sequence[Sequence[float]]) -> "PLMap":
        pairs = np.asarray(knots, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise errors.InvalidKnots(message="knots must be a list of [x, y] pairs")
        return cls(pairs[:, 0], pairs[:, 1])

    @classmethod
    def identity(cls) -> "PLMap":
        return cls([0.0, 1.0], [0.0, 1.0])

    def __call__(self, x):
        result = np.interp(x, self.xs, self.ys)
        return float(result) if np.ndim(result) == 0 else result

    def __len__(self) -> int:
        return len(self.xs)

    def __repr__(self) -> str:
        return f"PLMap({len(self.xs)} knots, {self.degree} laps)"

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.xs.tolist(), self.ys.tolist()))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.ys) / np.diff(self.xs)

    @property
    def turning_indices(self) -> np.ndarray:
        dy = np.diff(self.ys)
        return np.flatnonzero(dy[:-1] * dy[1:] < 0) + 1

    @property
    def turning_points(self) -> np.ndarray:
        return self.xs[self.turning_indices]

    @property
    def lap_bounds(self) -> np.ndarray:
        return np.concatenate([[0.0], self.turning_points, [1.0]])

    @property
    def degree(self) -> int:
        return len(self.turning_indices) + 1

    @property
    def direction(self) -> int:
        nonzero = np.flatnonzero(np.diff(self.ys))
        if not nonzero.size:
            return 1
        return 1 if self.ys[nonzero[0] + 1] > self.ys[nonzero[0]] else -1

    @property
    def is_boundary_preserving(self) -> bool:
        return all(min(abs(v), abs(v - 1)) <= 1e-12 for v in (self.ys[0], self.ys[-1]))

    @property
    def is_weakly_monotone(self) -> bool:
        dy = np.diff(self.ys)
        return bool(np.all(dy >= 0) and np.any(dy == 0))

    @property
    def is_increasing(self) -> bool:
        return bool(np.all(np.diff(self.ys) > 0))

    def to_dict(self) -> dict:
        return {"knots": [[x, y] for x, y in self.knots]}


def _merge_close(xs: np.ndarray, ys: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    close = np.flatnonzero(np.diff(xs) <= eps)
    if not close.size:
        return xs, ys

    dy = np.diff(ys)
    turning = np.zeros(len(xs), dtype=bool)
    turning[1:-1] = dy[:-1] * dy[1:] < 0
    keep = np.ones(len(xs), dtype=bool)
    last = len(xs) - 1
    for i in close:
        j = i + 1
        if not keep[i] or not keep[j]:
            continue
        if j != last and not turning[j]:
            keep[j] = False
        elif i != 0 and not turning[i]:
            keep[i] = False
    return xs[keep], ys[keep]


def canonical_knots(xs: np.ndarray, ys: np.ndarray, eps: float, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    if eps > 0 and len(xs) > 2:
        xs, ys = _merge_close(xs, ys, eps)

    while len(xs) > 2:
        dy = np.diff(ys)
        chord = ys[:-2] + (xs[1:-1] - xs[:-2]) * (ys[2:] - ys[:-2]) / (xs[2:] - xs[:-2])
        redundant = (np.abs(ys[1:-1] - chord) <= eps * scale) & ~(dy[:-1] * dy[1:] < 0)
        if not redundant.any():
            break

        # drop every other knot of a redundant run; the rest is re-checked against its new neighbours
        idx = np.flatnonzero(redundant) + 1
        run_start = np.concatenate([[True], np.diff(idx) > 1])
        run_id = np.cumsum(run_start) - 1
        position = np.arange(len(idx)) - np.flatnonzero(run_start)[run_id]
        keep = np.ones(len(xs), dtype=bool)
        keep[idx[position % 2 == 0]] = False
        xs, ys = xs[keep], ys[keep]
    return xs, ys


def simplify(f: PLMap, eps: float = CANONICAL_EPS) -> PLMap:
    if eps < 0:
        raise ValueError(f"simplify tolerance must be non-negative, got {eps}")
    xs, ys = canonical_knots(np.array(f.xs), np.array(f.ys), eps)
    return PLMap(xs, ys)


def finish_knots(xs: np.ndarray, ys: np.ndarray, budget: int | None, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Canonical form plus the knot budget check shared by every knot-producing operation."""
    scale = max(1.0, float(np.max(np.abs(ys))))
    xs, ys = canonical_knots(xs, ys, eps, scale)
    budget = get_knot_budget(budget)
    if len(xs) > budget:
        logger.warning("%d knots exceed the budget of %d, simplifying with eps=%g", len(xs), budget, BUDGET_EPS)
        xs, ys = canonical_knots(xs, ys, max(eps, BUDGET_EPS), scale)
        if len(xs) > budget:
            raise errors.KnotBudgetExceeded(budget=budget, knots=len(xs))
    return xs, ys


def preimage_points(xs: np.ndarray, ys: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Points where a PL graph crosses the sorted target levels strictly inside a segment.

    Returns the crossing abscissae and, for each, the index of the level it hits.
    """
    y0, y1 = ys[:-1], ys[1:]
    start = np.searchsorted(targets, np.minimum(y0, y1), side="right")
    stop = np.searchsorted(targets, np.maximum(y0, y1), side="left")
    counts = np.maximum(stop - start, 0)
    total = int(counts.sum())
    if not total:
        return np.empty(0), np.empty(0, dtype=int)

    segment = np.repeat(np.arange(len(y0)), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    level = np.repeat(start, counts) + offsets
    t = (targets[level] - y0[segment]) / (y1[segment] - y0[segment])
    px = xs[segment] + t * (xs[segment + 1] - xs[segment])
    return px, level


def refine(xs: np.ndarray, ys: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adds to a PL graph every crossing of the target levels.

    The third array holds the hit level index for added points and -1 for the original knots.
    """
    px, level = preimage_points(xs, ys, targets)
    all_x = np.concatenate([xs, px])
    all_y = np.concatenate([ys, targets[level]])
    hit = np.concatenate([np.full(len(xs), -1), level])
    order = np.argsort(all_x, kind="stable")
    all_x, all_y, hit = all_x[order], all_y[order], hit[order]
    distinct = np.concatenate([[True], np.diff(all_x) > 0])
    return all_x[distinct], all_y[distinct], hit[distinct]


def compose(outer: PLMap, inner: PLMap, budget: int | None = None, eps: float = CANONICAL_EPS) -> PLMap:
    """outer ∘ inner, exact up to rounding, in canonical form."""
    xs, ys, hit = refine(inner.xs, inner.ys, outer.xs)
    values = np.where(hit >= 0, outer.ys[np.maximum(hit, 0)], np.interp(ys, outer.xs, outer.ys))
    return PLMap(*finish_knots(xs, values, budget, eps))


def compose_power(f: PLMap, n: int, budget: int | None = None) -> PLMap:
    if n < 0:
        raise ValueError(f"Iterate count must be non-negative, got {n}")
    result = PLMap.identity()
    for _ in range(n):
        result = compose(f, result, budget)
    return result


def sup_distance_arrays(xs1: np.ndarray, ys1: np.ndarray, xs2: np.ndarray, ys2: np.ndarray) -> float:
    grid = np.union1d(xs1, xs2)
    return float(np.max(np.abs(np.interp(grid, xs1, ys1) - np.interp(grid, xs2, ys2))))


def sup_distance(f: PLMap, g: PLMap) -> float:
    return sup_distance_arrays(f.xs, f.ys, g.xs, g.ys)


def critical_values(f: PLMap) -> CriticalValueVector:
    dy = np.diff(f.ys)
    if flat := np.flatnonzero(dy == 0).tolist():
        raise errors.ZeroSlopeSegment(lo=f.xs[flat[0]], hi=f.xs[flat[0] + 1])

    idx = np.concatenate([[0], f.turning_indices, [len(f.xs) - 1]])
    return CriticalValueVector(values=tuple(f.ys[idx].tolist()), direction=f.direction)


def _image(f: PLMap, lo: float, hi: float) -> Interval:
    inside = f.xs[(f.xs > lo) & (f.xs < hi)]
    values = f(np.concatenate([[lo, hi], inside]))
    return float(values.min()), float(values.max())


def image(f: PLMap, J: ArcLike) -> Interval:
    return _image(f, *as_bounds(J))


def variation(f: PLMap, J: ArcLike | None = None) -> float:
    lo, hi = as_bounds(J)
    points = np.concatenate([[lo], f.xs[(f.xs > lo) & (f.xs < hi)], [hi]])
    return float(np.sum(np.abs(np.diff(f(points)))))


def laps(f: PLMap, J: ArcLike | None = None) -> int:
    lo, hi = as_bounds(J)
    turning = f.turning_points
    return int(np.count_nonzero((turning > lo) & (turning < hi))) + 1


def _image_key(interval: Interval) -> Interval:
    return round(interval[0], IMAGE_DIGITS), round(interval[1], IMAGE_DIGITS)


def _pieces(f: PLMap, interval: Interval) -> Iterator[Interval]:
    lo, hi = interval
    cuts = [lo, *[c for c in f.turning_points.tolist() if lo < c < hi], hi]
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            yield a, b


def lap_image_growth(f: PLMap, n_max: int, J: ArcLike | None = None) -> list[tuple[int, float]]:
    """(ℓ(f^m, J), Var_J(f^m)) for m = 1..n_max.

    Every lap of f^m maps monotonically onto an interval; the multiset of those images evolves by
    cutting each image at the turning points of f and mapping the pieces forward, so lap counts stay
    exact integers without composing.
    """
    images: dict[Interval, int] = {}
    for piece in _pieces(f, as_bounds(J)):
        key = _image_key(_image(f, *piece))
        images[key] = images.get(key, 0) + 1

    growth = []
    for m in range(1, n_max + 1):
        count = sum(images.values())
        growth.append((count, float(sum(c * (b - a) for (a, b), c in images.items()))))
        if m == n_max:
            break
        following: dict[Interval, int] = {}
        for interval, multiplicity in images.items():
            for piece in _pieces(f, interval):
                key = _image_key(_image(f, *piece))
                following[key] = following.get(key, 0) + multiplicity
        images = following
    return growth


def laps_of_iterate(f: PLMap, n: int, method: str = "images", budget: int | None = None) -> int:
    if n < 1:
        raise ValueError(f"laps_of_iterate needs n >= 1, got {n}")
    if method == "compose":
        count = compose_power(f, n, budget).degree
    elif method == "images":
        count = lap_image_growth(f, n)[-1][0]
    else:
        raise ValueError(f"Unknown lap counting method: {method}")

    if count > LAP_CEILING:
        raise errors.LapCountOverflow(limit=LAP_CEILING, n=n)
    return count


def unimodal_turning_point(f: PLMap) -> float:
    if f.degree != 2:
        raise errors.NotUnimodal(laps=f.degree)
    return float(f.turning_points[0])


def classify_interval(f: PLMap, J: ArcLike, k_max: int) -> Classification:
    c = unimodal_turning_point(f)
    current = as_bounds(J)
    for k in range(k_max + 1):
        following = _image(f, *current)
        if current[0] <= c <= current[1] and following[0] <= c <= following[1]:
            return Classification.fast(k)
        current = following
    return Classification.slow_up_to(k_max)


class PseudoInverse:
    """Right-continuous generalized inverse y ↦ sup{x : h(x) ≤ y} of a nondecreasing PL map onto [0, 1]."""

    def __init__(self, h: PLMap):
        if np.any(np.diff(h.ys) < 0) or h.ys[0] != 0.0 or h.ys[-1] != 1.0:
            raise ValueError("pseudo-inverse needs a nondecreasing map with h(0)=0 and h(1)=1")
        self.h = h

    def __call__(self, y):
        xs, ys = self.h.xs, self.h.ys
        y_arr = np.clip(np.atleast_1d(np.asarray(y, dtype=float)), 0.0, 1.0)
        idx = np.searchsorted(ys, y_arr, side="right")
        result = np.ones_like(y_arr)
        inside = idx < len(ys)
        i = idx[inside]
        t = (y_arr[inside] - ys[i - 1]) / (ys[i] - ys[i - 1])
        result[inside] = xs[i - 1] + t * (xs[i] - xs[i - 1])
        return float(result[0]) if np.ndim(y) == 0 else result

    @property
    def jumps(self) -> list[float]:
        """Levels where the inverse jumps: values of the flat segments of h."""
        dy = np.diff(self.h.ys)
        return sorted(set(self.h.ys[:-1][dy == 0].tolist()))


def pseudo_inverse(h: PLMap) -> PseudoInverse:
    return PseudoInverse(h)


def conjugate(f: PLMap, h: PLMap, budget: int | None = None) -> PLMap:
    """h ∘ f ∘ h⁻¹ with the right-continuous pseudo-inverse when h has flat segments."""
    inverse = pseudo_inverse(h)
    crossings, _ = preimage_points(f.xs, f.ys, h.xs)
    candidates = np.unique(h(np.concatenate([h.xs, f.xs, crossings])))
    candidates = np.unique(np.concatenate([[0.0, 1.0], candidates]))
    values = h(f(inverse(candidates)))
    return PLMap(*finish_knots(candidates, values, budget, CANONICAL_EPS))


def restrict(f: PLMap, lo: float, hi: float, tol: float = 1e-12) -> PLMap:
    """f on an invariant interval [lo, hi], rescaled affinely to [0, 1]."""
    if not 0 <= lo < hi <= 1:
        raise ValueError(f"Invalid restriction interval [{lo}, {hi}]")
    a, b = _image(f, lo, hi)
    if a < lo - tol or b > hi + tol:
        raise ValueError(f"[{lo}, {hi}] is not invariant: its image is [{a}, {b}]")

    inside = f.xs[(f.xs > lo) & (f.xs < hi)]
    xs = np.concatenate([[lo], inside, [hi]])
    width = hi - lo
    return PLMap((xs - lo) / width, np.clip((f(xs) - lo) / width, 0.0, 1.0))
