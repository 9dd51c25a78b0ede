import logging
import math
from collections import deque
from itertools import combinations
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel
from scipy import optimize, sparse

from pltower.models.dynamics import KneadingData
from pltower.models.reports import EntropyEstimate, EntropyReport
from pltower.shared import errors
from pltower.shared.helpers import get_numerics
from pltower.shared.pl_core import PLMap, lap_image_growth, unimodal_turning_point

logger = logging.getLogger("pltower.shared.entropy")
_kneading_cfg = get_numerics("kneading")
_hofbauer_cfg = get_numerics("hofbauer")
_growth_cfg = get_numerics("growth")
MACHINE_EPS = float(np.finfo(float).eps)


def _oriented(f: PLMap) -> PLMap:
    """x ↦ 1 − f(1 − x) turns a map with a minimum into one with a maximum; entropy is unchanged."""
    if f.direction == 1:
        return f
    return PLMap(1.0 - f.xs[::-1], 1.0 - f.ys[::-1])


def kneading_sequence(f: PLMap, N: int | None = None) -> KneadingData:
    N = int(_kneading_cfg["length"]) if N is None else N
    f = _oriented(f)
    c = unimodal_turning_point(f)
    critical_tol = float(_kneading_cfg["critical-tolerance"])
    threshold = float(_kneading_cfg["reliability-threshold"])
    slopes = np.abs(f.slopes)

    eps, eta = [], []
    previous = 1
    x = c
    expansion = 1.0
    reliable = None
    for k in range(1, N + 1):
        expansion *= float(slopes[min(np.searchsorted(f.xs, x, side="right") - 1, len(slopes) - 1)])
        x = f(x)
        if abs(x - c) <= critical_tol:
            # the orbit returned to c: take the side from which nearby orbits approach it
            x = c
            sign = previous
        else:
            sign = 1 if x < c else -1
        if reliable is None and expansion * MACHINE_EPS > threshold:
            reliable = k - 1
        eps.append(sign)
        previous *= sign
        eta.append(previous)

    return KneadingData(eps=tuple(eps), eta=tuple(eta), reliable=N if reliable is None else reliable)


class KneadingEstimate(NamedTuple):
    h: float
    err_bound: float
    root: float
    flags: list[str]


def kneading_entropy(kd: KneadingData, grid_step: float | None = None, tol: float | None = None) -> KneadingEstimate:
    """Entropy from the smallest root in [½, 1) of the truncated kneading series 1 + Σ η_k t^k."""
    if kd.N < 8:
        raise ValueError(f"kneading_entropy needs at least 8 terms, got {kd.N}")
    grid_step = float(_kneading_cfg["grid-step"]) if grid_step is None else grid_step
    tol = float(_kneading_cfg["bisection-tolerance"]) if tol is None else tol

    series = Polynomial([1.0, *kd.eta])
    grid = np.arange(0.5, 1.0, grid_step)
    values = series(grid)
    below = np.flatnonzero(values <= 0)
    if not below.size:
        logger.info("Kneading series has no sign change on [0.5, 1): entropy estimated as 0")
        return KneadingEstimate(0.0, -math.log(grid[-1]), 1.0, ["no-sign-change"])

    flags = []
    if below[0] == 0:
        root = 0.5
        flags.append("root-at-lower-bound")
    else:
        root = optimize.bisect(series, grid[below[0] - 1], grid[below[0]], xtol=tol)

    terms = min(kd.N, kd.reliable)
    slope = abs(series.deriv()(root))
    tail = 2 * root ** (terms + 1) / (1 - root)
    err_bound = (tail / slope if slope > 0 else math.inf) / root + tol / root
    return KneadingEstimate(-math.log(root), float(err_bound), float(root), flags)


class HofbauerTower(BaseModel):
    vertices: list[tuple[float, float]]
    adjacency: sparse.csr_matrix
    depth: int
    truncated: bool

    class Config:
        arbitrary_types_allowed = True

    @property
    def size(self) -> int:
        return len(self.vertices)


def hofbauer_build(f: PLMap, depth: int | None = None, endpoint_tol: float | None = None) -> HofbauerTower:
    depth = int(_hofbauer_cfg["depth"]) if depth is None else depth
    endpoint_tol = float(_hofbauer_cfg["endpoint-tolerance"]) if endpoint_tol is None else endpoint_tol
    if depth < 1:
        raise ValueError(f"hofbauer_build needs depth >= 1, got {depth}")

    bounds = f.lap_bounds.tolist()
    laps = list(zip(bounds[:-1], bounds[1:]))

    def key(interval: tuple[float, float]) -> tuple[int, int]:
        return round(interval[0] / endpoint_tol), round(interval[1] / endpoint_tol)

    vertices: list[tuple[float, float]] = []
    index: dict[tuple[int, int], int] = {}
    queue: deque[tuple[int, int]] = deque()
    for interval in laps:
        index[key(interval)] = len(vertices)
        queue.append((len(vertices), 0))
        vertices.append(interval)

    rows, cols = [], []
    truncated = False
    while queue:
        vertex, generation = queue.popleft()
        lo, hi = vertices[vertex]
        values = f(np.array([lo, hi]))
        image_lo, image_hi = float(values.min()), float(values.max())
        for lap_lo, lap_hi in laps:
            child = (max(image_lo, lap_lo), min(image_hi, lap_hi))
            if child[1] - child[0] <= endpoint_tol:
                continue
            if (target := index.get(key(child))) is None:
                if generation >= depth:
                    # frontier vertices only link back into the tower
                    truncated = True
                    continue
                target = index[key(child)] = len(vertices)
                vertices.append(child)
                queue.append((target, generation + 1))
            rows.append(target)
            cols.append(vertex)

    n = len(vertices)
    adjacency = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    if truncated:
        logger.warning("Hofbauer tower truncated at depth %d with %d vertices", depth, n)
    return HofbauerTower(vertices=vertices, adjacency=adjacency, depth=depth, truncated=truncated)


class SpectralEstimate(NamedTuple):
    rho: float
    converged: bool
    iterations: int


def spectral_radius(matrix: sparse.spmatrix, iters: int, tol: float) -> SpectralEstimate:
    """Perron root of a nonnegative matrix by ℓ¹ power iteration on M + I.

    The shift keeps ρ + 1 strictly dominant when M has a peripheral eigenvalue −ρ.
    """
    n = matrix.shape[0]
    shifted = (matrix + sparse.identity(n, format="csr")).tocsr()
    v = np.full(n, 1.0 / n)
    ratio = previous = math.nan
    for k in range(1, iters + 1):
        w = shifted @ v
        ratio = float(w.sum())
        v = w / ratio
        if abs(ratio - previous) < tol:
            return SpectralEstimate(max(ratio - 1.0, 0.0), True, k)
        previous = ratio
    return SpectralEstimate(max(ratio - 1.0, 0.0), False, iters)


class HofbauerEstimate(NamedTuple):
    h: float
    converged: bool
    rho: float


def hofbauer_entropy(t: HofbauerTower, iters: int | None = None, tol: float | None = None) -> HofbauerEstimate:
    if not t.size:
        raise ValueError("Hofbauer tower is empty")
    iters = int(_hofbauer_cfg["iterations"]) if iters is None else iters
    tol = float(_hofbauer_cfg["tolerance"]) if tol is None else tol
    estimate = spectral_radius(t.adjacency, iters, tol)
    if not estimate.converged:
        logger.warning("Power iteration on the Hofbauer tower did not settle after %d steps", iters)
    h = math.log(estimate.rho) if estimate.rho > 1 else 0.0
    return HofbauerEstimate(h, estimate.converged, estimate.rho)


class GrowthEstimate(NamedTuple):
    h: float
    h_laps: float
    h_variation: float
    gap: float


def _log_slope(ns: np.ndarray, values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        return 0.0
    return max(float(np.polyfit(ns, np.log(values), 1)[0]), 0.0)


def growth_entropy(f: PLMap, n_max: int | None = None) -> GrowthEstimate:
    """Exponential growth rates of ℓ(fⁿ) and Var(fⁿ), fitted over the second half of 1..n_max."""
    n_max = int(_growth_cfg["n-max"]) if n_max is None else n_max
    if n_max < 4:
        raise ValueError(f"growth_entropy needs n_max >= 4, got {n_max}")
    growth = lap_image_growth(f, n_max)
    start = n_max // 2
    ns = np.arange(start + 1, n_max + 1)
    h_laps = _log_slope(ns, [float(laps) for laps, _ in growth[start:]])
    h_variation = _log_slope(ns, [var for _, var in growth[start:]])
    return GrowthEstimate(h_variation, h_laps, h_variation, abs(h_laps - h_variation))


def _kneading_estimate(f: PLMap) -> EntropyEstimate:
    kd = kneading_sequence(f)
    result = kneading_entropy(kd)
    return EntropyEstimate(
        method="kneading",
        h=result.h,
        err_bound=result.err_bound,
        flags=result.flags,
        details={"root": result.root, "terms": kd.N, "reliable": kd.reliable},
    )


def _hofbauer_estimate(f: PLMap) -> EntropyEstimate:
    tower = hofbauer_build(f)
    result = hofbauer_entropy(tower)
    flags = []
    if tower.truncated:
        flags.append("truncated")
    if not result.converged:
        flags.append("not-converged")
    details = {"vertices": tower.size, "rho": result.rho}
    return EntropyEstimate(method="hofbauer", h=result.h, flags=flags, details=details)


def _growth_estimate(f: PLMap) -> EntropyEstimate:
    result = growth_entropy(f)
    return EntropyEstimate(
        method="growth",
        h=result.h,
        err_bound=result.gap,
        details={"h_laps": result.h_laps, "h_variation": result.h_variation, "gap": result.gap},
    )


ESTIMATORS: dict[str, Callable[[PLMap], EntropyEstimate]] = {
    "kneading": _kneading_estimate,
    "hofbauer": _hofbauer_estimate,
    "growth": _growth_estimate,
}


def entropy_report(f: PLMap, methods: Sequence[str] | str = "all") -> EntropyReport:
    if methods == "all":
        methods = [name for name in ESTIMATORS if name != "kneading" or f.degree == 2]
    elif isinstance(methods, str):
        methods = [methods]

    estimates = []
    for method in methods:
        if method not in ESTIMATORS:
            raise ValueError(f"Unknown entropy method: {method}")
        estimates.append(ESTIMATORS[method](f))
    max_gap = max((abs(a.h - b.h) for a, b in combinations(estimates, 2)), default=0.0)
    return EntropyReport(estimates=estimates, max_gap=max_gap)
