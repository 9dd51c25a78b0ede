import logging
import math
from collections import deque
from typing import NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel
from scipy import sparse

from pltower.models.reports import SpectrumReport
from pltower.shared import errors
from pltower.shared.entropy import hofbauer_build, hofbauer_entropy
from pltower.shared.helpers import get_knot_budget, get_numerics, partition
from pltower.shared.metric_space import PLMetric, pullback
from pltower.shared.pl_core import ArcLike, PLMap, as_bounds
from pltower.shared.tower import metric_iteration

logger = logging.getLogger("pltower.shared.transfer")
_transfer_cfg = get_numerics("transfer")
# residuals below this are round-off and carry no decay information
RESIDUAL_FLOOR = 1e-14


class StepFunction:
    """Right-continuous step function on [0, 1]: ``values[i]`` on ``[breakpoints[i], breakpoints[i+1])``."""

    __slots__ = ("breakpoints", "values")

    def __init__(self, breakpoints: Sequence[float] | np.ndarray, values: Sequence[float] | np.ndarray):
        breakpoints = np.array(breakpoints, dtype=float)
        values = np.array(values, dtype=float)
        if breakpoints.ndim != 1 or len(breakpoints) != len(values) + 1 or len(values) < 1:
            raise ValueError("a step function needs one value per cell")
        if abs(breakpoints[0]) > 1e-12 or abs(breakpoints[-1] - 1) > 1e-12 or np.any(np.diff(breakpoints) <= 0):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        breakpoints[0], breakpoints[-1] = 0.0, 1.0
        breakpoints.setflags(write=False)
        values.setflags(write=False)
        self.breakpoints = breakpoints
        self.values = values

    @classmethod
    def constant(cls, value: float = 1.0) -> "StepFunction":
        return cls([0.0, 1.0], [value])

    @classmethod
    def indicator(cls, J: ArcLike) -> "StepFunction":
        lo, hi = as_bounds(J)
        breakpoints = [0.0, lo, hi, 1.0]
        values = [0.0, 1.0, 0.0]
        if hi == 1:
            breakpoints, values = breakpoints[:-1], values[:-1]
        if lo == 0:
            breakpoints, values = breakpoints[1:], values[1:]
        return cls(breakpoints, values)

    def __call__(self, x):
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, len(self.values) - 1)
        result = self.values[idx]
        return float(result) if np.ndim(result) == 0 else result

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"StepFunction({len(self.values)} cells)"

    @property
    def cells(self) -> list[tuple[float, float]]:
        return list(zip(self.breakpoints[:-1].tolist(), self.breakpoints[1:].tolist()))

    def refine(self, breakpoints: Sequence[float] | np.ndarray) -> "StepFunction":
        grid = np.union1d(self.breakpoints, breakpoints)
        return StepFunction(grid, self((grid[:-1] + grid[1:]) / 2))

    def merged(self) -> "StepFunction":
        """Drops breakpoints between cells with equal values."""
        keep = np.concatenate([[True], self.values[1:] != self.values[:-1], [True]])
        starts = keep[:-1]
        return StepFunction(self.breakpoints[keep], self.values[starts])

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}


def pairing(phi: StepFunction, m: PLMetric) -> float:
    """⟨φ, m⟩ = Σ over cells of value × mass."""
    masses = np.diff(m(phi.breakpoints))
    return float(np.dot(phi.values, masses))


def _branches(f: PLMap) -> list[tuple[np.ndarray, np.ndarray]]:
    bounds = np.concatenate([[0], f.turning_indices, [len(f.xs) - 1]])
    return [(f.xs[i : j + 1], f.ys[i : j + 1]) for i, j in zip(bounds[:-1], bounds[1:])]


def apply_transfer(f: PLMap, phi: StepFunction) -> StepFunction:
    """(𝓛φ)(y) = Σ over laps of φ(f_i⁻¹ y), summed over the laps whose image contains y."""
    branches = _branches(f)
    images = [np.array([0.0, 1.0])]
    for xs, ys in branches:
        inside = phi.breakpoints[(phi.breakpoints > xs[0]) & (phi.breakpoints < xs[-1])]
        images.append(np.interp(np.concatenate([[xs[0], xs[-1]], inside]), xs, ys))
    grid = np.unique(np.clip(np.concatenate(images), 0.0, 1.0))

    midpoints = (grid[:-1] + grid[1:]) / 2
    values = np.zeros(len(midpoints))
    for xs, ys in branches:
        if ys[-1] < ys[0]:
            xs, ys = xs[::-1], ys[::-1]
        hit = (midpoints > ys[0]) & (midpoints < ys[-1])
        values[hit] += phi(np.interp(midpoints[hit], ys, xs))
    return StepFunction(grid, values).merged()


def iterate_transfer(f: PLMap, phi: StepFunction, n: int, budget: int | None = None) -> StepFunction:
    budget = get_knot_budget(budget)
    for _ in range(n):
        phi = apply_transfer(f, phi)
        if len(phi) > budget:
            raise errors.KnotBudgetExceeded(budget=budget, knots=len(phi))
    return phi


def duality_residual(f: PLMap, phi: StepFunction, m: PLMetric) -> float:
    """|⟨𝓛φ, m⟩ − ⟨φ, f*m⟩|."""
    return abs(pairing(apply_transfer(f, phi), m) - pairing(phi, pullback(f, m)))


class TransferMatrix(BaseModel):
    """𝓛 on the step functions of a Markov partition: entry (J, K) counts the laps carrying K over J."""

    partition: list[float]
    matrix: sparse.csr_matrix

    class Config:
        arbitrary_types_allowed = True

    @property
    def size(self) -> int:
        return len(self.partition) - 1

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _snap(points: list[float], x: float, tol: float) -> float | None:
    idx = int(np.searchsorted(points, x))
    for j in (idx - 1, idx):
        if 0 <= j < len(points) and abs(points[j] - x) <= tol:
            return points[j]
    return None


def markov_matrix(f: PLMap, orbit_depth: int | None = None, tol: float | None = None) -> TransferMatrix:
    orbit_depth = int(_transfer_cfg["orbit-depth"]) if orbit_depth is None else orbit_depth
    tol = float(_transfer_cfg["tolerance"]) if tol is None else tol

    points = sorted({0.0, 1.0, *f.turning_points.tolist()})
    frontier = list(points)
    for _ in range(orbit_depth):
        fresh = []
        for x in f(np.array(frontier)).tolist():
            if _snap(points, x, tol) is None and _snap(sorted(fresh), x, tol) is None:
                fresh.append(x)
        if not fresh:
            break
        points = sorted(points + fresh)
        frontier = fresh
    else:
        raise errors.NotMarkov(depth=orbit_depth)

    grid = np.array(points)
    values = f(grid)
    n = len(grid) - 1
    rows, cols = [], []
    for k in range(n):
        lo, hi = sorted((values[k], values[k + 1]))
        covered = np.flatnonzero((grid[:-1] >= lo - tol) & (grid[1:] <= hi + tol))
        rows.extend(covered.tolist())
        cols.extend([k] * len(covered))
    matrix = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    logger.debug("Markov partition with %d cells", n)
    return TransferMatrix(partition=points, matrix=matrix)


class LeadingEigen(NamedTuple):
    lam: float
    phi: StepFunction
    iterations: int
    gap_ratio: float | None


def _gap_ratio(residuals: Sequence[float]) -> float | None:
    positive = [r for r in residuals if r > RESIDUAL_FLOOR]
    if len(positive) < 2:
        return 0.0 if positive else None
    ratios = np.array(positive[1:]) / np.array(positive[:-1])
    return float(np.exp(np.mean(np.log(ratios))))


def _peripheral(matrix: sparse.csr_matrix, history: Sequence[np.ndarray], max_period: int, tol: float) -> list[float]:
    vectors = list(history)
    for period in range(2, max_period + 1):
        if len(vectors) <= period or np.max(np.abs(vectors[-1] - vectors[-1 - period])) > tol:
            continue
        v = vectors[-1]
        w = v
        for _ in range(period):
            w = matrix @ w
        lam = float(np.max(np.abs(w)) / np.max(np.abs(v))) ** (1 / period)
        if period == 2:
            flipped = v - (matrix @ v) / lam
            scale = np.max(np.abs(flipped))
            if scale > tol and np.max(np.abs(matrix @ flipped + lam * flipped)) <= 1e-8 * lam * scale:
                return [lam, -lam]
        return [lam]
    return []


def leading_eigen(M: TransferMatrix, iters: int | None = None, tol: float | None = None) -> LeadingEigen:
    """Sup-normalized power iteration from a seeded positive start vector."""
    iters = int(_transfer_cfg["iterations"]) if iters is None else iters
    tol = float(_transfer_cfg["tolerance"]) if tol is None else tol
    max_period = int(_transfer_cfg["max-period"])
    rng = np.random.default_rng(int(_transfer_cfg["seed"]))

    v = rng.uniform(0.5, 1.5, size=M.size)
    v /= v.max()
    history: deque[np.ndarray] = deque([v], maxlen=max_period + 1)
    residuals = []
    lam = previous = math.nan
    for k in range(1, iters + 1):
        w = M.matrix @ v
        lam = float(np.max(np.abs(w)))
        if lam == 0:
            raise errors.NoConvergence(iters=k, peripheral=[0.0])
        w /= lam
        residual = float(np.max(np.abs(w - v)))
        residuals.append(residual)
        v = w
        history.append(v)
        if abs(lam - previous) < tol and residual < tol:
            return LeadingEigen(lam, StepFunction(M.partition, np.maximum(v, 0.0)), k, _gap_ratio(residuals))
        previous = lam

    peripheral = _peripheral(M.matrix, history, max_period, 1e-8)
    logger.warning("Power iteration did not converge after %d steps, peripheral eigenvalues %s", iters, peripheral)
    raise errors.NoConvergence(iters=iters, peripheral=peripheral)


def limit_conjugacy(f: PLMap, n: int, budget: int | None = None) -> PLMap:
    """H_n(x) = normalized mass of (f*)ⁿ Lebesgue on [0, x]."""
    if n < 1:
        raise ValueError(f"limit_conjugacy needs n >= 1, got {n}")
    return metric_iteration(f, None, n, budget).H


def split_cells(H: PLMap, cells: int, threshold: float) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """Uniform cells of [0, 1] split into those H collapses (mass below threshold) and the rest."""
    edges = np.linspace(0.0, 1.0, cells + 1)
    pairs = list(zip(edges[:-1].tolist(), edges[1:].tolist()))
    flat, charged, _ = partition(pairs, 2, lambda cell: 0 if H(cell[1]) - H(cell[0]) < threshold else 1)
    return flat, charged


def flat_intervals(H: PLMap, cells: int = 200, threshold: float = 1e-6) -> list[tuple[float, float]]:
    return split_cells(H, cells, threshold)[0]


def spectrum_report(f: PLMap, orbit_depth: int | None = None, iters: int | None = None) -> SpectrumReport:
    try:
        M = markov_matrix(f, orbit_depth)
    except errors.NotMarkov as e:
        logger.info("%s; falling back to the Hofbauer estimate", e)
        result = hofbauer_entropy(hofbauer_build(f))
        return SpectrumReport(lambda_=math.exp(result.h), markov=False, partition_size=0, converged=result.converged)

    try:
        eigen = leading_eigen(M, iters)
    except errors.NoConvergence as e:
        lam = max(e.peripheral, default=0.0)
        return SpectrumReport(
            lambda_=lam, markov=True, partition_size=M.size, converged=False, peripheral=e.peripheral
        )
    return SpectrumReport(
        lambda_=eigen.lam, markov=True, partition_size=M.size, gap_ratio=eigen.gap_ratio, peripheral=[eigen.lam]
    )
