import logging
import math
from itertools import product
from typing import Callable

import numpy as np
from asteval import Interpreter
from numpy.polynomial import Polynomial
from pydantic import BaseModel, validator

from pltower.models.reports import Deg6Report, Deg6Row, RenormReport, RenormRow
from pltower.shared import errors
from pltower.shared.metric_space import PLMetric, metric_to_map, normalize, pullback
from pltower.shared.pl_core import RANGE_SLACK, PLMap, conjugate, image, restrict
from pltower.shared.tower import fixed_point, metric_iteration, run_tower

logger = logging.getLogger("pltower.shared.gallery")
EXCHANGE_TOLERANCE = 1e-12
ORBIT_TOLERANCE = 1e-10
Branch = Callable[[np.ndarray], np.ndarray]


def make_tent(s: float) -> PLMap:
    if not 1 < s <= 2:
        raise ValueError(f"Tent slope must lie in (1, 2], got {s}")
    return PLMap([0.0, 0.5, 1.0], [0.0, s / 2, 0.0])


def make_asym_tent(peak: float) -> PLMap:
    if not 0 < peak < 1:
        raise ValueError(f"Peak must lie in (0, 1), got {peak}")
    return PLMap([0.0, peak, 1.0], [0.0, 1.0, 0.0])


def make_identity() -> PLMap:
    return PLMap.identity()


def make_deg6(a: float) -> PLMap:
    """Covers [a, 1] three times by [0, a] and [0, a] three times by [a, 1]."""
    if not 0 < a < 1 or a == 0.5:
        raise ValueError(f"deg6 needs 0 < a < 1 and a != 1/2, got {a}")
    b = 1 - a
    return PLMap.from_knots(
        [(0, 1), (a / 3, a), (2 * a / 3, 1), (a, a), (a + b / 3, 0), (a + 2 * b / 3, a), (1, 0)]
    )


def make_trapped_tent() -> PLMap:
    """Unimodal, entropy log 1.8: a slope-1.8 tent on [0.2, 0.8] plus a basin [0, 0.2] that never reaches 0.5."""
    return PLMap.from_knots([(0, 0), (0.15, 0.05), (0.2, 0.2), (0.5, 0.74), (0.8, 0.2), (1, 0)])


def _compile(expression: str) -> Branch:
    aev = Interpreter(builtins_readonly=True, no_assert=True, no_delete=True, no_raise=True, no_print=True)

    def branch(x: np.ndarray) -> np.ndarray:
        aev.symtable["x"] = x
        value = aev.eval(expression, show_errors=False)
        if aev.error:
            name, message = aev.error[0].get_error()
            aev.error = []
            raise errors.ParseError(message=f"{expression!r}: {name} {message}".strip())
        return np.broadcast_to(np.asarray(value, dtype=float), np.shape(x))

    return branch


class SampledMapAdapter(BaseModel):
    """Smooth branches sampled on a uniform grid plus the declared turning points."""

    turning: list[float]
    branches: list[Callable | str]
    samples: int = 256
    tolerance: float = 1e-9

    @validator("branches")
    def one_per_lap(cls, branches, values):
        if "turning" in values and len(branches) != len(values["turning"]) + 1:
            raise ValueError("need one branch per lap")
        return branches

    @validator("samples")
    def enough_samples(cls, samples):
        if samples < 2:
            raise ValueError("need at least two samples")
        return samples

    def to_map(self) -> PLMap:
        bounds = [0.0, *sorted(self.turning), 1.0]
        grid = np.union1d(np.linspace(0.0, 1.0, self.samples + 1), bounds)
        ys = np.empty_like(grid)
        ends = []
        for k, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
            branch = self.branches[k]
            if isinstance(branch, str):
                branch = _compile(branch)
            lap = (grid >= lo) & (grid <= hi)
            values = np.asarray(branch(grid[lap]), dtype=float)
            steps = np.diff(values)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                raise errors.InvalidKnots(message=f"branch {k} is not strictly monotone at {self.samples} samples")
            ends.append((values[0], values[-1]))
            ys[lap] = values

        for k in range(len(ends) - 1):
            if abs(ends[k][1] - ends[k + 1][0]) > self.tolerance:
                raise errors.InvalidKnots(message=f"branches {k} and {k + 1} disagree at {bounds[k + 1]}")
        if np.any(ys < -RANGE_SLACK) or np.any(ys > 1 + RANGE_SLACK):
            raise errors.InvalidKnots(message="sampled values leave [0, 1]")
        return PLMap(grid, ys)


def logistic_adapter(samples: int = 64) -> PLMap:
    if samples < 64:
        raise ValueError(f"logistic_adapter needs at least 64 samples, got {samples}")

    def full_logistic(x):
        return 4 * x * (1 - x)

    return SampledMapAdapter(turning=[0.5], branches=[full_logistic, full_logistic], samples=samples).to_map()


def logistic_conjugacy(x):
    """Semiconjugacy of the full logistic map onto the full tent."""
    return 2 / np.pi * np.arcsin(np.sqrt(x))


def periodic_tent_slopes(period: int) -> list[float]:
    """Slopes s in (1, 2] for which the turning point of the tent is periodic with exactly this period."""
    if period < 2:
        raise ValueError(f"period must be at least 2, got {period}")

    s = Polynomial([0.0, 1.0])
    found: list[float] = []
    for itinerary in product("LR", repeat=period - 1):
        value = s / 2
        for side in itinerary:
            value = s * value if side == "L" else s - s * value
        for root in (value - 0.5).roots():
            if abs(root.imag) > 1e-9 or not 1 < root.real <= 2:
                continue
            slope = float(root.real)
            if _closes(slope, itinerary) and all(abs(slope - other) > 1e-9 for other in found):
                found.append(slope)
    return sorted(found)


def _closes(slope: float, itinerary: tuple[str, ...]) -> bool:
    f = make_tent(slope)
    x = f(0.5)
    for side in itinerary:
        if abs(x - 0.5) <= ORBIT_TOLERANCE or (x < 0.5) != (side == "L"):
            return False
        x = f(x)
    return abs(x - 0.5) <= ORBIT_TOLERANCE


def perturb_map(f: PLMap, phi: PLMap) -> PLMap:
    """φ∘f∘φ⁻¹ for a PL homeomorphism φ: a topologically conjugate copy of f."""
    if not phi.is_increasing or phi.ys[0] != 0.0 or phi.ys[-1] != 1.0:
        raise ValueError("perturbation must be an increasing homeomorphism of [0, 1]")
    return conjugate(f, phi)


def renorm_intervals(s: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """The exchanged pair I₀ ∋ ½, I₁ of a period-2 renormalizable tent."""
    if not 1 < s < math.sqrt(2):
        raise errors.NotRenormalizable(slope=s, message="slope must lie in (1, sqrt 2)")
    p = s / (1 + s)
    I0, I1 = (s - s * s / 2, p), (p, s / 2)
    f = make_tent(s)
    image0, image1 = image(f, I0), image(f, I1)
    if max(abs(a - b) for a, b in zip(image0 + image1, I1 + I0)) > EXCHANGE_TOLERANCE:
        raise errors.NotRenormalizable(slope=s, message=f"f(I0) = {image0}, f(I1) = {image1}")
    return I0, I1


def deg6_experiment(a: float = 0.4, n: int = 12) -> Deg6Report:
    f = make_deg6(a)
    iteration = metric_iteration(f, None, n)
    rows = [
        Deg6Row(N=k, mass=m.mass((0.0, a)), expected=a if k % 2 == 0 else 1 - a)
        for k, m in enumerate(iteration.metrics)
    ]
    max_error = max(abs(row.mass - row.expected) for row in rows)
    trace = run_tower(f, n_max=n, stop_tol=0.0)
    return Deg6Report(
        a=a,
        rows=rows,
        max_error=max_error,
        oscillation_period=trace.oscillation_period,
        passed=max_error < 1e-10 and trace.oscillation_period == 2,
    )


def _closed_form(alpha: float, k: int, previous: float, current: float) -> float:
    weight = (1 - alpha) / alpha if k % 2 == 0 else alpha / (1 - alpha)
    return 1 / (1 + weight * previous / current)


def renorm_alpha_experiment(s: float = 1.3, alpha: float = 0.3, n: int = 60) -> RenormReport:
    """Iterates P on αμ₀ + (1−α)μ₁ for the tent restricted to its core, so that I₀ ∪ I₁ = [0, 1]."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 2:
        raise ValueError(f"renorm_alpha_experiment needs n >= 2, got {n}")
    I0, I1 = renorm_intervals(s)
    lo, hi = I0[0], I1[1]
    F = restrict(make_tent(s), lo, hi)
    p = (I0[1] - lo) / (hi - lo)
    mu0, mu1 = PLMetric.block(0.0, p), PLMetric.block(p, 1.0)

    m = PLMetric.alpha_block(alpha, (0.0, p), (p, 1.0))
    h_alpha = metric_to_map(m)
    f_alpha = conjugate(F, h_alpha)
    trace = run_tower(f_alpha, n_max=n, stop_tol=0.0, keep_maps=True)

    u, v = mu0, mu1
    masses = [m.mass((0.0, p))]
    chain = [1.0]
    for _ in range(n):
        m = normalize(pullback(F, m))
        u, v = pullback(F, u), pullback(F, v)
        masses.append(m.mass((0.0, p)))
        chain.append((u if len(chain) % 2 == 0 else v).mass((0.0, p)))

    rows = [RenormRow(k=0, mass=masses[0], closed_form=None, a_k=chain[0], tower_H=alpha, fixed_point=alpha)]
    for k in range(1, n + 1):
        row = RenormRow(k=k, mass=masses[k], closed_form=_closed_form(alpha, k, chain[k - 1], chain[k]), a_k=chain[k])
        if k <= trace.iterations:
            snapshot = trace.snapshots[k - 1]
            row.tower_H = PLMap.from_knots(snapshot["H"]["knots"])(alpha)
            row.fixed_point = max(fixed_point(PLMap.from_knots(snapshot["f"]["knots"])))
        rows.append(row)

    closed_error = max(abs(row.mass - row.closed_form) for row in rows[1:])
    tower_error = max((abs(row.tower_H - row.mass) for row in rows if row.tower_H is not None), default=math.inf)
    fixed_error = max(
        (abs(row.fixed_point - row.tower_H) for row in rows if row.fixed_point is not None), default=math.inf
    )
    even, odd = (n, n - 1) if n % 2 == 0 else (n - 1, n)
    r_even = chain[even - 1] / chain[even]
    r_odd = chain[odd - 1] / chain[odd]
    report = RenormReport(
        s=s,
        alpha=alpha,
        core=(lo, hi),
        I0=I0,
        I1=I1,
        rows=rows,
        max_closed_form_error=closed_error,
        max_fixed_point_error=fixed_error,
        even_limit=masses[even],
        odd_limit=masses[odd],
        gap=abs(masses[even] - masses[odd]),
        balancing_alpha=1 / (1 + math.sqrt(r_odd / r_even)),
        passed=closed_error < 1e-8 and tower_error < 1e-8 and fixed_error < 1e-8,
    )
    logger.info("renorm s=%g alpha=%g: even %.10f odd %.10f", s, alpha, report.even_limit, report.odd_limit)
    return report


def gallery_map(name: str) -> PLMap:
    from pltower.models.specs import MapSpec
    from pltower.shared.helpers import get_config

    gallery = get_config("gallery")
    if name not in gallery:
        raise KeyError(name)
    return MapSpec.parse_obj(gallery[name]).build()
