import logging
from collections import deque
from typing import NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel

from pltower.models.reports import TowerRecord, TowerStatus, TowerSummary
from pltower.shared import errors
from pltower.shared.constant_slope import constant_slope_model, factor_homeomorphism
from pltower.shared.helpers import get_numerics
from pltower.shared.metric_space import PLMetric, is_linearly_expanded, metric_to_map, normalize, pullback
from pltower.shared.pl_core import PLMap, compose, critical_values, sup_distance

logger = logging.getLogger("pltower.shared.tower")
_tower_cfg = get_numerics("tower")
MAX_ITERATIONS = int(_tower_cfg["max-iterations"])
STOP_TOLERANCE = float(_tower_cfg["stop-tolerance"])
WINDOW = int(_tower_cfg["window"])
OSCILLATION_TOLERANCE = float(_tower_cfg["oscillation-tolerance"])
MAX_PERIOD = int(_tower_cfg["max-period"])
# absolute slack when a knot of f - id is treated as a zero
FIXED_POINT_TOLERANCE = 1e-12


class ThetaStep(NamedTuple):
    f_next: PLMap
    g: PLMap
    h: PLMap
    s: float


def theta_step(f: PLMap, budget: int | None = None) -> ThetaStep:
    model = constant_slope_model(critical_values(f))
    h = factor_homeomorphism(f, model.g)
    return ThetaStep(compose(h, model.g, budget), model.g, h, model.slope)


class TowerTrace(BaseModel):
    records: list[TowerRecord]
    status: TowerStatus
    f: PLMap
    H: PLMap
    g: PLMap | None = None
    h: PLMap | None = None
    oscillation_period: int | None = None
    min_residual: float | None = None
    snapshots: list[dict] = []

    class Config:
        arbitrary_types_allowed = True

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def s_final(self) -> float:
        return self.records[-1].s_n if self.records else 0.0


def detect_oscillation(
    history: Sequence[PLMap], window: int = WINDOW, tol: float = OSCILLATION_TOLERANCE, max_period: int = MAX_PERIOD
) -> int | None:
    """Smallest p ≥ 2 with sup|f_n − f_(n−p)| < tol for every n in the trailing window."""
    maps = list(history)
    for period in range(2, max_period + 1):
        indices = range(max(period, len(maps) - window), len(maps))
        if len(indices) < 2:
            continue
        if all(sup_distance(maps[i], maps[i - period]) < tol for i in indices):
            return period
    return None


def run_tower(
    f0: PLMap,
    n_max: int | None = None,
    stop_tol: float | None = None,
    budget: int | None = None,
    keep_maps: bool = False,
) -> TowerTrace:
    n_max = MAX_ITERATIONS if n_max is None else n_max
    stop_tol = STOP_TOLERANCE if stop_tol is None else stop_tol
    if n_max < 1:
        raise ValueError(f"run_tower needs n_max >= 1, got {n_max}")

    identity = PLMap.identity()
    f, H = f0, identity
    g_prev: PLMap | None = None
    h_prev: PLMap | None = None
    history = deque([f0], maxlen=WINDOW + MAX_PERIOD + 1)
    records: list[TowerRecord] = []
    snapshots: list[dict] = []
    status = "max_iterations"

    for n in range(1, n_max + 1):
        try:
            step = theta_step(f, budget)
            H_next = compose(step.h, H, budget)
        except errors.KnotBudgetExceeded as e:
            logger.warning("Tower stopped at step %d: %s", n, e)
            status = "knot_budget"
            break

        record = TowerRecord(
            n=n,
            s_n=step.s,
            residual_f=sup_distance(step.f_next, f),
            residual_h=sup_distance(step.h, identity),
            residual_H=sup_distance(H_next, H),
            knots_f=len(step.f_next),
            knots_H=len(H_next),
            knots_h=len(step.h),
            residual_g=None if g_prev is None else sup_distance(step.g, g_prev),
            residual_h_step=None if h_prev is None else sup_distance(step.h, h_prev),
        )
        records.append(record)
        if keep_maps:
            snapshots.append(
                {
                    "n": n,
                    "f": step.f_next.to_dict(),
                    "g": step.g.to_dict(),
                    "h": step.h.to_dict(),
                    "H": H_next.to_dict(),
                }
            )
        logger.debug("step %d: s=%.12g residual_f=%.3e knots=%d", n, step.s, record.residual_f, record.knots_f)

        f, H, g_prev, h_prev = step.f_next, H_next, step.g, step.h
        history.append(f)
        if record.residual_f < stop_tol:
            status = "converged"
            break

    period = None
    min_residual = None
    if records:
        min_residual = min(record.residual_f for record in records[-WINDOW:])
    if status != "converged":
        period = detect_oscillation(history)
        if period:
            logger.info("Tower oscillates with period %d", period)
        else:
            logger.info("Tower did not converge after %d steps (min residual %.3e)", len(records), min_residual or 0.0)

    return TowerTrace(
        records=records,
        status=status,
        f=f,
        H=H,
        g=g_prev,
        h=h_prev,
        oscillation_period=period,
        min_residual=min_residual,
        snapshots=snapshots,
    )


class MetricIteration(NamedTuple):
    metric: PLMetric
    H: PLMap
    slopes: list[float]
    metrics: list[PLMetric]


def metric_iteration(f0: PLMap, m0: PLMetric | None = None, n: int = 1, budget: int | None = None) -> MetricIteration:
    """m_k = P^k(m0) with P(m) = f*m / |f*m|; s_k = |f*m_k| and H_n(x) = m_n([0, x])."""
    if n < 0:
        raise ValueError(f"metric_iteration needs n >= 0, got {n}")
    m = normalize(PLMetric.lebesgue() if m0 is None else m0)
    metrics, slopes = [m], []
    for _ in range(n):
        pulled = pullback(f0, m, budget)
        slopes.append(pulled.total_mass)
        m = normalize(pulled)
        metrics.append(m)
    return MetricIteration(m, metric_to_map(m), slopes, metrics)


def fixed_point(f: PLMap) -> list[float]:
    d = f.ys - f.xs
    zero = np.abs(d) <= FIXED_POINT_TOLERANCE
    if both := np.flatnonzero(zero[:-1] & zero[1:]).tolist():
        raise errors.IntervalOfFixedPoints(lo=float(f.xs[both[0]]), hi=float(f.xs[both[0] + 1]))

    points = f.xs[zero].tolist()
    cross = np.flatnonzero(~zero[:-1] & ~zero[1:] & (d[:-1] * d[1:] < 0))
    t = d[cross] / (d[cross] - d[cross + 1])
    points.extend((f.xs[cross] + t * (f.xs[cross + 1] - f.xs[cross])).tolist())

    result: list[float] = []
    for x in sorted(points):
        if not result or x - result[-1] > FIXED_POINT_TOLERANCE:
            result.append(x)
    return result


def conjugacy_residual(f0: PLMap, f_n: PLMap, H_n: PLMap, budget: int | None = None) -> float:
    """sup|f_n∘H_n − H_n∘f_0|."""
    return sup_distance(compose(f_n, H_n, budget), compose(H_n, f0, budget))


def commutation_residual(a: PLMap, b: PLMap, budget: int | None = None) -> float:
    return sup_distance(compose(a, b, budget), compose(b, a, budget))


def summarize(f0: PLMap, trace: TowerTrace, cross_check: bool = True, budget: int | None = None) -> TowerSummary:
    summary = {
        "converged": trace.converged,
        "status": trace.status,
        "iterations": trace.iterations,
        "s_final": trace.s_final,
        "min_residual": trace.min_residual if trace.min_residual is not None else 0.0,
        "oscillation_period": trace.oscillation_period,
    }
    if cross_check and trace.iterations and trace.status != "knot_budget":
        try:
            route = metric_iteration(f0, None, trace.iterations, budget)
            summary["H_route_gap"] = sup_distance(route.H, trace.H)
            summary["conjugacy_residual"] = conjugacy_residual(f0, trace.f, trace.H, budget)
        except errors.KnotBudgetExceeded as e:
            logger.warning("Skipping metric cross-check: %s", e)

    if trace.converged and trace.g is not None and trace.h is not None:
        summary["commutation_fh"] = commutation_residual(trace.f, trace.h, budget)
        summary["commutation_gh"] = commutation_residual(trace.g, trace.h, budget)
        summary["expansion_factor"] = is_linearly_expanded(trace.f, PLMetric.lebesgue(), 1e-6)
    return TowerSummary(**summary)
