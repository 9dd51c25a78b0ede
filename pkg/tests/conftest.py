import math

import numpy as np
import pytest

from pltower.shared.gallery import make_asym_tent, make_deg6, make_tent
from pltower.shared.metric_space import PLMetric
from pltower.shared.pl_core import PLMap
from pltower.shared.transfer import StepFunction

GOLDEN = (1 + math.sqrt(5)) / 2


@pytest.fixture
def tent2() -> PLMap:
    return make_tent(2.0)


@pytest.fixture
def golden_tent() -> PLMap:
    return make_tent(GOLDEN)


@pytest.fixture
def deg6() -> PLMap:
    return make_deg6(0.4)


@pytest.fixture
def asym25() -> PLMap:
    return make_asym_tent(0.25)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def _random_map(rng: np.random.Generator, max_laps: int = 3) -> PLMap:
    """Alternating critical values at least 0.2 apart and one extra knot inside every lap."""
    laps = int(rng.integers(1, max_laps + 1))
    turning = np.sort(rng.choice([0.2, 0.4, 0.6, 0.8], laps - 1, replace=False))
    bounds = np.concatenate([[0.0], turning, [1.0]])
    up = bool(rng.integers(0, 2))
    values = [rng.uniform(0.0, 0.3) if up else rng.uniform(0.7, 1.0)]
    for _ in range(laps):
        v = values[-1]
        values.append(rng.uniform(v + 0.2, 1.0) if up else rng.uniform(0.0, v - 0.2))
        up = not up

    xs, ys = [0.0], [values[0]]
    for k in range(laps):
        xs.append(bounds[k] + rng.uniform(0.3, 0.7) * (bounds[k + 1] - bounds[k]))
        ys.append(values[k] + rng.uniform(0.3, 0.7) * (values[k + 1] - values[k]))
        xs.append(bounds[k + 1])
        ys.append(values[k + 1])
    return PLMap(xs, ys)


def _random_metric(rng: np.random.Generator) -> PLMetric:
    xs = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, 4)), [1.0]])
    density = rng.uniform(0.1, 2.0, len(xs) - 1)
    return PLMetric(xs, np.concatenate([[0.0], np.cumsum(density * np.diff(xs))]))


def _random_step(rng: np.random.Generator) -> StepFunction:
    breakpoints = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, 3)), [1.0]])
    return StepFunction(breakpoints, rng.uniform(-1.0, 2.0, 4))


@pytest.fixture
def random_map(rng):
    return lambda max_laps=3: _random_map(rng, max_laps)


@pytest.fixture
def random_metric(rng):
    return lambda: _random_metric(rng)


@pytest.fixture
def random_step(rng):
    return lambda: _random_step(rng)
