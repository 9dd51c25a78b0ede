import math

import numpy as np
import pytest

from pltower.models.specs import MapSpec, MetricSpec
from pltower.shared import errors
from pltower.shared.gallery import (
    SampledMapAdapter,
    deg6_experiment,
    gallery_map,
    logistic_adapter,
    make_asym_tent,
    make_deg6,
    make_tent,
    make_trapped_tent,
    periodic_tent_slopes,
    perturb_map,
    renorm_alpha_experiment,
    renorm_intervals,
)
from pltower.shared.helpers import get_config
from pltower.shared.pl_core import PLMap, critical_values, image, sup_distance

GOLDEN = (1 + math.sqrt(5)) / 2
TRIBONACCI = 1.839286755214161


@pytest.mark.parametrize("slope", [1.0, 2.5, -1.5])
def test_tent_slope_range(slope):
    with pytest.raises(ValueError):
        make_tent(slope)


def test_asymmetric_tent():
    f = make_asym_tent(0.3)
    assert f(0.3) == 1.0
    assert critical_values(f).values == (0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        make_asym_tent(1.0)


def test_deg6_shape():
    f = make_deg6(0.4)
    assert len(f) == 7
    assert f.degree == 5
    assert f(0.4) == pytest.approx(0.4)
    assert image(f, (0, 0.4)) == pytest.approx((0.4, 1.0))
    assert image(f, (0.4, 1)) == pytest.approx((0.0, 0.4))
    with pytest.raises(ValueError):
        make_deg6(0.5)


def test_trapped_tent():
    f = make_trapped_tent()
    assert f.degree == 2
    assert image(f, (0, 0.2)) == pytest.approx((0.0, 0.2))
    assert f(0.5) == pytest.approx(0.74)


def test_renorm_intervals():
    I0, I1 = renorm_intervals(1.3)
    assert I0[1] == I1[0] == pytest.approx(1.3 / 2.3)
    f = make_tent(1.3)
    assert image(f, I0) == pytest.approx(I1)
    assert image(f, I1) == pytest.approx(I0)


@pytest.mark.parametrize("slope", [1.5, 1.9])
def test_not_renormalizable(slope):
    with pytest.raises(errors.NotRenormalizable):
        renorm_intervals(slope)


def test_logistic_adapter():
    f = logistic_adapter(64)
    assert len(f) == 65
    assert f(0.5) == 1.0
    assert f(0.25) == pytest.approx(0.75)
    assert critical_values(f).values == (0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        logistic_adapter(32)


def test_sampled_adapter_formulas_match_callables():
    from_strings = SampledMapAdapter(turning=[0.5], branches=["4 * x * (1 - x)"] * 2, samples=64).to_map()
    assert sup_distance(from_strings, logistic_adapter(64)) < 1e-15


def test_sampled_adapter_with_numpy_functions():
    f = SampledMapAdapter(turning=[0.5], branches=["sin(pi * x)", "sin(pi * x)"], samples=128).to_map()
    assert f(0.5) == pytest.approx(1.0)
    assert f.degree == 2


def test_sampled_adapter_errors():
    with pytest.raises(errors.ParseError):
        SampledMapAdapter(turning=[0.5], branches=["4 * y", "1 - x"]).to_map()
    with pytest.raises(errors.InvalidKnots):
        SampledMapAdapter(turning=[0.5], branches=["sin(6 * x) ** 2", "1 - x"]).to_map()
    with pytest.raises(errors.InvalidKnots):
        SampledMapAdapter(turning=[0.5], branches=["x", "0.8 - x"]).to_map()
    with pytest.raises(ValueError):
        SampledMapAdapter(turning=[0.5], branches=["x"])


def test_periodic_tent_slopes():
    assert periodic_tent_slopes(3) == pytest.approx([GOLDEN])
    assert any(abs(s - TRIBONACCI) < 1e-8 for s in periodic_tent_slopes(4))
    for slope in periodic_tent_slopes(5):
        f = make_tent(slope)
        x = 0.5
        for _ in range(5):
            x = f(x)
        assert x == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ValueError):
        periodic_tent_slopes(1)


def test_perturb_map_keeps_critical_values(tent2):
    phi = PLMap.from_knots([[0, 0], [0.2, 0.35], [0.7, 0.8], [1, 1]])
    f = perturb_map(tent2, phi)
    assert critical_values(f).values == pytest.approx((0, 1, 0))
    assert f.turning_points.tolist() == pytest.approx([phi(0.5)])
    with pytest.raises(ValueError):
        perturb_map(tent2, PLMap.from_knots([[0, 0], [1, 0.9]]))


def test_deg6_experiment():
    report = deg6_experiment(0.4, 12)
    assert report.passed
    assert report.oscillation_period == 2
    assert [row.N for row in report.rows] == list(range(13))
    assert report.max_error < 1e-10


def test_renorm_experiment_diverges_for_generic_alpha():
    report = renorm_alpha_experiment(1.3, 0.3, 60)
    assert report.passed
    assert report.max_closed_form_error < 1e-8
    assert report.gap > 0.03
    assert report.even_limit == pytest.approx(0.3, abs=1e-8)
    assert report.odd_limit == pytest.approx(0.7 * 1.69 / (0.7 * 1.69 + 0.3), abs=1e-8)
    assert report.balancing_alpha == pytest.approx(1.3 / 2.3, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.3, 0.7])
def test_renorm_tower_fixed_point_tracks_weight(alpha):
    report = renorm_alpha_experiment(1.3, alpha, 60)
    assert report.max_fixed_point_error < 1e-10
    assert all(row.fixed_point is not None for row in report.rows[:3])


def test_renorm_experiment_converges_at_balancing_alpha():
    report = renorm_alpha_experiment(1.3, 1.3 / 2.3, 20)
    assert report.gap < 1e-6


def test_renorm_experiment_rejects_bad_input():
    with pytest.raises(errors.NotRenormalizable):
        renorm_alpha_experiment(1.5)
    with pytest.raises(ValueError):
        renorm_alpha_experiment(1.3, 1.2)


@pytest.mark.parametrize("name", list(get_config("gallery")))
def test_gallery_maps_build(name):
    assert isinstance(gallery_map(name), PLMap)


def test_gallery_unknown_name():
    with pytest.raises(KeyError):
        gallery_map("missing")


def test_map_specs():
    assert MapSpec.parse_obj({"knots": [[0, 0], [0.5, 1], [1, 0]]}).build().degree == 2
    assert MapSpec.parse_obj({"family": "tent", "slope": 1.8}).build()(0.5) == pytest.approx(0.9)
    perturbed = MapSpec.parse_obj(
        {"family": "perturbed", "base": {"family": "tent", "slope": 2.0}, "knots": [[0, 0], [0.3, 0.6], [1, 1]]}
    ).build()
    assert critical_values(perturbed).values == pytest.approx((0, 1, 0))

    with pytest.raises(errors.ParseError):
        MapSpec.parse_obj({"family": "spiral"})
    with pytest.raises(errors.ParseError):
        MapSpec.parse_obj([[0, 0], [1, 1]])


def test_metric_specs():
    I0, I1 = renorm_intervals(1.3)
    m = MetricSpec.parse_obj({"family": "alpha_block", "alpha": 0.3, "I0": I0, "I1": I1}).build()
    assert m.total_mass == pytest.approx(1.0)
    assert MetricSpec.parse_obj({"cmf": [[0, 0], [1, 2]]}).build().total_mass == 2.0
    block = MetricSpec.parse_obj({"family": "block", "lo": 0.2, "hi": 0.6}).build()
    np.testing.assert_allclose(block.xs, [0, 0.2, 0.6, 1])
    with pytest.raises(errors.ParseError):
        MetricSpec.parse_obj({"family": "dirac"})
