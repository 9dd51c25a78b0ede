import numpy as np
import pytest

from pltower.shared import errors, pl_core
from pltower.shared.gallery import make_identity, make_tent
from pltower.shared.pl_core import (
    PLMap,
    classify_interval,
    compose,
    compose_power,
    conjugate,
    critical_values,
    image,
    lap_image_growth,
    laps,
    laps_of_iterate,
    pseudo_inverse,
    restrict,
    simplify,
    sup_distance,
    variation,
)


def test_evaluate(tent2, deg6):
    assert tent2(0.25) == 0.5
    assert tent2(0.5) == 1.0
    assert deg6(0.0) == 1.0
    assert deg6(0.4) == pytest.approx(0.4)
    np.testing.assert_allclose(tent2(np.array([0.0, 0.75, 1.0])), [0.0, 0.5, 0.0])


@pytest.mark.parametrize(
    "knots",
    [
        [[0, 0]],
        [[0, 0], [0.5, 1], [0.5, 0.2], [1, 0]],
        [[0, 0], [0.7, 1], [0.6, 0.2], [1, 0]],
        [[0.1, 0], [1, 1]],
        [[0, 0], [1, 1.5]],
        [[0, 0], [1, float("nan")]],
    ],
)
def test_invalid_knots(knots):
    with pytest.raises(errors.InvalidKnots):
        PLMap.from_knots(knots)


def test_compose_with_identity(random_map):
    identity = make_identity()
    for _ in range(10):
        f = random_map()
        for composed in (compose(identity, f), compose(f, identity)):
            np.testing.assert_allclose(composed.xs, f.xs)
            np.testing.assert_allclose(composed.ys, f.ys)


def test_compose_tents(tent2):
    square = compose(tent2, tent2)
    np.testing.assert_allclose(square.xs, [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_allclose(square.ys, [0, 1, 0, 1, 0])
    assert square.degree == 4


def test_compose_knot_bound(random_map):
    for _ in range(20):
        f, g = random_map(), random_map()
        composed = compose(f, g)
        assert len(composed) <= len(g) + (len(g) - 1) * (len(f) - 2)
        xs = np.linspace(0, 1, 101)
        np.testing.assert_allclose(composed(xs), f(g(xs)), atol=1e-12)


def test_compose_budget(tent2):
    with pytest.raises(errors.KnotBudgetExceeded):
        compose_power(tent2, 6, budget=20)


def test_simplify_collinear():
    xs = np.linspace(0, 1, 1001)
    dense = PLMap(xs, np.minimum(2 * xs, 2 - 2 * xs))
    np.testing.assert_allclose(simplify(dense).xs, [0, 0.5, 1])

    exact = PLMap([0, 0.25, 0.5, 1], [0, 0.5, 1, 0])
    assert len(simplify(exact, 0.0)) == 3
    bent = PLMap([0, 0.25, 0.5, 1], [0, 0.5 + 1e-9, 1, 0])
    assert len(simplify(bent, 0.0)) == 4

    with pytest.raises(ValueError):
        simplify(exact, -1.0)


def test_critical_values(tent2, deg6):
    assert critical_values(tent2).values == (0.0, 1.0, 0.0)
    assert critical_values(tent2).direction == 1

    cv = critical_values(deg6)
    assert cv.values == pytest.approx((1, 0.4, 1, 0, 0.4, 0))
    assert cv.direction == -1
    assert cv.degree == 5
    assert critical_values(make_identity()).values == (0.0, 1.0)


def test_flat_segment_has_no_critical_values():
    f = PLMap.from_knots([[0, 0], [0.4, 0.5], [0.6, 0.5], [1, 1]])
    with pytest.raises(errors.ZeroSlopeSegment):
        critical_values(f)


def test_boundary_preserving(tent2, deg6):
    assert tent2.is_boundary_preserving
    assert deg6.is_boundary_preserving
    assert not PLMap.from_knots([[0, 0.3], [0.5, 1], [1, 0.2]]).is_boundary_preserving


def test_variation(tent2, deg6):
    assert variation(tent2) == 2.0
    assert variation(tent2, (0, 0.25)) == 0.5
    assert variation(deg6) == pytest.approx(3.0)


def test_variation_matches_critical_values(random_map):
    for _ in range(20):
        f = random_map()
        assert variation(f) == pytest.approx(critical_values(f).total_variation, rel=1e-12)


def test_laps(deg6, tent2):
    assert laps(deg6) == 5
    assert laps(tent2, (0, 0.5)) == 1
    assert laps(tent2, (0.25, 0.75)) == 2


def test_image(tent2):
    assert image(tent2, (0.4, 0.6)) == pytest.approx((0.8, 1.0))
    assert image(tent2, (0.0, 0.25)) == pytest.approx((0.0, 0.5))


@pytest.mark.parametrize("n", range(1, 7))
def test_lap_methods_agree(tent2, n):
    assert laps_of_iterate(tent2, n, "images") == 2**n
    assert laps_of_iterate(tent2, n, "compose") == 2**n


def test_golden_lap_recursion(golden_tent):
    counts = [count for count, _ in lap_image_growth(golden_tent, 12)]
    assert counts[:4] == [2, 4, 8, 14]
    for n in range(2, 12):
        assert counts[n] == counts[n - 1] + counts[n - 2] + 2


def test_golden_variation_is_slope_power(golden_tent):
    s = 2 * golden_tent(0.5)
    for n, (_, var) in enumerate(lap_image_growth(golden_tent, 10), start=1):
        assert var == pytest.approx(s**n, rel=1e-9)


def test_lap_counts_submultiplicative(random_map):
    for _ in range(10):
        f = random_map()
        counts = [count for count, _ in lap_image_growth(f, 8)]
        for m in range(1, 5):
            for n in range(1, 5):
                assert counts[m + n - 1] <= counts[m - 1] * counts[n - 1]


def test_lap_count_overflow(tent2, monkeypatch):
    monkeypatch.setattr(pl_core, "LAP_CEILING", 10)
    assert laps_of_iterate(tent2, 3) == 8
    with pytest.raises(errors.LapCountOverflow):
        laps_of_iterate(tent2, 4)


def test_classify_interval(tent2):
    assert classify_interval(tent2, (0, 1), 10).is_fast
    assert classify_interval(tent2, (0, 1), 10).k == 0
    result = classify_interval(tent2, (0.4, 0.6), 10)
    assert result.is_fast and result.k == 3


def test_classify_inside_exchanged_interval():
    tent = make_tent(1.3)
    result = classify_interval(tent, (0.58, 0.62), 50)
    assert not result.is_fast
    assert result.k == 50


@pytest.mark.parametrize("n", [8, 12, 16])
def test_slow_intervals_have_few_laps(n):
    tent = make_tent(1.3)
    slow = 0
    edges = np.linspace(0, 1, 51)
    for J in zip(edges[:-1], edges[1:]):
        if classify_interval(tent, J, n).is_fast:
            continue
        slow += 1
        assert lap_image_growth(tent, n, J)[-1][0] <= 2 ** (n / 2 + 1)
    assert slow > 0


@pytest.mark.parametrize("slope", [2.0, 1.618033988749895, 1.839286755214161, 1.8])
def test_constant_slope_growth_rate(slope):
    growth = lap_image_growth(make_tent(slope), 20)
    for n, (count, var) in enumerate(growth, start=1):
        assert count >= slope**n * (1 - 1e-9)
    assert np.log(growth[-1][1]) / 20 == pytest.approx(np.log(slope), abs=1e-3)
    if slope != 1.8:
        # Markov slopes: lap counts grow at the exact rate
        assert np.log(growth[-1][0] / growth[-2][0]) == pytest.approx(np.log(slope), abs=1e-3)


def test_classify_needs_unimodal(deg6):
    with pytest.raises(errors.NotUnimodal):
        classify_interval(deg6, (0, 1), 5)


def test_pseudo_inverse():
    h = PLMap.from_knots([[0, 0], [0.3, 0.5], [0.6, 0.5], [1, 1]])
    inverse = pseudo_inverse(h)
    assert inverse(0.5) == pytest.approx(0.6)
    assert inverse(0.25) == pytest.approx(0.15)
    assert inverse(1.0) == 1.0
    assert inverse.jumps == [0.5]

    with pytest.raises(ValueError):
        pseudo_inverse(make_tent(2.0))


def test_conjugate_by_identity(random_map):
    f = random_map()
    assert sup_distance(conjugate(f, make_identity()), f) < 1e-15


def test_conjugate_preserves_critical_value_pattern(tent2):
    phi = PLMap.from_knots([[0, 0], [0.3, 0.6], [1, 1]])
    f = conjugate(tent2, phi)
    assert critical_values(f).values == pytest.approx((0, 1, 0))
    assert list(f.turning_points) == pytest.approx([phi(0.5)])


def test_restrict_golden_core(golden_tent):
    top = golden_tent(0.5)
    bottom = golden_tent(top)
    core = restrict(golden_tent, bottom, top)
    assert core.degree == 2
    assert core(0.0) == pytest.approx((0.5 - bottom) / (top - bottom))

    with pytest.raises(ValueError):
        restrict(golden_tent, 0.6, 0.9)
