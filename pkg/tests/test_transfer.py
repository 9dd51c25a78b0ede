import math

import numpy as np
import pytest

from pltower.shared import errors
from pltower.shared.gallery import logistic_adapter, logistic_conjugacy, make_identity, make_tent
from pltower.shared.metric_space import PLMetric
from pltower.shared.pl_core import PLMap, compose_power, sup_distance, variation
from pltower.shared.transfer import (
    StepFunction,
    apply_transfer,
    duality_residual,
    flat_intervals,
    iterate_transfer,
    leading_eigen,
    limit_conjugacy,
    markov_matrix,
    pairing,
    spectrum_report,
)

GOLDEN = (1 + math.sqrt(5)) / 2


def test_step_function():
    phi = StepFunction([0, 0.25, 1], [2.0, -1.0])
    assert phi(0.0) == 2.0
    assert phi(0.25) == -1.0
    assert phi(1.0) == -1.0
    assert phi.cells == [(0.0, 0.25), (0.25, 1.0)]
    assert phi.refine([0.5]).values.tolist() == [2.0, -1.0, -1.0]
    assert len(phi.refine([0.5]).merged()) == 2

    with pytest.raises(ValueError):
        StepFunction([0, 0.5], [1.0, 2.0])
    with pytest.raises(ValueError):
        StepFunction([0, 0.6, 0.4, 1], [1.0, 2.0, 3.0])


def test_indicator():
    phi = StepFunction.indicator((0, 0.25))
    assert phi.breakpoints.tolist() == [0.0, 0.25, 1.0]
    assert phi.values.tolist() == [1.0, 0.0]
    assert StepFunction.indicator((0.2, 0.4)).values.tolist() == [0.0, 1.0, 0.0]


def test_pairing_with_lebesgue():
    phi = StepFunction([0, 0.25, 1], [2.0, -1.0])
    assert pairing(phi, PLMetric.lebesgue()) == pytest.approx(-0.25)


def test_transfer_of_constant(tent2):
    result = apply_transfer(tent2, StepFunction.constant())
    assert result.breakpoints.tolist() == [0.0, 1.0]
    assert result.values.tolist() == [2.0]


def test_transfer_of_indicator(tent2):
    result = apply_transfer(tent2, StepFunction.indicator((0, 0.25)))
    assert result.breakpoints.tolist() == [0.0, 0.5, 1.0]
    assert result.values.tolist() == [1.0, 0.0]


def test_transfer_counts_preimages():
    # image [0, 0.5]: points above 0.5 have no preimage
    f = PLMap([0, 0.5, 1], [0, 0.5, 0])
    result = apply_transfer(f, StepFunction.constant())
    assert result(0.25) == 2.0
    assert result(0.75) == 0.0


def test_transfer_mass_is_variation(golden_tent, random_map):
    lebesgue = PLMetric.lebesgue()
    for f in [golden_tent, *(random_map() for _ in range(5))]:
        for n in range(1, 9):
            mass = pairing(iterate_transfer(f, StepFunction.constant(), n), lebesgue)
            assert mass == pytest.approx(variation(compose_power(f, n)), rel=1e-8)


def test_duality(tent2, deg6, random_map, random_step, random_metric):
    maps = [tent2, deg6, make_identity()] + [random_map() for _ in range(20)]
    for f in maps:
        for _ in range(5):
            assert duality_residual(f, random_step(), random_metric()) < 1e-12


def test_duality_with_constant_and_lebesgue(random_map):
    f = random_map()
    assert pairing(apply_transfer(f, StepFunction.constant()), PLMetric.lebesgue()) == pytest.approx(variation(f))


def test_transfer_budget(tent2):
    with pytest.raises(errors.KnotBudgetExceeded):
        iterate_transfer(tent2, StepFunction.indicator((0.1234, 0.3141)), 10, budget=4)


def test_markov_matrix_of_full_tent(tent2):
    M = markov_matrix(tent2)
    assert M.partition == [0.0, 0.5, 1.0]
    np.testing.assert_array_equal(M.dense(), [[1, 1], [1, 1]])


def test_markov_matrix_of_golden_tent(golden_tent):
    M = markov_matrix(golden_tent)
    assert M.size == 4
    eigen = leading_eigen(M)
    assert eigen.lam == pytest.approx(GOLDEN, abs=1e-9)
    assert 0 < eigen.gap_ratio < 1
    assert np.all(eigen.phi.values >= 0)


def test_markov_matrix_needs_closing_orbit():
    with pytest.raises(errors.NotMarkov):
        markov_matrix(make_tent(1.9), orbit_depth=20)


def test_leading_eigen_of_full_tent(tent2):
    eigen = leading_eigen(markov_matrix(tent2))
    assert eigen.lam == 2.0
    assert eigen.phi.values.tolist() == [1.0, 1.0]


def test_leading_eigen_detects_peripheral_pair(deg6):
    with pytest.raises(errors.NoConvergence) as excinfo:
        leading_eigen(markov_matrix(deg6))
    assert sorted(excinfo.value.peripheral) == pytest.approx([-3.0, 3.0])


def test_spectrum_report(tent2, deg6):
    report = spectrum_report(tent2)
    assert report.lambda_ == 2.0
    assert report.markov
    assert report.partition_size == 2
    assert report.dict(by_alias=True)["lambda"] == 2.0

    oscillating = spectrum_report(deg6)
    assert not oscillating.converged
    assert oscillating.lambda_ == pytest.approx(3.0)
    assert min(oscillating.peripheral) == pytest.approx(-3.0)


def test_spectrum_report_falls_back_to_hofbauer():
    report = spectrum_report(make_tent(1.9))
    assert not report.markov
    assert 1.8 < report.lambda_ <= 1.9 + 1e-6


def test_limit_conjugacy_of_full_tent(tent2):
    assert sup_distance(limit_conjugacy(tent2, 5), make_identity()) < 1e-15
    with pytest.raises(ValueError):
        limit_conjugacy(tent2, 0)


def test_limit_conjugacy_of_logistic_map():
    H = limit_conjugacy(logistic_adapter(128), 10, budget=1_000_000)
    grid = np.linspace(0, 1, 201)
    assert np.max(np.abs(H(grid) - logistic_conjugacy(grid))) < 1e-2


def test_flat_intervals_of_homeomorphism(tent2):
    assert flat_intervals(limit_conjugacy(tent2, 3)) == []
