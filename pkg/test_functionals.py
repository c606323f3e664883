"""
測試路徑泛函：mollifier、折現損失積分、導數與界
"""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from diagnostics import derivative_error, quadrature_reference, random_dividend_case
from errors import DomainError, ParameterError, UnsupportedOperationError
from functionals import (
    ConstantKernel,
    DiscountedLossFunctional,
    DividendFunctional,
    Mollifier,
    PerpetualPutFunctional,
    RuinTimeFunctional,
    TerminalQuadraticFunctional,
    mollifier_eval,
)
from levy_model import JumpDiffusionModel, SamplingScheme, make_rng, simulate_increments
from stepped_path import from_increments

MODEL = JumpDiffusionModel.from_tuple((20.0, 10.0, 5.0, 3.0, 0.0))


@pytest.fixture(scope="module")
def long_path():
    return from_increments(0.0, 0.1, simulate_increments(MODEL, SamplingScheme(200, 0.1), seed=17))


def dividend(**kwargs):
    params = dict(alpha=1.0, epsilon=0.1, c=1.0, r=0.1, xi=-10.0, theta_max=30.0)
    params.update(kwargs)
    return DividendFunctional(**params)


def test_mollifier_boundaries_and_midpoint():
    phi = Mollifier(0.25)
    assert phi.value(0.75, 1.0) == 0.0
    assert phi.value(1.25, 1.0) == 1.0
    assert phi.value(-5.0, 1.0) == 0.0
    assert phi.value(7.0, 1.0) == 1.0
    assert phi.value(1.0, 1.0) == 0.5
    assert phi.slope(0.75, 1.0) == 0.0 and phi.slope(1.25, 1.0) == 0.0
    with pytest.raises(ParameterError):
        Mollifier(0.0)


def test_mollifier_derivatives_match_finite_differences():
    phi = Mollifier(0.5)
    step = 1e-6
    for u in np.linspace(-0.45, 0.45, 7):
        fd_slope = (phi.value(u + step, 0.0) - phi.value(u - step, 0.0)) / (2 * step)
        fd_curv = (phi.slope(u + step, 0.0) - phi.slope(u - step, 0.0)) / (2 * step)
        assert fd_slope == pytest.approx(phi.slope(u, 0.0), abs=1e-6)
        assert fd_curv == pytest.approx(phi.curvature(u, 0.0), abs=1e-5)
    parts = mollifier_eval(phi, 0.1, 0.0)
    assert parts.dz == -parts.du and parts.duz == -parts.duu and parts.dzz == parts.duu


def test_constant_kernel_gives_discounted_survival_time():
    f = DiscountedLossFunctional(0.1, 0.0, ConstantKernel())
    ruined = from_increments(5.0, 1.0, [1.0, 1.0, -10.0, 1.0])
    assert f.evaluate(ruined, [0.0]) == pytest.approx(-math.expm1(-0.3) / 0.1, rel=1e-13)
    safe = from_increments(5.0, 1.0, [1.0, 1.0, 1.0, 1.0])
    assert f.evaluate(safe, [0.0]) == pytest.approx(-math.expm1(-0.4) / 0.1, rel=1e-13)


def test_ruined_at_start_is_zero():
    f = dividend()
    assert f.evaluate(from_increments(-11.0, 1.0, [50.0, 50.0]), [5.0]) == 0.0
    assert_allclose(f.gradient(from_increments(-11.0, 1.0, [50.0, 50.0]), [5.0]), [0.0])


def test_perpetual_put_payoff():
    put = PerpetualPutFunctional(r=0.05, strike=10.0)
    path = from_increments(12.0, 1.0, [-1.0, -2.0, -1.0])
    assert put.evaluate(path, [10.0]) == pytest.approx(math.exp(-0.1) * 1.0)
    assert put.evaluate(path, [5.0]) == 0.0
    assert PerpetualPutFunctional(0.05, 10.0, maximize=True).evaluate(path, [10.0]) < 0.0
    with pytest.raises(DomainError):
        put.evaluate(path, [11.0])


@pytest.mark.parametrize("theta", [2.0, 7.3, 15.05, -9.95])
def test_dividend_matches_adaptive_quadrature(long_path, theta):
    f = dividend()
    assert abs(f.evaluate(long_path, [theta]) - quadrature_reference(f, long_path, [theta])) <= 1e-10


def test_raw_dividend_matches_adaptive_quadrature(long_path):
    f = dividend(mollified=False)
    assert abs(f.evaluate(long_path, [6.5]) - quadrature_reference(f, long_path, [6.5])) <= 1e-10


@pytest.mark.parametrize("theta", [5.0, 12.34])
def test_dividend_derivatives_match_finite_differences(long_path, theta):
    assert derivative_error(dividend(), long_path, [theta]) <= 1e-5


def test_split_dividend_derivatives_and_symmetry(long_path):
    f = dividend(split=True)
    theta = np.array([5.0, 8.0])
    assert f.dim == 2
    hess = f.hessian(long_path, theta)
    assert_allclose(hess, hess.T)
    assert derivative_error(f, long_path, theta) <= 1e-5


def test_split_with_equal_parameters_matches_single(long_path):
    assert dividend(split=True).evaluate(long_path, [6.0, 6.0]) == pytest.approx(
        dividend().evaluate(long_path, [6.0]), rel=1e-12)


def test_raw_kernel_has_no_derivatives(long_path):
    with pytest.raises(UnsupportedOperationError):
        dividend(mollified=False).gradient(long_path, [5.0])
    with pytest.raises(UnsupportedOperationError):
        RuinTimeFunctional(0.0).gradient(long_path, None)


def test_theta_domain_checks(long_path):
    f = dividend()
    with pytest.raises(DomainError):
        f.evaluate(long_path, [31.0])
    with pytest.raises(DomainError):
        f.evaluate(long_path, [1.0, 2.0])
    with pytest.raises(ParameterError):
        dividend(theta_max=-20.0)
    with pytest.raises(DomainError):
        dividend(horizon=100.0).evaluate(long_path, [5.0])


def test_mollified_equals_raw_away_from_bands():
    # surplus far above theta and the horizon before c (theta - eps)
    path = from_increments(100.0, 0.5, np.ones(8))
    for eps in (0.1, 1.0):
        smooth = dividend(epsilon=eps).evaluate(path, [10.0])
        raw = dividend(mollified=False).evaluate(path, [10.0])
        assert smooth == pytest.approx(raw, rel=1e-13)
        assert smooth == pytest.approx(-math.expm1(-0.1 * 4.0) / 0.1, rel=1e-13)


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.001])
def test_mollified_converges_to_raw(long_path, eps):
    theta = 8.0
    f = dividend(epsilon=eps)
    end = f.end_time(long_path)
    start_times = long_path.times()[:-1]
    in_band = (np.abs(long_path.values[:-1] - theta) < eps) & (start_times < end)
    bound = 1.0 * (long_path.h * in_band.sum() + 2.0 * eps * 1.0)
    diff = abs(f.evaluate(long_path, [theta]) - dividend(mollified=False).evaluate(long_path, [theta]))
    assert diff <= bound + 1e-12


def test_values_stay_within_discounted_bound():
    rng = np.random.default_rng(5)
    f = dividend()
    for seed in range(20):
        path = from_increments(0.0, 0.1, simulate_increments(MODEL, SamplingScheme(150, 0.1), seed=seed))
        tau = f.end_time(path)
        for theta in rng.uniform(-10.0, 30.0, 5):
            assert abs(f.evaluate(path, [theta])) <= -math.expm1(-0.1 * tau) / 0.1 + 1e-12


def test_truncation_error_within_tail_bound():
    path = from_increments(50.0, 0.25, np.full(200, 0.5))
    full = dividend(theta_max=60.0)
    truncated = dividend(theta_max=60.0, horizon=20.0)
    gap = abs(full.evaluate(path, [55.0]) - truncated.evaluate(path, [55.0]))
    assert gap <= truncated.tail_bound(20.0)
    assert truncated.tail_bound(20.0) == pytest.approx(math.exp(-2.0) / 0.1)


def test_maximize_negates_payout(long_path):
    assert dividend(maximize=True).evaluate(long_path, [4.0]) == pytest.approx(
        -dividend().evaluate(long_path, [4.0]), rel=1e-14)


def test_terminal_quadratic():
    f = TerminalQuadraticFunctional(dim=2)
    path = from_increments(0.0, 1.0, [1.0, 2.0])
    assert f.evaluate(path, [1.0, 4.0]) == 5.0
    assert_allclose(f.evaluate_many(path, [[1.0, 4.0], [3.0, 3.0]]), [5.0, 0.0])
    assert_allclose(f.gradient(path, [1.0, 4.0]), [-4.0, 2.0])
    assert_allclose(f.hessian(path, [0.0, 0.0]), 2.0 * np.eye(2))


def test_randomized_derivatives_within_tolerance():
    rng = make_rng(np.random.SeedSequence([0, 6, 5]))
    worst = max(derivative_error(*random_dividend_case(rng)) for _ in range(100))
    assert worst <= 1e-5


def test_put_payoff_floors_negative_price():
    put = PerpetualPutFunctional(r=0.05, strike=10.0)
    # crosses 0.5 at t = 1 landing at -3
    path = from_increments(1.0, 1.0, [-4.0, 1.0, 1.0])
    assert put.evaluate(path, [0.5]) == pytest.approx(math.exp(-0.05) * 10.0)


def test_put_payoff_stays_in_zero_to_strike():
    put = PerpetualPutFunctional(r=0.05, strike=10.0)
    rng = np.random.default_rng(11)
    for _ in range(50):
        path = from_increments(5.0, 0.5, rng.normal(-0.5, 4.0, 40))
        for theta in rng.uniform(0.0, 10.0, 5):
            assert 0.0 <= put.evaluate(path, [theta]) <= 10.0


def _batch_paths():
    paths = [from_increments(0.0, 0.1, simulate_increments(MODEL, SamplingScheme(300, 0.1), seed=s))
             for s in range(4)]
    # ruined part-way through
    paths.append(from_increments(2.0, 0.1, np.r_[np.full(50, 0.2), -30.0, np.ones(49)]))
    return paths


@pytest.mark.parametrize("kwargs", [{}, {"mollified": False}, {"maximize": True}, {"epsilon": 1.5, "c": 0.3}])
def test_evaluate_many_matches_pointwise(kwargs):
    f = dividend(**kwargs)
    rng = np.random.default_rng(3)
    thetas = np.r_[rng.uniform(-10.0, 30.0, 60), [-10.0, 30.0, 7.0, 7.0, 0.0]]
    rng.shuffle(thetas)
    for path in _batch_paths():
        batch = f.evaluate_many(path, thetas[:, None])
        pointwise = np.array([f.evaluate(path, [th]) for th in thetas])
        assert_allclose(batch, pointwise, rtol=0.0, atol=1e-10)


def test_evaluate_many_split_falls_back_to_pointwise(long_path):
    f = dividend(split=True)
    thetas = np.array([[5.0, 8.0], [8.0, 5.0], [-3.0, 20.0]])
    assert_allclose(f.evaluate_many(long_path, thetas), [f.evaluate(long_path, th) for th in thetas],
                    rtol=0.0, atol=1e-12)


def test_evaluate_many_checks_every_theta(long_path):
    f = dividend()
    with pytest.raises(DomainError):
        f.evaluate_many(long_path, [[5.0], [31.0]])
    with pytest.raises(DomainError):
        f.evaluate_many(long_path, [[5.0, 6.0]])
