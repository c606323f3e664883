"""
測試最小對比估計：格點 + 黃金分割 / Nelder-Mead、sandwich 共變異數、可識別性
"""
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from errors import DegeneracyError, NumericError, ParameterError
from estimator import (
    ContrastProblem,
    OptimizerOptions,
    ThetaBox,
    alpha_schedule,
    contrast_scan,
    fit,
    golden_section,
    identifiability_margin,
    minimize_contrast,
    oracle_estimate,
    rate_rn,
    sandwich_covariance,
)
from functionals import DividendFunctional, PathFunctional, TerminalQuadraticFunctional, TerminalValueFunctional
from levy_model import JumpDiffusionModel, SamplingScheme, simulate_increment_matrix, simulate_increments
from quasi import QuasiEnsemble
from stepped_path import from_increments

MODEL = JumpDiffusionModel.from_tuple((20.0, 10.0, 5.0, 3.0, 0.0))


class PathList:
    """A fixed list of paths with the measure protocol."""

    def __init__(self, paths):
        self.paths = list(paths)

    def __len__(self):
        return len(self.paths)

    def iter_paths(self):
        return iter(self.paths)


class Shifted(PathFunctional):
    def __init__(self, base, offset):
        super().__init__()
        self.base = base
        self.offset = offset
        self.dim = base.dim

    def evaluate(self, path, theta):
        return self.base.evaluate(path, theta) + self.offset


class NanFunctional(PathFunctional):
    def evaluate(self, path, theta):
        return math.nan


def atom(total):
    return QuasiEnsemble.identity([1.0, total - 1.0], 0.0, 1.0)


def test_quadratic_single_atom_minimizer():
    problem = ContrastProblem(atom(3.7), TerminalQuadraticFunctional(), ThetaBox([0.0], [10.0]))
    result = minimize_contrast(problem)
    assert abs(result.theta_hat[0] - 3.7) <= 1e-5
    assert result.tolerance_reached
    assert result.contrast_at_min == min(v for _, v in result.trace)


def test_minimizer_clamped_to_box():
    problem = ContrastProblem(atom(3.7), TerminalQuadraticFunctional(), ThetaBox([0.0], [2.0]))
    assert minimize_contrast(problem).theta_hat[0] == 2.0


def test_two_dimensional_nelder_mead():
    box = ThetaBox([0.0, -5.0], [10.0, 5.0])
    problem = ContrastProblem(atom(3.7), TerminalQuadraticFunctional(dim=2), box)
    result = minimize_contrast(problem, OptimizerOptions(grid_points=100))
    assert_allclose(result.theta_hat, [3.7, 3.7], atol=1e-4)
    assert box.contains(result.theta_hat)


def test_singleton_theta_needs_one_evaluation():
    problem = ContrastProblem(atom(3.7), TerminalQuadraticFunctional(), ThetaBox([2.0], [2.0]))
    result = minimize_contrast(problem)
    assert_array_equal(result.theta_hat, [2.0])
    assert len(result.trace) == 1 and result.iterations == 0
    assert result.contrast_at_min == pytest.approx(1.7 ** 2)


@pytest.mark.parametrize("lower, upper", [([1.0], [0.0]), ([], []), ([0.0], [math.inf])])
def test_invalid_theta_box(lower, upper):
    with pytest.raises(ParameterError):
        ThetaBox(lower, upper)


def test_dimension_mismatch_rejected():
    with pytest.raises(ParameterError):
        ContrastProblem(atom(1.0), TerminalQuadraticFunctional(dim=2), ThetaBox([0.0], [1.0]))


def test_invalid_optimizer_options():
    with pytest.raises(ParameterError):
        OptimizerOptions(grid_points=1)
    with pytest.raises(ParameterError):
        OptimizerOptions(theta_tol=0.0)


def test_nan_contrast_raises():
    problem = ContrastProblem(atom(1.0), NanFunctional(), ThetaBox([0.0], [1.0]))
    with pytest.raises(NumericError):
        minimize_contrast(problem)


def test_refinement_never_worse_than_grid():
    inc = simulate_increments(MODEL, SamplingScheme(100, 0.2), seed=3)
    ensemble = QuasiEnsemble.sampled(inc, 0.0, 0.2, 20, seed=4)
    f = DividendFunctional(1.0, 0.5, 1.0, 0.1, -10.0, 30.0, maximize=True)
    opts = OptimizerOptions(grid_points=32)
    result = minimize_contrast(ContrastProblem(ensemble, f, ThetaBox([-10.0], [30.0])), opts)
    grid_values = [v for _, v in result.trace[:32]]
    assert result.contrast_at_min <= min(grid_values)


def test_constant_shift_does_not_move_minimizer():
    box = ThetaBox([0.0], [10.0])
    base = TerminalQuadraticFunctional()
    plain = minimize_contrast(ContrastProblem(atom(3.7), base, box))
    moved = minimize_contrast(ContrastProblem(atom(3.7), Shifted(base, 5.0), box))
    assert_allclose(moved.theta_hat, plain.theta_hat, atol=1e-5)


@pytest.mark.slow
def test_dividend_estimate_matches_dense_grid():
    model = JumpDiffusionModel(u0=0.0, mu=5.0, sigma=2.0, lam=1.0, jump_mean=1.0)
    inc = simulate_increments(model, SamplingScheme(200, 0.25), seed=8)
    ensemble = QuasiEnsemble.sampled(inc, 0.0, 0.25, 50, seed=9)
    f = DividendFunctional(1.0, 1.0, 1.0, 0.1, -10.0, 30.0, maximize=True)
    problem = ContrastProblem(ensemble, f, ThetaBox([-10.0], [30.0]))
    thetas, values = contrast_scan(problem, 401)
    dense_argmin = thetas[int(np.argmin(values))]
    result = fit(problem, covariance=False)
    assert abs(result.theta_hat[0] - dense_argmin) <= 2 * (thetas[1] - thetas[0])
    assert result.contrast_at_min <= values.min() + 1e-12


def test_sandwich_for_quadratic_loss():
    paths = PathList([from_increments(0.0, 1.0, [1.5]), from_increments(0.0, 1.0, [2.5])])
    problem = ContrastProblem(paths, TerminalQuadraticFunctional(), ThetaBox([0.0], [5.0]))
    # V = 2, J = mean of (2 (theta - x_T))^2 = 1
    assert_allclose(sandwich_covariance(problem, [2.0]), [[0.25]])


def test_sandwich_zero_for_single_atom():
    problem = ContrastProblem(atom(3.0), TerminalQuadraticFunctional(), ThetaBox([0.0], [5.0]))
    assert_allclose(sandwich_covariance(problem, [3.0]), [[0.0]])


def test_sandwich_two_dimensional_is_symmetric():
    paths = PathList([from_increments(0.0, 1.0, [x]) for x in (0.5, 1.0, 2.5)])
    problem = ContrastProblem(paths, TerminalQuadraticFunctional(dim=2), ThetaBox([0.0, 0.0], [5.0, 5.0]))
    sigma = sandwich_covariance(problem, [1.0, 2.0])
    assert_allclose(sigma, sigma.T)
    gaps = np.array([[1.0 - x, 2.0 - x] for x in (0.5, 1.0, 2.5)])
    assert_allclose(sigma, gaps.T @ gaps / 3.0)


def test_degenerate_hessian():
    problem = ContrastProblem(atom(1.0), TerminalValueFunctional(), ThetaBox([0.0], [1.0]))
    with pytest.raises(DegeneracyError) as info:
        sandwich_covariance(problem, [0.5])
    assert_array_equal(info.value.matrix, [[0.0]])
    assert fit(problem).sigma_hat is None


def test_oracle_with_one_path_matches_identity_ensemble():
    scheme = SamplingScheme(30, 0.1)
    f = TerminalQuadraticFunctional()
    box = ThetaBox([-50.0], [50.0])
    oracle = oracle_estimate(MODEL, scheme, f, box, B=1, seed=12)
    increments = simulate_increment_matrix(MODEL, scheme, 1, (12, 0))[0]
    quasi = minimize_contrast(ContrastProblem(QuasiEnsemble.identity(increments, MODEL.u0, scheme.h), f, box))
    assert_array_equal(oracle.theta_hat, quasi.theta_hat)


def test_oracle_for_deterministic_model_ignores_b():
    model = JumpDiffusionModel(u0=1.0, mu=2.0)
    scheme = SamplingScheme(10, 0.5)
    box = ThetaBox([0.0], [20.0])
    f = TerminalQuadraticFunctional()
    one = oracle_estimate(model, scheme, f, box, B=1, seed=0)
    many = oracle_estimate(model, scheme, f, box, B=25, seed=5)
    assert_allclose(one.theta_hat, [11.0], atol=1e-5)
    assert_allclose(many.theta_hat, one.theta_hat, atol=1e-5)
    with pytest.raises(ParameterError):
        oracle_estimate(model, scheme, f, box, B=0, seed=0)


def test_rate_and_alpha_schedule():
    assert rate_rn(10_000, 0.5) == pytest.approx(10_000 ** (1 / 3))
    assert alpha_schedule(10_000, 0.5) == 151
    assert alpha_schedule(1, 0.5) == 1
    assert alpha_schedule(10 ** 5, 0.5) >= alpha_schedule(10 ** 4, 0.5)


def test_identifiability_margin():
    thetas = np.linspace(-5.0, 5.0, 101)
    parabola = identifiability_margin(thetas, (thetas - 1.0) ** 2)
    assert parabola.ok and parabola.argmin == pytest.approx(1.0)
    double_well = identifiability_margin(thetas, (thetas ** 2 - 4.0) ** 2)
    assert not double_well.ok
    with pytest.raises(ParameterError):
        identifiability_margin([0.0, 1.0], [1.0, 0.0])


def test_golden_section():
    x, fx, reached = golden_section(lambda s: (s - 1.0) ** 2, 0.0, 3.0, tol=1e-8)
    assert reached and abs(x - 1.0) < 1e-7 and fx < 1e-14
    _, _, reached = golden_section(lambda s: (s - 1.0) ** 2, 0.0, 3.0, tol=1e-8, max_iter=2)
    assert not reached


def test_result_json_keys():
    result = fit(ContrastProblem(atom(3.0), TerminalQuadraticFunctional(), ThetaBox([0.0], [5.0])))
    payload = json.loads(result.to_json())
    assert set(payload) == {"theta_hat", "contrast_at_min", "sigma_hat", "trace", "tolerance_reached", "iterations"}
    assert payload["sigma_hat"][0][0] == pytest.approx(0.0, abs=1e-9)
    assert payload["trace"][0].keys() == {"theta", "contrast"}


def test_oracle_does_not_depend_on_jobs():
    scheme = SamplingScheme(40, 0.1)
    f = DividendFunctional(1.0, 0.5, 1.0, 0.1, -10.0, 30.0, maximize=True)
    box = ThetaBox([-10.0], [30.0])
    serial = oracle_estimate(MODEL, scheme, f, box, B=2500, seed=3)
    pooled = oracle_estimate(MODEL, scheme, f, box, B=2500, seed=3, jobs=2)
    assert_array_equal(pooled.theta_hat, serial.theta_hat)
    assert pooled.contrast_at_min == serial.contrast_at_min


def test_contrast_uses_the_batch_path():
    paths = PathList([from_increments(0.0, 0.1, simulate_increments(MODEL, SamplingScheme(50, 0.1), seed=s))
                      for s in range(5)])
    f = DividendFunctional(1.0, 0.1, 1.0, 0.1, -10.0, 30.0)
    problem = ContrastProblem(paths, f, ThetaBox([-10.0], [30.0]))
    for theta in (-4.0, 6.5, 22.0):
        expected = np.mean([f.evaluate(p, [theta]) for p in paths.iter_paths()])
        assert problem.contrast([theta]) == pytest.approx(expected, rel=1e-12, abs=1e-12)
