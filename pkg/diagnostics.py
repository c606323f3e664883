"""
Diagnostics
比較 quasi-process 與真實路徑的邊際分布、L^p 距離與泛函的 Lipschitz 性質
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import integrate, stats

from errors import ParameterError
from functionals import DividendFunctional
from levy_model import SamplingScheme, simulate_increment_matrix
from quasi import QuasiEnsemble, SimulatedMeasure, sample_permutation_set
from stepped_path import from_increments, grid_index, ruin_time, sup_distance

logger = logging.getLogger(__name__)

KDE_GRID_POINTS = 1024
KDE_SPAN = 6.0


@dataclass(frozen=True)
class SampleSummary:
    samples: np.ndarray = field(repr=False)
    mean: float
    variance: float

    @classmethod
    def from_samples(cls, samples):
        samples = _as_sample(samples, "samples")
        variance = float(np.var(samples, ddof=1)) if samples.size > 1 else 0.0
        return cls(samples, float(np.mean(samples)), max(variance, 0.0))

    @property
    def ecdf(self):
        """scipy ECDF; `summary.ecdf.cdf.evaluate(x)` gives F-hat(x)."""
        return stats.ecdf(self.samples)


def _as_sample(values, name, minimum=1):
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size < minimum:
        raise ParameterError(f"{name} needs at least {minimum} values, got {values.size}")
    return values


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|."""
    a = _as_sample(a, "first sample")
    b = _as_sample(b, "second sample")
    return float(stats.ks_2samp(a, b).statistic)


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self):
        return float(integrate.trapezoid(self.density, self.grid))

    def to_frame(self):
        return pd.DataFrame({"x": self.grid, "density": self.density})


def kde(samples, bw_method="silverman", points=KDE_GRID_POINTS):
    """
    Gaussian kernel density estimate on a grid spanning the sample range
    +- 6 bandwidths.

    Args:
        samples: at least 2 reals, not all equal
        bw_method: scipy bandwidth rule or scalar factor
        points: grid size
    """
    samples = _as_sample(samples, "kde samples", minimum=2)
    if np.ptp(samples) == 0:
        raise ParameterError("kde needs samples that are not all equal")
    estimator = stats.gaussian_kde(samples, bw_method=bw_method)
    bandwidth = float(np.sqrt(estimator.covariance[0, 0]))
    grid = np.linspace(samples.min() - KDE_SPAN * bandwidth, samples.max() + KDE_SPAN * bandwidth, points)
    return KdeCurve(grid, estimator(grid), bandwidth)


def _spawn(seed, count):
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(
        [int(s) for s in seed] if isinstance(seed, (tuple, list)) else int(seed))
    return base.spawn(count)


def _values_after(u, block, k, n):
    """X at t_k for every row of an increment block holding the first k increments."""
    if k == 0:
        return np.full(len(block), float(u))
    if k == n:
        return np.array([math.fsum([u, *row.tolist()]) for row in block])
    return u + block.sum(axis=1)


def quasi_and_oracle_marginals(model, scheme, t, alpha, oracle_B, seed):
    """
    Marginal samples at t: alpha quasi-path values built from one observed
    path, and oracle_B independent true values.
    """
    if t > scheme.T * (1 + 1e-12):
        raise ParameterError(f"t={t} beyond the scheme horizon {scheme.T}")
    observed_seq, perm_seq, oracle_seq = _spawn(seed, 3)
    increments = simulate_increment_matrix(model, scheme, 1, observed_seq)[0]
    ensemble = QuasiEnsemble.sampled(increments, model.u0, scheme.h, alpha, perm_seq)
    k = grid_index(ensemble.observed_path(), t)
    quasi_values = ensemble.values_at_index(k)
    if k == 0:
        oracle_values = np.full(int(oracle_B), float(model.u0))
    else:
        block = simulate_increment_matrix(model, SamplingScheme(k, scheme.h), oracle_B, oracle_seq)
        oracle_values = _values_after(model.u0, block, k, scheme.n)
    return quasi_values, oracle_values


def quasi_marginal_distance(model, scheme, t, alpha, oracle_B, seed):
    """KS distance between quasi-process and true marginals at time t."""
    quasi_values, oracle_values = quasi_and_oracle_marginals(model, scheme, t, alpha, oracle_B, seed)
    distance = ks_statistic(quasi_values, oracle_values)
    logger.debug("marginal KS at t=%g (n=%d, h=%g): %.4f", t, scheme.n, scheme.h, distance)
    return distance


def quasi_ruin_time_distance(model, scheme, xi, alpha, oracle_B, seed):
    """KS distance between ruin-time samples of quasi-paths and true paths."""
    observed_seq, perm_seq, oracle_seq = _spawn(seed, 3)
    increments = simulate_increment_matrix(model, scheme, 1, observed_seq)[0]
    ensemble = QuasiEnsemble.sampled(increments, model.u0, scheme.h, alpha, perm_seq)
    quasi_times = [ruin_time(p, xi) for p in ensemble.iter_paths()]
    oracle = SimulatedMeasure(model, scheme, int(oracle_B), oracle_seq.generate_state(1)[0])
    oracle_times = [ruin_time(p, xi) for p in oracle.iter_paths()]
    return ks_statistic(quasi_times, oracle_times)


def lp_increment_distance(model, scheme, k, p, replications, seed):
    """
    Monte-Carlo E[|X-hat_{t_k} - X_{t_k}|^p]^(1/p).

    Every replication draws fresh increments and a fresh permutation; the
    quasi value and the true value share those increments. Both sums are
    exactly rounded, so the terminal index gives 0 exactly.
    """
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if not 0 <= k <= scheme.n:
        raise ParameterError(f"grid index {k} out of range [0, {scheme.n}]")
    if replications < 1:
        raise ParameterError(f"need at least one replication, got {replications}")
    increment_seq, perm_seq = _spawn(seed, 2)
    block = simulate_increment_matrix(model, scheme, replications, increment_seq)
    perms = sample_permutation_set(scheme.n, int(replications), perm_seq)
    gaps = np.array([
        math.fsum(row[perm[:k]].tolist()) - math.fsum(row[:k].tolist())
        for row, perm in zip(block, perms)
    ])
    return float(np.mean(np.abs(gaps) ** p) ** (1.0 / p))


def exact_l2_increment_distance(model, scheme, k):
    """
    Closed-form L^2 distance: E[(X-hat_{t_k} - X_{t_k})^2] = 2 k Var(Delta) (1 - k/n).

    The k quasi increments share a hypergeometric number of indices with the
    first k true ones; only the unshared ones contribute.
    """
    if not 0 <= k <= scheme.n:
        raise ParameterError(f"grid index {k} out of range [0, {scheme.n}]")
    var_delta = model.increment_variance_rate() * scheme.h
    return math.sqrt(2.0 * k * var_delta * (1.0 - k / scheme.n))


def fit_decay_rate(ns, distances):
    """Least-squares slope of log(distance) against log(n); reported, not asserted."""
    ns = np.asarray(ns, dtype=float)
    distances = np.asarray(distances, dtype=float)
    keep = distances > 0
    if keep.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(ns[keep]), np.log(distances[keep]), 1)
    return float(slope)


def lipschitz_ratio(f, x, y, theta):
    """
    |h(x) - h(y)| / (|tau^x - tau^y| + ||x - y||_T) for one pair of paths.

    The uniform distance bounds the Skorokhod distance from above.
    """
    numerator = abs(f.evaluate(x, theta) - f.evaluate(y, theta))
    denominator = abs(ruin_time(x, f.xi) - ruin_time(y, f.xi)) + sup_distance(x, y)
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    return numerator / denominator


def calibrate_lipschitz_constant(ratios, safety=2.0):
    """Constant C fitted on a calibration set: safety * max ratio."""
    ratios = _as_sample(ratios, "lipschitz ratios")
    if not safety >= 1:
        raise ParameterError(f"safety factor must be >= 1, got {safety}")
    return safety * float(np.max(ratios))


def moment_zscores(samples, mean, variance):
    """
    Standardized errors of the sample mean and sample variance against
    exact values (variance error uses the sample fourth central moment).
    """
    samples = _as_sample(samples, "samples", minimum=2)
    n = samples.size
    centred = samples - samples.mean()
    m4 = float(np.mean(centred ** 4))
    sample_var = float(np.var(samples, ddof=1))
    z_mean = (float(samples.mean()) - mean) / math.sqrt(variance / n) if variance > 0 else 0.0
    spread = math.sqrt(max(m4 - sample_var ** 2, 0.0) / n)
    z_var = (sample_var - variance) / spread if spread > 0 else 0.0
    return z_mean, z_var


def normality_shape(estimates):
    """
    QQ correlation against normal quantiles and sample skewness of
    (estimate - median) / MAD.

    Returns:
        (qq_correlation, skewness)
    """
    estimates = _as_sample(estimates, "estimates", minimum=3)
    scale = stats.median_abs_deviation(estimates, scale="normal")
    if scale == 0:
        return math.nan, math.nan
    standardized = (estimates - np.median(estimates)) / scale
    (_, _), (_, _, r) = stats.probplot(standardized, dist="norm")
    return float(r), float(stats.skew(standardized))


def quadrature_reference(f, path, theta, tol=1e-13):
    """
    Discounted loss by adaptive quadrature on every segment up to tau ^ T:
    an independent reference for DiscountedLossFunctional.evaluate.
    """
    theta = f.check_theta(theta)
    end = f.end_time(path)
    knots = f.kernel.time_window(theta)
    times = path.times()
    pieces = []
    for k in range(path.n):
        a, b = float(times[k]), min(float(times[k + 1]), end)
        if a >= b:
            break
        x = float(path.values[k])
        breaks = [p for p in knots if a < p < b]
        value, _ = integrate.quad(
            lambda t: math.exp(-f.r * t) * float(f.kernel.evaluate(t, x, theta)),
            a, b, epsabs=tol, epsrel=tol, limit=200, points=breaks or None,
        )
        pieces.append(value)
    return math.fsum(pieces)


def derivative_error(f, path, theta, step=1e-5):
    """
    Largest relative error (unit floor) of the analytic gradient and Hessian
    against central finite differences.
    """
    def rel(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)))

    theta = np.asarray(theta, dtype=float)
    d = f.dim
    fd_grad = np.empty(d)
    fd_hess = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        fd_grad[i] = (f.evaluate(path, theta + e) - f.evaluate(path, theta - e)) / (2 * step)
        fd_hess[:, i] = (f.gradient(path, theta + e) - f.gradient(path, theta - e)) / (2 * step)
    return max(rel(f.gradient(path, theta), fd_grad), rel(f.hessian(path, theta), fd_hess))


def random_dividend_case(rng):
    """Random small step path, mollified dividend functional and theta inside Theta."""
    n = int(rng.integers(4, 12))
    h = float(rng.uniform(0.2, 1.0))
    path = from_increments(0.0, h, rng.normal(0.3, 1.5, n))
    epsilon = float(rng.uniform(0.05, 0.5))
    split = bool(rng.integers(0, 2))
    f = DividendFunctional(alpha=float(rng.uniform(0.5, 2.0)), epsilon=epsilon, c=float(rng.uniform(0.5, 2.0)),
                           r=float(rng.uniform(0.05, 0.5)), xi=-3.0, theta_max=3.0, split=split)
    theta = rng.uniform(-2.5, 2.5, f.dim)
    return f, path, theta
