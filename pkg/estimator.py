"""
Minimum contrast estimation
Minimize theta -> P_n h_theta over a box Theta and estimate the sandwich covariance
V^{-1} J V^{-1} of the estimator.
"""
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize

from errors import DegeneracyError, NumericError, ParameterError
from quasi import SimulatedMeasure, empirical_contrast_batch

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class ThetaBox:
    """Axis-aligned compact box [lower, upper] in R^d."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1 or lower.size == 0:
            raise ParameterError(f"bounds must be matching 1-d arrays, got {lower.shape} and {upper.shape}")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ParameterError("Theta must have finite bounds")
        if np.any(lower > upper):
            raise ParameterError(f"empty Theta: lower {lower.tolist()} > upper {upper.tolist()}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1])

    @property
    def dim(self):
        return self.lower.size

    @property
    def is_point(self):
        return bool(np.all(self.lower == self.upper))

    def contains(self, theta):
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))

    def clip(self, theta):
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def axis_grids(self, points):
        """Per-axis grids; a degenerate axis gets its single value."""
        return [np.array([lo]) if lo == hi else np.linspace(lo, hi, points)
                for lo, hi in zip(self.lower, self.upper)]

    def grid(self, points):
        """Lexicographic product grid, shape (m, d)."""
        return np.array(list(itertools.product(*self.axis_grids(points))), dtype=float)

    def to_pairs(self):
        return [[float(lo), float(hi)] for lo, hi in zip(self.lower, self.upper)]


@dataclass(frozen=True)
class OptimizerOptions:
    grid_points: int = 64
    theta_tol: float = 1e-6
    max_iter: int = 2000

    def __post_init__(self):
        if self.grid_points < 2:
            raise ParameterError(f"grid_points must be >= 2, got {self.grid_points}")
        if not self.theta_tol > 0:
            raise ParameterError(f"theta_tol must be > 0, got {self.theta_tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")

    def points_per_axis(self, d):
        return self.grid_points if d == 1 else max(3, int(round(self.grid_points ** (1.0 / d))))


@dataclass(frozen=True)
class ContrastProblem:
    """
    argmin over Theta of the empirical contrast of `functional` under `measure`.

    Every contrast value goes through the chunked batch sum, so grid scans,
    refinement steps and any `jobs` setting see the same numbers.
    """
    measure: object
    functional: object
    theta_domain: ThetaBox
    jobs: int = 1

    def __post_init__(self):
        if self.functional.dim != self.theta_domain.dim:
            raise ParameterError(
                f"functional dimension {self.functional.dim} != Theta dimension {self.theta_domain.dim}")

    def contrast(self, theta):
        return float(self.contrast_batch(np.asarray(theta, dtype=float)[None, :])[0])

    def contrast_batch(self, thetas):
        return empirical_contrast_batch(self.measure, self.functional, thetas, jobs=self.jobs)


@dataclass
class EstimatorResult:
    theta_hat: np.ndarray
    contrast_at_min: float
    sigma_hat: Optional[np.ndarray] = None
    trace: List[Tuple[np.ndarray, float]] = field(default_factory=list)
    tolerance_reached: bool = False
    iterations: int = 0

    def to_dict(self):
        return {
            "theta_hat": np.asarray(self.theta_hat).tolist(),
            "contrast_at_min": float(self.contrast_at_min),
            "sigma_hat": None if self.sigma_hat is None else np.asarray(self.sigma_hat).tolist(),
            "trace": [{"theta": np.asarray(t).tolist(), "contrast": float(v)} for t, v in self.trace],
            "tolerance_reached": bool(self.tolerance_reached),
            "iterations": int(self.iterations),
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, ensure_ascii=False)


class _TracedContrast:
    """Contrast evaluator that records every (theta, value) and rejects NaN."""

    def __init__(self, problem):
        self.problem = problem
        self.trace = []

    def _record(self, theta, value):
        if math.isnan(value):
            raise NumericError(f"contrast is NaN at theta={np.asarray(theta).tolist()}", theta=theta)
        self.trace.append((np.array(theta, dtype=float), float(value)))
        return float(value)

    def __call__(self, theta):
        theta = self.problem.theta_domain.clip(theta)
        return self._record(theta, self.problem.contrast(theta))

    def batch(self, thetas):
        values = self.problem.contrast_batch(thetas)
        return np.array([self._record(t, v) for t, v in zip(thetas, values)])

    def best(self):
        # first minimum wins: grid points come first, in lexicographic order
        i = int(np.argmin([v for _, v in self.trace]))
        return self.trace[i]


def golden_section(f, a, b, tol=1e-6, max_iter=200):
    """
    Golden-section search for a minimum of f on [a, b].

    Returns:
        (x, f(x), tolerance_reached)
    """
    dist = b - a
    if dist <= tol:
        x = 0.5 * (a + b)
        return x, f(x), True

    c = b - INV_PHI * dist
    d = a + INV_PHI * dist
    yc, yd = f(c), f(d)
    iterations = 0
    while b - a > tol and iterations < max_iter:
        if yc <= yd:
            b, d, yd = d, c, yc
            c = b - INV_PHI * (b - a)
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            d = a + INV_PHI * (b - a)
            yd = f(d)
        iterations += 1
    x, y = (c, yc) if yc <= yd else (d, yd)
    return x, y, b - a <= tol


def _initial_simplex(x0, box, steps):
    vertices = [x0]
    for i, step in enumerate(steps):
        v = x0.copy()
        if v[i] + step > box.upper[i]:
            step = -step
        v[i] = np.clip(v[i] + step, box.lower[i], box.upper[i])
        vertices.append(v)
    return np.array(vertices)


def minimize_contrast(problem, opts=None):
    """
    Coarse grid scan, then refinement: golden section on the best bracket for
    d = 1, Nelder-Mead from the best grid point for d >= 2.

    Returns:
        EstimatorResult with the argmin over every evaluation made
    """
    opts = opts or OptimizerOptions()
    box = problem.theta_domain
    traced = _TracedContrast(problem)

    if box.is_point:
        traced(box.lower)
        theta, value = traced.best()
        return EstimatorResult(theta, value, trace=traced.trace, tolerance_reached=True, iterations=0)

    d = box.dim
    axes = box.axis_grids(opts.points_per_axis(d))
    grid = np.array(list(itertools.product(*axes)), dtype=float)
    logger.debug("Step 1: scanning %d grid points", len(grid))
    values = traced.batch(grid)
    i = int(np.argmin(values))

    if d == 1:
        axis = axes[0]
        lo = axis[max(i - 1, 0)]
        hi = axis[min(i + 1, len(axis) - 1)]
        logger.debug("Step 2: golden section on [%g, %g]", lo, hi)
        _, _, reached = golden_section(lambda s: traced(np.array([s])), lo, hi,
                                       tol=opts.theta_tol, max_iter=opts.max_iter)
        iterations = len(traced.trace) - len(grid)
    else:
        steps = np.array([ax[1] - ax[0] if len(ax) > 1 else 0.0 for ax in axes])
        simplex = _initial_simplex(grid[i].copy(), box, steps)
        logger.debug("Step 2: Nelder-Mead from %s", grid[i].tolist())
        res = optimize.minimize(
            traced, grid[i], method="Nelder-Mead",
            bounds=list(zip(box.lower, box.upper)),
            options={"xatol": opts.theta_tol, "fatol": np.inf, "maxiter": opts.max_iter,
                     "initial_simplex": simplex},
        )
        reached = bool(res.success)
        iterations = int(res.nit)

    theta, value = traced.best()
    if not reached:
        logger.warning("optimizer stopped before reaching theta tolerance %g", opts.theta_tol)
    return EstimatorResult(box.clip(theta), value, trace=traced.trace,
                           tolerance_reached=reached, iterations=iterations)


def sandwich_covariance(problem, theta_hat):
    """
    Plug-in V^{-1} J V^{-1} with V = P_n Hess h, J = P_n grad h grad h^T.

    Raises:
        DegeneracyError: cond(V) > 1e12 (the error carries V)
    """
    f = problem.functional
    theta = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    hessians, outers = [], []
    for path in problem.measure.iter_paths():
        g = np.atleast_1d(f.gradient(path, theta))
        hessians.append(np.atleast_2d(f.hessian(path, theta)))
        outers.append(np.outer(g, g))
    v_hat = fixed_order_mean_matrix(hessians)
    j_hat = fixed_order_mean_matrix(outers)
    cond = np.linalg.cond(v_hat)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise DegeneracyError(f"plug-in Hessian is singular (condition number {cond:.3g})", matrix=v_hat)
    left = np.linalg.solve(v_hat, j_hat)
    sigma = np.linalg.solve(v_hat.T, left.T).T
    return 0.5 * (sigma + sigma.T)


def fixed_order_mean_matrix(mats):
    stacked = np.stack(mats)
    return np.sum(stacked, axis=0) / len(mats)


def fit(problem, opts=None, covariance=True):
    """minimize_contrast plus the sandwich covariance when the functional allows it."""
    result = minimize_contrast(problem, opts)
    if covariance and getattr(problem.functional, "differentiable", False):
        try:
            result.sigma_hat = sandwich_covariance(problem, result.theta_hat)
        except DegeneracyError as e:
            logger.warning("no sandwich covariance: %s", e)
    return result


def oracle_estimate(model, scheme, functional, theta_domain, B, seed, opts=None, covariance=False, jobs=1):
    """
    The same minimization under the empirical measure of B independent true
    paths: the Monte-Carlo reference for theta_0.
    """
    if B < 1:
        raise ParameterError(f"oracle needs B >= 1 paths, got {B}")
    measure = SimulatedMeasure(model, scheme, int(B), seed)
    problem = ContrastProblem(measure, functional, theta_domain, jobs=jobs)
    logger.info("[ORACLE] B=%d paths, n=%d, h=%g", B, scheme.n, scheme.h)
    return fit(problem, opts, covariance=covariance)


def rate_rn(n, beta, d=1):
    """r_n = n^(beta / p) with p = d + 0.5."""
    return float(n) ** (beta / (d + 0.5))


def alpha_schedule(n, beta, d=1):
    """alpha_n = floor(r_n^2 / log r_n), at least 1 (log floored at 1 for small r_n)."""
    r = rate_rn(n, beta, d)
    return max(1, int(math.floor(r * r / max(math.log(r), 1.0))))


@dataclass(frozen=True)
class MarginReport:
    argmin: float
    margin: float
    noise: float
    ok: bool


def identifiability_margin(thetas, contrasts, exclusion_radius=None, noise_factor=3.0):
    """
    Check that a scanned 1-d contrast has a unique, well separated minimizer.

    margin = min contrast farther than `exclusion_radius` from the argmin minus
    the global min; noise = median |second difference| of the scan.
    """
    thetas = np.asarray(thetas, dtype=float).reshape(-1)
    contrasts = np.asarray(contrasts, dtype=float).reshape(-1)
    if len(thetas) < 3:
        raise ParameterError("identifiability check needs at least 3 grid points")
    spacing = float(np.min(np.diff(thetas)))
    radius = 5.0 * spacing if exclusion_radius is None else float(exclusion_radius)
    i = int(np.argmin(contrasts))
    far = np.abs(thetas - thetas[i]) > radius
    noise = float(np.median(np.abs(np.diff(contrasts, n=2))))
    if not np.any(far):
        return MarginReport(float(thetas[i]), math.inf, noise, True)
    margin = float(np.min(contrasts[far]) - contrasts[i])
    return MarginReport(float(thetas[i]), margin, noise, margin > noise_factor * noise)


def contrast_scan(problem, points):
    """Contrast on a uniform 1-d grid of `points` over Theta (thetas, values)."""
    thetas = problem.theta_domain.grid(points)
    return thetas[:, 0], problem.contrast_batch(thetas)
