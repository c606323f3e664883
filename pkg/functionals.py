"""
Path functionals
theta-parameterized evaluators h_theta(path) with analytic theta-derivatives.

The main family is the discounted loss up to default

    h_theta(x) = integral_0^{tau^x} exp(-r t) U_theta(t, x_t) dt,
    tau^x = inf{t : x_t < xi} ^ T,

integrated exactly segment by segment on step paths. Dividends paid up to
ruin are the worked example; the indicators in the dividend kernel are
replaced by a C^2 quintic mollifier so that gradients and Hessians exist.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from errors import DomainError, ParameterError, UnsupportedOperationError
from stepped_path import ruin_index, ruin_time, value_at

logger = logging.getLogger(__name__)

QUADRATURE_ORDER = 8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(QUADRATURE_ORDER)
_THETA_TOL = 1e-12


@dataclass(frozen=True)
class MollifierValues:
    value: np.ndarray
    du: np.ndarray
    dz: np.ndarray
    duu: np.ndarray
    duz: np.ndarray
    dzz: np.ndarray


@dataclass(frozen=True)
class Mollifier:
    """
    phi_eps(u, z): 0 for u <= z - eps, 1 for u >= z + eps, quintic smoothstep
    6s^5 - 15s^4 + 10s^3 in s = (u - z + eps) / (2 eps) between.
    """
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"mollifier epsilon must be > 0, got {self.epsilon}")

    def _s(self, u, z):
        return np.clip((np.asarray(u, dtype=float) - z + self.epsilon) / (2.0 * self.epsilon), 0.0, 1.0)

    def value(self, u, z):
        s = self._s(u, z)
        return s ** 3 * (s * (6.0 * s - 15.0) + 10.0)

    def slope(self, u, z):
        """d phi / du (= -d phi / dz)."""
        s = self._s(u, z)
        return 30.0 * s ** 2 * (1.0 - s) ** 2 / (2.0 * self.epsilon)

    def curvature(self, u, z):
        """d^2 phi / du^2 (= d^2 phi / dz^2 = -d^2 phi / du dz)."""
        s = self._s(u, z)
        return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (4.0 * self.epsilon ** 2)


def mollifier_eval(phi, u, z):
    """Value and all first and second partials of phi_eps at (u, z)."""
    slope = phi.slope(u, z)
    curv = phi.curvature(u, z)
    return MollifierValues(phi.value(u, z), slope, -slope, curv, -curv, curv)


# ---------------------------------------------------------------------------
# Payoff kernels U_theta(t, x)
# ---------------------------------------------------------------------------

class PayoffKernel:
    """
    U_theta(t, x) with theta-derivatives.

    `time_window(theta)` returns (flat_end, support_end): U does not depend on
    t before flat_end and vanishes from support_end on.
    """
    dim = 1
    differentiable = True
    sup_abs = 1.0

    def time_window(self, theta):
        return math.inf, math.inf

    def evaluate(self, t, x, theta, order=0):
        raise NotImplementedError


class ConstantKernel(PayoffKernel):
    """U_theta(t, x) = level for every theta."""

    def __init__(self, level=1.0, dim=1):
        self.level = float(level)
        self.dim = int(dim)
        self.sup_abs = abs(self.level)

    def evaluate(self, t, x, theta, order=0):
        shape = np.broadcast(np.asarray(t), np.asarray(x)).shape
        if order == 0:
            return np.full(shape, self.level)
        return np.zeros(shape + (self.dim,) * order)


class DividendKernel(PayoffKernel):
    """
    alpha * phi_eps(x, theta) * phi_eps(theta, t / c): dividend alpha paid while
    the surplus is above theta, up to maturity g(theta) = c * theta.

    With mollified=False the raw indicators 1{x >= theta} 1{t <= c theta} are
    used (value only). `scale` carries the sign: -alpha for a maximized payout.
    """

    def __init__(self, alpha, epsilon, c=1.0, mollified=True, scale=None):
        if not alpha > 0:
            raise ParameterError(f"dividend rate must be > 0, got {alpha}")
        if not c > 0:
            raise ParameterError(f"maturity slope c must be > 0, got {c}")
        self.alpha = float(alpha)
        self.c = float(c)
        self.mollified = bool(mollified)
        self.differentiable = self.mollified
        self.phi = Mollifier(epsilon)
        self.scale = self.alpha if scale is None else float(scale)
        self.sup_abs = abs(self.scale)

    def _thresholds(self, theta):
        return float(theta[0]), float(theta[0])

    def time_window(self, theta):
        _, maturity = self._thresholds(theta)
        if not self.mollified:
            end = max(0.0, self.c * maturity)
            return end, end
        eps = self.phi.epsilon
        return max(0.0, self.c * (maturity - eps)), max(0.0, self.c * (maturity + eps))

    def _factors(self, t, x, theta):
        level, maturity = self._thresholds(theta)
        a = mollifier_eval(self.phi, x, level)
        b = mollifier_eval(self.phi, maturity, np.asarray(t, dtype=float) / self.c)
        return a, b

    def evaluate(self, t, x, theta, order=0):
        if not self.mollified:
            if order:
                raise UnsupportedOperationError("raw indicator dividend kernel has no theta-derivative")
            level, maturity = self._thresholds(theta)
            x = np.asarray(x, dtype=float)
            t = np.asarray(t, dtype=float)
            return self.scale * (x >= level) * (t <= self.c * maturity)
        a, b = self._factors(t, x, theta)
        if order == 0:
            return self.scale * a.value * b.value
        if order == 1:
            return (self.scale * (a.dz * b.value + a.value * b.du))[..., None]
        return (self.scale * (a.dzz * b.value + 2.0 * a.dz * b.du + a.value * b.duu))[..., None, None]


class SplitDividendKernel(DividendKernel):
    """
    Two-parameter dividend: theta = (threshold, maturity level),
    alpha * phi_eps(x, theta_1) * phi_eps(theta_2, t / c).
    """
    dim = 2

    def _thresholds(self, theta):
        return float(theta[0]), float(theta[1])

    def evaluate(self, t, x, theta, order=0):
        if not self.mollified or order == 0:
            return super().evaluate(t, x, theta, order)
        a, b = self._factors(t, x, theta)
        if order == 1:
            return self.scale * np.stack([a.dz * b.value, a.value * b.du], axis=-1)
        cross = a.dz * b.du
        row0 = np.stack([a.dzz * b.value, cross], axis=-1)
        row1 = np.stack([cross, a.value * b.duu], axis=-1)
        return self.scale * np.stack([row0, row1], axis=-2)


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

class PathFunctional:
    """
    Base class: h_theta(path) for theta in a box Theta of dimension `dim`.
    """
    dim = 1
    differentiable = False

    def __init__(self, theta_bounds=None):
        self.theta_bounds = None
        if theta_bounds is not None:
            lower, upper = (np.atleast_1d(np.asarray(b, dtype=float)) for b in theta_bounds)
            self.theta_bounds = (lower, upper)

    def check_theta(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,):
            raise DomainError(f"theta must have {self.dim} components, got shape {theta.shape}")
        if self.theta_bounds is not None:
            lower, upper = self.theta_bounds
            if np.any(theta < lower - _THETA_TOL) or np.any(theta > upper + _THETA_TOL):
                raise DomainError(f"theta={theta.tolist()} outside [{lower.tolist()}, {upper.tolist()}]")
        return theta

    def check_thetas(self, thetas):
        """check_theta for a (m, dim) batch in one pass."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.dim:
            raise DomainError(f"theta must have {self.dim} components, got shape {thetas.shape[1:]}")
        if self.theta_bounds is not None:
            lower, upper = self.theta_bounds
            outside = np.any(thetas < lower - _THETA_TOL, axis=1) | np.any(thetas > upper + _THETA_TOL, axis=1)
            if np.any(outside):
                bad = thetas[np.argmax(outside)]
                raise DomainError(f"theta={bad.tolist()} outside [{lower.tolist()}, {upper.tolist()}]")
        return thetas

    def evaluate(self, path, theta):
        raise NotImplementedError

    def evaluate_many(self, path, thetas):
        return np.array([self.evaluate(path, th) for th in np.atleast_2d(thetas)])

    def gradient(self, path, theta):
        raise UnsupportedOperationError(f"{type(self).__name__} has no theta-gradient")

    def hessian(self, path, theta):
        raise UnsupportedOperationError(f"{type(self).__name__} has no theta-Hessian")

    def tail_bound(self, horizon):
        """Bound on what truncating an infinite horizon at `horizon` can drop."""
        return 0.0


class DiscountedLossFunctional(PathFunctional):
    """
    h_theta(x) = integral_0^{tau^x} exp(-r t) U_theta(t, x_t) dt.

    Segments where U does not depend on t integrate in closed form; the rest
    use 8-point Gauss-Legendre per segment. `horizon` (default: the path's T)
    caps the integral; it must not exceed the path horizon.
    """

    def __init__(self, r, xi, kernel, horizon=None, theta_bounds=None):
        super().__init__(theta_bounds)
        if not r > 0:
            raise ParameterError(f"discount rate must be > 0, got {r}")
        if horizon is not None and not horizon > 0:
            raise ParameterError(f"horizon must be > 0, got {horizon}")
        self.r = float(r)
        self.xi = float(xi)
        self.kernel = kernel
        self.horizon = horizon
        self.dim = kernel.dim
        self.differentiable = kernel.differentiable

    def end_time(self, path):
        """tau^x capped at the functional horizon."""
        if self.horizon is None:
            cap = path.T
        elif self.horizon > path.T * (1 + 1e-12):
            raise DomainError(f"functional horizon {self.horizon} exceeds path horizon {path.T}")
        else:
            cap = self.horizon
        return min(ruin_time(path, self.xi), cap)

    def segments(self, path):
        """
        The theta-free part of the integral: segment starts a, ends b and
        values x for every segment that starts before tau ^ horizon.

        Returns:
            (end, a, b, x)
        """
        end = self.end_time(path)
        times = path.times()
        m = int(np.searchsorted(times, end, side="left"))
        return end, times[:m], np.minimum(times[1:m + 1], end), path.values[:m]

    def _integrate(self, path, theta, order, segments=None):
        theta = self.check_theta(theta)
        trailing = (self.dim,) * order
        end, a, b, x = segments if segments is not None else self.segments(path)
        flat_end, support_end = self.kernel.time_window(theta)
        stop = min(end, support_end)
        if stop <= 0.0:
            return np.zeros(trailing) if order else 0.0, end

        m = int(np.searchsorted(a, stop, side="left"))
        a = a[:m]
        b = np.minimum(b[:m], stop)
        x = x[:m]
        total = np.zeros(trailing)

        # U is constant in t on [a, min(b, flat_end)]
        b1 = np.minimum(b, flat_end)
        closed = a < b1
        if np.any(closed):
            ac = a[closed]
            weights = discount_weight(self.r, ac, b1[closed])
            vals = self.kernel.evaluate(ac, x[closed], theta, order)
            total = total + _weighted_sum(weights, vals)

        a2 = np.maximum(a, flat_end)
        quad = a2 < b
        if np.any(quad):
            lo, hi = a2[quad], b[quad]
            half = 0.5 * (hi - lo)
            t = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
            weights = half[:, None] * _GL_WEIGHTS[None, :] * np.exp(-self.r * t)
            vals = self.kernel.evaluate(t, np.broadcast_to(x[quad][:, None], t.shape), theta, order)
            total = total + _weighted_sum(weights, vals)

        return (total if order else float(total)), end

    def evaluate(self, path, theta):
        value, end = self._integrate(path, theta, 0)
        bound = self.kernel.sup_abs * -math.expm1(-self.r * end) / self.r
        assert abs(value) <= bound * (1 + 1e-9) + 1e-12, f"|h|={abs(value)} exceeds bound {bound}"
        return value

    def evaluate_many(self, path, thetas):
        thetas = self.check_thetas(thetas)
        segments = self.segments(path)
        return np.array([self._integrate(path, th, 0, segments)[0] for th in thetas])

    def gradient(self, path, theta):
        if not self.differentiable:
            raise UnsupportedOperationError("kernel is not differentiable in theta")
        return self._integrate(path, theta, 1)[0]

    def hessian(self, path, theta):
        if not self.differentiable:
            raise UnsupportedOperationError("kernel is not differentiable in theta")
        hess = self._integrate(path, theta, 2)[0]
        return 0.5 * (hess + hess.T)

    def tail_bound(self, horizon):
        return self.kernel.sup_abs * math.exp(-self.r * horizon) / self.r


class DividendFunctional(DiscountedLossFunctional):
    """
    Aggregate discounted dividends paid up to ruin, Theta = [xi, M]^d.

    Args:
        alpha: dividend rate
        epsilon: mollifier half-width
        c: maturity slope, g(theta) = c * theta
        r: discount rate
        xi: ruin level
        theta_max: M, upper end of Theta
        mollified: False uses raw indicators (no derivatives)
        split: True uses separate threshold and maturity parameters (d = 2)
        maximize: True negates the payout so that the contrast minimizer
            maximizes expected dividends
    """

    def __init__(self, alpha, epsilon, c, r, xi, theta_max, mollified=True, split=False,
                 maximize=False, horizon=None):
        if not theta_max >= xi:
            raise ParameterError(f"Theta = [xi, M] needs M >= xi, got xi={xi}, M={theta_max}")
        kernel_cls = SplitDividendKernel if split else DividendKernel
        kernel = kernel_cls(alpha, epsilon, c, mollified=mollified, scale=-alpha if maximize else alpha)
        d = kernel.dim
        super().__init__(r, xi, kernel, horizon=horizon,
                         theta_bounds=(np.full(d, float(xi)), np.full(d, float(theta_max))))
        self.alpha = float(alpha)
        self.epsilon = float(epsilon)
        self.c = float(c)
        self.maximize = bool(maximize)

    def evaluate_many(self, path, thetas):
        """All thetas at once; the one-threshold kernel goes through threshold_scan."""
        if self.kernel.dim != 1:
            return super().evaluate_many(path, thetas)
        thetas = self.check_thetas(thetas)
        end, a, b, x = self.segments(path)
        return threshold_scan(self.kernel, self.r, end, a, b, x, thetas[:, 0])


class PerpetualPutFunctional(PathFunctional):
    """
    Exercise the put when the path first falls below theta:
    exp(-r tau^theta) (K - X_{tau^theta})_+ 1{tau^theta < T}.

    The infinite horizon is truncated at `horizon` (default path T). X is read
    as a price, floored at 0 at exercise, so payoffs lie in [0, K] on any
    path. Theta = [0, K].
    """

    def __init__(self, r, strike, horizon=None, maximize=False):
        if not r > 0 or not strike > 0:
            raise ParameterError(f"need r > 0 and K > 0, got r={r}, K={strike}")
        super().__init__(theta_bounds=([0.0], [float(strike)]))
        self.r = float(r)
        self.strike = float(strike)
        self.horizon = horizon
        self.maximize = bool(maximize)

    def evaluate(self, path, theta):
        theta = self.check_theta(theta)
        cap = path.T if self.horizon is None else min(self.horizon, path.T)
        k = ruin_index(path, theta[0])
        if k is None or k * path.h >= cap:
            return 0.0
        tau = k * path.h
        price = max(value_at(path, tau), 0.0)
        payoff = math.exp(-self.r * tau) * max(self.strike - price, 0.0)
        return -payoff if self.maximize else payoff

    def tail_bound(self, horizon):
        return self.strike * math.exp(-self.r * horizon)


class TerminalValueFunctional(PathFunctional):
    """h(x) = x_T, no parameter dependence."""
    differentiable = True

    def evaluate(self, path, theta=None):
        return path.terminal

    def gradient(self, path, theta=None):
        return np.zeros(self.dim)

    def hessian(self, path, theta=None):
        return np.zeros((self.dim, self.dim))


class RuinTimeFunctional(PathFunctional):
    """h(x) = tau^x, the default time at level xi (capped at T)."""

    def __init__(self, xi):
        super().__init__()
        self.xi = float(xi)

    def evaluate(self, path, theta=None):
        return ruin_time(path, self.xi)


class TerminalQuadraticFunctional(PathFunctional):
    """h_theta(x) = sum_i (theta_i - x_T)^2; argmin of P h is E[x_T] in every axis."""
    differentiable = True

    def __init__(self, dim=1, theta_bounds=None):
        super().__init__(theta_bounds)
        self.dim = int(dim)

    def evaluate(self, path, theta):
        theta = self.check_theta(theta)
        return float(np.sum((theta - path.terminal) ** 2))

    def evaluate_many(self, path, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.sum((thetas - path.terminal) ** 2, axis=1)

    def gradient(self, path, theta):
        return 2.0 * (self.check_theta(theta) - path.terminal)

    def hessian(self, path, theta):
        self.check_theta(theta)
        return 2.0 * np.eye(self.dim)


def _weighted_sum(weights, vals):
    w = weights.reshape(weights.shape + (1,) * (vals.ndim - weights.ndim))
    return np.sum(w * vals, axis=tuple(range(weights.ndim)))


def discount_weight(r, lo, hi):
    """integral of exp(-r t) over [lo, hi], elementwise."""
    return -np.exp(-r * lo) * np.expm1(-r * (hi - lo)) / r


def _expand_ranges(starts, lengths):
    """(owner, index) pairs for the integer ranges [starts[i], starts[i] + lengths[i])."""
    lengths = np.maximum(lengths, 0)
    owner = np.repeat(np.arange(len(lengths)), lengths)
    offsets = np.arange(owner.size) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    return owner, np.repeat(starts, lengths) + offsets


SCAN_BLOCK = 512


def threshold_scan(kernel, r, end, a, b, x, thetas):
    """
    Discounted dividend of one path for every threshold in `thetas` at once.

    Agrees with DiscountedLossFunctional.evaluate up to rounding. Work is
    O(segments + thetas) plus the pairs that fall inside a mollifier band:
    a segment contributes its full discount weight to the contiguous run of
    (sorted) thresholds that pay on all of it, which is a range update.

    Args:
        kernel: DividendKernel with dim 1, mollified or raw
        r: discount rate
        end, a, b, x: DiscountedLossFunctional.segments(path)
        thetas: 1-d array of thresholds
    """
    thetas = np.asarray(thetas, dtype=float)
    order = np.argsort(thetas, kind="stable")
    th = thetas[order]
    g = len(th)
    out = np.zeros(g)
    if len(a) == 0 or g == 0:
        return out

    eps = kernel.phi.epsilon if kernel.mollified else 0.0
    flat = np.maximum(0.0, kernel.c * (th - eps))
    stop = np.minimum(end, np.maximum(0.0, kernel.c * (th + eps)))
    cut = np.minimum(flat, stop)

    def level(xs, ts):
        if kernel.mollified:
            return kernel.phi.value(xs, ts)
        return (xs >= ts).astype(float)

    # full segments: b_k <= cut_j, i.e. j >= first[k]; cut is nondecreasing in j
    w = discount_weight(r, a, b)
    first = np.searchsorted(cut, b, side="left")
    paying = np.searchsorted(th, x - eps, side="right")
    span = paying - first
    ranged = span > 0
    diff = (np.bincount(first[ranged], weights=w[ranged], minlength=g + 1)
            - np.bincount(paying[ranged], weights=w[ranged], minlength=g + 1))
    total = np.cumsum(diff, dtype=float)[:g]

    if kernel.mollified:
        # thresholds within eps of x_k pay a fraction of the segment
        below = np.searchsorted(th, x + eps, side="left")
        start = np.maximum(first, paying)
        seg, j = _expand_ranges(start, below - start)
        if seg.size:
            total += np.bincount(j, weights=w[seg] * level(x[seg], th[j]), minlength=g)

    # the one segment that straddles cut_j
    k = np.searchsorted(b, cut, side="right")
    j = np.flatnonzero(k < len(a))
    k = k[j]
    straddle = a[k] < cut[j]
    j, k = j[straddle], k[straddle]
    total[j] += discount_weight(r, a[k], cut[j]) * level(x[k], th[j])

    if kernel.mollified:
        # [flat_j, stop_j]: maturity factor varies in t, Gauss-Legendre per segment
        for s in range(0, g, SCAN_BLOCK):
            block = slice(s, min(s + SCAN_BLOCK, g))
            lo_k = np.searchsorted(b, flat[block], side="right")
            hi_k = np.searchsorted(a, stop[block], side="left")
            owner, k = _expand_ranges(lo_k, hi_k - lo_k)
            if not owner.size:
                continue
            j = owner + s
            lo = np.maximum(a[k], flat[j])
            hi = np.minimum(b[k], stop[j])
            keep = lo < hi
            j, k, lo, hi = j[keep], k[keep], lo[keep], hi[keep]
            half = 0.5 * (hi - lo)
            t = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
            weights = half[:, None] * _GL_WEIGHTS[None, :] * np.exp(-r * t)
            maturity = kernel.phi.value(th[j][:, None], t / kernel.c)
            seg_sum = np.sum(weights * maturity, axis=1) * level(x[k], th[j])
            total += np.bincount(j, weights=seg_sum, minlength=g)

    out[order] = kernel.scale * total
    return out
