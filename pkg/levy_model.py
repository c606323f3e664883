"""
Lévy model
Finite-activity jump-diffusion laws, sampling schemes and exact increment simulation.

The process observed is

    X_t = u + mu*t + sigma*W_t + sign * sum_{i <= N_t} xi_i

with N a Poisson process of intensity lam and xi_i iid from a jump-size law.
With sign = -1 and exponential xi this is the surplus model used by every
experiment in this repository.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from errors import DomainError, ParameterError

logger = logging.getLogger(__name__)

JUMP_LAW_KINDS = ("exponential", "constant", "two_point")


def make_rng(seed):
    """
    Build the counter-based generator every stochastic operation uses.

    Args:
        seed: int, tuple of ints, SeedSequence, or an existing Generator
            (a stream handle, returned unchanged).

    Returns:
        numpy.random.Generator backed by Philox
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    if isinstance(seed, (tuple, list)):
        return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(s) for s in seed])))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class JumpLaw:
    """
    Jump-size law of xi (magnitudes; the direction lives in jump_sign).

    kind:
        exponential -- mean `size`
        constant    -- always `size`
        two_point   -- `size` with probability `prob`, else `alt_size`
    """
    kind: str = "exponential"
    size: float = 1.0
    alt_size: float = 0.0
    prob: float = 0.5

    def __post_init__(self):
        if self.kind not in JUMP_LAW_KINDS:
            raise ParameterError(f"unknown jump law {self.kind!r}; expected one of {JUMP_LAW_KINDS}")
        if self.kind == "exponential" and not self.size > 0:
            raise ParameterError(f"exponential jump mean must be > 0, got {self.size}")
        if self.kind == "two_point" and not 0.0 <= self.prob <= 1.0:
            raise ParameterError(f"two_point probability must lie in [0, 1], got {self.prob}")

    @property
    def mean(self):
        if self.kind == "two_point":
            return self.prob * self.size + (1.0 - self.prob) * self.alt_size
        return self.size

    @property
    def second_moment(self):
        if self.kind == "exponential":
            return 2.0 * self.size ** 2
        if self.kind == "constant":
            return self.size ** 2
        return self.prob * self.size ** 2 + (1.0 - self.prob) * self.alt_size ** 2

    def sample_sums(self, rng, counts):
        """Sum of `counts[j]` iid jump sizes for every entry of `counts`."""
        counts = np.asarray(counts)
        if self.kind == "exponential":
            # Gamma(K, m) is the exact law of K summed Exp(m) draws
            draws = rng.gamma(np.maximum(counts, 1), self.size)
            return np.where(counts > 0, draws, 0.0)
        if self.kind == "constant":
            return counts * self.size
        hits = rng.binomial(counts, self.prob)
        return hits * self.size + (counts - hits) * self.alt_size


@dataclass(frozen=True)
class LevyMeasure:
    """Finite Lévy measure nu = intensity * law(sign * xi)."""
    intensity: float
    law: JumpLaw
    sign: int = -1


@dataclass(frozen=True)
class LevyTriplet:
    """
    (mu, sigma, nu) of the characteristic exponent, finite activity only.

    The truncation term 1{|z| <= 1} of the general exponent is not used: for a
    finite measure it is absorbed into mu, so mu here is the plain drift.
    """
    mu: float
    gaussian_sigma: float
    levy_measure: LevyMeasure

    def __post_init__(self):
        if self.gaussian_sigma < 0:
            raise ParameterError(f"gaussian_sigma must be >= 0, got {self.gaussian_sigma}")
        if self.levy_measure.intensity < 0:
            raise ParameterError(f"jump intensity must be >= 0, got {self.levy_measure.intensity}")
        if self.levy_measure.sign not in (-1, 1):
            raise ParameterError(f"jump sign must be +1 or -1, got {self.levy_measure.sign}")

    def characteristic_exponent(self, z):
        """log E[exp(i z X_1)] for the finite-activity exponent."""
        z = np.asarray(z, dtype=float)
        nu = self.levy_measure
        s = nu.sign
        law = nu.law
        if law.kind == "exponential":
            jump_cf = 1.0 / (1.0 - 1j * s * z * law.size)
        elif law.kind == "constant":
            jump_cf = np.exp(1j * s * z * law.size)
        else:
            jump_cf = law.prob * np.exp(1j * s * z * law.size) + (1 - law.prob) * np.exp(1j * s * z * law.alt_size)
        return 1j * self.mu * z - 0.5 * self.gaussian_sigma ** 2 * z ** 2 + nu.intensity * (jump_cf - 1.0)


@dataclass(frozen=True)
class JumpDiffusionModel:
    """
    Jump-diffusion X_t = u0 + mu t + sigma W_t + jump_sign * sum xi_i.

    `jump_mean` is the exponential mean m; pass `jump_law` to use another law
    (its own parameters then define the jumps).
    """
    u0: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0
    lam: float = 0.0
    jump_mean: float = 1.0
    jump_sign: int = -1
    jump_law: Optional[JumpLaw] = field(default=None)

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.jump_law is None and not self.jump_mean > 0:
            raise ParameterError(f"jump_mean must be > 0, got {self.jump_mean}")
        if self.jump_sign not in (-1, 1):
            raise ParameterError(f"jump_sign must be +1 or -1, got {self.jump_sign}")

    @classmethod
    def from_tuple(cls, params):
        """Build from the (mu, sigma, lambda, m, u) tuple used in the experiments."""
        mu, sigma, lam, m, u = params
        return cls(u0=u, mu=mu, sigma=sigma, lam=lam, jump_mean=m)

    @classmethod
    def from_triplet(cls, triplet, u0=0.0):
        nu = triplet.levy_measure
        return cls(u0=u0, mu=triplet.mu, sigma=triplet.gaussian_sigma, lam=nu.intensity,
                   jump_mean=nu.law.mean if nu.law.mean > 0 else 1.0,
                   jump_sign=nu.sign, jump_law=nu.law)

    @property
    def law(self):
        return self.jump_law if self.jump_law is not None else JumpLaw("exponential", self.jump_mean)

    @property
    def triplet(self):
        return LevyTriplet(self.mu, self.sigma, LevyMeasure(self.lam, self.law, self.jump_sign))

    @property
    def is_deterministic(self):
        return self.sigma == 0 and self.lam == 0

    def increment_mean_rate(self):
        return self.mu + self.jump_sign * self.lam * self.law.mean

    def increment_variance_rate(self):
        return self.sigma ** 2 + self.lam * self.law.second_moment


@dataclass(frozen=True)
class SamplingScheme:
    """
    Equidistant observation grid t_k = k*h, k = 0..n, horizon T = n*h.
    """
    n: int
    h: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"scheme needs n >= 1 increments, got n={self.n}")
        if not self.h > 0 or not math.isfinite(self.h):
            raise ParameterError(f"scheme needs h > 0, got h={self.h}")

    @classmethod
    def hflt(cls, n, beta):
        """High-frequency long-term family h = n^(-beta), beta in (0, 1)."""
        if not 0.0 < beta < 1.0:
            raise ParameterError(f"beta must lie in (0, 1), got {beta}")
        return cls(int(n), float(n) ** (-beta))

    @classmethod
    def from_horizon(cls, T, h):
        """Scheme covering [0, T] with spacing h (n rounded to the nearest integer)."""
        if not T > 0 or not h > 0:
            raise ParameterError(f"horizon and spacing must be > 0, got T={T}, h={h}")
        return cls(max(1, int(round(T / h))), float(h))

    @property
    def T(self):
        return self.n * self.h

    def times(self):
        return np.arange(self.n + 1) * self.h


def _draw_increments(rng, model, h, shape):
    z = rng.standard_normal(shape)
    counts = rng.poisson(model.lam * h, shape)
    jumps = model.law.sample_sums(rng, counts)
    return model.mu * h + model.sigma * math.sqrt(h) * z + model.jump_sign * jumps


def simulate_increments(model, scheme, seed):
    """
    Draw the n observed increments Delta_k X of one path.

    Args:
        model: JumpDiffusionModel
        scheme: SamplingScheme (validated on construction)
        seed: seed or Generator, see make_rng

    Returns:
        numpy array of n iid increments
    """
    if not isinstance(scheme, SamplingScheme):
        raise ParameterError(f"expected a SamplingScheme, got {type(scheme).__name__}")
    return _draw_increments(make_rng(seed), model, scheme.h, (scheme.n,))


def simulate_increment_matrix(model, scheme, count, seed):
    """`count` independent increment vectors, shape (count, n)."""
    if count < 1:
        raise ParameterError(f"need at least one path, got count={count}")
    return _draw_increments(make_rng(seed), model, scheme.h, (int(count), scheme.n))


def simulate_marginal(model, t, count, seed):
    """
    Exact draws of X_t (one increment of length t per draw).
    """
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    if t == 0:
        return np.full(int(count), float(model.u0))
    return model.u0 + _draw_increments(make_rng(seed), model, t, (int(count),))


def exact_marginal_moments(model, t):
    """
    Closed-form mean and variance of X_t.

    mean = u + (mu + sign * lam * E[xi]) t,  variance = (sigma^2 + lam * E[xi^2]) t

    Returns:
        (mean, variance)
    """
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    return model.u0 + model.increment_mean_rate() * t, model.increment_variance_rate() * t
