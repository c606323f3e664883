"""
Quasi-processes
Rebuild paths from one observed increment vector by permuting its entries and
average path functionals over the resulting empirical measure.

Both QuasiEnsemble and SimulatedMeasure expose the same small protocol
(`len()`, `iter_paths()`), so estimators treat a quasi ensemble and a
Monte-Carlo set of true paths the same way.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from errors import ParameterError, PermutationLimitError
from io_helpers import run_pool
from levy_model import make_rng, simulate_increment_matrix
from stepped_path import from_increments

logger = logging.getLogger(__name__)

MAX_ENUMERATION_N = 8
SIMULATION_CHUNK = 1024


def is_permutation(mapping, n):
    mapping = np.asarray(mapping)
    return mapping.shape == (n,) and np.array_equal(np.sort(mapping), np.arange(n))


def sample_permutation_set(n, alpha, seed):
    """
    Draw alpha independent uniform permutations of range(n) (0-based).

    Each row is a Fisher-Yates shuffle; repeats are allowed.

    Returns:
        int array of shape (alpha, n)
    """
    if n < 1 or alpha < 1:
        raise ParameterError(f"need n >= 1 and alpha >= 1, got n={n}, alpha={alpha}")
    rng = make_rng(seed)
    base = np.tile(np.arange(n), (alpha, 1))
    return rng.permuted(base, axis=1)


def enumerate_all_permutations(n):
    """All n! permutations of range(n) in lexicographic order (n <= 8)."""
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    if n > MAX_ENUMERATION_N:
        raise PermutationLimitError(
            f"refusing to enumerate {n}! permutations (limit n <= {MAX_ENUMERATION_N})")
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


@dataclass(frozen=True, eq=False)
class QuasiEnsemble:
    """
    Observed increments plus a set A_n of permutations.

    Its empirical measure P_n puts mass 1/alpha on every quasi-path.
    """
    increments: np.ndarray
    u: float
    h: float
    perms: np.ndarray

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float).reshape(-1)
        perms = np.atleast_2d(np.asarray(self.perms, dtype=np.intp))
        if perms.shape[0] < 1:
            raise ParameterError("a quasi ensemble needs at least one permutation")
        if perms.shape[1] != len(inc):
            raise ParameterError(f"permutation length {perms.shape[1]} != number of increments {len(inc)}")
        if not np.array_equal(np.sort(perms, axis=1), np.broadcast_to(np.arange(len(inc)), perms.shape)):
            raise ParameterError("every row of perms must be a permutation of range(n)")
        if not self.h > 0:
            raise ParameterError(f"grid spacing must be > 0, got {self.h}")
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "perms", perms)

    @classmethod
    def sampled(cls, increments, u, h, alpha, seed):
        n = len(np.asarray(increments).reshape(-1))
        return cls(increments, u, h, sample_permutation_set(n, alpha, seed))

    @classmethod
    def exhaustive(cls, increments, u, h):
        n = len(np.asarray(increments).reshape(-1))
        return cls(increments, u, h, enumerate_all_permutations(n))

    @classmethod
    def identity(cls, increments, u, h):
        n = len(np.asarray(increments).reshape(-1))
        return cls(increments, u, h, np.arange(n)[None, :])

    @property
    def alpha(self):
        return self.perms.shape[0]

    @property
    def n(self):
        return len(self.increments)

    def __len__(self):
        return self.alpha

    def observed_path(self):
        return from_increments(self.u, self.h, self.increments)

    def quasi_path(self, index):
        """Quasi-path for the index-th permutation."""
        if not 0 <= index < self.alpha:
            raise ParameterError(f"quasi-path index {index} out of range [0, {self.alpha})")
        return from_increments(self.u, self.h, self.increments[self.perms[index]])

    def iter_paths(self):
        for i in range(self.alpha):
            yield self.quasi_path(i)

    def values_at_index(self, k):
        """X-hat at t_k for every member, shape (alpha,)."""
        if not 0 <= k <= self.n:
            raise ParameterError(f"grid index {k} out of range [0, {self.n}]")
        if k == self.n:
            return np.full(self.alpha, self.observed_path().terminal)
        return self.u + self.increments[self.perms[:, :k]].sum(axis=1)

    def export_csv(self, directory, prefix="quasi"):
        """Write one CSV per quasi-path (t_k, value)."""
        directory = Path(directory)
        written = []
        width = max(3, len(str(self.alpha - 1)))
        for i, path in enumerate(self.iter_paths()):
            target = directory / f"{prefix}_{i:0{width}d}.csv"
            path.to_csv(target)
            written.append(target)
        return written


@dataclass(frozen=True)
class SimulatedMeasure:
    """
    Empirical measure of `count` independent true paths.

    Paths are regenerated chunk by chunk from (seed, chunk index), so a pass
    over the measure costs memory for one chunk and every pass sees the same
    paths.
    """
    model: object
    scheme: object
    count: int
    seed: int
    chunk: int = SIMULATION_CHUNK

    def __post_init__(self):
        if self.count < 1:
            raise ParameterError(f"need at least one simulated path, got {self.count}")

    def __len__(self):
        return self.count

    @property
    def chunk_count(self):
        return -(-self.count // self.chunk)

    def chunk_paths(self, c):
        """Paths of chunk c, regenerated from (seed, c)."""
        size = min(self.chunk, self.count - c * self.chunk)
        for row in simulate_increment_matrix(self.model, self.scheme, size, (self.seed, c)):
            yield from_increments(self.model.u0, self.scheme.h, row)

    def iter_paths(self):
        for c in range(self.chunk_count):
            yield from self.chunk_paths(c)


def fixed_order_mean(values):
    """
    Mean with numpy's pairwise summation in input order.

    Bit-equal values return that value: sum / count can miss it by an ulp.
    """
    values = np.asarray(values, dtype=float)
    if values.size and np.all(values == values[0]):
        return float(values[0])
    return float(np.sum(values, axis=0) / len(values))


def empirical_expectation(ensemble, f, theta=None):
    """
    P_n h_theta = (1/alpha) * sum over members of h_theta(quasi-path).

    Args:
        ensemble: QuasiEnsemble or SimulatedMeasure
        f: PathFunctional
        theta: parameter vector (ignored by theta-free functionals)
    """
    return fixed_order_mean([f.evaluate(path, theta) for path in ensemble.iter_paths()])


def _contrast_sum_task(task):
    ensemble, c, f, thetas = task
    paths = ensemble.iter_paths() if c is None else ensemble.chunk_paths(c)
    total = np.zeros(len(thetas))
    for path in paths:
        total += f.evaluate_many(path, thetas)
    return total


def empirical_contrast_batch(ensemble, f, thetas, jobs=1):
    """
    P_n h_theta for several theta in one pass over the members.

    A SimulatedMeasure is summed chunk by chunk (in a process pool when
    jobs > 1); chunk totals are added in chunk order, so the result does
    not depend on jobs.

    Returns:
        array of shape (len(thetas),)
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    chunks = range(ensemble.chunk_count) if hasattr(ensemble, "chunk_paths") else [None]
    tasks = [(ensemble, c, f, thetas) for c in chunks]
    total = np.zeros(len(thetas))
    for part in run_pool(_contrast_sum_task, tasks, jobs):
        total += part
    return total / len(ensemble)


def brute_force_expectation(increments, u, h, f, theta=None):
    """Average of f over all n! quasi-paths, built independently of QuasiEnsemble."""
    inc = np.asarray(increments, dtype=float)
    total = [f.evaluate(from_increments(u, h, inc[list(p)]), theta)
             for p in itertools.permutations(range(len(inc)))]
    return math.fsum(total) / len(total)
