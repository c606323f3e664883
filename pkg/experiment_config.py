"""
Experiment Config
JSON 設定檔 → frozen dataclasses；未知欄位、越界數值一律在模擬開始前報錯
"""
import dataclasses
import json
import logging
import typing
from dataclasses import dataclass, field
from typing import Optional, Tuple

from errors import ConfigError, ParameterError
from estimator import OptimizerOptions, ThetaBox
from functionals import (
    DividendFunctional,
    PerpetualPutFunctional,
    RuinTimeFunctional,
    TerminalQuadraticFunctional,
    TerminalValueFunctional,
)
from io_helpers import JOBS, OUTPUT_DIR, read_json_file, parse_json_text, sha256_of
from levy_model import JUMP_LAW_KINDS, JumpDiffusionModel, JumpLaw

logger = logging.getLogger(__name__)

FUNCTIONAL_KINDS = (
    "dividend", "dividend_raw", "dividend_split", "perpetual_put", "quadratic", "terminal", "ruin_time",
)


def _require(condition, key, message):
    if not condition:
        raise ConfigError(message, key=key)


@dataclass(frozen=True)
class ModelConfig:
    """(mu, sigma, lambda, m, u) plus the jump law; defaults are (20, 10, 5, 3, 0)."""
    mu: float = 20.0
    sigma: float = 10.0
    lam: float = 5.0
    jump_mean: float = 3.0
    u0: float = 0.0
    jump_sign: int = -1
    jump_law: str = "exponential"
    jump_alt_size: float = 0.0
    jump_prob: float = 0.5

    def __post_init__(self):
        _require(self.sigma >= 0, "sigma", f"must be >= 0, got {self.sigma}")
        _require(self.lam >= 0, "lam", f"must be >= 0, got {self.lam}")
        _require(self.jump_sign in (-1, 1), "jump_sign", f"must be +1 or -1, got {self.jump_sign}")
        _require(self.jump_law in JUMP_LAW_KINDS, "jump_law", f"must be one of {JUMP_LAW_KINDS}")
        _require(self.jump_law != "exponential" or self.jump_mean > 0, "jump_mean",
                 f"must be > 0, got {self.jump_mean}")
        _require(0.0 <= self.jump_prob <= 1.0, "jump_prob", f"must lie in [0, 1], got {self.jump_prob}")

    def to_model(self):
        law = JumpLaw(self.jump_law, self.jump_mean, self.jump_alt_size, self.jump_prob)
        return JumpDiffusionModel(u0=self.u0, mu=self.mu, sigma=self.sigma, lam=self.lam,
                                  jump_mean=self.jump_mean if self.jump_mean > 0 else 1.0,
                                  jump_sign=self.jump_sign, jump_law=law)


@dataclass(frozen=True)
class FunctionalConfig:
    """
    Functional choice and parameters. theta_bounds (list of [lo, hi] per axis)
    overrides the functional's natural Theta.
    """
    kind: str = "dividend"
    alpha: float = 1.0
    epsilon: float = 0.1
    c: float = 1.0
    r: float = 0.1
    xi: float = -10.0
    theta_max: float = 30.0
    strike: float = 10.0
    maximize: bool = True
    horizon: Optional[float] = None
    dim: int = 1
    theta_bounds: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        _require(self.kind in FUNCTIONAL_KINDS, "kind", f"must be one of {FUNCTIONAL_KINDS}, got {self.kind!r}")
        _require(self.alpha > 0, "alpha", f"must be > 0, got {self.alpha}")
        _require(self.epsilon > 0, "epsilon", f"must be > 0, got {self.epsilon}")
        _require(self.c > 0, "c", f"must be > 0, got {self.c}")
        _require(self.r > 0, "r", f"must be > 0, got {self.r}")
        _require(self.strike > 0, "strike", f"must be > 0, got {self.strike}")
        _require(self.theta_max >= self.xi, "theta_max", f"must be >= xi={self.xi}, got {self.theta_max}")
        _require(self.horizon is None or self.horizon > 0, "horizon", f"must be > 0, got {self.horizon}")
        _require(self.dim >= 1, "dim", f"must be >= 1, got {self.dim}")
        if self.theta_bounds is not None:
            bounds = tuple(tuple(float(v) for v in pair) for pair in self.theta_bounds)
            _require(all(len(pair) == 2 for pair in bounds), "theta_bounds", "every axis needs [lo, hi]")
            _require(all(lo <= hi for lo, hi in bounds), "theta_bounds", "empty Theta (lo > hi)")
            object.__setattr__(self, "theta_bounds", bounds)

    def build(self):
        if self.kind in ("dividend", "dividend_raw", "dividend_split"):
            return DividendFunctional(self.alpha, self.epsilon, self.c, self.r, self.xi, self.theta_max,
                                      mollified=self.kind != "dividend_raw",
                                      split=self.kind == "dividend_split",
                                      maximize=self.maximize, horizon=self.horizon)
        if self.kind == "perpetual_put":
            return PerpetualPutFunctional(self.r, self.strike, horizon=self.horizon, maximize=self.maximize)
        if self.kind == "quadratic":
            return TerminalQuadraticFunctional(self.dim)
        if self.kind == "terminal":
            return TerminalValueFunctional()
        return RuinTimeFunctional(self.xi)

    def theta_box(self, functional=None):
        if self.theta_bounds is not None:
            return ThetaBox.from_pairs(self.theta_bounds)
        functional = functional or self.build()
        if functional.theta_bounds is None:
            raise ConfigError(f"{self.kind} functional has no natural Theta", key="theta_bounds")
        return ThetaBox(*functional.theta_bounds)


@dataclass(frozen=True)
class OptimizerConfig:
    grid_points: int = 64
    theta_tol: float = 1e-6
    max_iter: int = 2000

    def __post_init__(self):
        _require(self.grid_points >= 2, "grid_points", f"must be >= 2, got {self.grid_points}")
        _require(self.theta_tol > 0, "theta_tol", f"must be > 0, got {self.theta_tol}")
        _require(self.max_iter >= 1, "max_iter", f"must be >= 1, got {self.max_iter}")

    def to_options(self):
        return OptimizerOptions(self.grid_points, self.theta_tol, self.max_iter)


def _check_cells(cells, key):
    cells = tuple(tuple(float(v) for v in cell) for cell in cells)
    _require(len(cells) > 0, key, "needs at least one (T, h) cell")
    for T, h in cells:
        _require(T > 0 and h > 0, key, f"T and h must be > 0, got ({T}, {h})")
        _require(T >= h, key, f"T={T} shorter than h={h}")
    return cells


@dataclass(frozen=True)
class PathsExperimentConfig:
    """Observed path plus alpha quasi-paths for each (T, h) in horizons x spacings."""
    horizons: Tuple[float, ...] = (10.0, 50.0, 100.0)
    spacings: Tuple[float, ...] = (1.0, 0.1, 0.05, 0.005)
    alpha: int = 100
    identity_permutation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(float(v) for v in self.horizons))
        object.__setattr__(self, "spacings", tuple(float(v) for v in self.spacings))
        _require(self.horizons and all(v > 0 for v in self.horizons), "horizons", "must be nonempty and > 0")
        _require(self.spacings and all(v > 0 for v in self.spacings), "spacings", "must be nonempty and > 0")
        _require(self.alpha >= 1, "alpha", f"must be >= 1, got {self.alpha}")

    def cells(self):
        return [(T, h) for T in self.horizons for h in self.spacings]


@dataclass(frozen=True)
class MarginalExperimentConfig:
    cells: Tuple[Tuple[float, float], ...] = ((10.0, 1.0), (50.0, 0.01), (100.0, 0.005))
    t: float = 1.0
    alpha: int = 1000
    oracle_B: int = 1000
    bandwidth: str = "silverman"
    ruin_xi: Optional[float] = None
    lp_ns: Tuple[int, ...] = (100, 1000, 10000)
    lp_beta: float = 0.5
    lp_p: float = 2.0
    lp_replications: int = 200

    def __post_init__(self):
        object.__setattr__(self, "cells", _check_cells(self.cells, "cells"))
        object.__setattr__(self, "lp_ns", tuple(int(v) for v in self.lp_ns))
        _require(self.t >= 0, "t", f"must be >= 0, got {self.t}")
        _require(all(self.t <= T for T, _ in self.cells), "t", "must not exceed any cell horizon")
        _require(self.alpha >= 1, "alpha", f"must be >= 1, got {self.alpha}")
        _require(self.oracle_B >= 1, "oracle_B", f"must be >= 1, got {self.oracle_B}")
        _require(self.bandwidth in ("silverman", "scott"), "bandwidth", "must be 'silverman' or 'scott'")
        _require(all(v >= 1 for v in self.lp_ns), "lp_ns", "must be >= 1")
        _require(0.0 < self.lp_beta < 1.0, "lp_beta", f"must lie in (0, 1), got {self.lp_beta}")
        _require(self.lp_p >= 1, "lp_p", f"must be >= 1, got {self.lp_p}")
        _require(self.lp_replications >= 1, "lp_replications", f"must be >= 1, got {self.lp_replications}")


@dataclass(frozen=True)
class EstimationExperimentConfig:
    """
    Consistency run over ns with h = n^(-beta); alpha None follows the
    alpha_n schedule. The variance and normality blocks reuse the same
    functional.
    """
    beta: float = 0.5
    ns: Tuple[int, ...] = (1000, 10000, 100000)
    alpha: Optional[int] = None
    oracle_B: int = 2000
    oracle_n: int = 10000
    oracle_grid_points: int = 1000
    continue_on_margin_failure: bool = True
    covariance: bool = True
    alpha_pair: Tuple[int, int] = (100, 400)
    variance_n: int = 1000
    variance_seeds: int = 100
    normality_n: int = 10000
    normality_replications: int = 200

    def __post_init__(self):
        object.__setattr__(self, "ns", tuple(int(v) for v in self.ns))
        object.__setattr__(self, "alpha_pair", tuple(int(v) for v in self.alpha_pair))
        _require(0.0 < self.beta < 1.0, "beta", f"must lie in (0, 1), got {self.beta}")
        _require(self.ns and all(v >= 1 for v in self.ns), "ns", "must be nonempty and >= 1")
        _require(self.alpha is None or self.alpha >= 1, "alpha", f"must be >= 1, got {self.alpha}")
        _require(self.oracle_B >= 1, "oracle_B", f"must be >= 1, got {self.oracle_B}")
        _require(self.oracle_n >= 1, "oracle_n", f"must be >= 1, got {self.oracle_n}")
        _require(self.oracle_grid_points >= 3, "oracle_grid_points", "must be >= 3")
        _require(len(self.alpha_pair) == 2 and min(self.alpha_pair) >= 1, "alpha_pair", "needs two alphas >= 1")
        _require(self.variance_n >= 1 and self.variance_seeds >= 2, "variance_seeds", "needs n >= 1 and >= 2 seeds")
        _require(self.normality_n >= 1 and self.normality_replications >= 3, "normality_replications",
                 "needs n >= 1 and >= 3 replications")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    functional: FunctionalConfig = field(default_factory=FunctionalConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    paths: PathsExperimentConfig = field(default_factory=PathsExperimentConfig)
    marginals: MarginalExperimentConfig = field(default_factory=MarginalExperimentConfig)
    estimation: EstimationExperimentConfig = field(default_factory=EstimationExperimentConfig)
    seeds: Tuple[int, ...] = tuple(range(10))
    output_dir: str = OUTPUT_DIR
    jobs: int = JOBS

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        _require(len(self.seeds) > 0, "seeds", "needs at least one seed")
        _require(all(s >= 0 for s in self.seeds), "seeds", "seeds must be >= 0")
        _require(self.jobs >= 1, "jobs", f"must be >= 1, got {self.jobs}")

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def config_hash(self):
        return sha256_of(self.to_dict())

    def with_overrides(self, seed=None, output_dir=None, jobs=None):
        """CLI flags win over the file; --seed N renumbers the seed list from N."""
        changes = {}
        if seed is not None:
            changes["seeds"] = tuple(int(seed) + i for i in range(len(self.seeds)))
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        if jobs is not None:
            changes["jobs"] = int(jobs)
        try:
            return dataclasses.replace(self, **changes)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_dict(cls, data):
        return build_section(cls, data, "")

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(parse_json_text(text))

    @classmethod
    def load(cls, path):
        config = cls.from_dict(read_json_file(path))
        logger.info("loaded config %s (hash %s)", path, config.config_hash()[:12])
        return config


def _is_config_class(tp):
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def build_section(cls, data, prefix):
    """Strict dict -> dataclass: unknown keys and bad values name their dotted path."""
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", key=prefix.rstrip(".") or None)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError("unknown key", key=f"{prefix}{key}")
    kwargs = {}
    for key, value in data.items():
        tp = hints[key]
        if _is_config_class(tp):
            kwargs[key] = build_section(tp, value, f"{prefix}{key}.")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError as e:
        inner = e.key or ""
        message = str(e)[len(inner) + 2:] if inner else str(e)
        raise ConfigError(message, key=f"{prefix}{inner}".rstrip(".")) from None
    except (TypeError, ValueError, ParameterError) as e:
        raise ConfigError(str(e), key=prefix.rstrip(".") or None) from e
