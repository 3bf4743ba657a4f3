"""Cache placement and performance analysis for clustered D2D content delivery."""

from .asymptotics import (
    Classification,
    ClampedValue,
    RegimeParams,
    TradeoffPoint,
    classify_regime,
    hit_rate_closed_form,
    hit_rate_floor,
    theory_points,
    tradeoff_large_gamma,
    tradeoff_small_gamma,
)
from .errors import ConfigError, DomainError, InvariantError, RegimeError
from .fitting import (
    AccessRecord,
    EmpiricalPopularity,
    FitResult,
    FitSearch,
    dedupe_accesses,
    fit_mzipf,
    kl_divergence,
    load_access_log,
    subsample_study,
    synthetic_records,
    write_empirical_csv,
)
from .policy import (
    AsymptoticConstants,
    CachingPolicy,
    asymptotic_constants,
    hit_probability,
    solve_cutoff_constant,
    waterfill,
)
from .popularity import MZipfDist, PartialSumBounds, partial_sum, partial_sum_bounds
from .simulator import (
    NetworkConfig,
    Realization,
    SimResult,
    SweepResult,
    monte_carlo,
    per_user_throughput,
    realize,
    sweep,
    throughput_accounting,
)

__version__ = "0.1.0"

__all__ = [
    "AccessRecord",
    "AsymptoticConstants",
    "CachingPolicy",
    "Classification",
    "ClampedValue",
    "ConfigError",
    "DomainError",
    "EmpiricalPopularity",
    "FitResult",
    "FitSearch",
    "InvariantError",
    "MZipfDist",
    "NetworkConfig",
    "PartialSumBounds",
    "Realization",
    "RegimeError",
    "RegimeParams",
    "SimResult",
    "SweepResult",
    "TradeoffPoint",
    "asymptotic_constants",
    "classify_regime",
    "dedupe_accesses",
    "fit_mzipf",
    "hit_probability",
    "hit_rate_closed_form",
    "hit_rate_floor",
    "kl_divergence",
    "load_access_log",
    "monte_carlo",
    "partial_sum",
    "partial_sum_bounds",
    "per_user_throughput",
    "realize",
    "solve_cutoff_constant",
    "subsample_study",
    "sweep",
    "synthetic_records",
    "theory_points",
    "throughput_accounting",
    "tradeoff_large_gamma",
    "tradeoff_small_gamma",
    "waterfill",
    "write_empirical_csv",
]
