"""Monte Carlo simulation of the clustered D2D caching network.

Users sit on a square grid that is tiled into equal square clusters.
Each user fills ``s`` cache slots with iid draws from the placement
distribution and requests one file per slot time.  A request is served
when some *other* user in the same cluster caches it; each cluster with
at least one served user schedules one D2D link per slot (the network
activates one of every ``k`` clusters), shared round-robin among that
cluster's served users.

The per-realization accounting identity

    sum_u throughput(u) = c_rate * good_clusters / k

is verified on every realization; a violation raises InvariantError since
it can only come from a bookkeeping bug.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, InvariantError
from .policy import CachingPolicy

__all__ = [
    "NetworkConfig",
    "Realization",
    "SimResult",
    "SweepResult",
    "realize",
    "per_user_throughput",
    "throughput_accounting",
    "monte_carlo",
    "sweep",
]


def _isqrt_exact(x: int) -> int | None:
    r = math.isqrt(x)
    return r if r * r == x else None


@dataclass(frozen=True)
class NetworkConfig:
    """Geometry and link parameters of the simulated network."""

    n: int
    n_clusters: int
    s: int = 1
    k: int = 1
    c_rate: float = 1.0
    include_self_cache: bool = False

    def __post_init__(self):
        side = _isqrt_exact(self.n)
        if self.n < 4 or side is None:
            raise ConfigError(f"n must be a perfect square >= 4, got {self.n}")
        tiles = _isqrt_exact(self.n_clusters)
        if self.n_clusters < 1 or tiles is None:
            raise ConfigError(
                f"n_clusters must be a positive perfect square, got {self.n_clusters}"
            )
        if self.n % self.n_clusters != 0:
            raise ConfigError(f"n_clusters {self.n_clusters} must divide n {self.n}")
        g_c = self.n // self.n_clusters
        if g_c < 2:
            raise ConfigError(f"cluster size n/n_clusters = {g_c} must be >= 2")
        if self.s < 1:
            raise ConfigError(f"s must be >= 1, got {self.s}")
        if self.s * (g_c - 1) < 2:
            raise ConfigError(
                f"cluster too small for policy exponent: s*(g_c-1) = {self.s * (g_c - 1)} < 2"
            )
        if self.k < 1 or not self.c_rate > 0:
            raise ConfigError("need k >= 1 and c_rate > 0")

    @property
    def g_c(self) -> int:
        return self.n // self.n_clusters

    def cluster_map(self) -> np.ndarray:
        """User index -> cluster index, by square tiling of the grid.

        n and n_clusters are both perfect squares with n_clusters | n, so
        the tile side sqrt(n)/sqrt(n_clusters) is an exact integer.
        """
        side = math.isqrt(self.n)
        tiles = math.isqrt(self.n_clusters)
        tile = side // tiles
        u = np.arange(self.n)
        return (u // side // tile) * tiles + (u % side) // tile


@dataclass(frozen=True)
class Realization:
    caches: np.ndarray  # (n, s) cached file per slot
    requests: np.ndarray  # (n,)
    linked: np.ndarray  # (n,) bool, request held by another cluster member
    self_hit: np.ndarray  # (n,) bool, request in own cache
    served: np.ndarray  # (n,) bool
    potential_links: np.ndarray  # (n_clusters,) linked users per cluster
    good_clusters: int


def _placement_sampler(policy: CachingPolicy):
    cdf = np.cumsum(policy.probs)
    cdf[-1] = 1.0

    def draw(rng: np.random.Generator, size):
        return np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64) + 1

    return draw


def realize(config: NetworkConfig, dist, policy: CachingPolicy,
            rng: np.random.Generator) -> Realization:
    """Draw one network state: caches, requests and who gets served."""
    n = config.n
    clusters = config.cluster_map()
    draw = _placement_sampler(policy)
    caches = draw(rng, (n, config.s))
    requests = np.asarray(dist.sample(rng, n), dtype=np.int64)

    n_files = int(max(caches.max(), requests.max()))
    width = n_files + 1
    slot_keys = (clusters[:, None] * width + caches).ravel()
    held = np.bincount(slot_keys, minlength=config.n_clusters * width)
    req_keys = clusters * width + requests
    own_slots = np.count_nonzero(caches == requests[:, None], axis=1)
    linked = held[req_keys] - own_slots >= 1
    self_hit = own_slots >= 1
    served = (linked | self_hit) if config.include_self_cache else linked

    potential_links = np.bincount(clusters[linked], minlength=config.n_clusters)
    return Realization(
        caches=caches,
        requests=requests,
        linked=linked,
        self_hit=self_hit,
        served=served,
        potential_links=potential_links,
        good_clusters=int(np.count_nonzero(potential_links)),
    )


def per_user_throughput(config: NetworkConfig, real: Realization) -> np.ndarray:
    """Rate each user receives: the cluster link is split round-robin
    among its linked users; self-hits consume no airtime."""
    clusters = config.cluster_map()
    out = np.zeros(config.n)
    share = np.zeros(config.n_clusters)
    active = real.potential_links > 0
    share[active] = config.c_rate / (config.k * real.potential_links[active])
    out[real.linked] = share[clusters[real.linked]]
    return out


def throughput_accounting(config: NetworkConfig, real: Realization):
    """(t_sum, t_min, outage) for one realization.

    t_sum collapses to c_rate * good_clusters / k because every good
    cluster contributes exactly one link of rate c_rate/k; the identity
    is re-derived from the per-user rates and enforced.
    """
    per_user = per_user_throughput(config, real)
    t_sum = float(per_user.sum())
    expected = config.c_rate * real.good_clusters / config.k
    if not math.isclose(t_sum, expected, rel_tol=1e-9, abs_tol=1e-12):
        raise InvariantError(
            f"throughput accounting mismatch: {t_sum} != {expected}"
        )
    t_min = t_sum / config.n
    outage = 1.0 - float(np.count_nonzero(real.served)) / config.n
    return t_sum, t_min, outage


@dataclass(frozen=True)
class SimResult:
    outage_mean: float
    outage_stderr: float
    throughput_min_mean: float
    throughput_min_stderr: float
    trials: int
    seed: int


def _as_seedseq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def monte_carlo(config: NetworkConfig, dist, policy: CachingPolicy, trials: int,
                seed, workers: int = 1) -> SimResult:
    """Average outage and per-user throughput over independent trials.

    Bitwise deterministic in (config, dist, policy, trials, seed): each
    trial gets its own child generator and results are reduced in trial
    order, so ``workers`` changes wall time only.
    """
    if trials < 2:
        raise DomainError(f"need at least 2 trials for a stderr, got {trials}")
    ss = _as_seedseq(seed)
    children = ss.spawn(trials)
    outages = np.empty(trials)
    tmins = np.empty(trials)

    def run(t: int):
        real = realize(config, dist, policy, np.random.default_rng(children[t]))
        _, t_min, outage = throughput_accounting(config, real)
        outages[t] = outage
        tmins[t] = t_min

    if workers <= 1:
        for t in range(trials):
            run(t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(run, range(trials)))

    def stderr(x):
        return float(x.std(ddof=1) / math.sqrt(trials))

    entropy = ss.entropy
    return SimResult(
        outage_mean=float(outages.mean()),
        outage_stderr=stderr(outages),
        throughput_min_mean=float(tmins.mean()),
        throughput_min_stderr=stderr(tmins),
        trials=trials,
        seed=int(entropy) if isinstance(entropy, int) else 0,
    )


@dataclass(frozen=True)
class SweepResult:
    points: list
    skipped: list  # (n_clusters, reason)


def sweep(config: NetworkConfig, dist, cluster_counts, trials: int, seed,
          workers: int = 1) -> SweepResult:
    """Simulate across cluster counts and attach exact and closed-form curves.

    Infeasible cluster counts (not a square, not dividing n, cluster too
    small) are reported in ``skipped`` rather than aborting the sweep.
    Each feasible count is seeded by (seed, n_clusters) so adding or
    removing counts does not perturb the others.
    """
    from .asymptotics import RegimeParams, TradeoffPoint, theory_points
    from .policy import hit_probability, waterfill

    master = _as_seedseq(seed)
    points = []
    skipped = []
    for nc in cluster_counts:
        try:
            cfg = NetworkConfig(
                n=config.n, n_clusters=int(nc), s=config.s, k=config.k,
                c_rate=config.c_rate, include_self_cache=config.include_self_cache,
            )
        except ConfigError as e:
            skipped.append((int(nc), str(e)))
            continue
        g_c = cfg.g_c
        policy = waterfill(dist, cfg.s, g_c)
        child = np.random.SeedSequence(entropy=master.entropy, spawn_key=(int(nc),))
        sim = monte_carlo(cfg, dist, policy, trials, child, workers=workers)
        points.append(
            TradeoffPoint(
                g_c=g_c,
                outage=sim.outage_mean,
                throughput=sim.throughput_min_mean,
                source="simulated",
                outage_stderr=sim.outage_stderr,
                throughput_stderr=sim.throughput_min_stderr,
            )
        )
        hit = hit_probability(dist, policy, cfg.s, g_c)
        # expected fraction of good clusters, treating users as independent
        p_good = 1.0 - (1.0 - hit) ** g_c
        points.append(
            TradeoffPoint(
                g_c=g_c,
                outage=1.0 - hit,
                throughput=(cfg.c_rate / cfg.k) * p_good / g_c,
                source="exact_sum",
            )
        )
        points.extend(
            theory_points(
                RegimeParams(
                    gamma=dist.gamma, q=dist.q, m=dist.m, s=cfg.s, g_c=g_c,
                    k=cfg.k, c_rate=cfg.c_rate,
                )
            )
        )
    return SweepResult(points=points, skipped=skipped)
