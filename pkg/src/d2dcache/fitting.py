"""Fit the shifted-power popularity law to access logs.

The pipeline is: raw access records -> per-content counts of *distinct*
users (repeat requests by the same user carry no popularity information)
-> rank-ordered empirical distribution -> KL projection onto the MZipf
family over a (gamma, q) search grid with local refinement.

The KL objective decomposes as

    kl(gamma, q) = sum_r p_r ln p_r + gamma * sum_r p_r ln(r + q) + ln H

with ``H`` the model normalizer, so the data-dependent pieces are
precomputed once per ``q`` and each grid point costs one normalizer sum.
The search is deterministic: no randomness, ties broken toward smaller
``(kl, gamma, q)`` lexicographically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import DomainError
from .popularity import MZipfDist, partial_sum

__all__ = [
    "AccessRecord",
    "EmpiricalPopularity",
    "FitSearch",
    "FitResult",
    "dedupe_accesses",
    "kl_divergence",
    "fit_mzipf",
    "subsample_study",
    "synthetic_records",
    "load_access_log",
    "write_empirical_csv",
]


@dataclass(frozen=True)
class AccessRecord:
    user_id: str
    content_id: str
    timestamp: float | None = None


@dataclass(frozen=True)
class EmpiricalPopularity:
    """Rank-ordered distinct-user request counts.

    ``counts[r-1]`` is the number of distinct users who requested the
    rank-r content, ``total`` the number of unique (user, content) pairs
    and ``distinct_users`` the number of users seen.
    """

    counts: np.ndarray
    total: int
    distinct_users: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", c)
        if c.ndim != 1 or (c.size and np.any(np.diff(c) > 0)):
            raise DomainError("counts must be a 1-d non-increasing array")
        if c.size and (c[-1] < 1 or int(c.sum()) != self.total):
            raise DomainError("counts must be positive and sum to total")

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.total


def dedupe_accesses(records) -> EmpiricalPopularity:
    """Collapse repeat requests and rank contents by distinct-user count.

    Ties are broken by first appearance in the log so the output is a
    deterministic function of record order.
    """
    user_ids: dict = {}
    content_ids: dict = {}
    n = len(records)
    u = np.empty(n, dtype=np.int64)
    c = np.empty(n, dtype=np.int64)
    for i, r in enumerate(records):
        u[i] = user_ids.setdefault(r.user_id, len(user_ids))
        c[i] = content_ids.setdefault(r.content_id, len(content_ids))
    if n == 0:
        return EmpiricalPopularity(np.empty(0, dtype=np.int64), 0, 0)
    n_contents = len(content_ids)
    pair_key = u * n_contents + c
    uniq = np.unique(pair_key)
    counts = np.bincount(uniq % n_contents, minlength=n_contents)
    # sort by count desc, first appearance asc
    order = np.lexsort((np.arange(n_contents), -counts))
    return EmpiricalPopularity(counts[order], int(uniq.size), len(user_ids))


def kl_divergence(data_probs, model_probs) -> float:
    """KL divergence (natural log) between rank-matched distributions.

    ``model_probs`` may cover only the observed ranks of a wider model;
    the result is still nonnegative as long as the model subvector sums
    to at most 1.
    """
    p = np.asarray(data_probs, dtype=float)
    m = np.asarray(model_probs, dtype=float)
    if p.shape != m.shape:
        raise DomainError(f"length mismatch: data {p.shape} vs model {m.shape}")
    mask = p > 0
    if np.any(m[mask] <= 0):
        raise DomainError("model assigns zero probability to observed rank")
    p = p[mask]
    return float(np.sum(p * np.log(p / m[mask])))


@dataclass(frozen=True)
class FitSearch:
    """Search configuration for ``fit_mzipf``.

    The coarse pass covers ``gamma_range`` linearly and ``q_range``
    geometrically past the first cell (popularity is far more sensitive
    to q near zero).  Refinement re-grids 7 points per axis around the
    incumbent, shrinking the box 5x per round.
    """

    gamma_range: tuple = (0.05, 5.0)
    q_range: tuple | None = None
    coarse_steps: int = 50
    refine_rounds: int = 6
    refine_points: int = 7
    shrink: float = 5.0


@dataclass(frozen=True)
class FitResult:
    gamma: float
    q: float
    m: int
    kl: float
    evaluations: int


def _q_grid(q_lo: float, q_hi: float, steps: int) -> np.ndarray:
    if q_lo > 0:
        return np.geomspace(q_lo, q_hi, steps)
    q_floor = min(0.5, q_hi / 10.0)
    return np.concatenate(([0.0], np.geomspace(q_floor, q_hi, steps - 1)))


def fit_mzipf(emp: EmpiricalPopularity, m: int | None = None,
              search: FitSearch | None = None) -> FitResult:
    """Best (gamma, q) in KL divergence for a library of m files.

    ``m`` defaults to the number of observed contents.  Raises
    ``DomainError`` for empty data or ranges outside gamma in (0, 5],
    q in [0, m].
    """
    if emp.total == 0:
        raise DomainError("no unique accesses")
    r_obs = len(emp.counts)
    if m is None:
        m = r_obs
    if m < r_obs:
        raise DomainError(f"library size {m} smaller than observed ranks {r_obs}")
    s = search or FitSearch()
    g_lo, g_hi = s.gamma_range
    if not (0 < g_lo < g_hi <= 5.0):
        raise DomainError(f"gamma_range must satisfy 0 < lo < hi <= 5, got {s.gamma_range}")
    q_lo, q_hi = s.q_range if s.q_range is not None else (0.0, float(m))
    if not (0 <= q_lo < q_hi <= m):
        raise DomainError(f"q_range must satisfy 0 <= lo < hi <= m, got {(q_lo, q_hi)}")

    p = emp.probs
    ranks = np.arange(1, r_obs + 1, dtype=float)
    plogp = float(np.sum(p * np.log(p)))
    evals = 0

    def kl_at(gamma: float, q: float) -> float:
        nonlocal evals
        evals += 1
        cross = gamma * float(p @ np.log(ranks + q))
        return plogp + cross + math.log(partial_sum(gamma, q, 1, m))

    best = (math.inf, math.inf, math.inf)  # (kl, gamma, q)
    gammas = np.linspace(g_lo, g_hi, s.coarse_steps)
    qs = _q_grid(q_lo, q_hi, s.coarse_steps)
    for q in qs:
        lw = np.log(ranks + q)
        for g in gammas:
            evals += 1
            kl = plogp + g * float(p @ lw) + math.log(partial_sum(g, q, 1, m))
            cand = (kl, float(g), float(q))
            if cand < best:
                best = cand

    # local box sized to the coarse cell around the incumbent
    w_g = (g_hi - g_lo) / max(s.coarse_steps - 1, 1)
    qi = int(np.argmin(np.abs(qs - best[2])))
    nb = []
    if qi > 0:
        nb.append(qs[qi] - qs[qi - 1])
    if qi < len(qs) - 1:
        nb.append(qs[qi + 1] - qs[qi])
    w_q = max(nb) if nb else max(q_hi - q_lo, 1.0)

    for _ in range(s.refine_rounds):
        g0, q0 = best[1], best[2]
        g_pts = np.linspace(max(g_lo, g0 - w_g), min(g_hi, g0 + w_g), s.refine_points)
        q_pts = np.linspace(max(q_lo, q0 - w_q), min(q_hi, q0 + w_q), s.refine_points)
        for q in q_pts:
            for g in g_pts:
                cand = (kl_at(float(g), float(q)), float(g), float(q))
                if cand < best:
                    best = cand
        w_g /= s.shrink
        w_q /= s.shrink

    dist = MZipfDist(best[1], best[2], m)
    kl_final = kl_divergence(p, dist.pmf(np.arange(1, r_obs + 1)))
    return FitResult(gamma=best[1], q=best[2], m=m, kl=kl_final, evaluations=evals)


def subsample_study(records, n_values, rng: np.random.Generator,
                    m: int | None = None, search: FitSearch | None = None):
    """Refit on random user subsets of the given sizes.

    Keeps every record of each sampled user.  Returns one FitResult per
    entry of ``n_values``; sampling without replacement, so each n must
    not exceed the number of distinct users.
    """
    users = list(dict.fromkeys(r.user_id for r in records))
    bad = [n for n in n_values if n < 1 or n > len(users)]
    if bad:
        raise DomainError(
            f"subsample sizes {bad} outside 1..{len(users)} distinct users"
        )
    results = []
    for n in n_values:
        chosen = set(rng.choice(len(users), size=n, replace=False).tolist())
        keep = {users[i] for i in chosen}
        sub = [r for r in records if r.user_id in keep]
        results.append(fit_mzipf(dedupe_accesses(sub), m=m, search=search))
    return results


def synthetic_records(dist: MZipfDist, n_users: int, requests_per_user: int,
                      rng: np.random.Generator):
    """Draw a synthetic access log: each user requests iid from ``dist``."""
    draws = dist.sample(rng, size=n_users * requests_per_user)
    draws = draws.reshape(n_users, requests_per_user)
    return [
        AccessRecord(f"u{i}", f"f{draws[i, j]}")
        for i in range(n_users)
        for j in range(requests_per_user)
    ]


def _parse_ts(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return datetime.fromisoformat(text).timestamp()


def load_access_log(path):
    """Read a user_id,content_id[,timestamp] CSV.

    Returns ``(records, bad)`` where ``bad`` lists (line_number, reason)
    for rows that were skipped; parsing continues past them.
    """
    records = []
    bad = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DomainError("empty file: expected header user_id,content_id[,timestamp]")
        header = [h.strip() for h in header]
        if header not in (["user_id", "content_id"], ["user_id", "content_id", "timestamp"]):
            raise DomainError(
                f"expected header user_id,content_id[,timestamp], got {','.join(header)}"
            )
        width = len(header)
        for ln, row in enumerate(reader, start=2):
            if len(row) != width:
                bad.append((ln, f"expected {width} fields, got {len(row)}"))
                continue
            user = row[0].strip()
            content = row[1].strip()
            if not user or not content:
                bad.append((ln, "empty user_id or content_id"))
                continue
            ts = None
            if width == 3:
                try:
                    ts = _parse_ts(row[2].strip())
                except ValueError:
                    bad.append((ln, f"bad timestamp {row[2].strip()!r}"))
                    continue
            records.append(AccessRecord(user, content, ts))
    return records, bad


def write_empirical_csv(emp: EmpiricalPopularity, fh):
    w = csv.writer(fh)
    w.writerow(["rank", "count", "probability"])
    for r, cnt in enumerate(emp.counts, start=1):
        w.writerow([r, int(cnt), repr(float(cnt / emp.total))])
