"""Optimal random cache placement for clustered D2D delivery.

Each device independently fills its ``s`` cache slots by sampling files
from a placement distribution ``p_c``.  A request for file ``f`` by a user
in a cluster of ``g_c`` devices is served locally when at least one of the
``g_c - 1`` other devices holds ``f``, which happens with probability
``1 - (1 - p_c(f))**(s*(g_c-1))``.  Maximizing the expected local-service
probability over placement distributions is a concave problem whose KKT
conditions have a water-filling solution:

    p_c(f) = max(0, 1 - nu / z_f),    z_f = p(f)**(1/phi),

with tilt exponent ``phi = s*(g_c-1) - 1`` and water level ``nu`` chosen so
the placement sums to one.  The support is a prefix ``1..m_star`` of the
popularity ranking because ``z`` is non-increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .popularity import MZipfDist

__all__ = [
    "CachingPolicy",
    "AsymptoticConstants",
    "waterfill",
    "hit_probability",
    "solve_cutoff_constant",
    "asymptotic_constants",
]


def _exponent_denom(s: int, g_c: int) -> int:
    s = int(s)
    g_c = int(g_c)
    if s < 1:
        raise DomainError(f"s must be >= 1, got {s}")
    if g_c < 2:
        raise DomainError(f"g_c must be >= 2, got {g_c}")
    phi = s * (g_c - 1) - 1
    if phi < 1:
        raise DomainError(
            f"cluster too small for policy exponent: s*(g_c-1) = {phi + 1} < 2"
        )
    return phi


@dataclass(frozen=True)
class CachingPolicy:
    """Water-filling placement over ranks ``1..len(probs)``.

    Attributes
    ----------
    probs : numpy.ndarray
        Placement distribution; ``probs[f-1]`` is the probability that a
        single cache slot draws file ``f``.
    nu : float
        Water level of the KKT solution.
    m_star : int
        Number of files with positive placement mass (support prefix).
    exponent_denom : int
        Tilt exponent ``s*(g_c-1) - 1`` the policy was built for.
    """

    probs: np.ndarray
    nu: float
    m_star: int
    exponent_denom: int


def waterfill(dist: MZipfDist, s: int, g_c: int) -> CachingPolicy:
    """Hit-probability-optimal placement for one cluster geometry.

    Scans the water level incrementally: with ``nu_m = (m-1) / sum_{f<=m}
    1/z_f``, the support grows while ``z_{m+1} > nu_m`` and stops at the
    unique cutoff where ``z_{m_star} >= nu`` and the next tilted popularity
    falls below the level.  O(m) after the pmf.
    """
    phi = _exponent_denom(s, g_c)
    z = dist.probs ** (1.0 / phi)
    inv_csum = np.cumsum(1.0 / z)
    m = dist.m
    if m == 1:
        probs = np.ones(1)
        probs.flags.writeable = False
        return CachingPolicy(probs=probs, nu=0.0, m_star=1, exponent_denom=phi)
    idx = np.arange(1, m + 1, dtype=np.float64)
    nu_at = (idx - 1.0) / inv_csum
    # first m with z[m+1] <= nu_m ends the support; otherwise all of 1..m
    below = np.nonzero(z[1:] <= nu_at[:-1])[0]
    m_star = int(below[0]) + 1 if below.size else m
    nu = float(nu_at[m_star - 1])
    probs = np.zeros(m)
    probs[:m_star] = 1.0 - nu / z[:m_star]
    probs.flags.writeable = False
    return CachingPolicy(probs=probs, nu=nu, m_star=m_star, exponent_denom=phi)


def hit_probability(dist: MZipfDist, policy: CachingPolicy, s: int, g_c: int) -> float:
    """Probability that a random request is served inside the cluster.

    Averages ``1 - (1 - p_c(f))**(s*(g_c-1))`` over the request pmf; the
    requesting device's own cache is not counted.
    """
    phi = _exponent_denom(s, g_c)
    if len(policy.probs) != dist.m:
        raise DomainError(
            f"policy covers {len(policy.probs)} files, popularity has {dist.m}"
        )
    exponent = phi + 1
    return float(np.sum(dist.probs * (1.0 - (1.0 - policy.probs) ** exponent)))


def solve_cutoff_constant(c2: float) -> float:
    """Solve ``c = 1 + c2*log(1 + c/c2)`` for ``c >= 1``.

    The solution scales the asymptotic support cutoff of the water-filling
    placement.  ``c2 = 0`` returns exactly 1.  Monotone bisection to an
    absolute tolerance of 1e-12.
    """
    if c2 < 0:
        raise DomainError(f"c2 must be >= 0, got {c2}")
    if c2 == 0.0:
        return 1.0

    def residual(c: float) -> float:
        return c - 1.0 - c2 * math.log1p(c / c2)

    lo, hi = 1.0, 2.0
    while residual(hi) < 0.0:
        hi *= 2.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if residual(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class AsymptoticConstants:
    """Scaling constants of the water-filling cutoff for one geometry.

    ``a_prime = gamma/phi`` is the tilted decay exponent, ``c2 = q*a_prime``
    the rescaled plateau, ``c1`` the cutoff constant solving the fixed
    point above, and ``m_star_asym = min(c1*s*g_c/gamma, m)`` the
    large-cluster approximation of the exact support size.
    """

    a_prime: float
    c1: float
    c2: float
    m_star_asym: float


def asymptotic_constants(dist: MZipfDist, s: int, g_c: int) -> AsymptoticConstants:
    phi = _exponent_denom(s, g_c)
    a_prime = dist.gamma / phi
    c2 = dist.q * a_prime
    c1 = solve_cutoff_constant(c2)
    m_star_asym = min(c1 * s * g_c / dist.gamma, float(dist.m))
    return AsymptoticConstants(a_prime=a_prime, c1=c1, c2=c2, m_star_asym=m_star_asym)
