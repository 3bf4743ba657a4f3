"""Mandelbrot-Zipf content popularity model.

A library of ``m`` files, ranked by decreasing popularity, is requested
according to

    p(f) = (f + q)**(-gamma) / sum_{j=1..m} (j + q)**(-gamma),  f = 1..m

where ``gamma > 0`` controls the skew and the plateau factor ``q >= 0``
flattens the head of the ranking.  ``q = 0`` degenerates to the classical
Zipf law.  The module also provides the generalized harmonic partial sums
that normalize the model and their integral sandwich bounds, which are the
workhorse for all closed-form analysis elsewhere in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "MZipfDist",
    "PartialSumBounds",
    "partial_sum",
    "partial_sum_bounds",
]

# Chunk length for streamed summation / sampling; keeps peak memory flat
# without hurting the pairwise accumulation inside each chunk.
_CHUNK = 1 << 22


def partial_sum(gamma: float, q: float, a: int, b: int) -> float:
    """Generalized harmonic partial sum ``sum_{j=a..b} (j + q)**(-gamma)``.

    Parameters
    ----------
    gamma : float
        Exponent; any real value is accepted.
    q : float
        Plateau shift, must be >= 0.
    a, b : int
        Inclusive summation range, ``1 <= a <= b``.

    Notes
    -----
    Terms are accumulated chunk-wise with numpy's pairwise summation and the
    chunk totals are combined exactly (math.fsum), so ranges well beyond 1e6
    terms keep close to full double precision.
    """
    if q < 0:
        raise DomainError(f"q must be >= 0, got {q}")
    a = int(a)
    b = int(b)
    if a < 1 or b < a:
        raise DomainError(f"need 1 <= a <= b, got a={a}, b={b}")
    totals = []
    for lo in range(a, b + 1, _CHUNK):
        hi = min(lo + _CHUNK - 1, b)
        j = np.arange(lo, hi + 1, dtype=np.float64)
        totals.append(float(np.sum((j + q) ** (-gamma))))
    return math.fsum(totals)


@dataclass(frozen=True)
class PartialSumBounds:
    """Integral sandwich for a generalized harmonic partial sum."""

    lower: float
    upper: float
    exact: float


def partial_sum_bounds(gamma: float, q: float, a: int, b: int) -> PartialSumBounds:
    """Closed-form bounds on ``partial_sum(gamma, q, a, b)`` for ``gamma != 1``.

    Comparing the sum with the integral of ``(x + q)**(-gamma)`` gives

        lower = ((b+q+1)**(1-gamma) - (a+q)**(1-gamma)) / (1-gamma)
        upper = ((b+q)**(1-gamma) - (a+q)**(1-gamma)) / (1-gamma) + (a+q)**(-gamma)

    and ``lower <= exact <= upper`` holds for every valid range.  The log
    form at ``gamma = 1`` is intentionally not provided; callers there use
    the exact sum.
    """
    if gamma == 1.0:
        raise DomainError("bounds are undefined at gamma = 1; use partial_sum")
    if q < 0:
        raise DomainError(f"q must be >= 0, got {q}")
    a = int(a)
    b = int(b)
    if a < 1 or b < a:
        raise DomainError(f"need 1 <= a <= b, got a={a}, b={b}")
    one_m_g = 1.0 - gamma
    lower = ((b + q + 1.0) ** one_m_g - (a + q) ** one_m_g) / one_m_g
    upper = ((b + q) ** one_m_g - (a + q) ** one_m_g) / one_m_g + (a + q) ** (-gamma)
    return PartialSumBounds(lower=lower, upper=upper, exact=partial_sum(gamma, q, a, b))


@dataclass(frozen=True)
class MZipfDist:
    """Mandelbrot-Zipf popularity distribution over ranks ``1..m``.

    Parameters
    ----------
    gamma : float
        Skew exponent, > 0.
    q : float
        Plateau factor, >= 0.
    m : int
        Library size, >= 1.

    Attributes
    ----------
    normalizer : float
        ``sum_{j=1..m} (j + q)**(-gamma)``.
    probs : numpy.ndarray
        Full pmf over ranks, ``probs[f-1] = p(f)``; read-only.
    """

    gamma: float
    q: float
    m: int
    normalizer: float = field(init=False, repr=False)
    probs: np.ndarray = field(init=False, repr=False)
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be > 0, got {self.gamma}")
        if self.q < 0:
            raise DomainError(f"q must be >= 0, got {self.q}")
        if int(self.m) < 1:
            raise DomainError(f"m must be >= 1, got {self.m}")
        object.__setattr__(self, "m", int(self.m))
        weights = (np.arange(1, self.m + 1, dtype=np.float64) + self.q) ** (-self.gamma)
        norm = partial_sum(self.gamma, self.q, 1, self.m)
        probs = weights / norm
        probs.flags.writeable = False
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0  # guard searchsorted against rounding at the top end
        cdf.flags.writeable = False
        object.__setattr__(self, "normalizer", norm)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cdf", cdf)

    def pmf(self, f):
        """Probability of rank ``f`` (scalar or array of ints in ``1..m``)."""
        idx = np.asarray(f, dtype=np.int64)
        if np.any(idx < 1) or np.any(idx > self.m):
            raise DomainError(f"rank out of range 1..{self.m}")
        out = self.probs[idx - 1]
        return float(out) if np.isscalar(f) or idx.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size=None):
        """Draw ranks by inversion of the precomputed cdf.

        Returns a python int when ``size`` is None, else an int64 array of
        the requested shape.  Cost is O(log m) per draw after the O(m)
        setup, and draws are chunked so very large requests stay within a
        flat memory budget.
        """
        if size is None:
            u = rng.random()
            return int(np.searchsorted(self._cdf, u, side="right")) + 1
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.int64)
        for lo in range(0, n, _CHUNK):
            hi = min(lo + _CHUNK, n)
            u = rng.random(hi - lo)
            out[lo:hi] = np.searchsorted(self._cdf, u, side="right") + 1
        return out.reshape(shape)
