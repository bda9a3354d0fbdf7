"""Count distributions on the nonnegative integers and their monotone maximal coupling.

The coupling follows the quantile construction: with overlap mass ``gamma =
1 - d_TV(P, P')`` a single uniform ``u`` either lands in the common part
(``u <= gamma``, both coordinates ``F^-1(u)``) or is pushed through the two
residual distribution functions ``G`` and ``G'``.  When ``P`` stochastically
dominates ``P'`` the residual quantiles are ordered, so the first coordinate is
never smaller than the second.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special, stats

from .exceptions import NotStochasticallyOrdered

TRUNCATION_TOL = 1e-14
TV_TAIL_TOL = 1e-12
# cdf tables built from log-pmfs carry ~1e-13 rounding; real order violations are far larger
ORDER_SLACK = 1e-11


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"Poisson intensity must be finite and >= 0, got {self.lam}")

    @property
    def mean(self) -> float:
        return float(self.lam)

    def logpmf(self, k):
        k = np.asarray(k)
        return special.xlogy(k, self.lam) - self.lam - special.gammaln(k + 1.0)

    def sf(self, k):
        return stats.poisson.sf(k, self.lam)

    def upper(self, tol: float) -> int:
        """Smallest K with P(X > K) < tol."""
        if self.lam == 0:
            return 0
        k = int(stats.poisson.isf(tol, self.lam))
        while self.sf(k) >= tol:
            k += 1
        return k


@dataclass(frozen=True)
class Binomial:
    n: int
    p: float

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise ValueError(f"Binomial size must be a nonnegative integer, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Binomial probability must lie in [0, 1], got {self.p}")

    @property
    def mean(self) -> float:
        return self.n * self.p

    def logpmf(self, k):
        k = np.asarray(k)
        n, p = self.n, self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (special.gammaln(n + 1.0) - special.gammaln(k + 1.0) - special.gammaln(n - k + 1.0)
                   + special.xlogy(k, p) + special.xlog1py(n - k, -p))
        return np.where((k < 0) | (k > n), -np.inf, out)

    def sf(self, k):
        return stats.binom.sf(k, self.n, self.p)

    def upper(self, tol: float) -> int:
        if self.p == 0 or self.n == 0:
            return 0
        if self.p == 1:
            return self.n
        with warnings.catch_warnings():
            # boost cannot bracket the root for extreme p; the scan below corrects any start value
            warnings.simplefilter("ignore", RuntimeWarning)
            start = stats.binom.isf(tol, self.n, self.p)
        k = min(self.n, int(start)) if np.isfinite(start) else 0
        while k < self.n and self.sf(k) >= tol:
            k += 1
        return k


@dataclass(frozen=True)
class PointMass:
    k: int

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise ValueError(f"point mass location must be a nonnegative integer, got {self.k}")

    @property
    def mean(self) -> float:
        return float(self.k)

    def logpmf(self, k):
        k = np.asarray(k)
        return np.where(k == self.k, 0.0, -np.inf)

    def sf(self, k):
        return np.where(np.asarray(k) < self.k, 1.0, 0.0)

    def upper(self, tol: float) -> int:
        return self.k


CountDistribution = Union[Poisson, Binomial, PointMass]


def pmf(dist: CountDistribution, k):
    """Probability mass at ``k`` (computed from the log-pmf)."""
    out = np.exp(dist.logpmf(k))
    return float(out) if np.ndim(out) == 0 else out


def pmf_table(dist: CountDistribution, upper: int) -> np.ndarray:
    return np.exp(dist.logpmf(np.arange(upper + 1)))


def cdf_table(dist: CountDistribution, upper: int) -> np.ndarray:
    return np.cumsum(pmf_table(dist, upper))


def quantile(dist: CountDistribution, u: float) -> int:
    """Generalized inverse ``inf{k : F(k) >= u}`` for ``u`` in (0, 1)."""
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in the open interval (0, 1)")
    upper = dist.upper(min(TRUNCATION_TOL, (1.0 - u) / 4))
    cdf = cdf_table(dist, upper)
    idx = int(np.searchsorted(cdf, u, side="left"))
    return min(idx, upper)


def tv_distance(p: CountDistribution, q: CountDistribution, tail_tol: float = TV_TAIL_TOL) -> float:
    """Total variation distance, summed until both residual tails are below ``tail_tol``."""
    if tail_tol <= 0:
        raise ValueError("tail_tol must be positive")
    upper = max(p.upper(tail_tol), q.upper(tail_tol))
    return 0.5 * math.fsum(np.abs(pmf_table(p, upper) - pmf_table(q, upper)))


def stochastically_larger(p: CountDistribution, q: CountDistribution, slack: float = ORDER_SLACK) -> bool:
    """True if ``P({0..k}) <= Q({0..k})`` for every k (P dominates Q)."""
    upper = max(p.upper(TRUNCATION_TOL), q.upper(TRUNCATION_TOL))
    return bool(np.all(cdf_table(p, upper) <= cdf_table(q, upper) + slack))


@dataclass(frozen=True)
class CoupledSamplePlan:
    """Breakpoint representation of the monotone maximal coupling.

    ``F``, ``G`` and ``G_prime`` are cumulative sums on ``0..upper``, oriented so
    that ``G`` belongs to the dominating distribution.  ``swapped`` records that
    the caller passed the dominated distribution first; draws are returned in
    the caller's order.
    """

    gamma: float
    F: np.ndarray
    G: np.ndarray
    G_prime: np.ndarray
    swapped: bool = False
    first: CountDistribution | None = field(default=None, compare=False)
    second: CountDistribution | None = field(default=None, compare=False)

    @property
    def upper(self) -> int:
        return len(self.F) - 1

    def _inverse(self, cum: np.ndarray, z: float) -> int:
        z = min(z, cum[-1])
        return min(int(np.searchsorted(cum, z, side="left")), self.upper)

    def draw(self, u: float) -> tuple[int, int]:
        if u <= self.gamma or self.G[-1] <= 0.0:
            x = self._inverse(self.F, min(u, self.gamma))
            return x, x
        z = u - self.gamma
        hi, lo = self._inverse(self.G, z), self._inverse(self.G_prime, z)
        return (lo, hi) if self.swapped else (hi, lo)

    def segments(self) -> list[tuple[float, float, int, int]]:
        """Partition of (0, 1] into intervals on which ``draw`` is constant.

        Each entry is ``(lo, hi, x, x_prime)`` meaning every ``u`` in ``(lo, hi]``
        maps to ``(x, x_prime)`` in caller order.
        """
        out = []
        prev = 0.0
        for k in range(self.upper + 1):
            if self.F[k] > prev:
                out.append((prev, float(self.F[k]), k, k))
                prev = float(self.F[k])
        # residual part: merge breakpoints of G and G'
        cuts = np.union1d(self.G[self.G > 0], self.G_prime[self.G_prime > 0])
        prev_z = 0.0
        for z in cuts:
            if z <= prev_z:
                continue
            mid = 0.5 * (prev_z + z)
            hi, lo = self._inverse(self.G, mid), self._inverse(self.G_prime, mid)
            pair = (lo, hi) if self.swapped else (hi, lo)
            out.append((self.gamma + prev_z, self.gamma + float(z), *pair))
            prev_z = float(z)
        return out


def build_coupling(p: CountDistribution, p_prime: CountDistribution) -> CoupledSamplePlan:
    """Monotone maximal coupling plan for an ordered pair (either argument order)."""
    upper = max(p.upper(TRUNCATION_TOL), p_prime.upper(TRUNCATION_TOL))
    a, b = pmf_table(p, upper), pmf_table(p_prime, upper)
    ca, cb = np.cumsum(a), np.cumsum(b)
    # orientation from the smaller violation, so near-equal laws are not misread
    over_p, over_q = float(np.max(ca - cb)), float(np.max(cb - ca))
    if min(over_p, over_q) > ORDER_SLACK:
        raise NotStochasticallyOrdered(f"{p!r} and {p_prime!r} are not stochastically ordered")
    swapped = over_p > over_q
    if swapped:
        a, b = b, a
    m = np.minimum(a, b)
    F = np.cumsum(m)
    return CoupledSamplePlan(
        gamma=float(F[-1]),
        F=F,
        G=np.cumsum(a - m),
        G_prime=np.cumsum(b - m),
        swapped=swapped,
        first=p,
        second=p_prime,
    )


def draw_coupled(plan: CoupledSamplePlan, u: float) -> tuple[int, int]:
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in the open interval (0, 1)")
    return plan.draw(u)


def poisson_tv_bound(lam: float, lam_prime: float) -> float:
    """Upper bound ``sqrt(2/e) |sqrt(lam) - sqrt(lam')|`` on the Poisson TV distance."""
    if lam < 0 or lam_prime < 0:
        raise ValueError("intensities must be nonnegative")
    return math.sqrt(2.0 / math.e) * abs(math.sqrt(lam) - math.sqrt(lam_prime))


def sqrt_mean(dist: CountDistribution, tail_tol: float = TV_TAIL_TOL) -> float:
    """``E sqrt(X)`` by truncated summation."""
    upper = dist.upper(tail_tol)
    k = np.arange(upper + 1)
    return math.fsum(np.sqrt(k) * pmf_table(dist, upper))


def sqrt_moment_gap(dist: CountDistribution, tail_tol: float = TV_TAIL_TOL) -> float:
    """``E|sqrt(Z) - E sqrt(Z)|`` by truncated summation."""
    if not isinstance(dist, (Poisson, Binomial)):
        raise TypeError("sqrt_moment_gap is defined for Poisson and Binomial laws")
    upper = dist.upper(tail_tol)
    k = np.arange(upper + 1)
    w = pmf_table(dist, upper)
    root = np.sqrt(k)
    centre = math.fsum(root * w)
    return math.fsum(np.abs(root - centre) * w)


# -- batched draws used by the coupling engine -------------------------------
#
# For an ordered pair with dominating pmf p and dominated pmf q the likelihood
# ratio p/q is nondecreasing, so there is a crossing index k* with
# min(p, q) = p below k* and = q from k* on.  The residual distribution
# functions are then G'(k) = cdf_q(k) - cdf_p(k) on [0, k*) and
# G(k) = (cdf_p(k) - a) - (cdf_q(k) - a') on [k*, inf), with a = cdf_p(k*-1),
# a' = cdf_q(k*-1), and every generalized inverse is a monotone search over
# cdf evaluations.  Nothing of size (rows x support) is materialised.


def _first_true(pred, lo, hi):
    """Smallest k in [lo, hi] with pred(k) true (pred monotone); hi if none."""
    lo = lo.copy()
    hi = np.maximum(hi, lo)
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        ok = pred(mid)
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid + 1)
    return lo


def _search_coupled(cdf_p, cdf_q, log_ratio, upper, u):
    zero = np.zeros_like(upper)
    kstar = _first_true(lambda k: log_ratio(k) >= 0.0, zero, upper)
    below = np.maximum(kstar - 1, 0)
    a = np.where(kstar > 0, cdf_p(below), 0.0)
    ap = np.where(kstar > 0, cdf_q(below), 0.0)
    gamma = a + (1.0 - ap)
    same = u <= gamma
    x_low = _first_true(lambda k: cdf_p(k) >= u, zero, below)
    x_high = _first_true(lambda k: cdf_q(k) >= u - a + ap, kstar, upper)
    x_same = np.where(u <= a, x_low, x_high)
    z = u - gamma
    x_big = _first_true(lambda k: cdf_p(k) - cdf_q(k) >= z + a - ap, kstar, upper)
    x_small = _first_true(lambda k: cdf_q(k) - cdf_p(k) >= z, zero, below)
    return np.where(same, x_same, x_big), np.where(same, x_same, x_small)


def draw_coupled_poisson(lam, lam_prime, u):
    """Vectorised monotone maximal coupling of ``Poi(lam)`` and ``Poi(lam_prime)``.

    Returns integer arrays ``(x, x_prime)``; ``x >= x_prime`` wherever
    ``lam >= lam_prime``.  Each row consumes exactly one uniform.
    """
    lam = np.asarray(lam, dtype=float)
    lam_prime = np.asarray(lam_prime, dtype=float)
    u = np.asarray(u, dtype=float)
    big = np.maximum(lam, lam_prime)
    small = np.minimum(lam, lam_prime)
    upper = np.ceil(big + 10.0 * np.sqrt(big) + 25.0).astype(np.int64)

    def log_ratio(k):
        with np.errstate(invalid="ignore"):
            r = special.xlogy(k, big) - special.xlogy(k, small) - (big - small)
        return np.nan_to_num(r, nan=0.0)   # only both-zero masses at k > 0, where p >= q holds

    x, xp = _search_coupled(lambda k: special.pdtr(k, big), lambda k: special.pdtr(k, small),
                            log_ratio, upper, u)
    flip = lam < lam_prime
    return np.where(flip, xp, x), np.where(flip, x, xp)


def draw_coupled_binomial(n, n_prime, p, u):
    """Vectorised monotone maximal coupling of ``Bin(n, p)`` and ``Bin(n_prime, p)``."""
    n = np.asarray(n, dtype=np.int64)
    n_prime = np.asarray(n_prime, dtype=np.int64)
    p = np.broadcast_to(np.asarray(p, dtype=float), n.shape)
    u = np.asarray(u, dtype=float)
    big = np.maximum(n, n_prime)
    small = np.minimum(n, n_prime)
    mu = big * p
    upper = np.minimum(big, np.ceil(mu + 10.0 * np.sqrt(mu * (1.0 - p)) + 25.0)).astype(np.int64)

    def cdf(k, size):
        return np.where(k >= size, 1.0, special.bdtr(np.minimum(k, size), size, p))

    def log_ratio(k):
        with np.errstate(invalid="ignore"):
            r = _binom_logpmf(k, big, p) - _binom_logpmf(k, small, p)
        return np.nan_to_num(r, nan=0.0)   # for 0 < p < 1 only above both supports

    x, xp = _search_coupled(lambda k: cdf(k, big), lambda k: cdf(k, small), log_ratio, upper, u)
    # p in {0, 1} are point masses; the search above assumes full supports
    x = np.where(p == 0.0, 0, np.where(p == 1.0, big, x))
    xp = np.where(p == 0.0, 0, np.where(p == 1.0, small, xp))
    flip = n < n_prime
    return np.where(flip, xp, x), np.where(flip, x, xp)


def _binom_logpmf(k, n, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (special.gammaln(n + 1.0) - special.gammaln(k + 1.0) - special.gammaln(n - k + 1.0)
               + special.xlogy(k, p) + special.xlog1py(n - k, -p))
    return np.where(k > n, -np.inf, out)
