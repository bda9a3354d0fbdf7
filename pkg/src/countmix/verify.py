"""Deterministic numerical checks of the coupling and moment inequalities.

Every function returns slacks (``bound - value``) or accounting errors so a
caller can assert a tolerance; nothing here samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (Binomial, CountDistribution, Poisson, build_coupling,
                            pmf_table, poisson_tv_bound, sqrt_mean, sqrt_moment_gap,
                            tv_distance)


@dataclass(frozen=True)
class CouplingAccounting:
    """Exact interval accounting of a coupling plan over ``(0, 1]``."""

    total_measure: float
    marginal_error_first: float    # max_k |Leb{u: x(u) = k} - P(k)|
    marginal_error_second: float
    disagree_measure: float
    tv: float
    ordered: bool                  # first >= second on every segment (dominating law first)

    @property
    def tv_error(self) -> float:
        return abs(self.disagree_measure - self.tv)


def coupling_accounting(p: CountDistribution, q: CountDistribution) -> CouplingAccounting:
    plan = build_coupling(p, q)
    segs = plan.segments()
    upper = plan.upper
    m_first = np.zeros(upper + 1)
    m_second = np.zeros(upper + 1)
    dis = []
    first_dominates = not plan.swapped
    ordered = True
    for lo, hi, x, xp in segs:
        w = hi - lo
        m_first[x] += w
        m_second[xp] += w
        if x != xp:
            dis.append(w)
        if (x < xp) if first_dominates else (x > xp):
            ordered = False
    err_p = float(np.max(np.abs(m_first - pmf_table(p, upper))))
    err_q = float(np.max(np.abs(m_second - pmf_table(q, upper))))
    return CouplingAccounting(
        total_measure=math.fsum(hi - lo for lo, hi, _, _ in segs),
        marginal_error_first=err_p, marginal_error_second=err_q,
        disagree_measure=math.fsum(dis), tv=tv_distance(p, q), ordered=ordered,
    )


def poisson_sqrt_increment_slack(grid) -> np.ndarray:
    """``2(sqrt(l') - sqrt(l)) - (E sqrt X' - E sqrt X)`` for all grid pairs ``l < l'``."""
    g = np.asarray(sorted(set(float(v) for v in grid)))
    m = np.array([sqrt_mean(Poisson(v)) for v in g])
    i, j = np.triu_indices(g.size, k=1)
    return 2.0 * (np.sqrt(g[j]) - np.sqrt(g[i])) - (m[j] - m[i])


def binomial_sqrt_increment_slack(ns, ps) -> np.ndarray:
    """``2 sqrt(p)(sqrt(n+1) - sqrt(n)) - (E sqrt X_{n+1} - E sqrt X_n)`` over the grid, shape (len(ps), len(ns))."""
    ns = np.asarray(ns, dtype=np.int64)
    out = np.empty((len(ps), ns.size))
    for a, p in enumerate(ps):
        cache = {}

        def em(n):
            if n not in cache:
                cache[n] = sqrt_mean(Binomial(int(n), float(p)))
            return cache[n]

        for b, n in enumerate(ns):
            out[a, b] = 2.0 * math.sqrt(p) * (math.sqrt(n + 1) - math.sqrt(n)) - (em(n + 1) - em(n))
    return out


def poisson_tv_bound_slack(grid) -> np.ndarray:
    """``sqrt(2/e)|sqrt(l) - sqrt(l')| - d_TV`` for every ordered grid pair."""
    g = [float(v) for v in grid]
    return np.array([poisson_tv_bound(a, b) - tv_distance(Poisson(a), Poisson(b))
                     for ia, a in enumerate(g) for b in g[ia + 1:]])


def poisson_sqrt_moment_slack(lams) -> np.ndarray:
    """``2 - E|sqrt Z - E sqrt Z|`` for ``Z ~ Poi(lam)``."""
    return np.array([2.0 - sqrt_moment_gap(Poisson(float(v))) for v in lams])


def binomial_sqrt_moment_slack(ns, ps) -> np.ndarray:
    """``2 sqrt(1-p) - E|sqrt Z - E sqrt Z|`` for ``Z ~ Bin(n, p)``, shape (len(ps), len(ns))."""
    return np.array([[2.0 * math.sqrt(1.0 - p) - sqrt_moment_gap(Binomial(int(n), float(p))) for n in ns]
                     for p in ps])


def binomial_tv_ratios(n_max: int, ps, step: int = 1) -> np.ndarray:
    """``d_TV(Bin(n,p), Bin(m,p)) / |sqrt(n) - sqrt(m)|`` for ``m < n <= n_max``; shape (len(ps), pairs)."""
    sizes = list(range(0, n_max + 1, step))
    out = []
    for p in ps:
        tabs = {n: pmf_table(Binomial(n, float(p)), n_max) for n in sizes}
        row = []
        for ia, m in enumerate(sizes):
            for n in sizes[ia + 1:]:
                tv = 0.5 * math.fsum(np.abs(tabs[n] - tabs[m]))
                row.append(tv / (math.sqrt(n) - math.sqrt(m)))
        out.append(row)
    return np.array(out)
