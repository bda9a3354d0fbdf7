"""Small dense nonnegative linear algebra.

Matrices here are the coefficient matrices of the count models (dimension d is
small, typically <= 8).  Everything is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import DimensionMismatch, NonConvergence

DEFAULT_TOL = 1e-10
MAX_SQUARINGS = 200


def nonneg_matrix(m) -> np.ndarray:
    """Validate and return ``m`` as a square float matrix with entries >= 0."""
    a = np.array(m, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    if np.any(a < 0):
        raise ValueError("matrix entries must be nonnegative")
    return a


def nonneg_vector(v, dim: int | None = None) -> np.ndarray:
    a = np.array(v, dtype=float, ndmin=1)
    if a.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionMismatch(f"expected length {dim}, got {a.shape[0]}")
    if np.any(a < 0):
        raise ValueError("vector entries must be nonnegative")
    return a


def norm1(m) -> float:
    """Maximum absolute column sum."""
    a = np.asarray(m, dtype=float)
    return float(np.abs(a).sum(axis=0).max())


def elementwise_sqrt(m) -> np.ndarray:
    return np.sqrt(nonneg_matrix(m))


def log_matrix_power_norm(m, n: int) -> float:
    """``log ||m**n||_1`` by binary powering with per-step rescaling.

    Returns ``-inf`` when the power is exactly zero.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    a = nonneg_matrix(m)
    d = a.shape[0]
    # result = res * exp(res_log), base = base * exp(base_log)
    res, res_log = np.eye(d), 0.0
    base, base_log = a.copy(), 0.0
    s = norm1(base)
    if s == 0.0:
        return 0.0 if n == 0 else -math.inf
    base, base_log = base / s, math.log(s)
    k = n
    while k:
        if k & 1:
            res = res @ base
            res_log += base_log
            s = norm1(res)
            if s == 0.0:
                return -math.inf
            res, res_log = res / s, res_log + math.log(s)
        k >>= 1
        if k:
            base = base @ base
            base_log *= 2.0
            s = norm1(base)
            if s == 0.0:
                return -math.inf
            base, base_log = base / s, base_log + math.log(s)
    return res_log + math.log(norm1(res))


def matrix_power_norm(m, n: int) -> float:
    """``||m**n||_1``; ``math.inf`` if it overflows a double."""
    lv = log_matrix_power_norm(m, n)
    if lv == -math.inf:
        return 0.0
    if lv > 709.0:
        return math.inf
    return math.exp(lv)


def gelfand_sequence(m, steps: int) -> list[float]:
    """``||m**(2**j)||_1 ** (1 / 2**j)`` for j = 0..steps-1, computed with rescaling."""
    a = nonneg_matrix(m)
    out = []
    log_scale = 0.0
    cur = a.copy()
    for j in range(steps):
        s = norm1(cur)
        if s == 0.0:
            out.extend([0.0] * (steps - j))
            break
        lognorm = log_scale + math.log(s)
        out.append(math.exp(lognorm / 2.0**j))
        cur = cur / s
        log_scale = 2.0 * lognorm
        cur = cur @ cur
    return out


def _radius_from_poly(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.roots(np.poly(a)))))


def spectral_radius(m, tol: float = DEFAULT_TOL, max_squarings: int = MAX_SQUARINGS) -> float:
    """Spectral radius of a nonnegative matrix by repeated squaring.

    Iterates ``||m**(2**j)||_1 ** (1/2**j)`` until two successive estimates
    differ by less than ``tol`` twice in a row.  Small matrices (d <= 3) fall
    back to characteristic-polynomial roots if the cap is reached.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = nonneg_matrix(m)
    if a.shape[0] == 1:
        return float(a[0, 0])
    cur = a.copy()
    log_scale = 0.0
    prev = None
    calm = 0
    for j in range(max_squarings):
        s = norm1(cur)
        if s == 0.0:
            return 0.0
        lognorm = log_scale + math.log(s)
        est = math.exp(lognorm / 2.0**j)
        if prev is not None and abs(est - prev) < tol:
            calm += 1
            if calm >= 2:
                return est
        else:
            calm = 0
        prev = est
        cur = cur / s
        log_scale = 2.0 * lognorm
        cur = cur @ cur
    if a.shape[0] <= 3:
        return _radius_from_poly(a)
    raise NonConvergence(f"spectral radius did not settle within {max_squarings} squarings")


class Condition(str, Enum):
    A1 = "A1"                   # rho(sqrt(A) + 2 sqrt(B)) < 1, INGARCH with explosive covariates
    A2 = "A2"                   # rho(sqrt(B)) < 1/2, GINAR with explosive covariates
    T2PLUS = "T2PLUS"           # rho(A + B) < 1, INGARCH, bounded covariates
    T2PLUSPLUS = "T2PLUSPLUS"   # rho(B) < 1, GINAR, bounded covariates


@dataclass(frozen=True)
class ConditionCheck:
    which: Condition
    satisfied: bool
    radius: float
    threshold: float


def condition_matrix(a, b, which: Condition | str) -> np.ndarray:
    which = Condition(which)
    bm = nonneg_matrix(b)
    if which is Condition.A2:
        return np.sqrt(bm)
    if which is Condition.T2PLUSPLUS:
        return bm
    am = nonneg_matrix(a)
    if am.shape != bm.shape:
        raise DimensionMismatch(f"A is {am.shape}, B is {bm.shape}")
    if which is Condition.A1:
        return np.sqrt(am) + 2.0 * np.sqrt(bm)
    return am + bm


_THRESHOLDS = {
    Condition.A1: 1.0,
    Condition.A2: 0.5,
    Condition.T2PLUS: 1.0,
    Condition.T2PLUSPLUS: 1.0,
}


def check_condition(a, b, which: Condition | str, tol: float = DEFAULT_TOL) -> ConditionCheck:
    """Evaluate one of the contraction conditions; ``a`` is ignored for A2/T2PLUSPLUS."""
    which = Condition(which)
    radius = spectral_radius(condition_matrix(a, b, which), tol=tol)
    threshold = _THRESHOLDS[which]
    return ConditionCheck(which, radius < threshold, radius, threshold)


def recursion_bound(c, b, v0, t: int) -> np.ndarray:
    """Coordinatewise bound ``sum_{s<t} C^s b + C^t v0`` for ``v_t <= C v_{t-1} + b``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    cm = nonneg_matrix(c)
    bv = nonneg_vector(b, cm.shape[0])
    v = nonneg_vector(v0, cm.shape[0]).copy()
    for _ in range(t):
        v = cm @ v + bv
    return v
