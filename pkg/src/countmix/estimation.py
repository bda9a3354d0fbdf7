"""Least-squares inference for the univariate st-CAR model.

Given ``X_0..X_n`` and ``Z_1..Z_n`` the estimator regresses ``X_t - Z_t`` on
``X_{t-1}`` without intercept.  ``K_n`` is the plug-in standard error; it comes
in a Poisson-thinning (PINARCH) and a Bernoulli-thinning (BINARCH) flavour.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .exceptions import DegenerateDesign, ParseError
from .processes import TrendFn, trend_norming

MODELS = ("PINARCH", "BINARCH")


@dataclass(frozen=True)
class EstimationResult:
    b_hat: float
    n: int
    S1: float   # sum X_{t-1} (X_t - Z_t)
    S2: float   # sum X_{t-1}^2
    S3: float   # sum X_{t-1}^3
    r_n: float | None = None
    s_n: float | None = None

    @property
    def K_n_pinarch(self) -> float:
        return k_n(self, "PINARCH")

    @property
    def K_n_binarch(self) -> float:
        return k_n(self, "BINARCH")

    @property
    def clamped(self) -> bool:
        """True if the BINARCH standard error had to clamp ``b_hat`` into [0, 1]."""
        return not 0.0 <= self.b_hat <= 1.0


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    K_used: float

    def contains(self, b: float) -> bool:
        return self.lower <= b <= self.upper


@dataclass(frozen=True)
class PredictionBound:
    X_n: int
    b_hat: float
    q_beta: float
    bound: float


@dataclass(frozen=True)
class AsymptoticTargets:
    rate: float
    var: float


def _check_model(model: str) -> str:
    m = model.upper()
    if m not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    return m


def lse(X, Z, gamma: TrendFn | None = None) -> EstimationResult:
    """Closed-form least-squares estimate from ``X_0..X_n`` and ``Z_1..Z_n``.

    Sums are accumulated with :func:`math.fsum`, which keeps the cubic sums exact
    to rounding even under polynomial trends.
    """
    x = np.asarray(X, dtype=float)
    z = np.asarray(Z, dtype=float)
    n = x.shape[0] - 1
    if n < 1 or z.shape[0] != n:
        raise ValueError(f"need X of length n+1 and Z of length n, got {x.shape[0]} and {z.shape[0]}")
    lag = x[:-1]
    s1 = math.fsum(lag * (x[1:] - z))
    s2 = math.fsum(lag * lag)
    s3 = math.fsum(lag * lag * lag)
    if s2 == 0.0:
        raise DegenerateDesign("sum of squared lagged counts is zero")
    norms = trend_norming(gamma, n) if gamma is not None else None
    return EstimationResult(
        b_hat=s1 / s2, n=n, S1=s1, S2=s2, S3=s3,
        r_n=None if norms is None else norms.r_n,
        s_n=None if norms is None else norms.s_n,
    )


def lse_bruteforce(X, Z, grid) -> float:
    """Grid minimiser of the residual sum of squares (test oracle only)."""
    x = np.asarray(X, dtype=float)
    z = np.asarray(Z, dtype=float)
    y = x[1:] - z
    lag = x[:-1]
    best, best_b = math.inf, None
    for b in grid:
        rss = math.fsum((y - b * lag) ** 2)
        if rss < best:
            best, best_b = rss, float(b)
    return best_b


def k_n(result: EstimationResult, model: str) -> float:
    model = _check_model(model)
    b = result.b_hat
    if model == "PINARCH":
        scale = math.sqrt(max(b, 0.0))
    else:
        bc = min(max(b, 0.0), 1.0)
        scale = math.sqrt(bc * (1.0 - bc))
    return scale * math.sqrt(result.S3) / result.S2


def normal_quantile(p: float) -> float:
    return float(ndtri(p))


def confidence_interval(result: EstimationResult, model: str, beta: float = 0.05) -> ConfidenceInterval:
    """Interval ``b_hat -/+ Phi^-1(1 - beta/2) K_n`` with nominal coverage ``1 - beta``."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    k = k_n(result, model)
    half = normal_quantile(1.0 - beta / 2.0) * k
    return ConfidenceInterval(result.b_hat - half, result.b_hat + half, 1.0 - beta, k)


def asymptotic_targets(b: float, model: str, gamma: TrendFn, n: int) -> AsymptoticTargets:
    """Convergence rate ``sqrt(s_n)/r_n`` and limiting variance ``nu (1 - b)``."""
    if not 0.0 < b < 0.25:
        raise ValueError("b must lie in (0, 1/4)")
    model = _check_model(model)
    norms = trend_norming(gamma, n)
    nu = b if model == "PINARCH" else b * (1.0 - b)
    return AsymptoticTargets(rate=math.sqrt(norms.s_n) / norms.r_n, var=nu * (1.0 - b))


def prediction_bound(X_n: int, result: EstimationResult, model: str = "PINARCH", beta: float = 0.05) -> PredictionBound:
    """Upper bound ``X_n b_hat + q X_n + q^2 X_n^2`` on the one-step conditional MSE.

    ``q = Phi^-1(1 - beta/2) K_n``, the half-width of the confidence interval.
    """
    if X_n < 0:
        raise ValueError("X_n must be >= 0")
    q = normal_quantile(1.0 - beta / 2.0) * k_n(result, model)
    bound = X_n * result.b_hat + q * X_n + q * q * X_n * X_n
    return PredictionBound(X_n=int(X_n), b_hat=result.b_hat, q_beta=q, bound=max(bound, 0.0))


def lse_batch(X: np.ndarray, Z: np.ndarray) -> list[EstimationResult]:
    """Row-wise :func:`lse` for ``X`` of shape ``(R, n+1)`` and ``Z`` of shape ``(R, n)``."""
    return [lse(x, z) for x, z in zip(X, Z)]


def read_series(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``t, X, Z`` CSV into ``(X_0..X_n, Z_1..Z_n)``.

    ``t`` must run 0, 1, 2, ... without gaps; ``Z`` may be empty at ``t = 0``.
    Lines starting with ``#`` are ignored.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        it, ix, iz = header.index("t"), header.index("X"), header.index("Z")
    except ValueError:
        raise ParseError(f"{path}: header must contain t, X, Z (got {header})") from None
    xs, zs = [], []
    for line, row in enumerate(rows[1:], start=2):
        try:
            t = int(row[it])
            x = int(row[ix])
            z = row[iz].strip()
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}:{line}: {exc}") from None
        if t != len(xs):
            raise ParseError(f"{path}:{line}: expected t = {len(xs)}, got {t}")
        xs.append(x)
        if t >= 1:
            if z == "":
                raise ParseError(f"{path}:{line}: Z missing at t = {t}")
            try:
                zs.append(float(z))
            except ValueError:
                raise ParseError(f"{path}:{line}: column Z: cannot parse {z!r}") from None
    if len(xs) < 2:
        raise ParseError(f"{path}: need at least two time points")
    return np.asarray(xs, dtype=float), np.asarray(zs, dtype=float)
