"""Coupling constructions and Monte Carlo estimates of mixing-coefficient bounds.

Two copies of a process run independently up to time ``k``.  Afterwards they
are driven jointly by one of four schemes:

``ingarch_three_phase``
    Shared covariates, counts coupled componentwise by the monotone maximal
    coupling of ``Poi(lam_{t,i})`` and ``Poi(lam'_{t,i})`` (one uniform per
    component and time).  The same per-time coupling continues after ``k+n``.
``ginar_stepwise``
    Shared covariates, each thinning sum ``Bin(X_{t-1,j}, B_ij)`` coupled with
    its counterpart by the monotone maximal coupling.
``shared_noise_ingarch``
    Both chains read counts off the same unit-rate Poisson processes (copula
    dependence allowed) and share covariates.
``shared_noise_ginar``
    Both chains read thinning variables off the same Bernoulli/Poisson arrays,
    so a chain with more units sees the other chain's draws plus extra ones.

The disagreement probability after the coupling point upper-bounds the
absolute-regularity coefficient.  GINAR chains are Markov and only the
time-``k+n`` event matters; INGARCH counts are not, so the union over
``k+n .. k+n+R_max`` is used.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import draw_coupled_binomial, draw_coupled_poisson
from .exceptions import InsufficientSignal, InvalidThinningParam
from .linalg import check_condition, spectral_radius
from .processes import (
    GinarSpec,
    IngarchSpec,
    Trajectory,
    TrajectoryBatch,
    draw_covariate,
    ingarch_intensity,
    poisson_process_counts,
    thin,
)
from .rng import as_generator

SCHEMES = ("ingarch_three_phase", "ginar_stepwise", "shared_noise_ingarch", "shared_noise_ginar")
MARKOV_SCHEMES = ("ginar_stepwise", "shared_noise_ginar")
MIN_EVENTS = 20
DEFAULT_CHUNK = 20_000


@dataclass(frozen=True)
class CouplingScheme:
    kind: str
    k: int = 0
    R_max: int | None = None
    replicates: int = 1

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown coupling scheme {self.kind!r}; expected one of {SCHEMES}")
        if self.k < 0 or (self.R_max is not None and self.R_max < 0) or self.replicates < 1:
            raise ValueError("need k >= 0, R_max >= 0 and replicates >= 1")

    @property
    def markov(self) -> bool:
        return self.kind in MARKOV_SCHEMES

    def r_max_for(self, n_max: int) -> int:
        if self.markov:
            return 0
        return self.R_max if self.R_max is not None else 2 * n_max + 50


@dataclass
class CoupledBatch:
    """Paired paths for ``R`` replicates on t = 0..H."""

    disagree: np.ndarray                 # (R, H+1) bool, X_t != X'_t
    sqrt_gap: np.ndarray | None = None   # (R, H+1), ||sqrt(lam_t) - sqrt(lam'_t)||_1
    lam_gap: np.ndarray | None = None    # (R, H+1), ||lam_t - lam'_t||_1
    left: TrajectoryBatch | None = None
    right: TrajectoryBatch | None = None


@dataclass
class CoupledRun:
    left: Trajectory
    right: Trajectory
    k: int
    n: int
    R_max: int
    first_meet: int | None
    diverged_after_meet: bool
    sqrt_gap: np.ndarray | None = None

    @property
    def disagree(self) -> np.ndarray:
        return np.any(self.left.counts != self.right.counts, axis=1)


# ------------------------------------------------------------------- engine steps


def _validate(spec, scheme: CouplingScheme):
    if scheme.kind in ("ingarch_three_phase", "shared_noise_ingarch"):
        if not isinstance(spec, IngarchSpec):
            raise TypeError(f"{scheme.kind} needs an IngarchSpec")
        if scheme.kind == "ingarch_three_phase":
            if spec.dependence is not None:
                raise ValueError("componentwise maximal coupling needs conditionally independent components; "
                                 "use shared_noise_ingarch for copula dependence")
            if not check_condition(spec.A, spec.B, "A1").satisfied:
                warnings.warn("condition rho(sqrt(A) + 2 sqrt(B)) < 1 fails; decay is not guaranteed", stacklevel=3)
    else:
        if not isinstance(spec, GinarSpec):
            raise TypeError(f"{scheme.kind} needs a GinarSpec")
        if scheme.kind == "ginar_stepwise" and spec.thinning != "bernoulli":
            raise InvalidThinningParam("stepwise maximal coupling is defined for Bernoulli thinning")


def _ingarch_counts_independent(spec: IngarchSpec, lam, rng):
    if spec.dependence is None:
        return rng.poisson(lam)
    return poisson_process_counts([lam], spec.dependence, rng)[0]


def _shared_poisson_pair(spec: IngarchSpec, lam, lam_p, rng):
    if spec.dependence is None:
        # one unit-rate process per component: N(min) and the independent increment
        lo = np.minimum(lam, lam_p)
        base = rng.poisson(lo)
        extra = rng.poisson(np.abs(lam - lam_p))
        return base + np.where(lam >= lam_p, extra, 0), base + np.where(lam >= lam_p, 0, extra)
    return tuple(poisson_process_counts([lam, lam_p], spec.dependence, rng))


def _coupled_ingarch(spec: IngarchSpec, scheme: CouplingScheme, H: int, R: int, rng, record: bool) -> CoupledBatch:
    d = spec.dim
    A, B = spec.A, spec.B
    lam = np.empty((R, d)); lam[:] = spec.lam0
    lam_p = lam.copy()
    x = _ingarch_counts_independent(spec, lam, rng)
    x_p = _ingarch_counts_independent(spec, lam_p, rng)
    z = draw_covariate(spec.Z, 0, rng, R)
    z_p = draw_covariate(spec.Z, 0, rng, R)
    disagree = np.zeros((R, H + 1), dtype=bool)
    sqrt_gap = np.zeros((R, H + 1))
    lam_gap = np.zeros((R, H + 1))
    if record:
        store = {key: np.empty((R, H + 1, d)) for key in ("x", "xp", "l", "lp", "z", "zp")}

    def log(t):
        disagree[:, t] = np.any(x != x_p, axis=1)
        sqrt_gap[:, t] = np.abs(np.sqrt(lam) - np.sqrt(lam_p)).sum(axis=1)
        lam_gap[:, t] = np.abs(lam - lam_p).sum(axis=1)
        if record:
            for key, val in (("x", x), ("xp", x_p), ("l", lam), ("lp", lam_p), ("z", z), ("zp", z_p)):
                store[key][:, t] = val

    log(0)
    for t in range(1, H + 1):
        lam = ingarch_intensity(A, B, lam, x, z)
        lam_p = ingarch_intensity(A, B, lam_p, x_p, z_p)
        if t <= scheme.k:
            x = _ingarch_counts_independent(spec, lam, rng)
            x_p = _ingarch_counts_independent(spec, lam_p, rng)
            z = draw_covariate(spec.Z, t, rng, R)
            z_p = draw_covariate(spec.Z, t, rng, R)
        else:
            if scheme.kind == "ingarch_three_phase":
                u = rng.random((R, d))
                x = np.empty((R, d), dtype=np.int64)
                x_p = np.empty((R, d), dtype=np.int64)
                for i in range(d):
                    x[:, i], x_p[:, i] = draw_coupled_poisson(lam[:, i], lam_p[:, i], u[:, i])
            else:
                x, x_p = _shared_poisson_pair(spec, lam, lam_p, rng)
            z = draw_covariate(spec.Z, t, rng, R)
            z_p = z
        log(t)
    out = CoupledBatch(disagree=disagree, sqrt_gap=sqrt_gap, lam_gap=lam_gap)
    if record:
        out.left = TrajectoryBatch(counts=store["x"].astype(np.int64), covariates=store["z"], intensities=store["l"])
        out.right = TrajectoryBatch(counts=store["xp"].astype(np.int64), covariates=store["zp"], intensities=store["lp"])
    return out


def _coupled_ginar(spec: GinarSpec, scheme: CouplingScheme, H: int, R: int, rng, record: bool) -> CoupledBatch:
    d = spec.dim
    Bm = spec.B
    x = np.empty((R, d), dtype=np.int64); x[:] = spec.X0
    x_p = x.copy()
    disagree = np.zeros((R, H + 1), dtype=bool)
    if record:
        xs = np.empty((R, H + 1, d), dtype=np.int64)
        xps = np.empty((R, H + 1, d), dtype=np.int64)
        zs = np.full((R, H + 1, d), np.nan)
        zps = np.full((R, H + 1, d), np.nan)
        xs[:, 0], xps[:, 0] = x, x_p
    disagree[:, 0] = np.any(x != x_p, axis=1)
    for t in range(1, H + 1):
        if t <= scheme.k:
            z = draw_covariate(spec.Z, t, rng, R)
            z_p = draw_covariate(spec.Z, t, rng, R)
            nx = thin(x, Bm, spec.thinning, rng)
            nxp = thin(x_p, Bm, spec.thinning, rng)
        else:
            z = draw_covariate(spec.Z, t, rng, R)
            z_p = z
            nx = np.zeros((R, d), dtype=np.int64)
            nxp = np.zeros((R, d), dtype=np.int64)
            if scheme.kind == "ginar_stepwise":
                u = rng.random((R, d, d))
                for i in range(d):
                    for j in range(d):
                        y, yp = draw_coupled_binomial(x[:, j], x_p[:, j], Bm[i, j], u[:, i, j])
                        nx[:, i] += y
                        nxp[:, i] += yp
            else:
                lo = np.minimum(x, x_p)
                gap = np.abs(x - x_p)
                left_big = x >= x_p
                for i in range(d):
                    for j in range(d):
                        if spec.thinning == "bernoulli":
                            base = rng.binomial(lo[:, j], Bm[i, j])
                            extra = rng.binomial(gap[:, j], Bm[i, j])
                        else:
                            base = rng.poisson(Bm[i, j] * lo[:, j])
                            extra = rng.poisson(Bm[i, j] * gap[:, j])
                        nx[:, i] += base + np.where(left_big[:, j], extra, 0)
                        nxp[:, i] += base + np.where(left_big[:, j], 0, extra)
        x = nx + z.astype(np.int64)
        x_p = nxp + z_p.astype(np.int64)
        disagree[:, t] = np.any(x != x_p, axis=1)
        if record:
            xs[:, t], xps[:, t], zs[:, t], zps[:, t] = x, x_p, z, z_p
    out = CoupledBatch(disagree=disagree)
    if record:
        out.left = TrajectoryBatch(counts=xs, covariates=zs)
        out.right = TrajectoryBatch(counts=xps, covariates=zps)
    return out


def coupled_batch(spec, scheme: CouplingScheme, horizon: int, rng, replicates: int, record: bool = False) -> CoupledBatch:
    """Run ``replicates`` coupled pairs up to time ``horizon`` in one vectorised sweep."""
    _validate(spec, scheme)
    rng = as_generator(rng)
    if scheme.kind in ("ingarch_three_phase", "shared_noise_ingarch"):
        return _coupled_ingarch(spec, scheme, horizon, replicates, rng, record)
    return _coupled_ginar(spec, scheme, horizon, replicates, rng, record)


# ------------------------------------------------------------------ single runs


def _single_run(spec, scheme: CouplingScheme, n: int, rng) -> CoupledRun:
    r_max = scheme.r_max_for(n)
    horizon = scheme.k + n + r_max
    batch = coupled_batch(spec, scheme, horizon, rng, 1, record=True)
    left, right = batch.left[0], batch.right[0]
    dis = batch.disagree[0]
    start = scheme.k + n
    meets = np.flatnonzero(~dis[start:])
    first_meet = int(start + meets[0]) if meets.size else None
    diverged = False
    if first_meet is not None:
        diverged = bool(dis[first_meet + 1:first_meet + 1 + r_max].any())
    return CoupledRun(
        left=left, right=right, k=scheme.k, n=n, R_max=r_max,
        first_meet=first_meet, diverged_after_meet=diverged,
        sqrt_gap=None if batch.sqrt_gap is None else batch.sqrt_gap[0],
    )


def run_ingarch_coupling(spec: IngarchSpec, scheme: CouplingScheme, n: int, rng) -> CoupledRun:
    if scheme.kind != "ingarch_three_phase":
        raise ValueError("run_ingarch_coupling expects the ingarch_three_phase scheme")
    return _single_run(spec, scheme, n, rng)


def run_ginar_coupling(spec: GinarSpec, scheme: CouplingScheme, n: int, rng) -> CoupledRun:
    if scheme.kind != "ginar_stepwise":
        raise ValueError("run_ginar_coupling expects the ginar_stepwise scheme")
    return _single_run(spec, scheme, n, rng)


def run_shared_noise_coupling(spec, scheme: CouplingScheme, n: int, rng) -> CoupledRun:
    if scheme.kind not in ("shared_noise_ingarch", "shared_noise_ginar"):
        raise ValueError("run_shared_noise_coupling expects a shared-noise scheme")
    return _single_run(spec, scheme, n, rng)


def sqrt_gap_series(run: CoupledRun) -> np.ndarray:
    if run.left.intensities is None:
        raise ValueError("sqrt gap needs recorded intensities (INGARCH runs)")
    return np.abs(np.sqrt(run.left.intensities) - np.sqrt(run.right.intensities)).sum(axis=1)


# --------------------------------------------------------------- mixing curves


@dataclass
class MixingCurve:
    n: np.ndarray
    beta_hat: np.ndarray
    std_err: np.ndarray
    replicates: int
    kappa_fit: float
    kappa_theory: float
    scheme: str
    k: int
    R_max: int
    fitted: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    events: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fit_error: str | None = None

    def log_decreasing_on_fit(self) -> bool:
        lb = np.log(self.beta_hat[self.fitted])
        return bool(lb.size >= 2 and np.all(np.diff(lb) < 0))


def kappa_theory(spec, scheme: CouplingScheme) -> float:
    if scheme.kind == "ingarch_three_phase":
        return spectral_radius(np.sqrt(spec.A) + 2.0 * np.sqrt(spec.B))
    if scheme.kind == "ginar_stepwise":
        return 2.0 * spectral_radius(np.sqrt(spec.B))
    if scheme.kind == "shared_noise_ingarch":
        return spectral_radius(spec.A + spec.B)
    return spectral_radius(spec.B)


def fit_decay(n, beta_hat, replicates: int, min_events: int = MIN_EVENTS):
    """Weighted least squares of ``ln beta_hat`` on ``n``; returns ``(kappa, mask)``.

    Only points with at least ``min_events`` disagreements (and ``beta_hat < 1``)
    enter; weights are inverse squared relative standard errors.
    """
    n = np.asarray(n, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    events = beta_hat * replicates
    mask = (events >= min_events) & (beta_hat < 1.0)
    if mask.sum() < 3:
        raise InsufficientSignal(f"only {int(mask.sum())} grid points have >= {min_events} events")
    xs, ys = n[mask], np.log(beta_hat[mask])
    w = events[mask] / (1.0 - beta_hat[mask])
    xm = np.sum(w * xs) / w.sum()
    ym = np.sum(w * ys) / w.sum()
    slope = np.sum(w * (xs - xm) * (ys - ym)) / np.sum(w * (xs - xm) ** 2)
    return math.exp(slope), mask


def estimate_mixing(spec, scheme: CouplingScheme, n_grid: Sequence[int], rng,
                    chunk: int = DEFAULT_CHUNK, require_fit: bool = True) -> MixingCurve:
    """Monte Carlo estimate of ``n -> P(coupled paths disagree after k+n)``.

    All grid points share the same replicates: one sweep to
    ``k + max(n_grid) + R_max`` yields every ``beta_hat(n)``.  Replicates are
    processed in fixed-size chunks drawn sequentially from ``rng``.
    """
    grid = np.asarray(sorted(n_grid), dtype=np.int64)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("n_grid must be a nonempty strictly ascending list of n >= 0")
    rng = as_generator(rng)
    R = scheme.replicates
    r_max = scheme.r_max_for(int(grid[-1]))
    horizon = scheme.k + int(grid[-1]) + r_max
    events = np.zeros(grid.size, dtype=np.int64)
    done = 0
    while done < R:
        m = min(chunk, R - done)
        batch = coupled_batch(spec, scheme, horizon, rng, m)
        dis = batch.disagree
        for g, n in enumerate(grid):
            start = scheme.k + int(n)
            events[g] += int(dis[:, start:start + r_max + 1].any(axis=1).sum())
        done += m
    beta = events / R
    se = np.sqrt(beta * (1.0 - beta) / R)
    curve = MixingCurve(
        n=grid, beta_hat=beta, std_err=se, replicates=R, kappa_fit=math.nan,
        kappa_theory=kappa_theory(spec, scheme), scheme=scheme.kind, k=scheme.k, R_max=r_max,
        fitted=np.zeros(grid.size, dtype=bool), events=events,
    )
    try:
        curve.kappa_fit, curve.fitted = fit_decay(grid, beta, R)
    except InsufficientSignal as exc:
        if require_fit:
            raise
        curve.fit_error = str(exc)
    return curve
