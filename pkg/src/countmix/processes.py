"""Forward simulation of the count models.

* Poisson-INGARCH(1,1): ``lam_t = A lam_{t-1} + B X_{t-1} + Z_{t-1}``, ``X_t ~ Poi(lam_t)``
  with independent components, or with copula-dependent components built from
  unit-rate Poisson processes (``Poi_dep``).
* GINAR(1): ``X_t = B o X_{t-1} + Z_t`` with Bernoulli or Poisson thinning.
* st-CAR: the univariate thinning model with ``Z_t ~ Poi(gamma_t)`` and a
  growing trend ``gamma_t``.

All simulators are vectorised over replicates.  Called without ``replicates``
they return a single :class:`Trajectory`; with ``replicates=R`` they return a
:class:`TrajectoryBatch` whose arrays carry a leading replicate axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import special

from .exceptions import DimensionMismatch, InvalidThinningParam
from .linalg import nonneg_matrix, nonneg_vector

# --------------------------------------------------------------------------- trends


@dataclass(frozen=True)
class Polynomial:
    """``d * t**alpha``."""

    d: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.d <= 0 or self.alpha <= 0:
            raise ValueError("Polynomial trend needs d > 0 and alpha > 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.d * np.power(t, self.alpha)

    @property
    def label(self) -> str:
        base = "t" if self.alpha == 1.0 else f"t^{self.alpha:g}"
        return base if self.d == 1.0 else f"{self.d:g}*{base}"


@dataclass(frozen=True)
class Logarithmic:
    """``d * (ln t)**alpha``, defined as 0 for ``t <= 1``."""

    d: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.d <= 0 or self.alpha <= 0:
            raise ValueError("Logarithmic trend needs d > 0 and alpha > 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.d * np.power(np.log(np.where(t > 1, t, 1.0)), self.alpha)
        return np.where(t > 1, val, 0.0)

    @property
    def label(self) -> str:
        base = "ln t" if self.alpha == 1.0 else f"(ln t)^{self.alpha:g}"
        return base if self.d == 1.0 else f"{self.d:g}*{base}"


@dataclass(frozen=True)
class Constant:
    c: float = 0.0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("Constant trend must be >= 0")

    def __call__(self, t):
        return np.full(np.shape(t), float(self.c)) if np.ndim(t) else float(self.c)

    @property
    def label(self) -> str:
        return f"{self.c:g}"


TrendFn = Union[Polynomial, Logarithmic, Constant]


def eval_trend(f: TrendFn, t: int) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(f(t))


def parse_trend(text: str) -> TrendFn:
    """Parse ``t``, ``t^2``, ``2*t^1.5``, ``ln t``, ``(ln t)^2``, ``const 5`` and the like."""
    s = text.strip().lower().replace(" ", "")
    coef = 1.0
    if "*" in s:
        head, s = s.split("*", 1)
        coef = float(head)
    if s.startswith("const") or s.replace(".", "", 1).isdigit():
        return Constant(float(s.removeprefix("const").strip("():=")) * coef)
    if s in ("lnt", "log(t)", "ln(t)", "logt"):
        return Logarithmic(coef, 1.0)
    for prefix in ("(lnt)^", "ln(t)^", "(ln(t))^", "(logt)^"):
        if s.startswith(prefix):
            return Logarithmic(coef, float(s[len(prefix):]))
    if s == "t":
        return Polynomial(coef, 1.0)
    if s.startswith("t^"):
        return Polynomial(coef, float(s[2:]))
    raise ValueError(f"cannot parse trend {text!r}")


@dataclass(frozen=True)
class TrendNorming:
    r_n: float
    s_n: float


def trend_norming(f: TrendFn, n: int) -> TrendNorming:
    """Exact partial sums ``r_n = sum gamma_t^2`` and ``s_n = sum gamma_t^3`` over t = 1..n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = np.asarray(f(np.arange(1, n + 1)), dtype=float) * np.ones(n)
    return TrendNorming(math.fsum(g * g), math.fsum(g * g * g))


# ----------------------------------------------------------------------- covariates


@dataclass(frozen=True)
class PoissonTrend:
    gamma: TrendFn


@dataclass(frozen=True)
class BinomialTrend:
    size: TrendFn
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("binomial covariate probability must lie in [0, 1]")


@dataclass(frozen=True)
class Deterministic:
    size: TrendFn


CovariateLaw = Union[PoissonTrend, BinomialTrend, Deterministic]


@dataclass(frozen=True)
class CovariateSpec:
    """One law per component; sizes of binomial/deterministic laws are floored to integers."""

    laws: tuple

    def __post_init__(self):
        object.__setattr__(self, "laws", tuple(self.laws))
        if not self.laws:
            raise DimensionMismatch("covariate spec needs at least one component")

    @property
    def dim(self) -> int:
        return len(self.laws)

    def mean(self, t: int) -> np.ndarray:
        out = []
        for law in self.laws:
            if isinstance(law, PoissonTrend):
                out.append(float(law.gamma(t)))
            elif isinstance(law, BinomialTrend):
                out.append(math.floor(float(law.size(t))) * law.p)
            else:
                out.append(float(math.floor(float(law.size(t)))))
        return np.array(out)

    @classmethod
    def poisson(cls, *trends: TrendFn) -> "CovariateSpec":
        return cls(tuple(PoissonTrend(g) for g in trends))


def draw_covariate(spec: CovariateSpec, t: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Independent draw of ``Z_t``; shape ``(d,)`` or ``(size, d)``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    n = 1 if size is None else size
    out = np.empty((n, spec.dim))
    for i, law in enumerate(spec.laws):
        if isinstance(law, PoissonTrend):
            out[:, i] = rng.poisson(float(law.gamma(t)), n)
        elif isinstance(law, BinomialTrend):
            out[:, i] = rng.binomial(math.floor(float(law.size(t))), law.p, n)
        else:
            out[:, i] = math.floor(float(law.size(t)))
    return out[0] if size is None else out


# -------------------------------------------------------------------------- copulas


@dataclass(frozen=True)
class CopulaSpec:
    """``kind`` is ``"independence"`` or ``"gaussian"`` (with a correlation matrix)."""

    kind: str = "independence"
    corr: tuple | None = None
    _factor: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("independence", "gaussian"):
            raise ValueError(f"unknown copula kind {self.kind!r}")
        if self.kind == "gaussian":
            c = np.array(self.corr, dtype=float)
            if c.ndim != 2 or c.shape[0] != c.shape[1]:
                raise DimensionMismatch("correlation matrix must be square")
            if not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
                raise ValueError("correlation matrix must be symmetric with unit diagonal")
            w, v = np.linalg.eigh(c)
            if w.min() < -1e-10:
                raise ValueError("correlation matrix must be positive semidefinite")
            object.__setattr__(self, "corr", tuple(map(tuple, c)))
            object.__setattr__(self, "_factor", v * np.sqrt(np.clip(w, 0.0, None)))

    def neg_log_uniforms(self, rng: np.random.Generator, shape: tuple, d: int) -> np.ndarray:
        """``-ln U`` for copula rows ``U``; returned shape ``shape + (d,)``, Exp(1) marginals."""
        if self.kind == "independence":
            return rng.standard_exponential(shape + (d,))
        if self._factor.shape[0] != d:
            raise DimensionMismatch(f"copula is {self._factor.shape[0]}-dimensional, model has d={d}")
        z = rng.standard_normal(shape + (d,)) @ self._factor.T
        return -special.log_ndtr(z)


def poisson_process_counts(levels: Sequence[np.ndarray], copula: CopulaSpec, rng: np.random.Generator):
    """Evaluate one family of unit-rate Poisson processes at several intensity levels.

    ``levels`` are ``(R, d)`` arrays.  Interarrival times of component ``i`` are
    ``-ln U_{l,i}`` with rows ``U_l`` drawn from ``copula``; arrivals are
    generated until every component has passed its largest requested level.
    Returns one integer ``(R, d)`` array per level, all read off the same
    processes.
    """
    levels = [np.asarray(l, dtype=float) for l in levels]
    top = np.maximum.reduce(levels)
    R, d = top.shape
    counts = [np.zeros((R, d), dtype=np.int64) for _ in levels]
    clock = np.zeros((R, d))
    active = np.ones(R, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        gap = float((top[idx] - clock[idx]).max())
        block = max(8, int(math.ceil(gap + 4.0 * math.sqrt(max(gap, 1.0)) + 8.0)))
        times = clock[idx][:, None, :] + np.cumsum(copula.neg_log_uniforms(rng, (idx.size, block), d), axis=1)
        for c, lev in zip(counts, levels):
            c[idx] += (times <= lev[idx][:, None, :]).sum(axis=1)
        clock[idx] = times[:, -1, :]
        active[idx] = (clock[idx] <= top[idx]).any(axis=1)
    return counts


def draw_poisson_dependent(lam: np.ndarray, copula: CopulaSpec, rng: np.random.Generator) -> np.ndarray:
    """One ``Poi_dep(lam)`` draw per row of ``lam`` (shape ``(R, d)``)."""
    return poisson_process_counts([lam], copula, rng)[0]


# --------------------------------------------------------------------- model specs


@dataclass(frozen=True)
class IngarchSpec:
    """Poisson-INGARCH(1,1); ``dependence=None`` means independent components."""

    A: np.ndarray
    B: np.ndarray
    lam0: np.ndarray
    Z: CovariateSpec
    dependence: CopulaSpec | None = None

    def __post_init__(self):
        a, b = nonneg_matrix(self.A), nonneg_matrix(self.B)
        if a.shape != b.shape:
            raise DimensionMismatch(f"A is {a.shape}, B is {b.shape}")
        d = a.shape[0]
        lam0 = nonneg_vector(self.lam0)
        if lam0.shape[0] != d or self.Z.dim != d:
            raise DimensionMismatch(f"lam0 has {lam0.shape[0]} and Z has {self.Z.dim} components, expected {d}")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "lam0", lam0)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class GinarSpec:
    B: np.ndarray
    X0: np.ndarray
    Z: CovariateSpec
    thinning: str = "bernoulli"

    def __post_init__(self):
        b = nonneg_matrix(self.B)
        if self.thinning not in ("bernoulli", "poisson"):
            raise ValueError(f"unknown thinning {self.thinning!r}")
        if self.thinning == "bernoulli" and np.any(b > 1.0):
            raise InvalidThinningParam("Bernoulli thinning needs all B_ij in [0, 1]")
        x0 = np.array(self.X0, dtype=np.int64, ndmin=1)
        if np.any(x0 < 0):
            raise ValueError("initial counts must be nonnegative")
        if x0.shape[0] != b.shape[0] or self.Z.dim != b.shape[0]:
            raise DimensionMismatch("B, X0 and Z dimensions disagree")
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "X0", x0)

    @property
    def dim(self) -> int:
        return self.B.shape[0]


@dataclass(frozen=True)
class StCarSpec:
    """Univariate st-CAR model ``X_t = b o X_{t-1} + Z_t`` with ``Z_t ~ Poi(gamma_t)``."""

    b: float
    thinning: str
    gamma: TrendFn
    X0: int = 0

    def __post_init__(self):
        if self.thinning not in ("poisson", "bernoulli"):
            raise ValueError("thinning must be 'poisson' (PINARCH) or 'bernoulli' (BINARCH)")
        if not 0.0 <= self.b < 0.25:
            raise ValueError("st-CAR needs 0 <= b < 1/4")
        if self.X0 < 0:
            raise ValueError("X0 must be >= 0")

    @property
    def model(self) -> str:
        return "PINARCH" if self.thinning == "poisson" else "BINARCH"


# --------------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    """One realisation on t = 0..T.

    ``covariates[0]`` is NaN for models whose covariate enters only from t = 1
    (GINAR, st-CAR); ``innovations`` (st-CAR only) is NaN at t = 0.
    """

    counts: np.ndarray
    covariates: np.ndarray
    intensities: np.ndarray | None = None
    innovations: np.ndarray | None = None

    @property
    def length(self) -> int:
        return self.counts.shape[0]

    @property
    def dim(self) -> int:
        return self.counts.shape[1]


@dataclass
class TrajectoryBatch:
    counts: np.ndarray          # (R, T+1, d)
    covariates: np.ndarray
    intensities: np.ndarray | None = None
    innovations: np.ndarray | None = None

    def __len__(self) -> int:
        return self.counts.shape[0]

    def __getitem__(self, r: int) -> Trajectory:
        return Trajectory(
            counts=self.counts[r],
            covariates=self.covariates[r],
            intensities=None if self.intensities is None else self.intensities[r],
            innovations=None if self.innovations is None else self.innovations[r],
        )


def ingarch_intensity(A: np.ndarray, B: np.ndarray, lam_prev, x_prev, z_prev) -> np.ndarray:
    """One step of ``lam_t = A lam_{t-1} + B X_{t-1} + Z_{t-1}`` on row-stacked states.

    Accumulated elementwise in a fixed order so the result is bit-identical
    whatever the batch shape (stored paths can be audited exactly).
    """
    lam_prev = np.asarray(lam_prev, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    out = np.zeros(np.broadcast_shapes(lam_prev.shape, np.shape(z_prev)))
    for j in range(A.shape[0]):
        out = out + A[:, j] * lam_prev[..., j:j + 1]
        out = out + B[:, j] * x_prev[..., j:j + 1]
    return out + z_prev


def _draw_ingarch_counts(spec: IngarchSpec, lam: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if spec.dependence is None:
        return rng.poisson(lam)
    return draw_poisson_dependent(lam, spec.dependence, rng)


def _finish(batch: TrajectoryBatch, replicates):
    return batch[0] if replicates is None else batch


def simulate_ingarch(spec: IngarchSpec, T: int, rng: np.random.Generator, replicates: int | None = None):
    """Simulate ``X_0..X_T`` and ``lam_0..lam_T``; ``X_0 ~ Poi(lam0)``."""
    if T < 1:
        raise ValueError("T must be >= 1")
    R, d = (1 if replicates is None else replicates), spec.dim
    lam = np.empty((R, T + 1, d))
    x = np.empty((R, T + 1, d), dtype=np.int64)
    z = np.empty((R, T + 1, d))
    lam[:, 0] = spec.lam0
    x[:, 0] = _draw_ingarch_counts(spec, lam[:, 0], rng)
    z[:, 0] = draw_covariate(spec.Z, 0, rng, R)
    for t in range(1, T + 1):
        lam[:, t] = ingarch_intensity(spec.A, spec.B, lam[:, t - 1], x[:, t - 1], z[:, t - 1])
        x[:, t] = _draw_ingarch_counts(spec, lam[:, t], rng)
        z[:, t] = draw_covariate(spec.Z, t, rng, R)
    return _finish(TrajectoryBatch(counts=x, covariates=z, intensities=lam), replicates)


def thin(counts: np.ndarray, B: np.ndarray, thinning: str, rng: np.random.Generator, exact: bool = False) -> np.ndarray:
    """``B o X`` for row-stacked counts ``(R, d)``.

    The sum of ``X_j`` thinning variables with parameter ``B_ij`` is drawn as one
    ``Bin(X_j, B_ij)`` (or ``Poi(B_ij X_j)``) variate.  ``exact=True`` draws the
    individual Bernoulli/Poisson summands instead (slow, for cross-checks).
    """
    R, d = counts.shape
    if not exact:
        xs = np.broadcast_to(counts[:, None, :], (R, d, d))
        if thinning == "bernoulli":
            return rng.binomial(xs, B[None]).sum(axis=2)
        return rng.poisson(B[None] * xs).sum(axis=2)
    out = np.zeros((R, d), dtype=np.int64)
    for r in range(R):
        for i in range(d):
            for j in range(d):
                m = int(counts[r, j])
                if thinning == "bernoulli":
                    out[r, i] += int((rng.random(m) < B[i, j]).sum())
                else:
                    out[r, i] += int(rng.poisson(B[i, j], m).sum())
    return out


def simulate_ginar(spec: GinarSpec, T: int, rng: np.random.Generator, replicates: int | None = None,
                   exact_thinning: bool = False):
    if T < 1:
        raise ValueError("T must be >= 1")
    R, d = (1 if replicates is None else replicates), spec.dim
    x = np.empty((R, T + 1, d), dtype=np.int64)
    z = np.full((R, T + 1, d), np.nan)
    x[:, 0] = spec.X0
    for t in range(1, T + 1):
        z[:, t] = draw_covariate(spec.Z, t, rng, R)
        x[:, t] = thin(x[:, t - 1], spec.B, spec.thinning, rng, exact_thinning) + z[:, t].astype(np.int64)
    return _finish(TrajectoryBatch(counts=x, covariates=z), replicates)


def stcar_thinning(x_prev: np.ndarray, b: float, thinning: str, rng: np.random.Generator) -> np.ndarray:
    if thinning == "poisson":
        return rng.poisson(b * x_prev)
    return rng.binomial(x_prev, b)


def simulate_stcar(spec: StCarSpec, n: int, rng: np.random.Generator, replicates: int | None = None):
    """Simulate ``X_0..X_n``; records ``Z_t ~ Poi(gamma_t)`` and ``eps_t = b o X_{t-1} - b X_{t-1}``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    R = 1 if replicates is None else replicates
    x = np.empty((R, n + 1), dtype=np.int64)
    z = np.full((R, n + 1), np.nan)
    eps = np.full((R, n + 1), np.nan)
    x[:, 0] = spec.X0
    gam = spec.gamma(np.arange(n + 1)) * np.ones(n + 1)
    for t in range(1, n + 1):
        zt = rng.poisson(gam[t], R)
        th = stcar_thinning(x[:, t - 1], spec.b, spec.thinning, rng)
        z[:, t] = zt
        eps[:, t] = th - spec.b * x[:, t - 1]
        x[:, t] = th + zt
    return _finish(TrajectoryBatch(counts=x[..., None], covariates=z[..., None], innovations=eps), replicates)


# ----------------------------------------------------------------------------- CSV


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return f"{v:.17g}"


def trajectory_header(traj: Trajectory) -> list[str]:
    d = traj.dim
    cols = ["t"] + [f"X_{i + 1}" for i in range(d)]
    if traj.intensities is not None:
        cols += [f"lambda_{i + 1}" for i in range(d)]
    cols += [f"Z_{i + 1}" for i in range(d)]
    return cols


def trajectory_to_csv(traj: Trajectory) -> str:
    lines = [",".join(trajectory_header(traj))]
    for t in range(traj.length):
        row = [str(t)] + [_fmt(v) for v in traj.counts[t]]
        if traj.intensities is not None:
            row += [_fmt(v) for v in traj.intensities[t]]
        row += [_fmt(v) for v in traj.covariates[t]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trajectory_to_csv(traj))


def read_trajectory_csv(path) -> Trajectory:
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    xs = [i for i, h in enumerate(header) if h.startswith("X_")]
    ls = [i for i, h in enumerate(header) if h.startswith("lambda_")]
    zs = [i for i, h in enumerate(header) if h.startswith("Z_")]
    counts = np.array([[int(r[i]) for i in xs] for r in body], dtype=np.int64)
    cov = np.array([[float(r[i]) if r[i] != "" else np.nan for i in zs] for r in body])
    lam = np.array([[float(r[i]) for i in ls] for r in body]) if ls else None
    return Trajectory(counts=counts, covariates=cov, intensities=lam)
