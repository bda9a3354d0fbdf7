"""Batch experiments: Table 1 simulation study, mixing-decay curves, real-data fit, trajectory export.

Every experiment is driven by an :class:`ExperimentConfig`.  Work units (Table 1
cells, mixing curves, trajectories) draw from ``rng.stream(seed, kind, index)``
so results never depend on how units are spread over workers.  Every output
file embeds the resolved config and its sha256; :func:`load_config` accepts
such a file back, which makes any result reproducible from itself.

Config format: one ``key = value`` per line, ``#`` starts a comment, lists are
comma separated and matrices use ``;`` between rows (``0.2, 0.1; 0.1, 0.2``).
"""

from __future__ import annotations

import configparser
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coupling import CouplingScheme, MixingCurve, estimate_mixing
from .estimation import (EstimationResult, confidence_interval, k_n, lse,
                         prediction_bound)
from .exceptions import CountMixError, ParseError, ValidationError
from .processes import (CopulaSpec, CovariateSpec, GinarSpec, IngarchSpec,
                        StCarSpec, parse_trend, simulate_ginar, simulate_ingarch,
                        simulate_stcar, trajectory_to_csv)
from .rng import stream

log = logging.getLogger(__name__)

EXPERIMENTS = ("table1", "mixing", "realdata", "simulate")
GENERATORS = ("PINARCH", "BINARCH")

# stream kinds, the first element of every unit's spawn key
_KIND_TABLE1, _KIND_MIXING, _KIND_SIMULATE = 1, 2, 4

_DEFAULTS = {
    "table1": {
        "replicates": "1000",
        "n": "50, 100, 1000",
        "b": "0.1, 0.16, 0.23",
        "trends": "t, t^2, ln t",
        "generators": "PINARCH, BINARCH",
        "x0": "0",
    },
    "mixing": {
        "curves": "ginar_stepwise_d1, ginar_shared_d1, ingarch_three_phase_d1, ingarch_shared_d2",
        "replicates": "",
        "chunk": "20000",
    },
    "realdata": {
        "data": "data/stackindex.csv",
        "response": "scrapy",
        "covariate": "nlp",
        "beta": "0.05",
    },
    "simulate": {
        "model": "ginar",
        "paths": "1",
        "T": "10",
        "B": "0.16",
        "A": "",
        "lam0": "",
        "x0": "0",
        "trends": "t",
        "thinning": "bernoulli",
        "b": "0.16",
        "corr": "",
    },
}


# ------------------------------------------------------------------ config


def _split_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _parse_matrix(text: str) -> list[list[float]]:
    return [[float(v) for v in _split_list(row)] for row in text.split(";") if row.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment configuration.

    ``params`` holds every experiment-specific key as text, defaults filled
    in.  ``out`` is where files go; it is not part of the hashed config, so
    moving an experiment does not change its outputs.
    """

    experiment: str
    seed: int
    params: dict = field(default_factory=dict)
    out: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValidationError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        merged = dict(_DEFAULTS[self.experiment])
        for key, value in self.params.items():
            if key not in merged:
                raise ValidationError(f"unknown key {key!r} for experiment {self.experiment!r}")
            merged[key] = str(value).strip()
        object.__setattr__(self, "params", merged)
        try:
            self._check()
        except ValidationError:
            raise
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"invalid {self.experiment} config: {exc}") from None

    def _check(self):
        p = self.params
        if self.experiment == "table1":
            if self.replicates < 1:
                raise ValidationError("replicates must be >= 1")
            for b in self.getfloats("b"):
                StCarSpec(b=b, thinning="poisson", gamma=parse_trend("t"))
            for n in self.getints("n"):
                if n < 1:
                    raise ValidationError("n values must be >= 1")
            for t in self.getlist("trends"):
                parse_trend(t)
            for g in self.getlist("generators"):
                if g.upper() not in GENERATORS:
                    raise ValidationError(f"generator must be one of {GENERATORS}, got {g!r}")
        elif self.experiment == "mixing":
            for name in self.getlist("curves"):
                if name not in MIXING_PRESETS:
                    raise ValidationError(f"unknown mixing curve {name!r}; known: {sorted(MIXING_PRESETS)}")
            if p["replicates"] and int(p["replicates"]) < 1:
                raise ValidationError("replicates must be >= 1")
        elif self.experiment == "simulate":
            if int(p["paths"]) < 1 or int(p["T"]) < 1:
                raise ValidationError("paths and T must be >= 1")
            simulate_spec(self)

    # typed accessors
    def getlist(self, key: str) -> list[str]:
        return _split_list(self.params[key])

    def getints(self, key: str) -> list[int]:
        return [int(v) for v in self.getlist(key)]

    def getfloats(self, key: str) -> list[float]:
        return [float(v) for v in self.getlist(key)]

    @property
    def replicates(self) -> int:
        return int(self.params["replicates"])

    def canonical(self) -> dict:
        """Ordered key/value pairs that define the results (``out`` excluded)."""
        return {"experiment": self.experiment, "seed": str(self.seed), **dict(sorted(self.params.items()))}

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.canonical().items())

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        params = dict(self.params)
        params.update(changes.pop("params", {}))
        kw = {"experiment": self.experiment, "seed": self.seed, "out": self.out, "params": params}
        kw.update(changes)
        return ExperimentConfig(**kw)


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Parse the flat ``key = value`` format; ``overrides`` win over file values."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        cp.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ParseError(f"malformed config: {exc}") from None
    values = dict(cp["config"])
    values.update({k: str(v) for k, v in overrides.items() if v is not None})
    if "experiment" not in values:
        raise ParseError("config needs an 'experiment' key")
    experiment = values.pop("experiment").strip()
    try:
        seed = int(values.pop("seed", "0"))
    except ValueError:
        raise ParseError("seed must be an integer") from None
    out = values.pop("out", "results")
    return ExperimentConfig(experiment=experiment, seed=seed, params=values, out=out)


_EMBED_PREFIX = "# config: "


def load_config(path, **overrides) -> ExperimentConfig:
    """Load a config file, or recover the embedded config from a result CSV/JSON."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        try:
            doc = json.loads(text)
            text = "".join(f"{k} = {v}\n" for k, v in doc["config"].items())
        except (ValueError, KeyError, AttributeError):
            raise ParseError(f"{path}: JSON file has no embedded config") from None
    elif _EMBED_PREFIX in text:
        text = "".join(line[len(_EMBED_PREFIX):] + "\n" for line in text.splitlines()
                       if line.startswith(_EMBED_PREFIX))
    return parse_config(text, **overrides)


# ------------------------------------------------------------------ output helpers


def fmt_float(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


def fmt_param(x) -> str:
    """Shortest text that round-trips ``x``; used for configured inputs such as ``b``."""
    return repr(float(x))


def fmt_display(x, digits: int = 4) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.{digits}f}"


def _header(config: ExperimentConfig) -> str:
    lines = [f"# countmix {__version__} {config.experiment}", f"# config_sha256: {config.sha256}"]
    lines += [_EMBED_PREFIX + line for line in config.to_text().splitlines()]
    return "\n".join(lines) + "\n"


def _csv_text(config: ExperimentConfig, header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    buf.write(_header(config))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(config: ExperimentConfig, payload: dict) -> str:
    doc = {"countmix_version": __version__, "config": config.canonical(),
           "config_sha256": config.sha256, **payload}
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n"


def _write(out_dir: Path, name: str, text: str) -> Path:
    path = out_dir / name
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _out_dir(config: ExperimentConfig, out) -> Path:
    d = Path(out if out is not None else config.out)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {d}: {exc}") from exc
    return d


def _map(fn, units, workers: int):
    if workers <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, units))


# ------------------------------------------------------------------ Table 1


@dataclass(frozen=True)
class Table1Cell:
    n: int
    b: float
    trend: str
    generator: str
    replicates: int
    status: str = "ok"
    reason: str = ""
    lse_mean: float = math.nan
    lse_se: float = math.nan
    kn_pinarch_mean: float = math.nan
    kn_pinarch_se: float = math.nan
    kn_binarch_mean: float = math.nan
    kn_binarch_se: float = math.nan
    clamped: int = 0


def table1_cells(config: ExperimentConfig) -> list[tuple]:
    """Grid in output order: n, then b, then generator, then trend."""
    return [(n, b, gen.upper(), trend)
            for n in config.getints("n") for b in config.getfloats("b")
            for gen in config.getlist("generators") for trend in config.getlist("trends")]


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    mean = math.fsum(v) / v.size
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return mean, se


def simulate_table1_cell(n: int, b: float, trend: str, generator: str, replicates: int,
                         rng, x0: int = 0) -> dict:
    """Replicate arrays ``b_hat``, ``K_n`` (both flavours) for one Table 1 cell."""
    thinning = "poisson" if generator == "PINARCH" else "bernoulli"
    spec = StCarSpec(b=b, thinning=thinning, gamma=parse_trend(trend), X0=x0)
    batch = simulate_stcar(spec, n, rng, replicates=replicates)
    X = batch.counts[:, :, 0]
    Z = batch.covariates[:, 1:, 0]
    res = [lse(x, z) for x, z in zip(X, Z)]
    return {
        "b_hat": np.array([r.b_hat for r in res]),
        "kn_pinarch": np.array([k_n(r, "PINARCH") for r in res]),
        "kn_binarch": np.array([k_n(r, "BINARCH") for r in res]),
        "results": res,
        "x_last": X[:, -1].copy(),
    }


def _table1_unit(unit) -> Table1Cell:
    idx, (n, b, gen, trend), seed, R, x0 = unit
    base = dict(n=n, b=b, trend=trend, generator=gen, replicates=R)
    try:
        out = simulate_table1_cell(n, b, trend, gen, R, stream(seed, _KIND_TABLE1, idx), x0=x0)
    except (CountMixError, ValueError, FloatingPointError) as exc:
        log.error("table1 cell n=%s b=%s trend=%s generator=%s failed: %s", n, b, trend, gen, exc)
        return Table1Cell(**base, status="failed", reason=f"{type(exc).__name__}: {exc}")
    lm, ls = _mean_se(out["b_hat"])
    pm, ps = _mean_se(out["kn_pinarch"])
    bm, bs = _mean_se(out["kn_binarch"])
    clamped = int(sum(r.clamped for r in out["results"]))
    return Table1Cell(**base, lse_mean=lm, lse_se=ls, kn_pinarch_mean=pm, kn_pinarch_se=ps,
                      kn_binarch_mean=bm, kn_binarch_se=bs, clamped=clamped)


TABLE1_LONG_COLUMNS = [
    "n", "b", "trend", "generator", "replicates", "status",
    "lse_mean", "lse_se", "kn_pinarch_mean", "kn_pinarch_se", "kn_binarch_mean", "kn_binarch_se",
    "lse_mean_4dp", "kn_pinarch_mean_4dp", "kn_binarch_mean_4dp", "binarch_clamped", "reason",
]
TABLE1_STATISTICS = (("LSE", "lse_mean"), ("Kn-PINARCH", "kn_pinarch_mean"), ("Kn-BINARCH", "kn_binarch_mean"))


def run_table1(config: ExperimentConfig, workers: int = 1) -> list[Table1Cell]:
    """Monte Carlo study of the least-squares estimator over the n x b x trend x generator grid."""
    if config.experiment != "table1":
        raise ValidationError("run_table1 needs experiment = table1")
    x0 = int(config.params["x0"])
    units = [(i, cell, config.seed, config.replicates, x0) for i, cell in enumerate(table1_cells(config))]
    return _map(_table1_unit, units, workers)


def table1_long_rows(cells: list[Table1Cell]) -> list[list[str]]:
    rows = []
    for c in cells:
        rows.append([
            str(c.n), fmt_param(c.b), c.trend, c.generator, str(c.replicates), c.status,
            fmt_float(c.lse_mean), fmt_float(c.lse_se), fmt_float(c.kn_pinarch_mean), fmt_float(c.kn_pinarch_se),
            fmt_float(c.kn_binarch_mean), fmt_float(c.kn_binarch_se),
            fmt_display(c.lse_mean), fmt_display(c.kn_pinarch_mean), fmt_display(c.kn_binarch_mean),
            str(c.clamped), c.reason,
        ])
    return rows


def table1_wide(config: ExperimentConfig, cells: list[Table1Cell]) -> tuple[list[str], list[list[str]]]:
    """Table 1 layout: one row per (n, b, statistic), one column per (generator, trend); 4 decimals."""
    gens = [g.upper() for g in config.getlist("generators")]
    trends = config.getlist("trends")
    lookup = {(c.n, c.b, c.generator, c.trend): c for c in cells}
    header = ["n", "b", "statistic"] + [f"{g}:{t}" for g in gens for t in trends]
    rows = []
    for n in config.getints("n"):
        for b in config.getfloats("b"):
            for label, attr in TABLE1_STATISTICS:
                rows.append([str(n), fmt_param(b), label]
                            + [fmt_display(getattr(lookup[(n, b, g, t)], attr)) for g in gens for t in trends])
    return header, rows


def write_table1(config: ExperimentConfig, cells: list[Table1Cell], out=None) -> list[Path]:
    d = _out_dir(config, out)
    header, rows = table1_wide(config, cells)
    failed = [c for c in cells if c.status != "ok"]
    summary = {"cells": len(cells), "failed": len(failed),
               "failures": [{"n": c.n, "b": c.b, "trend": c.trend, "generator": c.generator,
                             "reason": c.reason} for c in failed]}
    return [
        _write(d, "table1_cells.csv", _csv_text(config, TABLE1_LONG_COLUMNS, table1_long_rows(cells))),
        _write(d, "table1.csv", _csv_text(config, header, rows)),
        _write(d, "table1.json", _json_text(config, summary)),
    ]


# ------------------------------------------------------------------ mixing


def _poisson_cov(*trends: str) -> dict:
    return {"law": "poisson", "trends": list(trends)}


# Each preset is plain data so it can be hashed and echoed into the output.
MIXING_PRESETS = {
    "ginar_stepwise_d1": {
        "model": "ginar", "B": [[0.04]], "X0": [0], "Z": _poisson_cov("t"), "thinning": "bernoulli",
        "scheme": "ginar_stepwise", "k": 20, "grid": [1, 2, 3, 4], "replicates": 1_000_000,
    },
    "ginar_shared_d1": {
        "model": "ginar", "B": [[0.16]], "X0": [0], "Z": _poisson_cov("const 10"), "thinning": "bernoulli",
        "scheme": "shared_noise_ginar", "k": 20, "grid": [1, 2, 3, 4, 5, 6, 7], "replicates": 100_000,
    },
    "ingarch_three_phase_d1": {
        "model": "ingarch", "A": [[0.09]], "B": [[0.04]], "lam0": [1.0], "Z": _poisson_cov("t"),
        "scheme": "ingarch_three_phase", "k": 10, "grid": [1, 2, 3, 4, 5, 6, 7, 8], "replicates": 100_000,
    },
    "ingarch_shared_d2": {
        "model": "ingarch", "A": [[0.2, 0.1], [0.1, 0.2]], "B": [[0.1, 0.1], [0.1, 0.1]], "lam0": [1.0, 1.0],
        "Z": _poisson_cov("const 2", "const 2"), "corr": [[1.0, 0.5], [0.5, 1.0]],
        "scheme": "shared_noise_ingarch", "k": 10, "grid": list(range(5, 15)), "replicates": 100_000,
    },
    "ingarch_triangular_d2": {
        "model": "ingarch", "A": [[0.04, 0.0], [50.0, 0.04]], "B": [[0.01, 0.0], [20.0, 0.01]],
        "lam0": [1.0, 1.0], "Z": _poisson_cov("t", "t"),
        "scheme": "ingarch_three_phase", "k": 10, "grid": [3, 4, 5, 6], "replicates": 100_000,
    },
    "ingarch_zero_d1": {
        "model": "ingarch", "A": [[0.0]], "B": [[0.0]], "lam0": [1.0], "Z": _poisson_cov("t"),
        "scheme": "ingarch_three_phase", "k": 5, "grid": [1, 2, 3, 4], "replicates": 10_000,
    },
}


def preset_hash(preset: dict) -> str:
    return hashlib.sha256(json.dumps(preset, sort_keys=True).encode("utf-8")).hexdigest()


def build_preset(preset: dict, replicates: int | None = None):
    """``(spec, scheme, grid)`` for a mixing preset."""
    cov = CovariateSpec.poisson(*(parse_trend(t) for t in preset["Z"]["trends"]))
    if preset["model"] == "ginar":
        spec = GinarSpec(B=preset["B"], X0=preset["X0"], Z=cov, thinning=preset["thinning"])
    else:
        dep = None
        if "corr" in preset:
            dep = CopulaSpec("gaussian", tuple(tuple(r) for r in preset["corr"]))
        spec = IngarchSpec(A=preset["A"], B=preset["B"], lam0=preset["lam0"], Z=cov, dependence=dep)
    R = replicates if replicates is not None else preset["replicates"]
    scheme = CouplingScheme(preset["scheme"], k=preset["k"], replicates=R)
    return spec, scheme, list(preset["grid"])


def _mixing_unit(unit) -> MixingCurve:
    idx, name, seed, R, chunk = unit
    spec, scheme, grid = build_preset(MIXING_PRESETS[name], R)
    return estimate_mixing(spec, scheme, grid, stream(seed, _KIND_MIXING, idx), chunk=chunk, require_fit=False)


def run_mixing(config: ExperimentConfig, workers: int = 1) -> dict[str, MixingCurve]:
    """One mixing curve per configured preset; insufficient signal is recorded, not raised."""
    if config.experiment != "mixing":
        raise ValidationError("run_mixing needs experiment = mixing")
    R = int(config.params["replicates"]) if config.params["replicates"] else None
    chunk = int(config.params["chunk"])
    names = config.getlist("curves")
    units = [(i, name, config.seed, R, chunk) for i, name in enumerate(names)]
    return dict(zip(names, _map(_mixing_unit, units, workers)))


def curve_summary(name: str, curve: MixingCurve) -> dict:
    fitted = bool(curve.fitted.any())
    return {
        "curve": name, "scheme": curve.scheme, "k": curve.k, "R_max": curve.R_max,
        "replicates": curve.replicates, "spec_sha256": preset_hash(MIXING_PRESETS[name]),
        "kappa_fit": None if math.isnan(curve.kappa_fit) else curve.kappa_fit,
        "kappa_theory": curve.kappa_theory,
        "log_decreasing_on_fit": curve.log_decreasing_on_fit() if fitted else None,
        "fit_error": curve.fit_error,
    }


def write_mixing(config: ExperimentConfig, curves: dict[str, MixingCurve], out=None) -> list[Path]:
    d = _out_dir(config, out)
    paths = []
    for name, c in curves.items():
        rows = [[str(int(n)), fmt_float(b), fmt_float(s), str(c.replicates), str(int(e)), str(int(f))]
                for n, b, s, e, f in zip(c.n, c.beta_hat, c.std_err, c.events, c.fitted)]
        paths.append(_write(d, f"mixing_{name}.csv", _csv_text(
            config, ["n", "beta_hat", "std_err", "replicates", "events", "fitted"], rows)))
    summary = {"seed": config.seed, "curves": [curve_summary(n, c) for n, c in curves.items()]}
    paths.append(_write(d, "mixing.json", _json_text(config, summary)))
    return paths


# ------------------------------------------------------------------ real data


@dataclass(frozen=True)
class RealDataset:
    months: tuple[str, ...]
    scrapy_counts: np.ndarray    # response X
    nlp_counts: np.ndarray       # covariate Z

    def __post_init__(self):
        if not (len(self.months) == len(self.scrapy_counts) == len(self.nlp_counts)):
            raise ValidationError("months, response and covariate must have equal lengths")

    def __len__(self) -> int:
        return len(self.months)


_MONTH_NAMES = {m: i + 1 for i, m in enumerate(
    ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"])}


def parse_month(text: str) -> tuple[int, int]:
    """``YYYY-MM`` (also ``YYYY-MM-DD`` and the ``YY-Mon`` style) to ``(year, month)``."""
    s = text.strip()
    parts = s.split("-")
    try:
        if len(parts) >= 2 and len(parts[0]) == 4:
            y, m = int(parts[0]), int(parts[1])
        elif len(parts) == 2 and parts[1][:3].lower() in _MONTH_NAMES:
            y, m = 2000 + int(parts[0]), _MONTH_NAMES[parts[1][:3].lower()]
        else:
            raise ValueError
        _dt.date(y, m, 1)
    except ValueError:
        raise ValueError(f"cannot parse month {text!r} (expected YYYY-MM)") from None
    return y, m


def _parse_count(text: str) -> int:
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"count {text!r} is not an integer")
    return int(v)


def load_real_dataset(path, response: str = "scrapy", covariate: str = "nlp") -> RealDataset:
    """Read a monthly CSV with columns ``month``, ``nlp``, ``scrapy`` (extra columns ignored)."""
    try:
        fh = open(path, encoding="utf-8-sig", newline="")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        cols = {}
        for name in ("month", response, covariate):
            if name not in header:
                raise ParseError(f"{path}: missing column {name!r} (header: {header})")
            cols[name] = header.index(name)
        months, xs, zs = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            vals = {}
            for name, j in cols.items():
                try:
                    cell = row[j]
                    vals[name] = parse_month(cell) if name == "month" else _parse_count(cell)
                except IndexError:
                    raise ParseError(f"{path}:{line}: column {name!r} missing") from None
                except ValueError as exc:
                    raise ParseError(f"{path}:{line}: column {name!r}: {exc}") from None
            for name in (response, covariate):
                if vals[name] < 0:
                    raise ValidationError(f"{path}:{line}: column {name!r} has negative count {vals[name]}")
            if months:
                y, m = months[-1]
                expected = (y + (m == 12), m % 12 + 1)
                if vals["month"] != expected:
                    raise ValidationError(f"{path}:{line}: month {vals['month'][0]}-{vals['month'][1]:02d} "
                                          f"does not follow {y}-{m:02d}")
            months.append(vals["month"])
            xs.append(vals[response])
            zs.append(vals[covariate])
    if len(months) < 2:
        raise ValidationError(f"{path}: need at least two months")
    return RealDataset(months=tuple(f"{y}-{m:02d}" for y, m in months),
                       scrapy_counts=np.array(xs, dtype=np.int64), nlp_counts=np.array(zs, dtype=np.int64))


@dataclass(frozen=True)
class RealDataResult:
    estimate: EstimationResult
    K_n_pinarch: float
    K_n_binarch: float
    ci_pinarch: object
    ci_binarch: object
    bound_pinarch: object
    bound_binarch: object
    first_month: str
    last_month: str


def run_realdata(dataset: RealDataset, beta: float = 0.05) -> RealDataResult:
    """Fit ``X_t = b o X_{t-1} + Z_t`` with X = response and Z = covariate of the same month."""
    X = dataset.scrapy_counts.astype(float)
    Z = dataset.nlp_counts[1:].astype(float)
    est = lse(X, Z)
    x_last = int(dataset.scrapy_counts[-1])
    return RealDataResult(
        estimate=est, K_n_pinarch=k_n(est, "PINARCH"), K_n_binarch=k_n(est, "BINARCH"),
        ci_pinarch=confidence_interval(est, "PINARCH", beta), ci_binarch=confidence_interval(est, "BINARCH", beta),
        bound_pinarch=prediction_bound(x_last, est, "PINARCH", beta),
        bound_binarch=prediction_bound(x_last, est, "BINARCH", beta),
        first_month=dataset.months[0], last_month=dataset.months[-1],
    )


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_realdata(config: ExperimentConfig, dataset: RealDataset, result: RealDataResult, out=None) -> list[Path]:
    d = _out_dir(config, out)
    est = result.estimate

    def ci(c):
        return {"lower": c.lower, "upper": c.upper, "level": c.level}

    def pb(p):
        return {"X_n": p.X_n, "q_beta": p.q_beta, "bound": p.bound}

    payload = {
        "data_sha256": _file_sha256(config.params["data"]),
        "months": [result.first_month, result.last_month], "n": est.n,
        "b_hat": est.b_hat, "K_n_pinarch": result.K_n_pinarch, "K_n_binarch": result.K_n_binarch,
        "b_hat_5dp": fmt_display(est.b_hat, 5), "K_n_pinarch_5dp": fmt_display(result.K_n_pinarch, 5),
        "K_n_binarch_5dp": fmt_display(result.K_n_binarch, 5), "binarch_clamped": est.clamped,
        "ci_pinarch": ci(result.ci_pinarch), "ci_binarch": ci(result.ci_binarch),
        "prediction_bound_pinarch": pb(result.bound_pinarch), "prediction_bound_binarch": pb(result.bound_binarch),
        "sums": {"S1": est.S1, "S2": est.S2, "S3": est.S3},
    }
    rows = [[m, str(int(z)), str(int(x))] for m, z, x in
            zip(dataset.months, dataset.nlp_counts, dataset.scrapy_counts)]
    return [
        _write(d, "realdata.json", _json_text(config, payload)),
        _write(d, "realdata_series.csv", _csv_text(config, ["month", "nlp", "scrapy"], rows)),
    ]


# ------------------------------------------------------------------ simulate


def simulate_spec(config: ExperimentConfig):
    """Model spec described by a ``simulate`` config."""
    p = config.params
    model = p["model"].lower()
    trends = [parse_trend(t) for t in _split_list(p["trends"])]
    if model == "stcar":
        if len(trends) != 1:
            raise ValidationError("stcar takes exactly one trend")
        return StCarSpec(b=float(p["b"]), thinning=p["thinning"], gamma=trends[0], X0=int(p["x0"]))
    cov = CovariateSpec.poisson(*trends)
    d = cov.dim
    B = _parse_matrix(p["B"])
    if model == "ginar":
        x0 = [int(v) for v in _split_list(p["x0"])]
        return GinarSpec(B=B, X0=x0 * d if len(x0) == 1 else x0, Z=cov, thinning=p["thinning"])
    if model == "ingarch":
        A = _parse_matrix(p["A"]) if p["A"] else [[0.0] * d for _ in range(d)]
        lam0 = [float(v) for v in _split_list(p["lam0"])] or [1.0]
        dep = CopulaSpec("gaussian", tuple(tuple(r) for r in _parse_matrix(p["corr"]))) if p["corr"] else None
        return IngarchSpec(A=A, B=B, lam0=lam0 * d if len(lam0) == 1 else lam0, Z=cov, dependence=dep)
    raise ValidationError(f"model must be stcar, ginar or ingarch, got {model!r}")


def _simulate_unit(unit) -> str:
    i, config = unit
    spec = simulate_spec(config)
    T = int(config.params["T"])
    rng = stream(config.seed, _KIND_SIMULATE, i)
    if isinstance(spec, StCarSpec):
        traj = simulate_stcar(spec, T, rng)
    elif isinstance(spec, GinarSpec):
        traj = simulate_ginar(spec, T, rng)
    else:
        traj = simulate_ingarch(spec, T, rng)
    return _header(config) + trajectory_to_csv(traj)


def run_simulate(config: ExperimentConfig, workers: int = 1, out=None) -> list[Path]:
    """Write ``path_XXXX.csv`` per simulated trajectory plus a ``simulate.json`` manifest."""
    if config.experiment != "simulate":
        raise ValidationError("run_simulate needs experiment = simulate")
    d = _out_dir(config, out)
    n_paths = int(config.params["paths"])
    texts = _map(_simulate_unit, [(i, config) for i in range(n_paths)], workers)
    width = max(4, len(str(n_paths - 1)))
    paths = [_write(d, f"path_{i:0{width}d}.csv", t) for i, t in enumerate(texts)]
    manifest = {"files": [{"name": p.name, "sha256": hashlib.sha256(t.encode("utf-8")).hexdigest()}
                          for p, t in zip(paths, texts)]}
    paths.append(_write(d, "simulate.json", _json_text(config, manifest)))
    return paths


# ------------------------------------------------------------------ dispatch


def run_experiment(config: ExperimentConfig, workers: int = 1, out=None) -> list[Path]:
    """Run ``config`` and write its outputs; returns the written paths."""
    workers = max(1, int(workers))
    if config.experiment == "table1":
        return write_table1(config, run_table1(config, workers), out)
    if config.experiment == "mixing":
        return write_mixing(config, run_mixing(config, workers), out)
    if config.experiment == "realdata":
        p = config.params
        ds = load_real_dataset(p["data"], response=p["response"], covariate=p["covariate"])
        return write_realdata(config, ds, run_realdata(ds, float(p["beta"])), out)
    return run_simulate(config, workers, out)


def default_workers() -> int:
    return os.cpu_count() or 1
