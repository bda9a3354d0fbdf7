import hashlib
import json
import math

import numpy as np
import pytest

from countmix.exceptions import ParseError, ValidationError
from countmix.experiments import (MIXING_PRESETS, ExperimentConfig, Table1Cell, build_preset, load_config,
                                  load_real_dataset, parse_config, parse_month, run_experiment, run_mixing,
                                  run_realdata, run_table1, table1_cells, table1_wide, write_table1)
from countmix.processes import StCarSpec, parse_trend, read_trajectory_csv, simulate_stcar
from countmix.rng import stream


def small_table1(**params):
    base = {"replicates": "20", "n": "30, 60", "b": "0.1, 0.23"}
    base.update(params)
    return ExperimentConfig("table1", seed=5, params=base)


# ------------------------------------------------------------------ config


class TestConfig:
    def test_defaults_and_hash(self):
        c = parse_config("experiment = table1\nseed = 3\n")
        assert c.replicates == 1000 and c.getints("n") == [50, 100, 1000]
        assert c.getlist("trends") == ["t", "t^2", "ln t"]
        assert c.sha256 == hashlib.sha256(c.to_text().encode()).hexdigest()
        assert c.sha256 != c.replace(seed=4).sha256
        assert c.sha256 == c.replace(out="elsewhere").sha256

    def test_overrides_and_comments(self):
        c = parse_config("# a comment\nexperiment = table1\nseed = 3\nreplicates = 7\n", replicates="9", seed=11)
        assert c.replicates == 9 and c.seed == 11

    def test_round_trip(self):
        c = small_table1()
        assert parse_config(c.to_text()) == c

    @pytest.mark.parametrize("text,exc", [
        ("seed = 1\n", ParseError),
        ("experiment = table1\nseed = x\n", ParseError),
        ("experiment = nope\n", ValidationError),
        ("experiment = table1\nbogus = 1\n", ValidationError),
        ("experiment = table1\nb = 0.3\n", ValidationError),
        ("experiment = table1\nb = 0.1, 0.25\n", ValidationError),
        ("experiment = table1\nn = x\n", ValidationError),
        ("experiment = table1\nreplicates = 0\n", ValidationError),
        ("experiment = table1\ntrends = t^q\n", ValidationError),
        ("experiment = table1\ngenerators = GINAR\n", ValidationError),
        ("experiment = table1\nseed = -1\n", ValidationError),
        ("experiment = mixing\ncurves = fancy\n", ValidationError),
        ("experiment = simulate\nmodel = arma\n", ValidationError),
        ("experiment = simulate\nmodel = ginar\nB = 1.2\n", ValidationError),
        ("just text without equals\n", ParseError),
    ])
    def test_rejects(self, text, exc):
        with pytest.raises(exc):
            parse_config(text)

    def test_load_from_results(self, tmp_path):
        c = small_table1(n="20", b="0.1", trends="t", generators="PINARCH")
        paths = run_experiment(c, out=tmp_path)
        for p in paths:
            assert load_config(p) == c.replace(out="results")
        assert "config_sha256" in json.loads((tmp_path / "table1.json").read_text())
        with pytest.raises(ParseError):
            bad = tmp_path / "bad.json"
            bad.write_text("{}")
            load_config(bad)


# ------------------------------------------------------------------ Table 1


class TestTable1:
    def test_full_grid_shape(self):
        c = parse_config("experiment = table1\n")
        assert len(table1_cells(c)) == 54
        cells = [Table1Cell(n=n, b=b, trend=t, generator=g, replicates=1) for n, b, g, t in table1_cells(c)]
        header, rows = table1_wide(c, cells)
        assert len(header) == 3 + 6 and len(rows) == 27
        assert [r[2] for r in rows[:3]] == ["LSE", "Kn-PINARCH", "Kn-BINARCH"]

    def test_cells_complete_and_finite(self):
        cells = run_table1(small_table1())
        assert len(cells) == 2 * 2 * 2 * 3
        for c in cells:
            assert c.status == "ok"
            for v in (c.lse_mean, c.kn_pinarch_mean, c.kn_binarch_mean, c.lse_se):
                assert math.isfinite(v)

    def test_worker_invariance(self, tmp_path):
        c = small_table1()
        a = run_experiment(c, workers=1, out=tmp_path / "a")
        b = run_experiment(c, workers=2, out=tmp_path / "b")
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_reproduce_from_embedded_config(self, tmp_path):
        c = small_table1()
        first = run_experiment(c, out=tmp_path / "a")
        again = run_experiment(load_config(first[0]), out=tmp_path / "b")
        assert [p.read_bytes() for p in first] == [p.read_bytes() for p in again]

    def test_failed_cell_recorded(self, tmp_path, monkeypatch):
        import countmix.experiments as ex

        real = ex.simulate_table1_cell

        def flaky(n, b, trend, generator, *a, **kw):
            if trend == "ln t" and generator == "BINARCH":
                raise ValidationError("injected")
            return real(n, b, trend, generator, *a, **kw)

        monkeypatch.setattr(ex, "simulate_table1_cell", flaky)
        c = small_table1(n="20", b="0.1")
        cells = run_table1(c)
        failed = [x for x in cells if x.status == "failed"]
        assert len(cells) == 6 and len(failed) == 1 and "injected" in failed[0].reason
        write_table1(c, cells, tmp_path)
        doc = json.loads((tmp_path / "table1.json").read_text())
        assert doc["failed"] == 1
        assert "nan" in (tmp_path / "table1.csv").read_text()


# ------------------------------------------------------------------ mixing


class TestMixing:
    def test_presets_build(self):
        for name, preset in MIXING_PRESETS.items():
            spec, scheme, grid = build_preset(preset, 10)
            assert scheme.replicates == 10 and grid == sorted(grid)

    def test_triangular_preset_decays(self):
        # a huge off-diagonal entry only delays the geometric regime
        from countmix.coupling import estimate_mixing, kappa_theory

        spec, scheme, grid = build_preset(MIXING_PRESETS["ingarch_triangular_d2"], 20_000)
        assert kappa_theory(spec, scheme) == pytest.approx(0.4)
        curve = estimate_mixing(spec, scheme, grid, stream(1, 2, 0))
        assert curve.log_decreasing_on_fit()
        assert curve.kappa_fit <= curve.kappa_theory + 0.1

    def test_run_and_write(self, tmp_path):
        c = ExperimentConfig("mixing", seed=2, params={"curves": "ginar_shared_d1, ingarch_zero_d1",
                                                        "replicates": "3000", "chunk": "1000"})
        curves = run_mixing(c)
        assert curves["ingarch_zero_d1"].fit_error is not None
        assert np.all(curves["ingarch_zero_d1"].beta_hat[1:] == 0)
        paths = run_experiment(c, out=tmp_path)
        doc = json.loads((tmp_path / "mixing.json").read_text())
        assert [d["curve"] for d in doc["curves"]] == ["ginar_shared_d1", "ingarch_zero_d1"]
        assert doc["curves"][1]["kappa_fit"] is None
        again = run_experiment(c, workers=2, out=tmp_path / "w2")
        assert [p.read_bytes() for p in paths] == [p.read_bytes() for p in again]


# ------------------------------------------------------------------ real data


def synthetic_months(n, start=(2009, 1)):
    y, m = start
    out = []
    for _ in range(n):
        out.append(f"{y}-{m:02d}")
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


@pytest.fixture(scope="module")
def synthetic_csv(tmp_path_factory):
    # SYNTHETIC stand-in with the real file's shape (132 months), not the real series
    traj = simulate_stcar(StCarSpec(b=0.2, thinning="poisson", gamma=parse_trend("t")), 131, stream(99, 0))
    path = tmp_path_factory.mktemp("data") / "synthetic_stackindex.csv"
    lines = ["month,nlp,scrapy,python"]
    z = traj.covariates[:, 0]
    for i, m in enumerate(synthetic_months(132)):
        nlp = 0 if i == 0 else int(z[i])
        lines.append(f"{m},{nlp},{int(traj.counts[i, 0])},1")
    path.write_text("\n".join(lines) + "\n")
    return path


class TestRealData:
    def test_month_formats(self):
        assert parse_month("2009-01") == (2009, 1)
        assert parse_month("2009-01-01") == (2009, 1)
        assert parse_month("09-Jan") == (2009, 1)
        with pytest.raises(ValueError):
            parse_month("January 2009")

    def test_load_and_fit(self, synthetic_csv):
        ds = load_real_dataset(synthetic_csv)
        assert len(ds) == 132 and ds.months[0] == "2009-01" and ds.months[-1] == "2019-12"
        res = run_realdata(ds)
        assert 0.0 < res.estimate.b_hat < 0.5
        assert res.ci_pinarch.lower < res.estimate.b_hat < res.ci_pinarch.upper
        assert res.bound_pinarch.bound > 0

    def _write(self, tmp_path, rows):
        p = tmp_path / "x.csv"
        p.write_text("month,nlp,scrapy\n" + "".join(f"{r}\n" for r in rows))
        return p

    def test_missing_month(self, tmp_path):
        p = self._write(tmp_path, ["2009-01,1,2", "2009-03,1,2"])
        with pytest.raises(ValidationError, match="x.csv:3"):
            load_real_dataset(p)

    def test_negative_count(self, tmp_path):
        p = self._write(tmp_path, ["2009-01,1,2", "2009-02,-1,2"])
        with pytest.raises(ValidationError, match="negative"):
            load_real_dataset(p)

    def test_parse_errors(self, tmp_path):
        with pytest.raises(ParseError, match="x.csv:2"):
            load_real_dataset(self._write(tmp_path, ["2009-01,one,2"]))
        (tmp_path / "h.csv").write_text("month,scrapy\n2009-01,1\n")
        with pytest.raises(ParseError, match="nlp"):
            load_real_dataset(tmp_path / "h.csv")
        with pytest.raises(ParseError):
            load_real_dataset(tmp_path / "absent.csv")

    def test_realdata_outputs_deterministic(self, synthetic_csv, tmp_path):
        c = ExperimentConfig("realdata", seed=0, params={"data": str(synthetic_csv)})
        a = run_experiment(c, out=tmp_path / "a")
        b = run_experiment(c, out=tmp_path / "b")
        assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
        doc = json.loads(a[0].read_text())
        assert doc["data_sha256"] == hashlib.sha256(synthetic_csv.read_bytes()).hexdigest()
        assert doc["n"] == 131


# ------------------------------------------------------------------ simulate

# pins the seeding scheme and CSV format; change only on an intended stream change
GOLDEN_GINAR = "1eaadc7104699a78186c02ac10a8bce7886ced598505b2fe421f863c8f725779"


class TestSimulate:
    def test_golden_ginar(self, tmp_path):
        c = ExperimentConfig("simulate", seed=42, params={"model": "ginar", "T": "10", "B": "0.16"})
        paths = run_experiment(c, out=tmp_path)
        digest = hashlib.sha256(paths[0].read_bytes()).hexdigest()
        assert digest == GOLDEN_GINAR
        traj = read_trajectory_csv(paths[0])
        assert traj.counts.shape == (11, 1)

    def test_ingarch_export_recursion(self, tmp_path):
        c = ExperimentConfig("simulate", seed=1, params={
            "model": "ingarch", "T": "50", "A": "0.2,0.1;0.05,0.3", "B": "0.1,0;0.2,0.1",
            "lam0": "1,2", "trends": "t, const 3", "paths": "2"})
        paths = run_experiment(c, out=tmp_path)
        A = np.array([[0.2, 0.1], [0.05, 0.3]])
        B = np.array([[0.1, 0.0], [0.2, 0.1]])
        for p in paths[:2]:
            tr = read_trajectory_csv(p)
            lam, x, z = tr.intensities, tr.counts, tr.covariates
            for t in range(1, 51):
                assert np.allclose(lam[t], A @ lam[t - 1] + B @ x[t - 1] + z[t - 1], rtol=1e-12, atol=0)
        manifest = json.loads(paths[-1].read_text())
        assert manifest["files"][0]["sha256"] == hashlib.sha256(paths[0].read_bytes()).hexdigest()

    def test_stcar_mean(self, tmp_path):
        c = ExperimentConfig("simulate", seed=3, params={
            "model": "stcar", "T": "1000", "b": "0.16", "trends": "t", "thinning": "poisson", "paths": "100"})
        paths = run_experiment(c, out=tmp_path)
        last = [read_trajectory_csv(p).counts[-1, 0] for p in paths[:-1]]
        assert np.mean(last) == pytest.approx(1000 / 0.84, rel=0.05)
