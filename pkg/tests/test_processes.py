import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from countmix.exceptions import DimensionMismatch, InvalidThinningParam
from countmix.processes import (BinomialTrend, Constant, CopulaSpec, CovariateSpec, Deterministic,
                                GinarSpec, IngarchSpec, Logarithmic, Polynomial, PoissonTrend, StCarSpec,
                                draw_covariate, draw_poisson_dependent, eval_trend, ingarch_intensity,
                                parse_trend, read_trajectory_csv, simulate_ginar, simulate_ingarch,
                                simulate_stcar, stcar_thinning, thin, trajectory_to_csv, trend_norming,
                                write_trajectory_csv)
from countmix.rng import stream


def z_band(sample, mean, var, sigmas=5.0):
    return abs(np.mean(sample) - mean) <= sigmas * math.sqrt(var / len(sample))


class TestTrends:
    def test_eval_examples(self):
        assert eval_trend(Polynomial(1, 1), 7) == 7
        assert eval_trend(Logarithmic(1, 1), 1) == 0
        assert eval_trend(Polynomial(2, 2), 3) == 18
        assert eval_trend(Logarithmic(1, 1), 0) == 0
        assert eval_trend(Constant(3.5), 100) == 3.5

    def test_norming_examples(self):
        n = trend_norming(Constant(1), 10)
        assert (n.r_n, n.s_n) == (10, 10)
        n = trend_norming(Polynomial(1, 1), 3)
        assert (n.r_n, n.s_n) == (14, 36)

    def test_invalid(self):
        with pytest.raises(ValueError):
            Polynomial(-1, 1)
        with pytest.raises(ValueError):
            eval_trend(Polynomial(), -1)
        with pytest.raises(ValueError):
            parse_trend("sin t")

    @pytest.mark.parametrize("text", ["t", "t^2", "ln t", "2*t^1.5", "(ln t)^2", "const 5", "3*ln t"])
    def test_parse_label_roundtrip(self, text):
        f = parse_trend(text)
        assert parse_trend(f.label) == f

    @pytest.mark.parametrize("f", [Polynomial(1, 1), Polynomial(0.5, 2.5), Logarithmic(1, 1), Logarithmic(2, 3)])
    def test_nondecreasing_and_doubling(self, f):
        t = np.unique(np.logspace(0, 6, 4000).astype(np.int64))
        v = f(t)
        assert np.all(np.diff(v) >= 0)
        ratio = f(2 * t[t >= 3]) / f(t[t >= 3])
        bound = 2.0**f.alpha if isinstance(f, Polynomial) else ratio.max()
        assert np.all(ratio <= bound * (1 + 1e-12)) and np.isfinite(ratio).all()

    @given(st.floats(0.1, 3), st.floats(0.1, 2), st.integers(1, 300))
    def test_norming_is_partial_sum(self, d, a, n):
        f = Polynomial(d, a)
        g = [d * t**a for t in range(1, n + 1)]
        res = trend_norming(f, n)
        assert res.r_n == pytest.approx(math.fsum(x * x for x in g), rel=1e-12)
        assert res.s_n == pytest.approx(math.fsum(x**3 for x in g), rel=1e-12)


class TestCovariates:
    def test_deterministic_and_zero(self):
        rng = np.random.default_rng(0)
        spec = CovariateSpec((Deterministic(Constant(3)), PoissonTrend(Constant(0))))
        z = draw_covariate(spec, 5, rng, 100)
        assert np.all(z[:, 0] == 3) and np.all(z[:, 1] == 0)

    def test_poisson_trend_mean(self):
        z = draw_covariate(CovariateSpec.poisson(Polynomial(1, 1)), 50, np.random.default_rng(1), 100_000)
        assert z_band(z[:, 0], 50, 50)

    def test_binomial_trend(self):
        spec = CovariateSpec((BinomialTrend(Polynomial(1, 1), 0.3),))
        z = draw_covariate(spec, 40, np.random.default_rng(2), 50_000)
        assert z_band(z[:, 0], 12, 40 * 0.3 * 0.7)
        assert spec.mean(40)[0] == pytest.approx(12)
        with pytest.raises(ValueError):
            BinomialTrend(Constant(1), 1.5)


class TestCopula:
    def test_validation(self):
        with pytest.raises(ValueError):
            CopulaSpec("gaussian", ((1, 2), (2, 1)))
        with pytest.raises(ValueError):
            CopulaSpec("gaussian", ((1, 0.5), (0.4, 1)))
        with pytest.raises(ValueError):
            CopulaSpec("clayton")

    def test_poi_dep_marginals_and_dependence(self):
        cop = CopulaSpec("gaussian", ((1, 0.8), (0.8, 1)))
        lam = np.tile([3.0, 12.0], (40_000, 1))
        x = draw_poisson_dependent(lam, cop, np.random.default_rng(3))
        assert z_band(x[:, 0], 3, 3) and z_band(x[:, 1], 12, 12)
        assert np.var(x[:, 0]) == pytest.approx(3, rel=0.05)
        assert np.corrcoef(x.T)[0, 1] > 0.3

    def test_exp_marginals(self):
        cop = CopulaSpec("gaussian", ((1, -0.5), (-0.5, 1)))
        e = cop.neg_log_uniforms(np.random.default_rng(4), (100_000,), 2)
        assert np.all(e > 0)
        assert z_band(e[:, 1], 1.0, 1.0)

    def test_dimension_check(self):
        cop = CopulaSpec("gaussian", ((1, 0.5), (0.5, 1)))
        with pytest.raises(DimensionMismatch):
            cop.neg_log_uniforms(np.random.default_rng(0), (3,), 3)


class TestIngarch:
    def spec(self, **kw):
        base = dict(A=[[0.2, 0.1], [0.0, 0.3]], B=[[0.1, 0.0], [0.2, 0.1]], lam0=[1, 2],
                    Z=CovariateSpec.poisson(Polynomial(1, 1), Constant(2)))
        base.update(kw)
        return IngarchSpec(**base)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            self.spec(lam0=[1, 2, 3])
        with pytest.raises(DimensionMismatch):
            self.spec(B=[[0.1]])

    def test_recursion_audit_bit_exact(self):
        for dep in (None, CopulaSpec("gaussian", ((1, 0.3), (0.3, 1)))):
            spec = self.spec(dependence=dep)
            batch = simulate_ingarch(spec, 30, stream(5, 1), replicates=20)
            for r in range(len(batch)):
                tr = batch[r]
                for t in range(1, 31):
                    lam = ingarch_intensity(spec.A, spec.B, tr.intensities[t - 1][None], tr.counts[t - 1][None],
                                            tr.covariates[t - 1][None])[0]
                    assert np.array_equal(lam, tr.intensities[t])

    def test_zero_coefficients_give_constant_intensity(self):
        spec = IngarchSpec(A=[[0.0]], B=[[0.0]], lam0=[1.0], Z=CovariateSpec((Deterministic(Constant(4)),)))
        batch = simulate_ingarch(spec, 10, np.random.default_rng(0), replicates=5000)
        assert np.all(batch.intensities[:, 1:] == 4)
        assert z_band(batch.counts[:, -1, 0], 4, 4)

    def test_conditional_mean_slope_one(self):
        batch = simulate_ingarch(self.spec(), 40, np.random.default_rng(6), replicates=2000)
        lam = batch.intensities[:, 1:, 0].ravel()
        x = batch.counts[:, 1:, 0].ravel()
        slope = np.cov(lam, x)[0, 1] / np.var(lam, ddof=1)
        assert slope == pytest.approx(1.0, abs=0.03)

    def test_matches_stcar_moments(self):
        b = 0.16
        # with Z_{t-1} = t - 1 deterministic, Poi(b X_{t-1} + t - 1) = Poi(b X_{t-1}) + Poi(t - 1) in law,
        # i.e. the st-CAR path shifted by one step; a Poisson Z would add its variance a second time
        ing = IngarchSpec(A=[[0.0]], B=[[b]], lam0=[0.0], Z=CovariateSpec((Deterministic(Polynomial(1, 1)),)))
        xi = simulate_ingarch(ing, 41, np.random.default_rng(7), replicates=10_000).counts[:, -1, 0]
        xs = simulate_stcar(StCarSpec(b, "poisson", Polynomial(1, 1)), 40, np.random.default_rng(8),
                            replicates=10_000).counts[:, -1, 0]
        se = math.sqrt(np.var(xi) / 1e4 + np.var(xs) / 1e4)
        assert abs(xi.mean() - xs.mean()) < 5 * se
        assert np.var(xi) == pytest.approx(np.var(xs), rel=0.08)

    def test_independence_copula_matches_independent_components(self):
        a = simulate_ingarch(self.spec(), 15, np.random.default_rng(9), replicates=8000)
        b = simulate_ingarch(self.spec(dependence=CopulaSpec("independence")), 15, np.random.default_rng(10),
                             replicates=8000)
        for i in range(2):
            xa, xb = a.counts[:, -1, i], b.counts[:, -1, i]
            se = math.sqrt(np.var(xa) / 8000 + np.var(xb) / 8000)
            assert abs(xa.mean() - xb.mean()) < 5 * se
            assert np.var(xa) == pytest.approx(np.var(xb), rel=0.1)

    def test_seed_determinism(self):
        a = simulate_ingarch(self.spec(), 20, stream(1, 2, 3))
        b = simulate_ingarch(self.spec(), 20, stream(1, 2, 3))
        assert np.array_equal(a.counts, b.counts) and np.array_equal(a.intensities, b.intensities)


class TestGinar:
    def test_b_zero(self):
        spec = GinarSpec(B=[[0.0]], X0=[3], Z=CovariateSpec.poisson(Polynomial(1, 1)))
        tr = simulate_ginar(spec, 20, np.random.default_rng(0))
        assert np.array_equal(tr.counts[1:, 0], tr.covariates[1:, 0].astype(int))

    def test_identity_accumulates(self):
        spec = GinarSpec(B=np.eye(2), X0=[1, 2], Z=CovariateSpec.poisson(Constant(1), Constant(3)))
        tr = simulate_ginar(spec, 20, np.random.default_rng(1))
        assert np.array_equal(tr.counts[1:], tr.counts[:-1] + tr.covariates[1:].astype(int))

    def test_invalid_thinning(self):
        with pytest.raises(InvalidThinningParam):
            GinarSpec(B=[[1.2]], X0=[0], Z=CovariateSpec.poisson(Constant(1)))
        GinarSpec(B=[[1.2]], X0=[0], Z=CovariateSpec.poisson(Constant(1)), thinning="poisson")

    def test_growth_law(self):
        spec = GinarSpec(B=[[0.16]], X0=[0], Z=CovariateSpec.poisson(Polynomial(1, 1)))
        x = simulate_ginar(spec, 500, np.random.default_rng(2), replicates=10_000).counts[:, 500, 0]
        assert x.mean() / (500 / 0.84) == pytest.approx(1.0, abs=0.03)

    @pytest.mark.parametrize("thinning", ["bernoulli", "poisson"])
    def test_thinning_conditional_law(self, thinning):
        B = np.array([[0.3, 0.1], [0.05, 0.6]])
        counts = np.tile([40, 70], (20_000, 1))
        out = thin(counts, B, thinning, np.random.default_rng(3))
        for i in range(2):
            mean = float(B[i] @ [40, 70])
            var = float((B[i] * (1 - B[i])) @ [40, 70]) if thinning == "bernoulli" else mean
            assert z_band(out[:, i], mean, var)
            assert np.var(out[:, i]) == pytest.approx(var, rel=0.05)

    def test_exact_thinning_matches_shortcut(self):
        B = np.array([[0.4]])
        counts = np.full((3000, 1), 25)
        fast = thin(counts, B, "bernoulli", np.random.default_rng(4))[:, 0]
        slow = thin(counts, B, "bernoulli", np.random.default_rng(5), exact=True)[:, 0]
        se = math.sqrt(2 * 25 * 0.24 / 3000)
        assert abs(fast.mean() - slow.mean()) < 5 * se


class TestStCar:
    def test_spec_bounds(self):
        with pytest.raises(ValueError):
            StCarSpec(0.3, "poisson", Polynomial())
        with pytest.raises(ValueError):
            StCarSpec(0.1, "geometric", Polynomial())
        assert StCarSpec(0.1, "bernoulli", Polynomial()).model == "BINARCH"

    def test_b_zero(self):
        tr = simulate_stcar(StCarSpec(0.0, "poisson", Polynomial()), 50, np.random.default_rng(0))
        assert np.array_equal(tr.counts[1:, 0], tr.covariates[1:, 0].astype(int))
        assert np.all(tr.innovations[1:] == 0)

    @pytest.mark.parametrize("thinning,nu", [("poisson", 0.16), ("bernoulli", 0.16 * 0.84)])
    def test_innovation_moments(self, thinning, nu):
        th = stcar_thinning(np.full(100_000, 100), 0.16, thinning, np.random.default_rng(1))
        eps = th - 16.0
        assert z_band(eps, 0.0, nu * 100)
        assert np.var(eps) == pytest.approx(nu * 100, rel=0.03)

    def test_growth_law(self):
        tr = simulate_stcar(StCarSpec(0.16, "poisson", Polynomial()), 500, np.random.default_rng(2),
                            replicates=10_000)
        assert tr.counts[:, 500, 0].mean() / (500 / 0.84) == pytest.approx(1.0, abs=0.03)

    def test_innovation_record(self):
        tr = simulate_stcar(StCarSpec(0.2, "bernoulli", Polynomial()), 30, np.random.default_rng(3))
        x, z, e = tr.counts[:, 0], tr.covariates[:, 0], tr.innovations
        assert np.allclose(x[1:] - z[1:] - 0.2 * x[:-1], e[1:])


class TestCsv:
    def test_roundtrip_ingarch(self, tmp_path):
        spec = IngarchSpec(A=[[0.2, 0.0], [0.1, 0.1]], B=[[0.1, 0.1], [0.0, 0.2]], lam0=[0.7, 1.3],
                           Z=CovariateSpec.poisson(Polynomial(0.5, 1), Constant(1.1)))
        tr = simulate_ingarch(spec, 25, np.random.default_rng(0))
        path = tmp_path / "p.csv"
        write_trajectory_csv(tr, path)
        back = read_trajectory_csv(path)
        assert np.array_equal(back.counts, tr.counts)
        assert np.array_equal(back.intensities, tr.intensities)
        assert np.array_equal(back.covariates, tr.covariates)
        for t in range(1, 26):
            lam = ingarch_intensity(spec.A, spec.B, back.intensities[t - 1][None], back.counts[t - 1][None],
                                    back.covariates[t - 1][None])[0]
            assert np.array_equal(lam, back.intensities[t])

    def test_header_and_nan(self):
        tr = simulate_ginar(GinarSpec(B=[[0.1]], X0=[2], Z=CovariateSpec.poisson(Constant(1))), 2,
                            np.random.default_rng(0))
        text = trajectory_to_csv(tr)
        assert text.splitlines()[0] == "t,X_1,Z_1"
        assert text.splitlines()[1] == "0,2,"
