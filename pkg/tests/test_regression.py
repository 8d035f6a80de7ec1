"""Splitting regressions: likelihood values, exact gradients against finite
differences, and coefficient recovery for all three total families."""

import math

import numpy as np
import pytest

from splitcount.fitting import fit_splitting
from splitcount.regression import (
    RegressionSpec,
    fit_regression,
    regression_gradient,
    regression_log_lik,
)
from splitcount.simplex import Multinomial, multinomial_mle
from splitcount.sums import Poisson
from splitcount.compound import SplittingModel


def monotone(path, slack_scale=1.0):
    arr = np.asarray(path)
    slack = 1e-12 * (1.0 + np.abs(arr[:-1])) * slack_scale + 1e-9
    return bool(np.all(np.diff(arr) >= -slack))


def flatten(spec):
    return np.concatenate([spec.singular_coef.ravel(), spec.sum_coef])


def rebuild(spec, flat):
    j1, q = spec.singular_coef.shape
    return RegressionSpec(
        flat[: j1 * q].reshape(j1, q), spec.family, flat[j1 * q:], spec.sum_aux
    )


def fd_gradient(spec, x, y, h=1e-5):
    flat = flatten(spec)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        up = flat.copy()
        up[i] += h
        dn = flat.copy()
        dn[i] -= h
        out[i] = (
            regression_log_lik(rebuild(spec, up), x, y)
            - regression_log_lik(rebuild(spec, dn), x, y)
        ) / (2.0 * h)
    return out


def simulate(rng, n_rows, coef, family, beta, aux=None):
    q = beta.size - 1
    x = rng.normal(size=(n_rows, q))
    design = np.column_stack([np.ones(n_rows), x])
    eta = design @ coef.T
    full = np.column_stack([eta, np.zeros(n_rows)])
    pi = np.exp(full - full.max(axis=1)[:, None])
    pi /= pi.sum(axis=1)[:, None]
    mu = design @ beta
    if family == "poisson":
        ns = rng.poisson(np.exp(mu))
    elif family == "binomial":
        ns = rng.binomial(aux, 1.0 / (1.0 + np.exp(-mu)))
    else:
        lam = np.exp(mu)
        ns = rng.negative_binomial(aux, aux / (aux + lam))
    y = np.array([rng.multinomial(n, p) for n, p in zip(ns, pi)])
    return x, y


class TestSpecValidation:
    def test_unknown_family(self):
        with pytest.raises(KeyError):
            RegressionSpec(np.zeros((1, 2)), "gamma", [0.0, 0.0])

    def test_width_mismatch(self):
        with pytest.raises(ValueError):
            RegressionSpec(np.zeros((1, 3)), "poisson", [0.0, 0.0])

    def test_poisson_rejects_aux(self):
        with pytest.raises(ValueError):
            RegressionSpec(np.zeros((1, 2)), "poisson", [0.0, 0.0], sum_aux=3)

    def test_binomial_needs_n(self):
        with pytest.raises(ValueError):
            RegressionSpec(np.zeros((1, 2)), "binomial", [0.0, 0.0])

    def test_negative_binomial_needs_positive_r(self):
        with pytest.raises(ValueError):
            RegressionSpec(np.zeros((1, 2)), "negative-binomial", [0.0, 0.0], sum_aux=0.0)

    def test_shape_properties(self):
        spec = RegressionSpec(np.zeros((2, 4)), "poisson", np.zeros(4))
        assert spec.dim == 3
        assert spec.n_covariates == 3
        assert "J=3" in repr(spec)

    def test_params_round_trip(self):
        spec = RegressionSpec([[0.1, -0.2]], "negative-binomial", [0.5, 0.3], 2.0)
        p = spec.params()
        clone = RegressionSpec(p["singular_coef"], p["family"], p["sum_coef"], p["sum_aux"])
        assert np.allclose(clone.singular_coef, spec.singular_coef)
        assert clone.sum_aux == 2.0


class TestLogLik:
    def test_hand_value_even_split_doubled_poisson(self):
        # flat split of a Poisson(2) total across the row (1, 1)
        spec = RegressionSpec(np.zeros((1, 2)), "poisson", [math.log(2.0), 0.0])
        got = regression_log_lik(spec, [[0.0]], [[1, 1]])
        want = math.log(math.exp(-2.0) * 2.0**2 / 2.0) + math.log(2.0 * 0.25)
        assert got == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(-2.0, abs=1e-12)

    def test_intercept_only_matches_compound_joint(self):
        pi = np.array([0.5, 0.3, 0.2])
        lam = 3.2
        coef = np.log(pi[:-1] / pi[-1])[:, None]
        spec = RegressionSpec(coef, "poisson", [math.log(lam)])
        model = SplittingModel(Multinomial(pi), Poisson(lam))
        rng = np.random.default_rng(0)
        rows = model.sample(rng, 50)
        got = regression_log_lik(spec, None, rows)
        want = float(sum(model.joint_log_pmf(r) for r in rows))
        assert got == pytest.approx(want, rel=1e-10)

    def test_impossible_binomial_row_is_minus_inf(self):
        spec = RegressionSpec(np.zeros((1, 1)), "binomial", [0.0], 3)
        assert regression_log_lik(spec, None, [[4, 1]]) == -math.inf

    def test_category_mismatch(self):
        spec = RegressionSpec(np.zeros((1, 2)), "poisson", [0.0, 0.0])
        with pytest.raises(ValueError):
            regression_log_lik(spec, [[0.0]], [[1, 1, 1]])

    def test_row_count_mismatch(self):
        spec = RegressionSpec(np.zeros((1, 2)), "poisson", [0.0, 0.0])
        with pytest.raises(ValueError):
            regression_log_lik(spec, [[0.0], [1.0]], [[1, 1]])

    def test_non_finite_covariate(self):
        spec = RegressionSpec(np.zeros((1, 2)), "poisson", [0.0, 0.0])
        with pytest.raises(ValueError):
            regression_log_lik(spec, [[math.nan]], [[1, 1]])

    def test_permuting_categories_with_rereferenced_rows(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(50, 2))
        y = rng.multinomial(4, [0.3, 0.4, 0.3], size=50)
        coef = rng.normal(scale=0.4, size=(2, 3))
        beta = np.array([0.8, 0.1, -0.2])
        spec = RegressionSpec(coef, "poisson", beta)
        base = regression_log_lik(spec, x, y)
        for perm in [(1, 2, 0), (2, 0, 1), (1, 0, 2), (2, 1, 0)]:
            full = np.vstack([coef, np.zeros(3)])[list(perm)]
            moved = RegressionSpec(full[:-1] - full[-1], "poisson", beta)
            assert regression_log_lik(moved, x, y[:, list(perm)]) == pytest.approx(
                base, abs=1e-10 * (1 + abs(base))
            )


class TestGradient:
    @pytest.mark.parametrize(
        "family,aux", [("poisson", None), ("binomial", 9), ("negative-binomial", 2.5)]
    )
    def test_matches_central_differences(self, family, aux):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(40, 2))
        y = rng.multinomial(1, [0.4, 0.3, 0.3], size=40) * rng.integers(
            1, 6, size=(40, 1)
        )
        for _ in range(5):
            spec = RegressionSpec(
                rng.normal(scale=0.3, size=(2, 3)),
                family,
                rng.normal(scale=0.2, size=3),
                aux,
            )
            exact = regression_gradient(spec, x, y)
            approx = fd_gradient(spec, x, y)
            scale = np.maximum(np.abs(approx), 1.0)
            assert np.max(np.abs(exact - approx) / scale) < 1e-5

    def test_zero_at_fitted_optimum(self):
        rng = np.random.default_rng(2)
        coef = np.array([[0.4, -0.6], [-0.1, 0.3]])
        beta = np.array([1.1, 0.2])
        x, y = simulate(rng, 2000, coef, "poisson", beta)
        spec, report = fit_regression(x, y, family="poisson")
        assert report.converged
        assert np.max(np.abs(regression_gradient(spec, x, y))) < 1e-6

    def test_dimension_checked(self):
        spec = RegressionSpec(np.zeros((1, 2)), "poisson", [0.0, 0.0])
        with pytest.raises(ValueError):
            regression_gradient(spec, [[0.0]], [[1, 1, 1]])


class TestFitRegression:
    def test_intercept_only_split_matches_closed_form(self):
        rng = np.random.default_rng(3)
        rows = rng.multinomial(7, [0.5, 0.3, 0.2], size=400)
        spec, report = fit_regression(None, rows, family="poisson")
        pi_hat = spec.pi(np.zeros((1, 0)))[0]
        pi_ref, _ = multinomial_mle(rows)
        assert np.max(np.abs(pi_hat - pi_ref)) < 1e-8
        direct = fit_splitting("multinomial", "poisson", rows)
        assert report.loglik == pytest.approx(direct.loglik, abs=1e-8)

    def test_poisson_recovery_within_three_standard_errors(self):
        rng = np.random.default_rng(5)
        coef = np.array([[0.3, 0.8, -0.5], [-0.2, 0.0, 0.6]])
        beta = np.array([1.0, 0.4, -0.3])
        x, y = simulate(rng, 10000, coef, "poisson", beta)
        spec, report = fit_regression(x, y, family="poisson")
        assert report.converged
        assert monotone(report.loglik_path)
        truth = np.concatenate([coef.ravel(), beta])
        est = flatten(spec)
        # observed information by differencing the exact gradient
        h = 1e-5
        info = np.zeros((est.size, est.size))
        for i in range(est.size):
            up = est.copy()
            up[i] += h
            dn = est.copy()
            dn[i] -= h
            info[:, i] = -(
                regression_gradient(rebuild(spec, up), x, y)
                - regression_gradient(rebuild(spec, dn), x, y)
            ) / (2.0 * h)
        se = np.sqrt(np.diag(np.linalg.inv(0.5 * (info + info.T))))
        assert np.all(np.abs(est - truth) < 3.0 * se)

    def test_negative_binomial_recovery_with_profiled_dispersion(self):
        rng = np.random.default_rng(9)
        coef = np.array([[0.5, -0.4], [0.1, 0.7]])
        beta = np.array([1.2, 0.3])
        x, y = simulate(rng, 10000, coef, "negative-binomial", beta, aux=3.0)
        spec, report = fit_regression(x, y, family="negative-binomial")
        assert report.converged
        assert abs(spec.sum_aux - 3.0) / 3.0 < 0.15
        assert np.max(np.abs(spec.sum_coef - beta)) < 0.1
        assert np.max(np.abs(spec.singular_coef - coef)) < 0.15
        assert report.n_params == 4 + 2 + 1

    def test_binomial_recovery_with_known_trials(self):
        rng = np.random.default_rng(13)
        coef = np.array([[0.2, 0.5]])
        beta = np.array([0.3, -0.6])
        x, y = simulate(rng, 8000, coef, "binomial", beta, aux=12)
        spec, report = fit_regression(x, y, family="binomial", n=12)
        assert report.converged
        assert spec.sum_aux == 12
        assert np.max(np.abs(spec.sum_coef - beta)) < 0.1
        assert np.max(np.abs(spec.singular_coef - coef)) < 0.1

    def test_null_covariate_slopes_stay_small(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(4000, 1))
        y = rng.multinomial(1, [0.5, 0.5], size=4000) * rng.poisson(
            3.0, size=(4000, 1)
        )
        spec, report = fit_regression(x, y, family="poisson")
        assert report.converged
        # null slope standard errors: about 1/sqrt(N/4) and 1/sqrt(3N)
        assert abs(spec.singular_coef[0, 1]) < 3.0 / math.sqrt(1000.0)
        assert abs(spec.sum_coef[1]) < 3.0 / math.sqrt(12000.0)

    def test_separated_categories_flagged(self):
        x = np.concatenate([np.full(30, -1.0), np.full(30, 1.0)])[:, None]
        y = np.zeros((60, 2), dtype=int)
        y[:30, 0] = 10000
        y[30:, 1] = 10000
        spec, report = fit_regression(x, y, family="poisson")
        assert "separation" in report.flags
        assert not report.converged
        assert np.max(np.abs(spec.singular_coef)) > 30.0

    def test_rank_deficient_design_rejected(self):
        x = np.column_stack([np.arange(20.0), 2.0 * np.arange(20.0)])
        y = np.ones((20, 2), dtype=int)
        with pytest.raises(ValueError, match="rank"):
            fit_regression(x, y, family="poisson")

    def test_binomial_needs_trial_count(self):
        y = np.ones((10, 2), dtype=int)
        with pytest.raises(ValueError):
            fit_regression(None, y, family="binomial")

    def test_binomial_total_beyond_trials(self):
        y = np.full((10, 2), 4, dtype=int)
        with pytest.raises(ValueError):
            fit_regression(None, y, family="binomial", n=5)

    def test_unknown_family(self):
        y = np.ones((10, 2), dtype=int)
        with pytest.raises(KeyError):
            fit_regression(None, y, family="gamma")

    def test_report_bookkeeping(self):
        rng = np.random.default_rng(21)
        coef = np.array([[0.3, 0.8, -0.5], [-0.2, 0.0, 0.6]])
        beta = np.array([1.0, 0.4, -0.3])
        x, y = simulate(rng, 500, coef, "poisson", beta)
        spec, report = fit_regression(x, y, family="poisson")
        assert report.kind == "multinomial-logit"
        assert report.family == "poisson"
        assert report.n_params == 6 + 3
        assert report.sample_size == 500.0
        assert report.bic == pytest.approx(
            -2.0 * report.loglik + 9.0 * math.log(500.0), rel=1e-12
        )
        assert report.loglik == pytest.approx(
            regression_log_lik(spec, x, y), rel=1e-12
        )
        assert monotone(report.loglik_path)

    @pytest.mark.parametrize("family,aux", [("binomial", 15), ("negative-binomial", 2.0)])
    def test_paths_monotone_other_families(self, family, aux):
        rng = np.random.default_rng(23)
        coef = np.array([[0.4, -0.3]])
        beta = np.array([0.6, 0.2])
        x, y = simulate(rng, 1500, coef, family, beta, aux=aux)
        kwargs = {"n": aux} if family == "binomial" else {}
        spec, report = fit_regression(x, y, family=family, **kwargs)
        assert report.converged
        assert monotone(report.loglik_path)
