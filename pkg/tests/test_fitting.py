"""Decomposed MLE, grid selection, and EM mixtures.

Recovery checks run on seeded simulated data at module-test scale; the
larger replication batteries live in the acceptance suite.
"""

import math

import numpy as np
import pytest

import splitcount.fitting
from splitcount.compound import SplittingModel
from splitcount.fitting import (
    FitReport,
    MixtureModel,
    fit_call_count,
    fit_mixture,
    fit_splitting,
    select_model,
    splitting_log_likelihood,
)
from splitcount.simplex import DirichletMultinomial, Multinomial, enumerate_simplex
from splitcount.sums import BetaBinomial, NegativeBinomial, Poisson


def monotone(path, scale=1.0):
    slack = 1e-12 * (1.0 + abs(scale)) + 1e-9
    return all(b >= a - slack for a, b in zip(path, path[1:]))


@pytest.fixture(scope="module")
def nb_data():
    gen = SplittingModel(Multinomial([0.2, 0.8]), NegativeBinomial(3.0, 0.4))
    return gen.sample(np.random.default_rng(0), 10_000)


@pytest.fixture(scope="module")
def two_groups():
    mix = MixtureModel(
        [0.4, 0.6],
        [
            SplittingModel(
                Multinomial([0.7, 0.3]), NegativeBinomial(8.0, 0.2, shift=1)
            ),
            SplittingModel(
                Multinomial([0.2, 0.8]), NegativeBinomial(30.0, 0.35, shift=1)
            ),
        ],
    )
    rng = np.random.default_rng(7)
    labels = rng.random(3000) < 0.6
    data = np.where(
        labels[:, None],
        mix.components[1].sample(np.random.default_rng(1), 3000),
        mix.components[0].sample(np.random.default_rng(2), 3000),
    )
    return data, labels


class TestFitReport:
    def test_bic_and_aic(self):
        r = FitReport(
            model=None, loglik=-50.0, n_params=3, bic=0.0, converged=True,
            iterations=1, flags=set(), sample_size=20,
        )
        assert r.aic == pytest.approx(106.0)


class TestFitSplitting:
    def test_two_point_closed_form(self):
        report = fit_splitting("multinomial", "poisson", [[1, 0], [0, 1]])
        assert np.allclose(report.model.singular.pi, [0.5, 0.5])
        assert report.model.sum.params()["lam"] == pytest.approx(1.0)
        assert report.n_params == 2
        assert report.bic == pytest.approx(
            -2.0 * report.loglik + 2.0 * math.log(2.0)
        )

    @pytest.mark.parametrize(
        "kind, family, constrained",
        [
            ("multinomial", "poisson", False),
            ("multinomial", "negative-binomial", False),
            ("dirichlet-multinomial", "negative-binomial", False),
            ("dirichlet-multinomial", "beta-binomial", True),
        ],
    )
    def test_decomposition_identity(self, kind, family, constrained):
        gen = SplittingModel(
            DirichletMultinomial([2.0, 3.0]), BetaBinomial(6, 5.0, 2.0)
        )
        data = gen.sample(np.random.default_rng(8), 400)
        fixed = {"n": 6} if family == "beta-binomial" else None
        report = fit_splitting(
            kind, family, data, fixed=fixed, constrained=constrained
        )
        direct = splitting_log_likelihood(report.model, data)
        assert report.loglik == pytest.approx(direct, abs=1e-9)

    def test_negative_binomial_recovery(self):
        gen = SplittingModel(Multinomial([0.2, 0.8]), NegativeBinomial(3.0, 0.4))
        data = gen.sample(np.random.default_rng(0), 10_000)
        report = fit_splitting("multinomial", "negative-binomial", data)
        assert report.converged
        assert np.allclose(report.model.singular.pi, [0.2, 0.8], rtol=0.1)
        got = report.model.sum.params()
        assert got["r"] == pytest.approx(3.0, rel=0.1)
        assert got["p"] == pytest.approx(0.4, rel=0.1)

    def test_constrained_beta_binomial(self):
        alpha = np.array([1.0, 2.0])
        gen = SplittingModel(
            DirichletMultinomial(alpha), BetaBinomial(6, alpha.sum(), 2.0)
        )
        data = gen.sample(np.random.default_rng(1), 10_000)
        report = fit_splitting(
            "dirichlet-multinomial", "beta-binomial", data,
            constrained=True, fixed={"n": 6},
        )
        assert report.model.singular.total() == pytest.approx(
            report.model.sum.params()["a"], rel=1e-9
        )
        # J - 1 direction parameters plus the two free sum parameters
        assert report.n_params == 3
        pts = np.vstack([enumerate_simplex(2, m) for m in range(7)])
        tv = 0.5 * np.abs(gen.joint_pmf(pts) - report.model.joint_pmf(pts)).sum()
        assert tv < 0.02

    def test_constrained_negative_binomial(self):
        alpha = np.array([1.5, 2.5])
        gen = SplittingModel(
            DirichletMultinomial(alpha), NegativeBinomial(alpha.sum(), 0.45)
        )
        data = gen.sample(np.random.default_rng(2), 8_000)
        report = fit_splitting(
            "dirichlet-multinomial", "negative-binomial", data, constrained=True
        )
        assert report.model.singular.total() == pytest.approx(
            report.model.sum.params()["r"], rel=1e-9
        )
        assert report.model.sum.params()["p"] == pytest.approx(0.45, rel=0.1)
        assert np.allclose(report.model.singular.alpha, alpha, rtol=0.2)

    def test_constrained_validation(self):
        data = [[1, 2], [2, 1]]
        with pytest.raises(ValueError, match="constraints tie"):
            fit_splitting("multinomial", "beta-binomial", data, constrained=True)
        with pytest.raises(ValueError, match="no canonical constraint"):
            fit_splitting(
                "dirichlet-multinomial", "poisson", data, constrained=True
            )

    def test_weighted_equals_replicated(self):
        rows = np.array([[1, 2], [0, 3], [4, 1]])
        weights = np.array([2.0, 3.0, 1.0])
        replicated = np.repeat(rows, [2, 3, 1], axis=0)
        a = fit_splitting("multinomial", "poisson", rows, weights=weights)
        b = fit_splitting("multinomial", "poisson", replicated)
        assert np.allclose(a.model.singular.pi, b.model.singular.pi, atol=1e-12)
        assert a.model.sum.params()["lam"] == pytest.approx(
            b.model.sum.params()["lam"], abs=1e-12
        )
        assert a.loglik == pytest.approx(b.loglik, abs=1e-9)
        assert a.bic == pytest.approx(b.bic, abs=1e-9)

    def test_boundary_direction_is_flagged_not_clamped(self):
        report = fit_splitting("multinomial", "poisson", [[1, 0], [2, 0]])
        assert report.model is None
        assert "boundary" in report.flags
        # the supremum is attainable: both rows sit entirely in category 1
        assert report.loglik == pytest.approx(
            Poisson(1.5).loglik([1, 2]), abs=1e-12
        )

    def test_degenerate_category_raises_for_dirichlet(self):
        with pytest.raises(ValueError, match="degenerate category"):
            fit_splitting("dirichlet-multinomial", "poisson", [[1, 0], [2, 0]])

    def test_no_finite_sum_mle(self):
        # totals 0,10,0,10 are maximally overdispersed for a binomial
        data = [[0, 0], [4, 6], [0, 0], [6, 4]]
        report = fit_splitting("multinomial", "binomial", data)
        assert report.model is None
        assert "no-finite-n" in report.flags
        assert math.isinf(report.bic)

    def test_shifted_fit(self):
        gen = SplittingModel(Multinomial([0.3, 0.7]), Poisson(2.0, shift=1))
        data = gen.sample(np.random.default_rng(3), 4000)
        report = fit_splitting("multinomial", "poisson", data, shift=1)
        assert report.model.sum.shift == 1
        assert report.model.sum.params()["lam"] == pytest.approx(2.0, rel=0.1)
        auto = fit_splitting("multinomial", "poisson", data, shift="auto")
        assert auto.model.sum.shift == 1

    def test_input_validation(self):
        with pytest.raises(ValueError, match="two categories"):
            fit_splitting("multinomial", "poisson", [[1], [2]])
        with pytest.raises(ValueError):
            fit_splitting("multinomial", "poisson", np.zeros((0, 2)))
        with pytest.raises(ValueError, match="no fitting routine"):
            fit_splitting("hypergeometric", "poisson", [[1, 2]])
        with pytest.raises(KeyError):
            fit_splitting("multinomial", "zeta", [[1, 2]])


class TestSelectModel:
    def test_fit_count_is_sum_not_product(self, nb_data):
        before = fit_call_count()
        select_model(
            nb_data,
            ["multinomial", "dirichlet-multinomial"],
            ["poisson", "negative-binomial", "binomial"],
        )
        assert fit_call_count() - before == 5

    def test_ranking_finds_generator(self, nb_data):
        ranked = select_model(
            nb_data,
            ["multinomial", "dirichlet-multinomial"],
            ["poisson", "negative-binomial", "binomial"],
        )
        assert ranked[0].kind == "multinomial"
        assert ranked[0].family == "negative-binomial"
        values = [r.bic for r in ranked]
        assert values == sorted(values)

    def test_single_cell_equals_direct_fit(self, nb_data):
        (only,) = select_model(nb_data[:500], ["multinomial"], ["poisson"])
        direct = fit_splitting("multinomial", "poisson", nb_data[:500])
        assert only.loglik == pytest.approx(direct.loglik, abs=1e-12)
        assert only.bic == pytest.approx(direct.bic, abs=1e-12)
        assert np.allclose(
            only.model.singular.pi, direct.model.singular.pi, atol=1e-15
        )

    def test_cell_score_is_additive(self, nb_data):
        ranked = select_model(
            nb_data[:1000], ["multinomial"], ["poisson", "negative-binomial"]
        )
        n = 1000
        for report in ranked:
            sing_ll = splitting_log_likelihood(
                report.model, nb_data[:1000]
            ) - report.model.sum.loglik(nb_data[:1000].sum(axis=1))
            sum_ll = report.loglik - sing_ll
            k_sing, k_sum = 1, report.n_params - 1
            part_bic = (-2 * sing_ll + k_sing * math.log(n)) + (
                -2 * sum_ll + k_sum * math.log(n)
            )
            assert report.bic == pytest.approx(part_bic, abs=1e-9)

    def test_failures_recorded_not_raised(self, nb_data):
        ranked = select_model(
            nb_data[:200], ["multinomial"], ["logarithmic", "poisson"]
        )
        by_family = {r.family: r for r in ranked}
        failed = by_family["logarithmic"]
        assert failed.model is None
        assert "failed" in failed.flags
        assert math.isinf(failed.bic)
        assert ranked[0].family == "poisson"

    def test_aic_criterion(self, nb_data):
        ranked = select_model(
            nb_data[:500],
            ["multinomial"],
            ["poisson", "negative-binomial"],
            criterion="aic",
        )
        values = [r.aic for r in ranked]
        assert values == sorted(values)

    def test_validation(self, nb_data):
        with pytest.raises(ValueError, match="non-empty"):
            select_model(nb_data, [], ["poisson"])
        with pytest.raises(ValueError, match="non-empty"):
            select_model(nb_data, ["multinomial"], [])
        with pytest.raises(ValueError, match="criterion"):
            select_model(nb_data, ["multinomial"], ["poisson"], criterion="hqc")


class TestMixtureModel:
    def build(self):
        return MixtureModel(
            [0.4, 0.6],
            [
                SplittingModel(Multinomial([0.7, 0.3]), Poisson(2.0)),
                SplittingModel(Multinomial([0.2, 0.8]), Poisson(9.0)),
            ],
        )

    def test_log_pmf_mixes(self):
        mix = self.build()
        y = np.array([3, 1])
        parts = [c.joint_pmf(y) for c in mix.components]
        want = 0.4 * parts[0] + 0.6 * parts[1]
        assert mix.joint_pmf(y) == pytest.approx(want, rel=1e-12)

    def test_responsibilities_sum_to_one(self):
        mix = self.build()
        resp = mix.responsibilities([[3, 1], [0, 12], [1, 1]])
        assert resp.shape == (3, 2)
        assert np.allclose(resp.sum(axis=1), 1.0)

    def test_sampling(self):
        mix = self.build()
        draws = mix.sample(np.random.default_rng(0), 4000)
        assert draws.shape == (4000, 2)
        again = mix.sample(np.random.default_rng(0), 4000)
        assert np.array_equal(draws, again)
        one = mix.sample(np.random.default_rng(1))
        assert one.shape == (2,)

    def test_validation(self):
        comp = SplittingModel(Multinomial([0.5, 0.5]), Poisson(1.0))
        with pytest.raises(ValueError, match="sum to one"):
            MixtureModel([0.5, 0.4], [comp, comp])
        with pytest.raises(ValueError, match="one weight per"):
            MixtureModel([1.0], [comp, comp])
        other = SplittingModel(Multinomial([0.2, 0.3, 0.5]), Poisson(1.0))
        with pytest.raises(ValueError, match="dimension"):
            MixtureModel([0.5, 0.5], [comp, other])


class TestFitMixture:
    def test_single_component_equals_direct_fit(self):
        gen = SplittingModel(Multinomial([0.2, 0.8]), NegativeBinomial(3.0, 0.4))
        data = gen.sample(np.random.default_rng(4), 2000)
        mix, report = fit_mixture(
            data, 1, families="negative-binomial", n_restarts=1
        )
        direct = fit_splitting("multinomial", "negative-binomial", data)
        assert np.allclose(
            mix.components[0].singular.pi, direct.model.singular.pi, atol=1e-10
        )
        got = mix.components[0].sum.params()
        want = direct.model.sum.params()
        assert got["r"] == pytest.approx(want["r"], abs=1e-8)
        assert got["p"] == pytest.approx(want["p"], abs=1e-10)
        assert report.loglik == pytest.approx(direct.loglik, abs=1e-6)
        assert mix.weights[0] == 1.0

    def test_two_component_recovery(self, two_groups):
        data, labels = two_groups
        mix, report = fit_mixture(
            data, 2, families="negative-binomial", shift=1,
            n_restarts=2, seed=0,
        )
        assert report.converged
        assert monotone(report.loglik_path, scale=report.loglik)
        order = np.argsort([c.sum.mean() for c in mix.components])
        weights = mix.weights[order]
        assert abs(weights[0] - 0.4) < 0.05
        resp = mix.responsibilities(data)
        assigned = np.argmax(resp, axis=1) == order[1]
        accuracy = max(
            (assigned == labels).mean(), (assigned == ~labels).mean()
        )
        assert accuracy > 0.9
        means = sorted(c.sum.mean() for c in mix.components)
        assert means[0] == pytest.approx(3.0, rel=0.25)
        assert means[1] == pytest.approx(17.2, rel=0.25)

    def test_bic_prefers_true_component_count(self, two_groups):
        data, _ = two_groups
        bics = {}
        for k in (1, 2, 3):
            _, report = fit_mixture(
                data[:1500], k, families="negative-binomial", shift=1,
                n_restarts=1, seed=3,
            )
            bics[k] = report.bic
        assert min(bics, key=bics.get) == 2

    def test_family_selection_inside_em(self, two_groups):
        data, _ = two_groups
        mix, report = fit_mixture(
            data, 2, families=["poisson", "negative-binomial"], shift=1,
            n_restarts=1, seed=0,
        )
        fams = {type(c.sum).__name__ for c in mix.components}
        assert fams == {"NegativeBinomial"}

    def test_seed_determinism(self, two_groups):
        data, _ = two_groups
        a, _ = fit_mixture(
            data[:800], 2, families="negative-binomial", shift=1,
            n_restarts=2, seed=5,
        )
        b, _ = fit_mixture(
            data[:800], 2, families="negative-binomial", shift=1,
            n_restarts=2, seed=5,
        )
        assert np.array_equal(a.weights, b.weights)
        for ca, cb in zip(a.components, b.components):
            assert repr(ca) == repr(cb)

    def test_mixture_report_counts_parameters(self, two_groups):
        data, _ = two_groups
        _, report = fit_mixture(
            data[:800], 2, families="negative-binomial", shift=1, n_restarts=1
        )
        # one mixing weight plus per component one direction and two sum params
        assert report.n_params == 7
        assert report.bic == pytest.approx(
            -2.0 * report.loglik + 7.0 * math.log(800.0)
        )

    def test_validation(self):
        data = [[1, 2], [2, 1], [0, 3]]
        with pytest.raises(ValueError, match="at least 1"):
            fit_mixture(data, 0)
        with pytest.raises(ValueError, match="fewer rows"):
            fit_mixture(data, 4)
        with pytest.raises(ValueError, match="one family list per"):
            fit_mixture(data, 2, families=[["poisson"]])
        with pytest.raises(ValueError, match="at least one allowed"):
            fit_mixture(data, 2, families=[["poisson"], []])
        with pytest.raises(ValueError, match="one shift per"):
            fit_mixture(data, 2, families="poisson", shift=[1])
