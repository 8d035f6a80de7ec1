"""Scikit-learn style wrappers around the fitting routines.

The underlying API works with distribution objects and fit reports; these
estimators re-expose it through fit/score_samples/sample and get_params,
so the models drop into sklearn pipelines, clones, and model selection.
Count rows play the role of X.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .fitting import fit_mixture, fit_splitting, select_model
from .regression import fit_regression, regression_log_lik
from .validation import (
    check_count_matrix,
    check_covariates,
    check_is_fitted,
    check_random_state,
)


class _ScoringMixin:
    """Per-row log-likelihood scoring plus information criteria on data."""

    def score_samples(self, X):
        check_is_fitted(self)
        rows = check_count_matrix(X)
        return np.asarray(self.model_.joint_log_pmf(rows), dtype=float)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def bic(self, X):
        rows = check_count_matrix(X)
        total = float(np.sum(self.score_samples(rows)))
        return -2.0 * total + self._n_parameters() * math.log(rows.shape[0])

    def aic(self, X):
        total = float(np.sum(self.score_samples(X)))
        return -2.0 * total + 2.0 * self._n_parameters()

    def _n_parameters(self):
        check_is_fitted(self, "report_")
        return self.report_.n_params


class SplittingEstimator(_ScoringMixin, BaseEstimator):
    """Maximum-likelihood fit of one splitting model.

    ``kind`` names the singular family splitting each total and ``family``
    the distribution of the totals.  The fit decomposes into the two parts;
    the full report lands in ``report_`` and the distribution in ``model_``.
    A fit whose maximum lies outside the parameter space (for example a
    multinomial direction with an empty category) raises instead of
    returning an unusable estimator.
    """

    def __init__(
        self,
        kind="multinomial",
        family="poisson",
        shift=0,
        fixed=None,
        constrained=False,
    ):
        self.kind = kind
        self.family = family
        self.shift = shift
        self.fixed = fixed
        self.constrained = constrained

    def fit(self, X, y=None, sample_weight=None):
        rows = check_count_matrix(X)
        report = fit_splitting(
            self.kind,
            self.family,
            rows,
            weights=sample_weight,
            shift=self.shift,
            fixed=self.fixed,
            constrained=self.constrained,
        )
        if report.model is None:
            raise ValueError(
                f"fit has no usable maximum (flags: {sorted(report.flags)})"
            )
        self.model_ = report.model
        self.report_ = report
        self.n_features_in_ = rows.shape[1]
        return self

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self)
        rng = check_random_state(random_state)
        return self.model_.sample(rng, int(n_samples))


class SplittingSelector(_ScoringMixin, BaseEstimator):
    """Grid search over singular kinds and sum families by BIC or AIC.

    Every kind/family cell shares the decomposed part fits, so the grid
    costs one fit per kind plus one per family.  ``results_`` keeps the
    ranked reports, ``model_`` the winner.
    """

    def __init__(
        self,
        kinds=("multinomial", "dirichlet-multinomial"),
        families=("poisson", "negative-binomial"),
        criterion="bic",
        shift=0,
    ):
        self.kinds = kinds
        self.families = families
        self.criterion = criterion
        self.shift = shift

    def fit(self, X, y=None, sample_weight=None):
        rows = check_count_matrix(X)
        self.results_ = select_model(
            rows,
            kinds=list(self.kinds),
            families=list(self.families),
            criterion=self.criterion,
            weights=sample_weight,
            shift=self.shift,
        )
        best = self.results_[0]
        if best.model is None:
            raise ValueError("every candidate fit failed or was degenerate")
        self.best_report_ = best
        self.report_ = best
        self.model_ = best.model
        self.best_kind_ = best.kind
        self.best_family_ = best.family
        self.n_features_in_ = rows.shape[1]
        return self

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self)
        rng = check_random_state(random_state)
        return self.model_.sample(rng, int(n_samples))


class SplittingMixtureEstimator(_ScoringMixin, BaseEstimator):
    """EM-fitted finite mixture of splitting models.

    Mirrors the Gaussian mixture surface: predict gives the most probable
    component, predict_proba the responsibilities, sample returns rows
    together with their component labels.
    """

    def __init__(
        self,
        n_components=1,
        kind="multinomial",
        families="poisson",
        shift=0,
        n_restarts=5,
        max_iter=1000,
        tol=1e-8,
        random_state=0,
    ):
        self.n_components = n_components
        self.kind = kind
        self.families = families
        self.shift = shift
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y=None):
        rows = check_count_matrix(X)
        model, report = fit_mixture(
            rows,
            self.n_components,
            kind=self.kind,
            families=self.families,
            shift=self.shift,
            seed=self.random_state,
            n_restarts=self.n_restarts,
            max_iter=self.max_iter,
            tol=self.tol,
        )
        self.model_ = model
        self.report_ = report
        self.weights_ = model.weights
        self.converged_ = report.converged
        self.n_iter_ = report.iterations
        self.n_features_in_ = rows.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        rows = check_count_matrix(X)
        return self.model_.responsibilities(rows)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self)
        rng = check_random_state(random_state)
        n_samples = int(n_samples)
        labels = rng.choice(
            self.model_.n_components, size=n_samples, p=self.model_.weights
        )
        rows = np.zeros((n_samples, self.model_.dim), dtype=np.int64)
        for c, comp in enumerate(self.model_.components):
            (idx,) = np.nonzero(labels == c)
            if idx.size:
                rows[idx] = comp.sample(rng, idx.size)
        return rows, labels


class SplittingRegressor(BaseEstimator):
    """Splitting regression on covariates: multinomial-logit split of a
    count-regression total.  fit takes covariate rows X and count rows y;
    predict returns the expected count per category."""

    def __init__(self, family="poisson", n=None, max_iter=200, tol=1e-8):
        self.family = family
        self.n = n
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        rows = check_count_matrix(y)
        x = check_covariates(X, rows.shape[0])
        self.spec_, self.report_ = fit_regression(
            x,
            rows,
            family=self.family,
            n=self.n,
            max_iter=self.max_iter,
            tol=self.tol,
        )
        self.n_features_in_ = x.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "spec_")
        x = np.zeros((1, 0)) if X is None else np.asarray(X, dtype=float)
        return self.spec_.sum_mean(x)[:, None] * self.spec_.pi(x)

    def score(self, X, y):
        check_is_fitted(self, "spec_")
        rows = check_count_matrix(y)
        x = check_covariates(X, rows.shape[0])
        return regression_log_lik(self.spec_, x, rows) / rows.shape[0]
