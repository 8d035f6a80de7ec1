"""Splitting regressions: a multinomial-logit split compounded with a count
regression for the total, on shared covariates.

The log-likelihood decomposes exactly as in the fit-free case: a
conditional multinomial-logit term for the rows given their totals plus a
univariate count-regression term for the totals.  Both parts are fitted by
Newton ascent with step halving; the negative binomial profiles its
dispersion scalar on top of the inner Newton.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit, gammaln, logsumexp

from .fitting import FitReport
from .simplex import _as_count_matrix

SUM_FAMILIES = ("poisson", "binomial", "negative-binomial")
SEPARATION_BOUND = 30.0


class RegressionSpec:
    """Fitted (or hand-built) coefficients of a splitting regression.

    ``singular_coef`` has one row per non-reference category (the last
    category is the softmax reference) and one column per design column,
    intercept first.  ``sum_coef`` is the count-regression coefficient
    vector on the same design; ``sum_aux`` is n for a binomial total and
    the dispersion r for a negative binomial one.
    """

    def __init__(self, singular_coef, family, sum_coef, sum_aux=None):
        self.singular_coef = np.atleast_2d(np.asarray(singular_coef, dtype=float))
        if family not in SUM_FAMILIES:
            raise KeyError(f"unknown sum regression family {family!r}")
        self.family = family
        self.sum_coef = np.asarray(sum_coef, dtype=float).ravel()
        if self.singular_coef.shape[1] != self.sum_coef.size:
            raise ValueError("singular and sum coefficients disagree on design width")
        if family == "poisson":
            if sum_aux is not None:
                raise ValueError("poisson regression has no auxiliary parameter")
            self.sum_aux = None
        elif family == "binomial":
            n = int(sum_aux) if sum_aux is not None else -1
            if n < 1:
                raise ValueError("binomial regression needs the trial count n")
            self.sum_aux = n
        else:
            r = float(sum_aux) if sum_aux is not None else 0.0
            if not r > 0:
                raise ValueError("negative binomial regression needs dispersion r > 0")
            self.sum_aux = r

    @property
    def dim(self):
        return self.singular_coef.shape[0] + 1

    @property
    def n_covariates(self):
        return self.sum_coef.size - 1

    def __repr__(self):
        return (
            f"RegressionSpec(J={self.dim}, family={self.family!r}, "
            f"Q={self.n_covariates}, aux={self.sum_aux})"
        )

    def pi(self, x):
        """Category probabilities per design row, via softmax with the last
        category as reference."""
        design = _design_matrix(x, self.sum_coef.size)
        eta = design @ self.singular_coef.T
        full = np.column_stack([eta, np.zeros(eta.shape[0])])
        return np.exp(full - logsumexp(full, axis=1)[:, None])

    def sum_mean(self, x):
        design = _design_matrix(x, self.sum_coef.size)
        eta = design @ self.sum_coef
        if self.family == "binomial":
            return self.sum_aux * expit(eta)
        return np.exp(eta)

    def params(self):
        out = {
            "singular_coef": self.singular_coef.tolist(),
            "family": self.family,
            "sum_coef": self.sum_coef.tolist(),
        }
        if self.sum_aux is not None:
            out["sum_aux"] = self.sum_aux
        return out


def _design_matrix(x, width):
    """Covariate rows with a leading intercept column."""
    if x is None:
        x = np.zeros((0, 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("covariates must form a matrix of rows")
    design = np.column_stack([np.ones(x.shape[0]), x])
    if design.shape[1] != width:
        raise ValueError(
            f"design has {design.shape[1]} columns, coefficients expect {width}"
        )
    return design


def _check_xy(x, y):
    rows = _as_count_matrix(y)
    if rows.shape[1] < 2:
        raise ValueError("need at least two categories")
    if x is None:
        x = np.zeros((rows.shape[0], 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != rows.shape[0]:
        raise ValueError("covariates and counts disagree on the number of rows")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariates must be finite")
    return x, rows


def _singular_log_lik(pi, rows, ns):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = rows * np.log(pi)
    terms[rows == 0.0] = 0.0
    return float(
        np.sum(gammaln(ns + 1.0) - gammaln(rows + 1.0).sum(axis=1)
               + terms.sum(axis=1))
    )


def _sum_log_lik(family, aux, mu_eta, ns):
    """Count-regression log-likelihood from the linear predictor."""
    if family == "poisson":
        lam = np.exp(mu_eta)
        return float(np.sum(-lam + ns * mu_eta - gammaln(ns + 1.0)))
    if family == "binomial":
        n = aux
        if np.any(ns > n):
            return -math.inf
        p = expit(mu_eta)
        return float(
            np.sum(
                gammaln(n + 1.0) - gammaln(ns + 1.0) - gammaln(n - ns + 1.0)
                + ns * np.log(p) + (n - ns) * np.log1p(-p)
            )
        )
    r = aux
    mu = np.exp(mu_eta)
    return float(
        np.sum(
            gammaln(ns + r) - gammaln(r) - gammaln(ns + 1.0)
            + r * np.log(r / (r + mu)) + ns * np.log(mu / (r + mu))
        )
    )


def regression_log_lik(spec, x, y):
    """Joint log-likelihood of count rows under the regression."""
    x, rows = _check_xy(x, y)
    if rows.shape[1] != spec.dim:
        raise ValueError(f"y has {rows.shape[1]} categories, spec has {spec.dim}")
    design = _design_matrix(x, spec.sum_coef.size)
    ns = rows.sum(axis=1)
    sing = _singular_log_lik(spec.pi(x), rows, ns)
    total = _sum_log_lik(spec.family, spec.sum_aux, design @ spec.sum_coef, ns)
    return sing + total


def _sum_score_weight(family, aux, mu_eta, ns):
    """(score residual, information weight) per row, in the linear predictor."""
    if family == "poisson":
        lam = np.exp(mu_eta)
        return ns - lam, lam
    if family == "binomial":
        p = expit(mu_eta)
        return ns - aux * p, aux * p * (1.0 - p)
    r = aux
    mu = np.exp(mu_eta)
    return r * (ns - mu) / (r + mu), r * mu * (r + ns) / (r + mu) ** 2


def regression_gradient(spec, x, y):
    """Exact gradient of regression_log_lik in the flattened coefficients
    (singular rows first, then the sum vector)."""
    x, rows = _check_xy(x, y)
    if rows.shape[1] != spec.dim:
        raise ValueError(f"y has {rows.shape[1]} categories, spec has {spec.dim}")
    design = _design_matrix(x, spec.sum_coef.size)
    ns = rows.sum(axis=1)
    pi = spec.pi(x)
    lead = rows[:, :-1] - ns[:, None] * pi[:, :-1]
    sing_grad = lead.T @ design
    score, _ = _sum_score_weight(spec.family, spec.sum_aux, design @ spec.sum_coef, ns)
    return np.concatenate([sing_grad.ravel(), design.T @ score])


def _newton_ascent(ll_fn, grad_fn, info_fn, x0, max_iter, tol):
    """Maximize with Newton steps and step halving; returns the path too."""
    x = np.asarray(x0, dtype=float)
    ll = ll_fn(x)
    path = [ll]
    flags = set()
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        grad = grad_fn(x)
        if np.max(np.abs(grad)) < tol:
            converged = True
            iterations -= 1
            break
        try:
            step = np.linalg.solve(info_fn(x), grad)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"singular information matrix: {exc}") from exc
        t = 1.0
        while True:
            cand = x + t * step
            cll = ll_fn(cand)
            if cll >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            t *= 0.5
            if t < 1e-10:
                cand, cll = x, ll
                break
        x, ll = cand, cll
        path.append(ll)
        if np.max(np.abs(x)) > SEPARATION_BOUND:
            flags.add("separation")
            break
    return x, ll, path, converged, iterations, flags


def _fit_singular_logit(design, rows, ns, max_iter, tol):
    n_rows, j = rows.shape
    j1, q = j - 1, design.shape[1]
    lead_counts = rows[:, :-1]

    def unpack(flat):
        return flat.reshape(j1, q)

    def pi_of(flat):
        eta = design @ unpack(flat).T
        full = np.column_stack([eta, np.zeros(n_rows)])
        return np.exp(full - logsumexp(full, axis=1)[:, None])

    def ll_fn(flat):
        return _singular_log_lik(pi_of(flat), rows, ns)

    def grad_fn(flat):
        lead = lead_counts - ns[:, None] * pi_of(flat)[:, :-1]
        return (lead.T @ design).ravel()

    def info_fn(flat):
        p1 = pi_of(flat)[:, :-1]
        m = -np.einsum("i,ij,ik->ijk", ns, p1, p1)
        m[:, np.arange(j1), np.arange(j1)] += ns[:, None] * p1
        h = np.einsum("ijk,iq,ip->jqkp", m, design, design)
        return h.reshape(j1 * q, j1 * q)

    flat, ll, path, converged, iters, flags = _newton_ascent(
        ll_fn, grad_fn, info_fn, np.zeros(j1 * q), max_iter, tol
    )
    return unpack(flat), ll, path, converged, iters, flags


def _fit_sum_curve(family, aux, design, ns, max_iter, tol, beta0=None):
    def ll_fn(beta):
        return _sum_log_lik(family, aux, design @ beta, ns)

    def grad_fn(beta):
        score, _ = _sum_score_weight(family, aux, design @ beta, ns)
        return design.T @ score

    def info_fn(beta):
        _, weight = _sum_score_weight(family, aux, design @ beta, ns)
        return design.T @ (weight[:, None] * design)

    if beta0 is None:
        beta0 = np.zeros(design.shape[1])
        mean = max(float(ns.mean()), 1e-6)
        if family == "binomial":
            frac = min(max(mean / aux, 1e-6), 1.0 - 1e-6)
            beta0[0] = math.log(frac / (1.0 - frac))
        else:
            beta0[0] = math.log(mean)
    return _newton_ascent(ll_fn, grad_fn, info_fn, beta0, max_iter, tol)


def fit_regression(
    x,
    y,
    family="poisson",
    n=None,
    max_iter=200,
    tol=1e-8,
):
    """Decomposed MLE of a splitting regression on covariates ``x``.

    The multinomial-logit split is fitted on the rows given their totals
    and the count regression on the totals; for a binomial total the trial
    count ``n`` must be given, and a negative binomial total profiles its
    dispersion over an inner Newton fit.  Returns (RegressionSpec,
    FitReport).
    """
    x, rows = _check_xy(x, y)
    design = np.column_stack([np.ones(rows.shape[0]), x])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise ValueError("design matrix is rank deficient")
    ns = rows.sum(axis=1)
    if family not in SUM_FAMILIES:
        raise KeyError(f"unknown sum regression family {family!r}")

    coef, sing_ll, sing_path, sing_conv, sing_iters, flags = _fit_singular_logit(
        design, rows, ns, max_iter, tol
    )

    if family == "binomial":
        if n is None:
            raise ValueError("binomial regression needs the trial count n")
        aux = int(n)
        if np.any(ns > aux):
            raise ValueError("a total exceeds the binomial trial count")
        beta, sum_ll, sum_path, sum_conv, sum_iters, sum_flags = _fit_sum_curve(
            family, aux, design, ns, max_iter, tol
        )
    elif family == "poisson":
        aux = None
        beta, sum_ll, sum_path, sum_conv, sum_iters, sum_flags = _fit_sum_curve(
            family, None, design, ns, max_iter, tol
        )
    else:
        state = {}

        def profile(log_r):
            r = math.exp(log_r)
            beta, ll, path, conv, iters, fl = _fit_sum_curve(
                family, r, design, ns, max_iter, tol,
                beta0=state.get("beta"),
            )
            state["beta"] = beta
            return r, beta, ll, path, conv, iters, fl

        res = minimize_scalar(
            lambda u: -profile(u)[2], bounds=(-7.0, 12.0), method="bounded",
            options={"xatol": 1e-10},
        )
        aux, beta, sum_ll, sum_path, sum_conv, sum_iters, sum_flags = profile(res.x)
        if abs(res.x - 12.0) < 1e-6:
            sum_flags = set(sum_flags) | {"dispersion-at-bound"}

    spec = RegressionSpec(coef, family, beta, aux)
    loglik = sing_ll + sum_ll
    k = coef.size + beta.size + (1 if family == "negative-binomial" else 0)
    n_rows = rows.shape[0]
    # one running total per ascent step, singular phase then sum phase
    path = [v + sum_path[0] for v in sing_path]
    path += [sing_ll + v for v in sum_path[1:]]
    report = FitReport(
        model=spec,
        loglik=loglik,
        n_params=k,
        bic=-2.0 * loglik + k * math.log(n_rows),
        converged=sing_conv and sum_conv,
        iterations=sing_iters + sum_iters,
        flags=set(flags) | set(sum_flags),
        kind="multinomial-logit",
        family=family,
        sample_size=float(n_rows),
        loglik_path=path,
    )
    return spec, report
