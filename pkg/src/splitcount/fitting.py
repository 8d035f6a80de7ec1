"""Likelihood fitting for splitting models.

The joint log-likelihood of a splitting model separates into a singular
part, which only sees the rows given their totals, and a sum part, which
only sees the totals.  Everything here leans on that split: fit_splitting
runs the two maximizations independently, select_model scores a C x L
model grid with only C + L fits, and fit_mixture reuses the same weighted
fits as EM M-steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp
from sklearn.cluster import KMeans

from .series import DEFAULT_CONTROL, NonConvergenceError, SeriesControl
from .compound import SplittingModel
from .simplex import (
    DirichletMultinomial,
    Multinomial,
    _as_count_matrix,
    _as_weights,
    dirichlet_multinomial_mle,
    multinomial_mle,
)
from .sums import FAMILIES, sum_fit

FITTABLE_KINDS = ("multinomial", "dirichlet-multinomial")

# families whose canonical pairing ties one sum parameter to |alpha|
CANONICAL_TIES = {
    "negative-binomial": "r",
    "beta-negative-binomial": "r",
    "beta-binomial": "a",
    "beta-poisson": "a",
}

_fit_calls = 0


def fit_call_count():
    """Number of elementary (singular-part or sum-part) fits performed."""
    return _fit_calls


@dataclass
class FitReport:
    """Outcome of one maximum-likelihood fit.

    ``model`` is None when no maximum exists in the family interior (see
    ``flags``) or when the fit failed outright.  ``bic`` uses the weighted
    sample size, so responsibility-weighted fits score consistently.
    """

    model: object
    loglik: float
    n_params: int
    bic: float
    converged: bool
    iterations: int
    flags: set
    kind: str = None
    family: str = None
    sample_size: float = 0.0
    loglik_path: list = field(default_factory=list)

    @property
    def aic(self):
        return 2.0 * self.n_params - 2.0 * self.loglik


def splitting_log_likelihood(model, data, weights=None):
    """Sum of joint log-masses of the rows, optionally weighted."""
    rows = _as_count_matrix(data)
    w = _as_weights(weights, rows.shape[0])
    live = w > 0.0
    return float(w[live] @ model.joint_log_pmf(rows)[live])


def _multinomial_loglik_at(pi, rows, ns, w):
    # supports boundary directions: 0 * log 0 counts as 0, a positive count
    # on a zero-probability category gives -inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = rows * np.log(pi)[None, :]
    terms[rows == 0.0] = 0.0
    parts = gammaln(ns + 1.0) - gammaln(rows + 1.0).sum(axis=1) + terms.sum(axis=1)
    # rows with zero weight contribute nothing even at -inf log-mass
    live = w > 0.0
    return float(w[live] @ parts[live])


def _fit_singular(kind, rows, w, fixed_total=None):
    """One singular-part fit: (model-or-None, loglik, n_free_params, info)."""
    global _fit_calls
    _fit_calls += 1
    ns = rows.sum(axis=1)
    j = rows.shape[1]
    if kind == "multinomial":
        pi, info = multinomial_mle(rows, w)
        if "boundary" in info["flags"]:
            # a never-observed category puts the optimum on the boundary of
            # the simplex, outside what Multinomial represents; report the
            # supremum value without clamping the zero away
            return None, _multinomial_loglik_at(pi, rows, ns, w), j - 1, info
        model = Multinomial(pi)
        return model, float(w @ model.log_pmf(ns, rows)), j - 1, info
    if kind == "dirichlet-multinomial":
        alpha, info = dirichlet_multinomial_mle(rows, w, fixed_total=fixed_total)
        model = DirichletMultinomial(alpha)
        k = j - 1 if fixed_total is not None else j
        return model, float(w @ model.log_pmf(ns, rows)), k, info
    raise ValueError(f"no fitting routine for singular kind {kind!r}")


def _fit_sum(family, ns, w, fixed, shift, ctl):
    """One sum-part fit: (model-or-None, loglik, n_free_params, info)."""
    global _fit_calls
    _fit_calls += 1
    model, info = sum_fit(family, ns, weights=w, fixed=fixed, shift=shift, ctl=ctl)
    k = FAMILIES[family].n_params - len(fixed or {})
    if model is None:
        return None, math.nan, k, info
    return model, model.loglik(ns, w), k, info


def _assemble(kind, family, singular, sum_model, loglik, k, w_total, infos):
    converged = all(i.get("converged", True) for i in infos)
    iterations = sum(i.get("iterations", 0) for i in infos)
    flags = set().union(*(i.get("flags", set()) for i in infos))
    model = None
    if singular is not None and sum_model is not None:
        model = SplittingModel(singular, sum_model)
    if math.isnan(loglik):
        bic = math.inf
    else:
        bic = -2.0 * loglik + k * math.log(w_total)
    return FitReport(
        model=model,
        loglik=loglik,
        n_params=k,
        bic=bic,
        converged=converged,
        iterations=iterations,
        flags=flags,
        kind=kind,
        family=family,
        sample_size=w_total,
    )


def fit_splitting(
    kind,
    family,
    data,
    weights=None,
    shift=0,
    fixed=None,
    constrained=False,
    ctl: SeriesControl = DEFAULT_CONTROL,
):
    """Decomposed MLE of a splitting model on count rows.

    The singular part is fitted on the rows given their totals and the sum
    part on the totals alone; the reported log-likelihood is their sum,
    which equals the joint log-likelihood at the fitted parameters.

    ``constrained=True`` enforces the canonical pairing for a Dirichlet
    multinomial singular: the sum parameter named in CANONICAL_TIES is
    fitted freely on the totals, then |alpha| is pinned to it and only the
    direction of alpha is estimated.
    """
    rows = _as_count_matrix(data)
    if rows.shape[1] < 2:
        raise ValueError("need at least two categories")
    w = _as_weights(weights, rows.shape[0])
    ns = rows.sum(axis=1)
    w_total = float(w.sum())

    if constrained:
        if kind != "dirichlet-multinomial":
            raise ValueError(
                "canonical constraints tie a dirichlet-multinomial singular "
                "to its sum; use constrained=False for other kinds"
            )
        tie = CANONICAL_TIES.get(family)
        if tie is None:
            raise ValueError(
                f"no canonical constraint links dirichlet-multinomial to {family!r}"
            )
        sum_model, sum_ll, k_sum, sum_info = _fit_sum(family, ns, w, fixed, shift, ctl)
        if sum_model is None:
            return _assemble(
                kind, family, None, None, math.nan,
                (rows.shape[1] - 1) + k_sum, w_total, [sum_info],
            )
        singular, sing_ll, k_sing, sing_info = _fit_singular(
            kind, rows, w, fixed_total=sum_model.params()[tie]
        )
        return _assemble(
            kind, family, singular, sum_model, sing_ll + sum_ll,
            k_sing + k_sum, w_total, [sing_info, sum_info],
        )

    singular, sing_ll, k_sing, sing_info = _fit_singular(kind, rows, w)
    sum_model, sum_ll, k_sum, sum_info = _fit_sum(family, ns, w, fixed, shift, ctl)
    loglik = math.nan if math.isnan(sum_ll) else sing_ll + sum_ll
    return _assemble(
        kind, family, singular, sum_model, loglik,
        k_sing + k_sum, w_total, [sing_info, sum_info],
    )


def select_model(
    data,
    kinds,
    families,
    criterion="bic",
    weights=None,
    shift=0,
    ctl: SeriesControl = DEFAULT_CONTROL,
):
    """Score every (singular kind) x (sum family) pair with C + L fits.

    Each singular kind is fitted once on the rows and each sum family once
    on the totals; grid cells just add the two parts, so their BIC is the
    sum of the part BICs.  Returns reports ranked by the criterion
    (ascending), ties broken by fewer parameters, then grid order.  A part
    that fails marks its cells as failed instead of raising.
    """
    if criterion not in ("bic", "aic"):
        raise ValueError("criterion must be 'bic' or 'aic'")
    kinds = list(kinds)
    families = list(families)
    if not kinds or not families:
        raise ValueError("kinds and families must be non-empty")
    rows = _as_count_matrix(data)
    if rows.shape[1] < 2:
        raise ValueError("need at least two categories")
    w = _as_weights(weights, rows.shape[0])
    ns = rows.sum(axis=1)
    w_total = float(w.sum())

    sing_parts = {}
    for kind in kinds:
        try:
            sing_parts[kind] = _fit_singular(kind, rows, w)
        except (ValueError, NonConvergenceError) as exc:
            sing_parts[kind] = exc
    sum_parts = {}
    for family in families:
        try:
            sum_parts[family] = _fit_sum(family, ns, w, None, shift, ctl)
        except (KeyError, ValueError, NonConvergenceError) as exc:
            sum_parts[family] = exc

    reports = []
    for kind in kinds:
        for family in families:
            sing, tot = sing_parts[kind], sum_parts[family]
            if isinstance(sing, Exception) or isinstance(tot, Exception):
                err = sing if isinstance(sing, Exception) else tot
                report = FitReport(
                    model=None, loglik=math.nan, n_params=0, bic=math.inf,
                    converged=False, iterations=0,
                    flags={"failed", f"error: {err}"},
                    kind=kind, family=family, sample_size=w_total,
                )
            else:
                singular, sing_ll, k_sing, sing_info = sing
                sum_model, sum_ll, k_sum, sum_info = tot
                loglik = math.nan if math.isnan(sum_ll) else sing_ll + sum_ll
                report = _assemble(
                    kind, family, singular, sum_model, loglik,
                    k_sing + k_sum, w_total, [sing_info, sum_info],
                )
            reports.append(report)

    def score(report):
        value = report.bic if criterion == "bic" else report.aic
        return value if math.isfinite(value) else math.inf

    order = sorted(
        range(len(reports)), key=lambda i: (score(reports[i]), reports[i].n_params, i)
    )
    return [reports[i] for i in order]


# -- mixtures ----------------------------------------------------------------


class MixtureModel:
    """Finite mixture of splitting models with positive weights."""

    def __init__(self, weights, components):
        w = np.asarray(weights, dtype=float)
        components = list(components)
        if w.ndim != 1 or w.size != len(components) or w.size == 0:
            raise ValueError("need one weight per component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to one")
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise ValueError("components must share one dimension")
        self.weights = w
        self.components = components

    @property
    def n_components(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim

    def __repr__(self):
        inner = ", ".join(
            f"{w:.3f}: {c!r}" for w, c in zip(self.weights, self.components)
        )
        return f"MixtureModel({inner})"

    def _component_log_pmf(self, rows):
        return np.column_stack(
            [np.log(w) + c.joint_log_pmf(rows) for w, c in
             zip(self.weights, self.components)]
        )

    def joint_log_pmf(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 1
        rows = np.atleast_2d(y)
        out = logsumexp(self._component_log_pmf(rows), axis=1)
        return float(out[0]) if scalar else out

    def joint_pmf(self, y):
        return np.exp(self.joint_log_pmf(y))

    def responsibilities(self, y):
        """Posterior component probabilities for each row."""
        rows = np.atleast_2d(np.asarray(y, dtype=float))
        logs = self._component_log_pmf(rows)
        return np.exp(logs - logsumexp(logs, axis=1)[:, None])

    def sample(self, rng, count=None):
        size = 1 if count is None else int(count)
        picks = rng.choice(self.n_components, size=size, p=self.weights)
        draws = np.zeros((size, self.dim), dtype=np.int64)
        for c, comp in enumerate(self.components):
            (idx,) = np.nonzero(picks == c)
            if idx.size:
                draws[idx] = comp.sample(rng, idx.size)
        return draws[0] if count is None else draws


def _component_specs(n_components, families, shift):
    if isinstance(families, str):
        families = [families]
    families = list(families)
    if families and isinstance(families[0], str):
        per_component = [list(families)] * n_components
    else:
        per_component = [list(f) for f in families]
    if len(per_component) != n_components:
        raise ValueError("need one family list per component")
    if any(not f for f in per_component):
        raise ValueError("every component needs at least one allowed family")
    if np.ndim(shift) == 0:
        shifts = [shift] * n_components
    else:
        shifts = list(shift)
        if len(shifts) != n_components:
            raise ValueError("need one shift per component")
    return per_component, shifts


def _mixture_m_step(kind, family, rows, resp_c, shift, ctl):
    report = fit_splitting(
        kind, family, rows, weights=resp_c, shift=shift, ctl=ctl
    )
    if report.model is None:
        raise ValueError(
            f"component M-step failed for {family}: {sorted(report.flags)}"
        )
    return report


def _select_component_family(kind, allowed, rows, resp_c, shift, ctl):
    best = None
    for family in allowed:
        try:
            report = fit_splitting(
                kind, family, rows, weights=resp_c, shift=shift, ctl=ctl
            )
        except (ValueError, NonConvergenceError):
            continue
        if report.model is None:
            continue
        if best is None or report.bic < best[1].bic:
            best = (family, report)
    if best is None:
        raise ValueError("no allowed sum family fits this component")
    return best


def _run_em(kind, rows, resp, per_component, shifts, max_iter, tol, ctl):
    n, k = resp.shape
    fams = [allowed[0] for allowed in per_component]
    reports = [None] * k
    comps = [None] * k
    mix_w = None
    path = []
    prev = None
    last_ll = -math.inf
    total_iters = 0
    converged = False

    for _ in range(max_iter):
        total_iters += 1
        # M-step: weights then responsibility-weighted component fits
        mix_w = resp.sum(axis=0) / n
        if np.any(mix_w < 1.0 / (10.0 * n)):
            raise ValueError("degenerate component: weight below 1/(10 n)")
        for c in range(k):
            reports[c] = _mixture_m_step(
                kind, fams[c], rows, resp[:, c], shifts[c], ctl
            )
            comps[c] = reports[c].model
        # E-step
        logs = np.column_stack(
            [np.log(mix_w[c]) + comps[c].joint_log_pmf(rows) for c in range(k)]
        )
        lse = logsumexp(logs, axis=1)
        ll = float(lse.sum())
        resp = np.exp(logs - lse[:, None])
        # slack covers loglik evaluation noise, which scales with |ll|
        slack = 1e-12 * (1.0 + abs(ll)) + 1e-9
        assert prev is None or ll >= prev - slack, (
            f"EM log-likelihood decreased: {prev} -> {ll}"
        )
        path.append(ll)
        last_ll = ll
        if prev is not None and ll - prev < tol:
            # converged for the current family assignment; re-select families
            # by weighted BIC and only stop once the choice is stable
            changed = False
            for c in range(k):
                if len(per_component[c]) == 1:
                    continue
                family, _ = _select_component_family(
                    kind, per_component[c], rows, resp[:, c], shifts[c], ctl
                )
                if family != fams[c]:
                    fams[c] = family
                    changed = True
            if not changed:
                converged = True
                break
            # the likelihood is only comparable within one family assignment
            prev = None
            path = []
            continue
        prev = ll

    flags = set().union(*(r.flags for r in reports))
    if not converged:
        flags.add("non-convergence")
    mixture = MixtureModel(mix_w, comps)
    n_params = (k - 1) + sum(r.n_params for r in reports)
    loglik = path[-1] if path else last_ll
    return mixture, FitReport(
        model=mixture,
        loglik=loglik,
        n_params=n_params,
        bic=-2.0 * loglik + n_params * math.log(n),
        converged=converged,
        iterations=total_iters,
        flags=flags,
        kind=kind,
        family="mixture",
        sample_size=float(n),
        loglik_path=path,
    )


def fit_mixture(
    data,
    n_components,
    kind="multinomial",
    families="poisson",
    shift=0,
    seed=0,
    n_restarts=5,
    max_iter=1000,
    tol=1e-8,
    ctl: SeriesControl = DEFAULT_CONTROL,
):
    """EM fit of a finite mixture of splitting models.

    ``families`` gives the allowed sum families: one name, one list shared
    by all components, or one list per component; when a component has
    several allowed families the choice is refit by weighted BIC each time
    EM converges, until the assignment is stable.  ``shift`` is fixed per
    component, never estimated.  Initial responsibilities come from
    k-means++ on (total, direction) features; the best of ``n_restarts``
    seeded runs is returned as (MixtureModel, FitReport).  The report's
    ``loglik_path`` covers the final family-assignment phase.
    """
    rows = _as_count_matrix(data)
    if rows.shape[1] < 2:
        raise ValueError("need at least two categories")
    n_components = int(n_components)
    if n_components < 1:
        raise ValueError("n_components must be at least 1")
    if rows.shape[0] < n_components:
        raise ValueError("fewer rows than components")
    per_component, shifts = _component_specs(n_components, families, shift)
    ns = rows.sum(axis=1)

    # cluster features: standardized total plus the split direction
    direction = np.where(ns[:, None] > 0, rows / np.maximum(ns, 1.0)[:, None],
                         1.0 / rows.shape[1])
    scale = ns.std() if ns.std() > 0 else 1.0
    features = np.column_stack([(ns - ns.mean()) / scale, direction])

    best = None
    failure = None
    for restart in range(n_restarts):
        labels = KMeans(
            n_clusters=n_components, n_init=1, random_state=seed + restart
        ).fit_predict(features)
        resp = np.zeros((rows.shape[0], n_components))
        resp[np.arange(rows.shape[0]), labels] = 1.0
        try:
            mixture, report = _run_em(
                kind, rows, resp, per_component, shifts, max_iter, tol, ctl
            )
        except (ValueError, NonConvergenceError) as exc:
            failure = exc
            continue
        if best is None or report.loglik > best[1].loglik:
            best = (mixture, report)
    if best is None:
        raise ValueError(f"every EM restart failed; last error: {failure}")
    return best
