"""Splitting distributions: a singular simplex law splitting a random total.

A splitting model pairs a distribution for the grand total |Y| with a
singular distribution that divides each total among J categories, so the
joint PMF factorizes as P(|Y| = |y|) times the simplex PMF at y.  That
factorization carries the whole algebra: moments come from the law of
total (co)variance, the PGF from shell summation over totals, marginals
from block damage laws, and conditionals from Bayes on the remaining
block.
"""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.special import gammaln, logsumexp

from .series import DEFAULT_CONTROL, SeriesControl, _product_series_coefficients
from .simplex import (
    DamageSum,
    DirichletMultinomial,
    Multinomial,
    SingularModel,
    enumerate_simplex,
)
from .sums import (
    BetaBinomial,
    BetaNegativeBinomial,
    BetaPoisson,
    Binomial,
    Dirac,
    GeneralizedBetaBinomial,
    GeneralizedBetaNegativeBinomial,
    Logarithmic,
    NegativeBinomial,
    Poisson,
    SumModel,
    ZeroModifiedLogarithmic,
)

GRAPH_TOLERANCE = 1e-9


class GraphClass(enum.Enum):
    EMPTY = "empty"
    COMPLETE = "complete"
    UNKNOWN = "unknown"


class SplittingModel:
    """The compound of a singular simplex law and a univariate total law."""

    def __init__(self, singular: SingularModel, sum_model: SumModel):
        if singular.dim < 2:
            raise ValueError("a splitting model needs at least two categories")
        # a total the singular law cannot split would leave the joint deficient
        cap = singular.sequence.max_count(singular.total())
        if sum_model.support()[1] > cap:
            raise ValueError(
                "the sum can exceed the largest total the singular law splits"
            )
        self.singular = singular
        self.sum = sum_model

    @property
    def dim(self):
        return self.singular.dim

    def __repr__(self):
        return f"SplittingModel({self.singular!r}, {self.sum!r})"

    # -- evaluation ----------------------------------------------------------
    def joint_log_pmf(self, y):
        """log P(Y = y); y a vector or a matrix of rows."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 1
        rows = np.atleast_2d(y)
        if rows.shape[1] != self.dim:
            raise ValueError(f"y has {rows.shape[1]} categories, model has {self.dim}")
        totals = rows.sum(axis=1)
        out = self.sum.log_pmf(totals) + self.singular.log_pmf(totals, rows)
        return float(out[0]) if scalar else out

    def joint_pmf(self, y):
        return np.exp(self.joint_log_pmf(y))

    def moments(self):
        """(mean vector, covariance matrix) of Y."""
        m1, m2 = self.sum.factorial_moments()
        d = self.singular.mean_direction()
        pair = self.singular.pair_moment_matrix()
        mean = m1 * d
        cov = m2 * pair + m1 * np.diag(d) - np.outer(mean, mean)
        return mean, cov

    def pgf(self, s, ctl: SeriesControl = DEFAULT_CONTROL):
        """E prod_j s_j^{Y_j} for s in [0, 1]^J."""
        s = np.asarray(s, dtype=float)
        if s.shape != (self.dim,):
            raise ValueError(f"s must have {self.dim} entries")
        if np.any((s < 0) | (s > 1)):
            raise ValueError("pgf arguments must lie in [0, 1]")
        kind = self.singular.kind
        if kind == "multinomial":
            return self.sum.pgf(float(self.singular.pi @ s), ctl)
        ks, probs = self.sum.truncated_pmf(ctl.rel_tol)
        upper = int(ks[-1])
        if kind == "dirichlet-multinomial":
            alpha = self.singular.alpha
            # shell sums h_n of prod (1 - s_j t)^(-alpha_j); the conditional
            # expectation given |Y| = n is n! / (|alpha|)_n times h_n
            shells = _product_series_coefficients(alpha, s, upper + 1)
            tot = float(alpha.sum())
            ns = np.arange(upper + 1)
            weights = np.exp(gammaln(ns + 1.0) - gammaln(tot + ns) + gammaln(tot))
            inner = shells[ks.astype(int)] * weights[ks.astype(int)]
            return float(probs @ inner)
        # hypergeometric: coefficients of prod (1 + s_j t)^{k_j} over binom(K, n)
        k = np.asarray(self.singular.k)
        coeffs = np.ones(1)
        for kj, sj in zip(k.tolist(), s.tolist()):
            row = np.array([math.comb(kj, m) * sj**m for m in range(kj + 1)])
            coeffs = np.convolve(coeffs, row)
        total = int(k.sum())
        out = 0.0
        for n, p in zip(ks.astype(int), probs):
            if n <= total:
                out += p * coeffs[n] / math.comb(total, n)
        return float(out)

    # -- marginals -----------------------------------------------------------
    def marginal(self, coords, ctl: SeriesControl = DEFAULT_CONTROL):
        """Law of the subvector Y_I.

        A single index returns a univariate sum model; several indices
        return the splitting model of the block (restricted singular over a
        block-total law).  Closed forms are recognized where the identity
        is exact; anything else is the numeric damage law.
        """
        coords = np.atleast_1d(np.asarray(coords, dtype=int))
        if coords.size == 0 or coords.size >= self.dim:
            raise ValueError("coords must be a proper non-empty subset of the categories")
        if (
            np.unique(coords).size != coords.size
            or coords.min() < 0
            or coords.max() >= self.dim
        ):
            raise ValueError("coords contains duplicate or out-of-range indices")
        theta, gamma = self.singular.block_weights(coords)
        block_sum = self._block_sum_law(theta, gamma, ctl)
        if coords.size == 1:
            return block_sum
        return SplittingModel(self.singular.restrict(coords), block_sum)

    def _block_sum_law(self, theta, gamma, ctl):
        recognized = _recognize_marginal(self.singular, self.sum, theta, gamma)
        if recognized is not None:
            return recognized
        return DamageSum(self.singular.sequence, theta, gamma, self.sum, ctl)

    # -- conditionals --------------------------------------------------------
    def conditional(self, given, values, ctl: SeriesControl = DEFAULT_CONTROL):
        """Law of the remaining categories once Y[given] = values is seen.

        Returns a univariate sum model when a single category remains, else
        the splitting model of the remaining block.
        """
        given = np.atleast_1d(np.asarray(given, dtype=int))
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if given.size == 0:
            raise ValueError("given must name at least one category")
        if values.shape != given.shape:
            raise ValueError("values must match the conditioned coordinates")
        if np.any(values < 0) or np.any(values != np.floor(values)):
            raise ValueError("values must be non-negative integers")
        if given.size >= self.dim:
            raise ValueError("given must leave at least one free category")
        free = np.setdiff1d(np.arange(self.dim), given)
        if free.size + given.size != self.dim:
            raise ValueError("given contains duplicate or out-of-range indices")
        # check the conditioned block itself has positive probability
        w = self.singular.weightvec()
        if self.singular.kind == "hypergeometric" and np.any(values > w[given]):
            raise ValueError("zero-probability conditioning event")
        a = int(values.sum())
        theta_free = float(w[free].sum())
        total = self.singular.total()
        cond_sum = _conditional_sum_law(
            self.singular, self.sum, theta_free, total, a, ctl
        )
        if free.size == 1:
            return cond_sum
        return SplittingModel(self.singular.restrict(free), cond_sum)

    # -- structure -----------------------------------------------------------
    def graph_class(self):
        """Conditional-independence structure of the joint law."""
        kind = self.singular.kind
        if kind == "hypergeometric":
            return GraphClass.UNKNOWN
        if self.sum.shift == 0:
            if kind == "multinomial" and isinstance(self.sum, Poisson):
                return GraphClass.EMPTY
            if (
                kind == "dirichlet-multinomial"
                and isinstance(self.sum, NegativeBinomial)
                and abs(self.sum.r - self.singular.total()) <= GRAPH_TOLERANCE
            ):
                return GraphClass.EMPTY
        return GraphClass.COMPLETE

    # -- sampling ------------------------------------------------------------
    def sample(self, rng, count=None):
        """Joint draws: a total from the sum law, split by the singular law."""
        ns = self.sum.sample(rng, 1 if count is None else int(count))
        draws = self.singular.sample_many(np.asarray(ns, dtype=np.int64), rng)
        return draws[0] if count is None else draws


def _effective_dirac_point(sum_model):
    if isinstance(sum_model, Dirac):
        return sum_model.n + sum_model.shift
    return None


def _recognize_marginal(singular, sum_model, theta, gamma):
    """Closed-form block-total law, or None when no exact identity applies."""
    kind = singular.kind
    point = _effective_dirac_point(sum_model)
    total = singular.total()
    if kind == "multinomial":
        pi = theta / total
        if point is not None:
            return Binomial(point, pi) if point > 0 else Dirac(0)
        if sum_model.shift != 0:
            return None
        if isinstance(sum_model, Poisson):
            return Poisson(sum_model.lam * pi)
        if isinstance(sum_model, Binomial):
            return Binomial(sum_model.n, sum_model.p * pi)
        if isinstance(sum_model, NegativeBinomial):
            p = sum_model.p
            return NegativeBinomial(sum_model.r, p * pi / (1.0 - p + p * pi))
        if isinstance(sum_model, Logarithmic):
            p = sum_model.p
            q = 1.0 - p + p * pi
            return ZeroModifiedLogarithmic(
                p * pi / q, math.log(q) / math.log1p(-p)
            )
        if isinstance(sum_model, ZeroModifiedLogarithmic):
            p, omega = sum_model.p, sum_model.omega
            pp = p * pi / (1.0 - p + p * pi)
            return ZeroModifiedLogarithmic(
                pp, 1.0 - (1.0 - omega) * math.log1p(-pp) / math.log1p(-p)
            )
        if isinstance(sum_model, BetaPoisson):
            return BetaPoisson(sum_model.lam * pi, sum_model.a, sum_model.b)
        if isinstance(sum_model, BetaBinomial):
            return GeneralizedBetaBinomial(
                sum_model.n, sum_model.a, sum_model.b, pi
            )
        if isinstance(sum_model, BetaNegativeBinomial):
            return GeneralizedBetaNegativeBinomial(
                sum_model.r, sum_model.a, sum_model.b, pi
            )
        if isinstance(sum_model, GeneralizedBetaBinomial):
            return GeneralizedBetaBinomial(
                sum_model.n, sum_model.a, sum_model.b, sum_model.pi * pi
            )
        if isinstance(sum_model, GeneralizedBetaNegativeBinomial):
            return GeneralizedBetaNegativeBinomial(
                sum_model.r, sum_model.a, sum_model.b, sum_model.pi * pi
            )
        return None
    if kind == "dirichlet-multinomial":
        if point is not None:
            return BetaBinomial(point, theta, gamma) if point > 0 else Dirac(0)
        if sum_model.shift != 0:
            return None
        if isinstance(sum_model, Poisson):
            return BetaPoisson(sum_model.lam, theta, gamma)
        if isinstance(sum_model, Binomial):
            return GeneralizedBetaBinomial(sum_model.n, theta, gamma, sum_model.p)
        if (
            isinstance(sum_model, NegativeBinomial)
            and abs(sum_model.r - total) <= GRAPH_TOLERANCE
        ):
            # the joint factorizes into independent negative binomials
            return NegativeBinomial(theta, sum_model.p)
        if (
            isinstance(sum_model, BetaNegativeBinomial)
            and abs(sum_model.r - total) <= GRAPH_TOLERANCE
        ):
            return BetaNegativeBinomial(theta, sum_model.a, sum_model.b)
        if (
            isinstance(sum_model, BetaBinomial)
            and abs(sum_model.a - total) <= GRAPH_TOLERANCE
        ):
            # beta chain: Beta(theta, gamma) times Beta(|alpha|, b) collapses
            return BetaBinomial(sum_model.n, theta, gamma + sum_model.b)
        if (
            isinstance(sum_model, BetaPoisson)
            and abs(sum_model.a - total) <= GRAPH_TOLERANCE
        ):
            return BetaPoisson(sum_model.lam, theta, gamma + sum_model.b)
        return None
    return None


class ConditionalSum(SumModel):
    """Law of the free-block total after conditioning on observed counts.

    Bayes on the splitting structure: the weight of a free total m is
    a(theta_free, m) P(|Y| = a + m) / a(T, a + m), normalized over m.
    """

    family = "conditional"
    n_params = 0

    def __init__(self, sequence, theta_free, total, total_law, given_total,
                 ctl: SeriesControl = DEFAULT_CONTROL):
        self.sequence = sequence
        self.theta_free = float(theta_free)
        self.total = float(total)
        self.total_law = total_law
        self.given_total = int(given_total)
        self.ctl = ctl
        self._table = self._build_table()
        super().__init__(0)

    def _build_table(self):
        seq, a = self.sequence, self.given_total
        upper = self.total_law.support_upper(self.ctl.rel_tol)
        ms = np.arange(0, max(upper - a, 0) + 1)
        norm = seq.normalizer(self.total, a + ms)
        with np.errstate(invalid="ignore"):
            logw = (
                seq.eval(self.theta_free, ms)
                + self.total_law.log_pmf(a + ms)
                - norm
            )
        logw = np.where(np.isfinite(norm), logw, -np.inf)
        lse = float(logsumexp(logw)) if logw.size else -math.inf
        if lse == -math.inf:
            raise ValueError("zero-probability conditioning event")
        return logw - lse

    def params(self):
        return {"given_total": self.given_total}

    def __repr__(self):
        return (
            f"ConditionalSum({self.sequence.name}, theta={self.theta_free:g}, "
            f"total={self.total:g}, given={self.given_total}, "
            f"base={self.total_law!r})"
        )

    def _base_support(self):
        return 0, self._table.size - 1

    def _base_log_pmf(self, z):
        return self._table[z.astype(int)]

    def _base_factorial_moments(self):
        probs = np.exp(self._table)
        ms = np.arange(self._table.size, dtype=float)
        return float(probs @ ms), float(probs @ (ms * (ms - 1.0)))

    def _base_pgf_derivative(self, order, s, ctl):
        return self._series_pgf_derivative(order, s, ctl)

    def _base_sample(self, rng, size):
        return self._sample_by_inversion(rng, size)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        raise NotImplementedError("conditional laws are derived, not fitted directly")


def _conditional_sum_law(singular, sum_model, theta_free, total, a, ctl):
    kind = singular.kind
    point = _effective_dirac_point(sum_model)
    if point is not None:
        m = point - a
        if m < 0:
            raise ValueError("zero-probability conditioning event")
        if kind == "hypergeometric" and (m > theta_free or point > total):
            raise ValueError("zero-probability conditioning event")
        return Dirac(m)
    if kind == "multinomial" and sum_model.shift == 0:
        pi = theta_free / total
        if isinstance(sum_model, Poisson):
            return Poisson(sum_model.lam * pi)
        if isinstance(sum_model, Binomial):
            if a > sum_model.n:
                raise ValueError("zero-probability conditioning event")
            if a == sum_model.n:
                return Dirac(0)
            p = sum_model.p
            return Binomial(sum_model.n - a, p * pi / (1.0 - p + p * pi))
        if isinstance(sum_model, NegativeBinomial):
            return NegativeBinomial(sum_model.r + a, sum_model.p * pi)
    return ConditionalSum(singular.sequence, theta_free, total, sum_model, a, ctl)


def non_singular_identity_check(kind, params, tol=1e-10):
    """Whether the compound law really equals its advertised non-singular
    form, checked pointwise over the full support.

    kind "multinomial": params n, p, pi compares the splitting of a
    binomial total against the flat multinomial with an overflow category.
    kind "dirichlet-multinomial": params n, alpha, a, b compares the
    splitting of a beta-binomial total against the flat Dirichlet
    multinomial with an overflow category weighted b (exact when a equals
    the total singular weight).
    """
    if kind == "multinomial":
        n, p = int(params["n"]), float(params["p"])
        pi = np.asarray(params["pi"], dtype=float)
        pi = pi / pi.sum()
        model = SplittingModel(Multinomial(pi), Binomial(n, p))
        probs = np.append(p * pi, 1.0 - p)
        flat = Multinomial(probs)

        def direct(rows):
            extended = np.column_stack([rows, n - rows.sum(axis=1)])
            return flat.log_pmf(n, extended)

    elif kind == "dirichlet-multinomial":
        n = int(params["n"])
        alpha = np.asarray(params["alpha"], dtype=float)
        a, b = float(params["a"]), float(params["b"])
        model = SplittingModel(DirichletMultinomial(alpha), BetaBinomial(n, a, b))
        flat = DirichletMultinomial(np.append(alpha, b))

        def direct(rows):
            extended = np.column_stack([rows, n - rows.sum(axis=1)])
            return flat.log_pmf(n, extended)

    else:
        raise KeyError(f"no non-singular identity for kind {kind!r}")

    for m in range(n + 1):
        rows = enumerate_simplex(model.dim, m)
        lhs = model.joint_log_pmf(rows)
        rhs = direct(rows)
        if not np.allclose(np.exp(lhs), np.exp(rhs), rtol=tol, atol=tol):
            return False
    return True
