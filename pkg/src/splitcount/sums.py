"""Univariate count distributions used as the total of a compound model.

Every family exposes the same surface: ``log_pmf`` / ``pmf`` (array
friendly), ``support``, exact factorial moments where they exist,
probability generating function derivatives of any order, latent-variable
sampling through a numpy Generator, and weighted maximum likelihood via
``fit``. An integer ``shift`` relocates the support ({a, ...} becomes
{a+shift, ...}); fitting and moments account for it transparently.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.special import betaln, gammaln, roots_jacobi

from .series import (
    DEFAULT_CONTROL,
    NonConvergenceError,
    SeriesControl,
    confluent_1f1,
    gauss_2f1,
)

__all__ = [
    "SumModel",
    "Dirac",
    "Binomial",
    "NegativeBinomial",
    "Poisson",
    "Geometric",
    "Logarithmic",
    "ZeroModifiedLogarithmic",
    "BetaBinomial",
    "BetaNegativeBinomial",
    "BetaPoisson",
    "GeneralizedBetaBinomial",
    "GeneralizedBetaNegativeBinomial",
    "BetaSquareBinomial",
    "BetaSquareNegativeBinomial",
    "BetaSquarePoisson",
    "TruncatedShifted",
    "FAMILIES",
    "make_sum",
    "sum_fit",
]

SUPPORT_TAIL = 1e-12
SUPPORT_CAP = 1_000_000
QUAD_REL_TOL = 1e-8
QUAD_START_NODES = 64
QUAD_MAX_NODES = 512
_LOG_TINY = -745.0  # log of the smallest positive double


def _log_binom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _log_poch(a, k):
    return gammaln(a + k) - gammaln(np.asarray(a, dtype=float))


def _falling(x, order):
    """x (x-1) ... (x-order+1), valid for any real x."""
    out = 1.0
    for m in range(order):
        out *= x - m
    return out


def _log_2f1_positive(a, b, c, s, ctl):
    """log 2F1(a, b; c; s) for positive parameters and 0 < s < 1.

    All terms are positive, so the sum is accumulated with logaddexp and
    never overflows even when the value is astronomically large.
    """
    log_t = 0.0
    log_total = 0.0
    log_tol = math.log(ctl.rel_tol)
    small = 0
    for k in range(int(ctl.max_terms)):
        log_t += math.log((a + k) * (b + k) * s) - math.log((c + k) * (k + 1.0))
        if log_t <= log_total:
            log_total += math.log1p(math.exp(log_t - log_total))
        else:
            log_total = log_t + math.log1p(math.exp(log_total - log_t))
        if log_t - log_total < log_tol:
            small += 1
            if small >= 2:
                return log_total
        else:
            small = 0
    raise NonConvergenceError("log 2F1 did not converge", log_total, int(ctl.max_terms))


def _check_prob(name, value, open_left=True, open_right=True):
    lo_ok = value > 0.0 if open_left else value >= 0.0
    hi_ok = value < 1.0 if open_right else value <= 1.0
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} = {value!r} outside the valid range")
    return float(value)


def _check_positive(name, value):
    value = float(value)
    if not value > 0.0 or not math.isfinite(value):
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def _check_count(name, value):
    if float(value) != int(value) or int(value) < 0:
        raise ValueError(f"{name} must be an integer >= 0, got {value!r}")
    return int(value)


@lru_cache(maxsize=256)
def _beta_nodes(a, b, m):
    # Gauss-Jacobi absorbs the u^(a-1)(1-u)^(b-1) density into the weights,
    # so fractional exponents do not wreck the convergence rate
    x, w = roots_jacobi(m, b - 1.0, a - 1.0)
    u = 0.5 * (x + 1.0)
    return u, w * math.exp(-(a + b - 1.0) * math.log(2.0) - betaln(a, b))


def _product_beta_expect(fn, a1, b1, a2, b2):
    """E[fn(U V)] for independent betas, Gauss-Jacobi with node doubling.

    ``fn`` maps a node vector (P,) to values (..., P); integration is over
    the trailing axis. Nodes start at QUAD_START_NODES per axis and double
    until the result moves by less than QUAD_REL_TOL relative.
    """
    prev = None
    m = QUAD_START_NODES
    while True:
        u, wu = _beta_nodes(a1, b1, m)
        v, wv = _beta_nodes(a2, b2, m)
        p = np.outer(u, v).ravel()
        w = np.outer(wu, wv).ravel()
        val = fn(p) @ w
        if prev is not None:
            # values far below the block maximum only need absolute accuracy;
            # chasing their relative error would force max nodes on every tail
            floor = 1e-4 * np.max(np.abs(val)) + 1e-300
            err = np.max(np.abs(val - prev) / np.maximum(np.abs(val), floor))
            if err < QUAD_REL_TOL or m >= QUAD_MAX_NODES:
                return val
        prev = val
        m *= 2


class SumModel:
    """Base class for distributions of an integer total."""

    family = None
    n_params = 0

    def __init__(self, shift=0):
        shift = int(shift)
        low, _ = self._base_support()
        if low + shift < 0:
            raise ValueError(f"shift {shift} moves the support below zero")
        self.shift = shift

    # -- subclass surface ---------------------------------------------------
    def _base_support(self):
        raise NotImplementedError

    def _base_log_pmf(self, z):
        """Log PMF at integer points z already validated to lie in support."""
        raise NotImplementedError

    def _base_factorial_moments(self):
        """(E Z, E Z(Z-1)) of the unshifted law."""
        raise NotImplementedError

    def _base_pgf_derivative(self, order, s, ctl):
        raise NotImplementedError

    def _base_sample(self, rng, size):
        raise NotImplementedError

    def params(self):
        """Family parameters as a plain dict (shift excluded)."""
        raise NotImplementedError

    # -- shared surface -----------------------------------------------------
    def support(self):
        low, high = self._base_support()
        return low + self.shift, high + self.shift

    def log_pmf(self, k):
        k = np.asarray(k, dtype=float)
        scalar = k.ndim == 0
        k = np.atleast_1d(k)
        z = k - self.shift
        low, high = self._base_support()
        ok = (z >= low) & (z <= high) & (z == np.floor(z)) & np.isfinite(z)
        out = np.full(k.shape, -np.inf)
        if ok.any():
            out[ok] = self._base_log_pmf(z[ok])
        return float(out[0]) if scalar else out

    def pmf(self, k):
        return np.exp(self.log_pmf(k))

    def factorial_moments(self):
        """(E S, E S(S-1)) including the shift."""
        m1, m2 = self._base_factorial_moments()
        d = float(self.shift)
        return m1 + d, m2 + 2.0 * d * m1 + d * (d - 1.0)

    def mean(self):
        return self.factorial_moments()[0]

    def variance(self):
        m1, m2 = self.factorial_moments()
        return m2 + m1 - m1 * m1

    def pgf(self, s, ctl: SeriesControl = DEFAULT_CONTROL):
        return self.pgf_derivative(0, s, ctl)

    def pgf_derivative(self, order, s, ctl: SeriesControl = DEFAULT_CONTROL):
        order = _check_count("order", order)
        s = float(s)
        if not 0.0 <= s <= 1.0:
            raise ValueError("pgf arguments must lie in [0, 1]")
        if order == 0 and s == 1.0:
            return 1.0
        if s == 0.0:
            # G^(y)(0) = y! P(S = y)
            return float(np.exp(gammaln(order + 1.0) + self.log_pmf(order)))
        if self.shift == 0:
            return self._base_pgf_derivative(order, s, ctl)
        # product rule on G_S(s) = s^shift G(s); valid for s > 0
        d = self.shift
        total = 0.0
        for m in range(order + 1):
            coef = _falling(float(d), m)
            if coef == 0.0:
                continue
            total += (
                math.comb(order, m)
                * coef
                * s ** (d - m)
                * self._base_pgf_derivative(order - m, s, ctl)
            )
        return total

    def _series_pgf_derivative(self, order, s, ctl):
        """Fallback sum_k P(Z=k) (k)_order^falling s^(k-order) on the base law."""
        ks, probs = self._base_truncated(1e-13)
        keep = ks >= order
        ks, probs = ks[keep], probs[keep]
        if ks.size == 0:
            return 0.0
        logfall = gammaln(ks + 1.0) - gammaln(ks - order + 1.0)
        with np.errstate(divide="ignore"):
            terms = np.exp(np.log(np.maximum(probs, 1e-320)) + logfall + (ks - order) * np.log(s))
        terms[probs == 0.0] = 0.0
        return float(terms.sum())

    def support_upper(self, tail=SUPPORT_TAIL):
        """Smallest b in the support with P(S > b) <= tail.

        If the residual mass hits the float noise floor of the PMF before
        reaching ``tail``, the bound where it stalled is returned: anything
        past it cannot be resolved numerically anyway.
        """
        low, high = self.support()
        if math.isfinite(high):
            return int(high)
        block = 64
        start = low
        cum = 0.0
        deficit = math.inf
        while start - low < SUPPORT_CAP:
            ks = np.arange(start, start + block)
            inner = cum + np.cumsum(self.pmf(ks))
            hit = np.flatnonzero(1.0 - inner <= tail)
            if hit.size:
                return int(ks[hit[0]])
            cum = float(inner[-1])
            # a genuine tail sheds mass at some polynomial rate, so doubling
            # the range must shrink the residual; a flat residual is noise
            if 1.0 - cum > 0.98 * deficit and 1.0 - cum < 1e-9:
                return int(ks[-1])
            deficit = 1.0 - cum
            start += block
            block = min(2 * block, 65536)
        raise NonConvergenceError(
            f"support of {self!r} not covered within {SUPPORT_CAP} points", cum, SUPPORT_CAP
        )

    def truncated_pmf(self, tail=SUPPORT_TAIL):
        """(support points, probabilities) covering all but at most `tail` mass."""
        low, _ = self.support()
        ks = np.arange(low, self.support_upper(tail) + 1)
        return ks, self.pmf(ks)

    def _base_truncated(self, tail):
        saved, self.shift = self.shift, 0
        try:
            ks, probs = self.truncated_pmf(tail)
        finally:
            self.shift = saved
        return ks.astype(float), probs

    def sample(self, rng, size=None):
        out = self._base_sample(rng, size) + self.shift
        return out

    def _sample_by_inversion(self, rng, size):
        ks, probs = self._base_truncated(1e-13)
        cum = np.cumsum(probs)
        cum /= cum[-1]
        u = rng.random(size)
        return ks[np.searchsorted(cum, u, side="left").clip(0, ks.size - 1)].astype(int)

    def __repr__(self):
        inner = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        if self.shift:
            inner += f", shift={self.shift}"
        return f"{type(self).__name__}({inner})"

    # -- fitting ------------------------------------------------------------
    @classmethod
    def fit(cls, data, weights=None, fixed=None, shift=0, ctl=DEFAULT_CONTROL):
        """Weighted MLE of the family on integer data.

        Returns ``(model, info)`` where info carries ``converged``,
        ``iterations`` and a set of ``flags``. ``fixed`` pins named
        parameters. A model of None signals that no maximum exists
        (see the flags).
        """
        data = np.asarray(data, dtype=float).ravel()
        if data.size == 0:
            raise ValueError("empty data")
        if np.any(data != np.floor(data)) or np.any(data < 0):
            raise ValueError("data must be integers >= 0")
        if weights is None:
            weights = np.ones_like(data)
        else:
            weights = np.asarray(weights, dtype=float).ravel()
            if weights.shape != data.shape or np.any(weights < 0) or weights.sum() <= 0:
                raise ValueError("weights must be non-negative and sum > 0")
        z = data - shift
        low = cls._fit_support_low()
        if np.any(z < low):
            raise ValueError(
                f"data below the {cls.family} support after removing shift {shift}"
            )
        # collapse to unique values: every likelihood below is value-weighted
        values, inverse = np.unique(z, return_inverse=True)
        wsum = np.bincount(inverse, weights=weights)
        model, info = cls._fit_base(values, wsum, dict(fixed or {}), ctl)
        if model is not None and shift:
            model = model.with_shift(shift)
        info.setdefault("flags", set())
        return model, info

    @classmethod
    def _fit_support_low(cls):
        return 0

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        raise NotImplementedError

    def with_shift(self, shift):
        clone = type(self)(**self.params(), shift=shift)
        return clone

    def loglik(self, data, weights=None):
        data = np.asarray(data, dtype=float)
        lp = self.log_pmf(data)
        if weights is None:
            return float(np.sum(lp))
        return float(np.dot(np.asarray(weights, dtype=float), lp))


def _numeric_factorial_moments(model, tail=1e-13):
    ks, probs = model._base_truncated(tail)
    m1 = float(np.dot(ks, probs))
    m2 = float(np.dot(ks * (ks - 1.0), probs))
    return m1, m2


# ---------------------------------------------------------------------------
# elementary families
# ---------------------------------------------------------------------------


class Dirac(SumModel):
    """Point mass at n."""

    family = "dirac"
    n_params = 1

    def __init__(self, n, shift=0):
        self.n = _check_count("n", n)
        super().__init__(shift)

    def params(self):
        return {"n": self.n}

    def _base_support(self):
        return self.n, self.n

    def _base_log_pmf(self, z):
        return np.where(z == self.n, 0.0, -np.inf)

    def _base_factorial_moments(self):
        n = float(self.n)
        return n, n * (n - 1.0)

    def _base_pgf_derivative(self, order, s, ctl):
        if order > self.n:
            return 0.0
        return _falling(float(self.n), order) * s ** (self.n - order)

    def _base_sample(self, rng, size):
        return np.full(size if size is not None else (), self.n, dtype=int)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        flags = set()
        if "n" in fixed:
            n = _check_count("n", fixed["n"])
        else:
            n = int(values[np.argmax(weights)])
        if values.size > 1 or int(values[0]) != n:
            flags.add("degenerate")
        return cls(n), {"converged": True, "iterations": 0, "flags": flags}


class Binomial(SumModel):
    """Binomial(n, p) on {0, ..., n}."""

    family = "binomial"
    n_params = 2

    def __init__(self, n, p, shift=0):
        self.n = _check_count("n", n)
        self.p = _check_prob("p", p)
        super().__init__(shift)

    def params(self):
        return {"n": self.n, "p": self.p}

    def _base_support(self):
        return 0, self.n

    def _base_log_pmf(self, z):
        n, p = float(self.n), self.p
        return _log_binom(n, z) + z * math.log(p) + (n - z) * math.log1p(-p)

    def _base_factorial_moments(self):
        n, p = float(self.n), self.p
        return n * p, n * (n - 1.0) * p * p

    def _base_pgf_derivative(self, order, s, ctl):
        n, p = float(self.n), self.p
        if order > self.n:
            return 0.0
        return _falling(n, order) * p**order * (1.0 - p + p * s) ** (n - order)

    def _base_sample(self, rng, size):
        return rng.binomial(self.n, self.p, size=size)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        wtot = weights.sum()
        mean = float(np.dot(values, weights) / wtot)
        var = float(np.dot((values - mean) ** 2, weights) / wtot)
        flags = set()

        def model_for(n):
            p = mean / n if n > 0 else 0.5
            if not 0.0 < p < 1.0:
                p = min(max(p, 1e-12), 1.0 - 1e-12)
                flags.add("boundary")
            return cls(n, p)

        if "n" in fixed:
            n = _check_count("n", fixed["n"])
            if values.max() > n:
                raise ValueError("data exceed the fixed binomial n")
            return model_for(n), {"converged": True, "iterations": 0, "flags": flags}
        if var >= mean:
            # likelihood increases in n without bound: no finite MLE of n
            return None, {
                "converged": False,
                "iterations": 0,
                "flags": {"no-finite-n"},
            }
        n = max(int(values.max()), 1)
        best_n, best_ll = n, model_for(n).loglik(values, weights)
        n += 1
        iters = 0
        while n <= SUPPORT_CAP:
            iters += 1
            ll = model_for(n).loglik(values, weights)
            if ll > best_ll:
                best_n, best_ll = n, ll
            elif n > best_n + 2:
                break
            n += 1
        return model_for(best_n), {"converged": True, "iterations": iters, "flags": flags}


class NegativeBinomial(SumModel):
    """Negative binomial: P(k) = C(k+r-1, k) (1-p)^r p^k on {0, 1, ...}."""

    family = "negative-binomial"
    n_params = 2

    def __init__(self, r, p, shift=0):
        self.r = _check_positive("r", r)
        self.p = _check_prob("p", p)
        super().__init__(shift)

    def params(self):
        return {"r": self.r, "p": self.p}

    def _base_support(self):
        return 0, math.inf

    def _base_log_pmf(self, z):
        r, p = self.r, self.p
        return (
            _log_poch(r, z)
            - gammaln(z + 1.0)
            + r * math.log1p(-p)
            + z * math.log(p)
        )

    def _base_factorial_moments(self):
        r, p = self.r, self.p
        q = p / (1.0 - p)
        return r * q, r * (r + 1.0) * q * q

    def _base_pgf_derivative(self, order, s, ctl):
        r, p = self.r, self.p
        return (
            (1.0 - p) ** r
            * math.exp(_log_poch(r, order))
            * p**order
            * (1.0 - p * s) ** -(r + order)
        )

    def _base_sample(self, rng, size):
        # numpy's success probability is our 1-p
        return rng.negative_binomial(self.r, 1.0 - self.p, size=size)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        wtot = weights.sum()
        mean = float(np.dot(values, weights) / wtot)
        flags = set()
        if mean <= 0.0:
            return None, {"converged": False, "iterations": 0, "flags": {"degenerate"}}

        def profile(logr):
            r = math.exp(logr)
            p = mean / (r + mean)
            return -cls(r, p).loglik(values, weights)

        if "r" in fixed:
            r = _check_positive("r", fixed["r"])
            res_iters = 0
        else:
            var = float(np.dot((values - mean) ** 2, weights) / wtot)
            if var <= mean:
                flags.add("poisson-limit")
            res = minimize_scalar(
                profile, bounds=(-12.0, 16.0), method="bounded",
                options={"xatol": 1e-10},
            )
            r = math.exp(res.x)
            res_iters = res.nfev
            if res.x > 15.5 or res.x < -11.5:
                flags.add("boundary")
        p = fixed.get("p", mean / (r + mean))
        return cls(r, p), {"converged": True, "iterations": res_iters, "flags": flags}


class Poisson(SumModel):
    """Poisson(lam) on {0, 1, ...}."""

    family = "poisson"
    n_params = 1

    def __init__(self, lam, shift=0):
        self.lam = _check_positive("lam", lam)
        super().__init__(shift)

    def params(self):
        return {"lam": self.lam}

    def _base_support(self):
        return 0, math.inf

    def _base_log_pmf(self, z):
        return -self.lam + z * math.log(self.lam) - gammaln(z + 1.0)

    def _base_factorial_moments(self):
        return self.lam, self.lam**2

    def _base_pgf_derivative(self, order, s, ctl):
        return self.lam**order * math.exp(self.lam * (s - 1.0))

    def _base_sample(self, rng, size):
        return rng.poisson(self.lam, size=size)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        flags = set()
        lam = fixed.get("lam", float(np.dot(values, weights) / weights.sum()))
        if lam <= 0.0:
            lam = 1e-12
            flags.add("boundary")
        return cls(lam), {"converged": True, "iterations": 0, "flags": flags}


class Geometric(SumModel):
    """Geometric on {1, 2, ...}: P(k) = p (1-p)^(k-1)."""

    family = "geometric"
    n_params = 1

    def __init__(self, p, shift=0):
        self.p = _check_prob("p", p, open_right=False)
        super().__init__(shift)

    def params(self):
        return {"p": self.p}

    def _base_support(self):
        return 1, math.inf

    def _base_log_pmf(self, z):
        if self.p == 1.0:
            return np.where(z == 1.0, 0.0, -np.inf)
        return math.log(self.p) + (z - 1.0) * math.log1p(-self.p)

    def _base_factorial_moments(self):
        p = self.p
        return 1.0 / p, 2.0 * (1.0 - p) / (p * p)

    def _base_pgf_derivative(self, order, s, ctl):
        p = self.p
        q = 1.0 - p
        if order == 0:
            return p * s / (1.0 - q * s)
        return p * math.factorial(order) * q ** (order - 1) * (1.0 - q * s) ** -(order + 1)

    def _base_sample(self, rng, size):
        return rng.geometric(self.p, size=size)

    @classmethod
    def _fit_support_low(cls):
        return 1

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        flags = set()
        mean = float(np.dot(values, weights) / weights.sum())
        p = fixed.get("p", 1.0 / mean)
        return cls(p), {"converged": True, "iterations": 0, "flags": flags}


def _log_mean(p):
    """Mean of the logarithmic series distribution."""
    return -p / ((1.0 - p) * math.log1p(-p))


class Logarithmic(SumModel):
    """Logarithmic series on {1, 2, ...}: P(k) = -p^k / (k log(1-p))."""

    family = "logarithmic"
    n_params = 1

    def __init__(self, p, shift=0):
        self.p = _check_prob("p", p)
        super().__init__(shift)

    def params(self):
        return {"p": self.p}

    def _base_support(self):
        return 1, math.inf

    def _base_log_pmf(self, z):
        p = self.p
        return z * math.log(p) - np.log(z) - math.log(-math.log1p(-p))

    def _base_factorial_moments(self):
        p = self.p
        c = -1.0 / math.log1p(-p)
        return c * p / (1.0 - p), c * p * p / (1.0 - p) ** 2

    def _base_pgf_derivative(self, order, s, ctl):
        p = self.p
        if order == 0:
            return math.log1p(-p * s) / math.log1p(-p)
        return (
            -math.factorial(order - 1)
            * p**order
            * (1.0 - p * s) ** -order
            / math.log1p(-p)
        )

    def _base_sample(self, rng, size):
        return rng.logseries(self.p, size=size)

    @classmethod
    def _fit_support_low(cls):
        return 1

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        flags = set()
        if "p" in fixed:
            return cls(fixed["p"]), {"converged": True, "iterations": 0, "flags": flags}
        mean = float(np.dot(values, weights) / weights.sum())
        if mean <= 1.0:
            flags.add("boundary")
            return cls(1e-9), {"converged": True, "iterations": 0, "flags": flags}
        p = brentq(lambda q: _log_mean(q) - mean, 1e-12, 1.0 - 1e-12, xtol=1e-14)
        return cls(p), {"converged": True, "iterations": 0, "flags": flags}


class ZeroModifiedLogarithmic(SumModel):
    """P(0) = omega, P(k) = (1-omega) * logarithmic(p) for k >= 1."""

    family = "zero-modified-logarithmic"
    n_params = 2

    def __init__(self, p, omega, shift=0):
        self.p = _check_prob("p", p)
        self.omega = _check_prob("omega", omega, open_left=False)
        super().__init__(shift)

    def params(self):
        return {"p": self.p, "omega": self.omega}

    def _base_support(self):
        return 0, math.inf

    def _base_log_pmf(self, z):
        p, om = self.p, self.omega
        with np.errstate(divide="ignore"):
            body = (
                math.log1p(-om)
                + z * math.log(p)
                - np.log(np.maximum(z, 1.0))
                - math.log(-math.log1p(-p))
            )
            return np.where(z == 0, math.log(om) if om > 0 else -np.inf, body)

    def _base_factorial_moments(self):
        m1, m2 = Logarithmic(self.p)._base_factorial_moments()
        return (1.0 - self.omega) * m1, (1.0 - self.omega) * m2

    def _base_pgf_derivative(self, order, s, ctl):
        inner = Logarithmic(self.p)._base_pgf_derivative(order, s, ctl)
        if order == 0:
            return self.omega + (1.0 - self.omega) * inner
        return (1.0 - self.omega) * inner

    def _base_sample(self, rng, size):
        zeros = rng.random(size) < self.omega
        body = rng.logseries(self.p, size=size)
        return np.where(zeros, 0, body)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        flags = set()
        wtot = weights.sum()
        omega = fixed.get("omega", float(weights[values == 0].sum() / wtot))
        pos = values >= 1
        if not pos.any():
            flags.add("degenerate")
            return cls(0.5, min(omega, 1.0 - 1e-12)), {
                "converged": True,
                "iterations": 0,
                "flags": flags,
            }
        if "p" in fixed:
            p = fixed["p"]
        else:
            sub, info = Logarithmic._fit_base(values[pos], weights[pos], {}, ctl)
            p = sub.p
            flags |= info["flags"]
        omega = min(omega, 1.0 - 1e-12)
        return cls(p, omega), {"converged": True, "iterations": 0, "flags": flags}


# ---------------------------------------------------------------------------
# beta compounds
# ---------------------------------------------------------------------------


class BetaBinomial(SumModel):
    """Binomial(n, p) with p ~ Beta(a, b)."""

    family = "beta-binomial"
    n_params = 3

    def __init__(self, n, a, b, shift=0):
        self.n = _check_count("n", n)
        self.a = _check_positive("a", a)
        self.b = _check_positive("b", b)
        super().__init__(shift)

    def params(self):
        return {"n": self.n, "a": self.a, "b": self.b}

    def _base_support(self):
        return 0, self.n

    def _base_log_pmf(self, z):
        n, a, b = float(self.n), self.a, self.b
        return _log_binom(n, z) + betaln(a + z, b + n - z) - betaln(a, b)

    def _base_factorial_moments(self):
        n, a, b = float(self.n), self.a, self.b
        c = a + b
        return n * a / c, n * (n - 1.0) * a * (a + 1.0) / (c * (c + 1.0))

    def _log_pgf_derivative(self, order, s, ctl):
        # (-n)_y and (-b-n+1)_y both carry sign (-1)^y, so the prefactor is
        # positive; it is accumulated in log space to survive large n
        n, a, b = self.n, self.a, self.b
        if order > n:
            return -np.inf
        logpre = _log_poch(b, n) - _log_poch(a + b, n)
        for k in range(order):
            logpre += math.log((n - k) * (a + k)) - math.log(b + n - 1.0 - k)
        f = gauss_2f1(-(n - order), a + order, -b - n + 1.0 + order, s, ctl)
        return logpre + math.log(f) if f > 0.0 else -np.inf

    def _base_pgf_derivative(self, order, s, ctl):
        return math.exp(self._log_pgf_derivative(order, s, ctl))

    def _base_sample(self, rng, size):
        p = rng.beta(self.a, self.b, size=size)
        return rng.binomial(self.n, p)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        def inner(n):
            return _generic_mle(
                cls,
                values,
                weights,
                fixed={**fixed, "n": n},
                free_spec=[("a", "log"), ("b", "log")],
                init=_beta_binomial_init(values, weights, n),
            )

        if "n" in fixed:
            return inner(_check_count("n", fixed["n"]))
        nmin = max(int(values.max()), 1)
        best = None
        stale = 0
        iters = 0
        for n in range(nmin, nmin + 200):
            model, info = inner(n)
            ll = model.loglik(values, weights)
            iters += info["iterations"]
            if best is None or ll > best[0] + 1e-10:
                best = (ll, model, info)
                stale = 0
            else:
                stale += 1
                if stale >= 5:
                    break
        ll, model, info = best
        info["iterations"] = iters
        if stale < 5:
            info["flags"].add("n-search-cap")
        return model, info


def _beta_binomial_init(values, weights, n):
    wtot = weights.sum()
    mean = float(np.dot(values, weights) / wtot)
    var = float(np.dot((values - mean) ** 2, weights) / wtot)
    m1 = min(max(mean / n, 1e-6), 1.0 - 1e-6)
    base = n * m1 * (1.0 - m1)
    if var > base > 0.0 and n > 1:
        c = (n - 1.0) / (var / base - 1.0 + 1e-12) - 1.0
    else:
        c = 50.0
    c = min(max(c, 1e-2), 1e4)
    return {"a": m1 * c, "b": (1.0 - m1) * c}


class BetaNegativeBinomial(SumModel):
    """NB(r, p) with 1 - p ~ Beta(a, b); power tail with exponent a."""

    family = "beta-negative-binomial"
    n_params = 3

    def __init__(self, r, a, b, shift=0):
        self.r = _check_positive("r", r)
        self.a = _check_positive("a", a)
        self.b = _check_positive("b", b)
        super().__init__(shift)

    def params(self):
        return {"r": self.r, "a": self.a, "b": self.b}

    def _base_support(self):
        return 0, math.inf

    def _base_log_pmf(self, z):
        r, a, b = self.r, self.a, self.b
        return (
            _log_poch(a, r)
            - _log_poch(a + b, r)
            + _log_poch(r, z)
            + _log_poch(b, z)
            - _log_poch(r + a + b, z)
            - gammaln(z + 1.0)
        )

    def _base_factorial_moments(self):
        r, a, b = self.r, self.a, self.b
        if a <= 1.0:
            raise ValueError("undefined moment: beta-negative-binomial mean needs a > 1")
        m1 = r * b / (a - 1.0)
        if a <= 2.0:
            raise ValueError(
                "undefined moment: beta-negative-binomial second factorial moment needs a > 2"
            )
        m2 = r * (r + 1.0) * b * (b + 1.0) / ((a - 1.0) * (a - 2.0))
        return m1, m2

    def mean(self):
        r, a, b = self.r, self.a, self.b
        if a <= 1.0:
            raise ValueError("undefined moment: beta-negative-binomial mean needs a > 1")
        return r * b / (a - 1.0) + self.shift

    def _log_pgf_derivative(self, order, s, ctl):
        r, a, b = self.r, self.a, self.b
        logpre = (
            _log_poch(a, r)
            - _log_poch(a + b, r)
            + _log_poch(r, order)
            + _log_poch(b, order)
            - _log_poch(r + a + b, order)
        )
        if s == 0.0:
            return logpre
        return logpre + _log_2f1_positive(r + order, b + order, r + a + b + order, s, ctl)

    def _base_pgf_derivative(self, order, s, ctl):
        return math.exp(self._log_pgf_derivative(order, s, ctl))

    def _base_sample(self, rng, size):
        u = rng.beta(self.a, self.b, size=size)
        return rng.negative_binomial(self.r, u)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        mean = float(np.dot(values, weights) / weights.sum())
        a0 = fixed.get("a", 2.5)
        r0 = fixed.get("r", 1.0)
        init = {"r": r0, "a": a0, "b": max(mean * (a0 - 1.0) / r0, 1e-3)}
        return _generic_mle(
            cls,
            values,
            weights,
            fixed=fixed,
            free_spec=[("r", "log"), ("a", "log"), ("b", "log")],
            init=init,
        )


class BetaPoisson(SumModel):
    """Poisson(lam * p) with p ~ Beta(a, b)."""

    family = "beta-poisson"
    n_params = 3

    def __init__(self, lam, a, b, shift=0):
        self.lam = _check_positive("lam", lam)
        self.a = _check_positive("a", a)
        self.b = _check_positive("b", b)
        super().__init__(shift)

    def params(self):
        return {"lam": self.lam, "a": self.a, "b": self.b}

    def _base_support(self):
        return 0, math.inf

    def _base_log_pmf(self, z):
        lam, a, b = self.lam, self.a, self.b
        out = np.empty(z.shape)
        for i, zz in enumerate(z):
            # 1F1(a+z; a+b+z; -lam) through the Kummer transform
            out[i] = (
                _log_poch(a, zz)
                - _log_poch(a + b, zz)
                + zz * math.log(lam)
                - gammaln(zz + 1.0)
                - lam
                + math.log(confluent_1f1(b, a + b + zz, lam))
            )
        return out

    def _base_factorial_moments(self):
        lam, a, b = self.lam, self.a, self.b
        c = a + b
        return lam * a / c, lam * lam * a * (a + 1.0) / (c * (c + 1.0))

    def _base_pgf_derivative(self, order, s, ctl):
        lam, a, b = self.lam, self.a, self.b
        pre = lam**order * math.exp(_log_poch(a, order) - _log_poch(a + b, order))
        return pre * confluent_1f1(a + order, a + b + order, lam * (s - 1.0), ctl)

    def _base_sample(self, rng, size):
        p = rng.beta(self.a, self.b, size=size)
        return rng.poisson(self.lam * p)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        mean = float(np.dot(values, weights) / weights.sum())
        init = {"lam": max(2.0 * mean, 0.1), "a": 1.0, "b": 1.0}
        return _generic_mle(
            cls,
            values,
            weights,
            fixed=fixed,
            free_spec=[("lam", "log"), ("a", "log"), ("b", "log")],
            init=init,
        )


# ---------------------------------------------------------------------------
# thinned beta compounds
# ---------------------------------------------------------------------------


class _ThinnedCompound(SumModel):
    """Binomial(Z, pi) where Z follows a beta compound; PMF through the
    identity P(Y=y) = pi^y / y! * G_Z^(y)(1 - pi)."""

    _base_cls = None

    def _inner(self):
        raise NotImplementedError

    def _base_log_pmf(self, z):
        inner = self._inner()
        pi = self.pi
        if pi == 1.0:
            return inner.log_pmf(z)
        out = np.empty(z.shape)
        for i, zz in enumerate(z):
            y = int(zz)
            logg = inner._log_pgf_derivative(y, 1.0 - pi, DEFAULT_CONTROL)
            out[i] = y * math.log(pi) - gammaln(y + 1.0) + logg
        return out

    def _base_factorial_moments(self):
        m1, m2 = self._inner()._base_factorial_moments()
        return self.pi * m1, self.pi * self.pi * m2

    def _base_pgf_derivative(self, order, s, ctl):
        pi = self.pi
        return pi**order * self._inner()._base_pgf_derivative(
            order, 1.0 - pi + pi * s, ctl
        )

    def _base_sample(self, rng, size):
        z = self._inner()._base_sample(rng, size)
        return rng.binomial(z, self.pi)


class GeneralizedBetaBinomial(_ThinnedCompound):
    """Beta-binomial total thinned by an independent Binomial(., pi)."""

    family = "generalized-beta-binomial"
    n_params = 4

    def __init__(self, n, a, b, pi, shift=0):
        self.n = _check_count("n", n)
        self.a = _check_positive("a", a)
        self.b = _check_positive("b", b)
        self.pi = _check_prob("pi", pi, open_right=False)
        super().__init__(shift)

    def params(self):
        return {"n": self.n, "a": self.a, "b": self.b, "pi": self.pi}

    def _inner(self):
        return BetaBinomial(self.n, self.a, self.b)

    def _base_support(self):
        return 0, self.n

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        if "n" not in fixed:
            raise ValueError("generalized-beta-binomial fitting requires fixed n")
        n = _check_count("n", fixed["n"])
        init = {**_beta_binomial_init(values, weights, n), "pi": 0.5}
        return _generic_mle(
            cls,
            values,
            weights,
            fixed=fixed,
            free_spec=[("a", "log"), ("b", "log"), ("pi", "logit")],
            init=init,
        )


class GeneralizedBetaNegativeBinomial(_ThinnedCompound):
    """Beta-negative-binomial total thinned by an independent Binomial(., pi)."""

    family = "generalized-beta-negative-binomial"
    n_params = 4

    def __init__(self, r, a, b, pi, shift=0):
        self.r = _check_positive("r", r)
        self.a = _check_positive("a", a)
        self.b = _check_positive("b", b)
        self.pi = _check_prob("pi", pi, open_right=False)
        super().__init__(shift)

    def params(self):
        return {"r": self.r, "a": self.a, "b": self.b, "pi": self.pi}

    def _inner(self):
        return BetaNegativeBinomial(self.r, self.a, self.b)

    def _base_support(self):
        return 0, math.inf

    def mean(self):
        return self.pi * self._inner().mean() + self.shift

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        mean = float(np.dot(values, weights) / weights.sum())
        a0 = fixed.get("a", 2.5)
        init = {
            "r": fixed.get("r", 1.0),
            "a": a0,
            "b": max(2.0 * mean * (a0 - 1.0), 1e-3),
            "pi": 0.5,
        }
        return _generic_mle(
            cls,
            values,
            weights,
            fixed=fixed,
            free_spec=[("r", "log"), ("a", "log"), ("b", "log"), ("pi", "logit")],
            init=init,
        )


# ---------------------------------------------------------------------------
# beta-square compounds (latent p = product of two independent betas)
# ---------------------------------------------------------------------------


class _BetaSquareCompound(SumModel):
    def _kernel_log_pmf(self, z, p):
        """Conditional log PMF given the latent product; broadcasts (Z,1)x(1,P)."""
        raise NotImplementedError

    def _kernel_pgf_derivative(self, order, s, p):
        raise NotImplementedError

    def _base_log_pmf(self, z):
        # quadrature is expensive, so memoize per count; models are immutable
        cache = self.__dict__.setdefault("_pmf_cache", {})
        flat = z.ravel()
        missing = np.unique(flat[~np.isin(flat, list(cache))])
        block = 256
        for start in range(0, missing.size, block):
            zz = missing[start : start + block]

            def fn(p):
                return np.exp(self._kernel_log_pmf(zz[:, None], p[None, :]))

            vals = _product_beta_expect(fn, self.a1, self.b1, self.a2, self.b2)
            with np.errstate(divide="ignore"):
                logs = np.log(np.maximum(vals, 0.0))
            cache.update(zip(zz.tolist(), np.atleast_1d(logs).tolist()))
        return np.array([cache[k] for k in flat.tolist()]).reshape(z.shape)

    def _base_pgf_derivative(self, order, s, ctl):
        def fn(p):
            return self._kernel_pgf_derivative(order, s, p)

        return float(
            _product_beta_expect(fn, self.a1, self.b1, self.a2, self.b2)
        )

    def _latent(self, rng, size):
        return rng.beta(self.a1, self.b1, size=size) * rng.beta(
            self.a2, self.b2, size=size
        )

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        raise NotImplementedError


class BetaSquareBinomial(_BetaSquareCompound):
    """Binomial(n, p) with p a product of Beta(a1,b1) and Beta(a2,b2)."""

    family = "beta-square-binomial"
    n_params = 5

    def __init__(self, n, a1, b1, a2, b2, shift=0):
        self.n = _check_count("n", n)
        self.a1 = _check_positive("a1", a1)
        self.b1 = _check_positive("b1", b1)
        self.a2 = _check_positive("a2", a2)
        self.b2 = _check_positive("b2", b2)
        super().__init__(shift)

    def params(self):
        return {"n": self.n, "a1": self.a1, "b1": self.b1, "a2": self.a2, "b2": self.b2}

    def _base_support(self):
        return 0, self.n

    def _kernel_log_pmf(self, z, p):
        n = float(self.n)
        return _log_binom(n, z) + z * np.log(p) + (n - z) * np.log1p(-p)

    def _kernel_pgf_derivative(self, order, s, p):
        n = float(self.n)
        if order > self.n:
            return np.zeros_like(p)
        return _falling(n, order) * p**order * (1.0 - p + p * s) ** (n - order)

    def _base_factorial_moments(self):
        n = float(self.n)
        e1 = (self.a1 / (self.a1 + self.b1)) * (self.a2 / (self.a2 + self.b2))
        e2 = (
            self.a1 * (self.a1 + 1.0) / ((self.a1 + self.b1) * (self.a1 + self.b1 + 1.0))
        ) * (
            self.a2 * (self.a2 + 1.0) / ((self.a2 + self.b2) * (self.a2 + self.b2 + 1.0))
        )
        return n * e1, n * (n - 1.0) * e2

    def _base_sample(self, rng, size):
        return rng.binomial(self.n, self._latent(rng, size))

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        if "n" not in fixed:
            raise ValueError("beta-square-binomial fitting requires fixed n")
        init = {"a1": 1.0, "b1": 1.0, "a2": 1.0, "b2": 1.0}
        return _generic_mle(
            cls,
            values,
            weights,
            fixed=fixed,
            free_spec=[(k, "log") for k in ("a1", "b1", "a2", "b2")],
            init=init,
        )


class BetaSquareNegativeBinomial(_BetaSquareCompound):
    """NB(r, p) with p a product of two independent betas."""

    family = "beta-square-negative-binomial"
    n_params = 5

    def __init__(self, r, a1, b1, a2, b2, shift=0):
        self.r = _check_positive("r", r)
        self.a1 = _check_positive("a1", a1)
        self.b1 = _check_positive("b1", b1)
        self.a2 = _check_positive("a2", a2)
        self.b2 = _check_positive("b2", b2)
        super().__init__(shift)

    def params(self):
        return {"r": self.r, "a1": self.a1, "b1": self.b1, "a2": self.a2, "b2": self.b2}

    def _base_support(self):
        return 0, math.inf

    def _kernel_log_pmf(self, z, p):
        r = self.r
        return _log_poch(r, z) - gammaln(z + 1.0) + r * np.log1p(-p) + z * np.log(p)

    def _kernel_pgf_derivative(self, order, s, p):
        r = self.r
        return (
            (1.0 - p) ** r
            * math.exp(_log_poch(r, order))
            * p**order
            * (1.0 - p * s) ** -(r + order)
        )

    def _base_factorial_moments(self):
        if self.b1 + self.b2 <= 1.0:
            raise ValueError(
                "undefined moment: beta-square-negative-binomial mean needs b1 + b2 > 1"
            )
        m1 = self.r * float(
            _product_beta_expect(
                lambda p: p / (1.0 - p), self.a1, self.b1, self.a2, self.b2
            )
        )
        if self.b1 + self.b2 <= 2.0:
            raise ValueError(
                "undefined moment: beta-square-negative-binomial second factorial"
                " moment needs b1 + b2 > 2"
            )
        m2 = (
            self.r
            * (self.r + 1.0)
            * float(
                _product_beta_expect(
                    lambda p: (p / (1.0 - p)) ** 2, self.a1, self.b1, self.a2, self.b2
                )
            )
        )
        return m1, m2

    def _base_sample(self, rng, size):
        return rng.negative_binomial(self.r, 1.0 - self._latent(rng, size))

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        init = {"r": fixed.get("r", 1.0), "a1": 1.0, "b1": 2.0, "a2": 1.0, "b2": 2.0}
        return _generic_mle(
            cls,
            values,
            weights,
            fixed=fixed,
            free_spec=[(k, "log") for k in ("r", "a1", "b1", "a2", "b2")],
            init=init,
        )


class BetaSquarePoisson(_BetaSquareCompound):
    """Poisson(lam * p) with p a product of two independent betas."""

    family = "beta-square-poisson"
    n_params = 5

    def __init__(self, lam, a1, b1, a2, b2, shift=0):
        self.lam = _check_positive("lam", lam)
        self.a1 = _check_positive("a1", a1)
        self.b1 = _check_positive("b1", b1)
        self.a2 = _check_positive("a2", a2)
        self.b2 = _check_positive("b2", b2)
        super().__init__(shift)

    def params(self):
        return {
            "lam": self.lam,
            "a1": self.a1,
            "b1": self.b1,
            "a2": self.a2,
            "b2": self.b2,
        }

    def _base_support(self):
        return 0, math.inf

    def _kernel_log_pmf(self, z, p):
        lam = self.lam
        return -lam * p + z * np.log(lam * p) - gammaln(z + 1.0)

    def _kernel_pgf_derivative(self, order, s, p):
        lam = self.lam
        return (lam * p) ** order * np.exp(lam * p * (s - 1.0))

    def _base_factorial_moments(self):
        e1 = (self.a1 / (self.a1 + self.b1)) * (self.a2 / (self.a2 + self.b2))
        e2 = (
            self.a1 * (self.a1 + 1.0) / ((self.a1 + self.b1) * (self.a1 + self.b1 + 1.0))
        ) * (
            self.a2 * (self.a2 + 1.0) / ((self.a2 + self.b2) * (self.a2 + self.b2 + 1.0))
        )
        return self.lam * e1, self.lam**2 * e2

    def _base_sample(self, rng, size):
        return rng.poisson(self.lam * self._latent(rng, size))

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        mean = float(np.dot(values, weights) / weights.sum())
        init = {"lam": max(4.0 * mean, 0.1), "a1": 1.0, "b1": 1.0, "a2": 1.0, "b2": 1.0}
        return _generic_mle(
            cls,
            values,
            weights,
            fixed=fixed,
            free_spec=[(k, "log") for k in ("lam", "a1", "b1", "a2", "b2")],
            init=init,
        )


# ---------------------------------------------------------------------------
# derived laws
# ---------------------------------------------------------------------------


class TruncatedShifted(SumModel):
    """Law of Z - delta given Z >= delta, for a sum model Z."""

    family = "truncated-shifted"

    def __init__(self, base, delta, shift=0):
        if not isinstance(base, SumModel):
            raise TypeError("base must be a SumModel")
        delta = int(delta)
        low, high = base.support()
        if delta > high:
            raise ValueError("truncation point beyond the base support")
        self.base = base
        self.delta = delta
        head = float(base.pmf(np.arange(low, max(delta, low))).sum()) if delta > low else 0.0
        if head >= 1.0 - 1e-15:
            raise ValueError("conditioning event Z >= delta has no mass")
        self._log_norm = math.log1p(-head)
        self.n_params = base.n_params
        super().__init__(shift)

    def params(self):
        return {"base": self.base, "delta": self.delta}

    def __repr__(self):
        return f"TruncatedShifted({self.base!r}, delta={self.delta})"

    def _base_support(self):
        low, high = self.base.support()
        return max(low - self.delta, 0), high - self.delta

    def _base_log_pmf(self, z):
        return self.base.log_pmf(z + self.delta) - self._log_norm

    def _base_factorial_moments(self):
        return _numeric_factorial_moments(self)

    def _base_pgf_derivative(self, order, s, ctl):
        return self._series_pgf_derivative(order, s, ctl)

    def _base_sample(self, rng, size):
        return self._sample_by_inversion(rng, size)


# ---------------------------------------------------------------------------
# generic numeric MLE
# ---------------------------------------------------------------------------

_TRANSFORMS = {
    "log": (math.log, math.exp),
    "logit": (
        lambda p: math.log(p / (1.0 - p)),
        lambda t: 1.0 / (1.0 + math.exp(-t)),
    ),
    "identity": (lambda x: x, lambda x: x),
}


def _generic_mle(cls, values, weights, fixed, free_spec, init):
    """Quasi-Newton MLE on transformed parameters with fixed overrides."""
    free_spec = [(name, tr) for name, tr in free_spec if name not in fixed]
    if not free_spec:
        model = cls(**fixed)
        return model, {"converged": True, "iterations": 0, "flags": set()}

    def build(theta):
        kwargs = dict(fixed)
        for (name, tr), t in zip(free_spec, theta):
            kwargs[name] = _TRANSFORMS[tr][1](t)
        return cls(**kwargs)

    def negloglik(theta):
        try:
            model = build(theta)
        except (ValueError, OverflowError):
            return 1e100
        ll = model.loglik(values, weights)
        return -ll if np.isfinite(ll) else 1e100

    x0 = np.array([_TRANSFORMS[tr][0](init[name]) for name, tr in free_spec])
    res = minimize(negloglik, x0, method="L-BFGS-B", options={"maxiter": 500})
    flags = set() if res.success else {"optimizer-not-converged"}
    try:
        model = build(res.x)
    except (ValueError, OverflowError):
        flags |= {"optimizer-not-converged", "non-finite-optimum"}
        return None, {"converged": False, "iterations": int(res.nit), "flags": flags}
    return model, {"converged": bool(res.success), "iterations": int(res.nit), "flags": flags}


# ---------------------------------------------------------------------------
# registry and dispatch
# ---------------------------------------------------------------------------

FAMILIES = {
    cls.family: cls
    for cls in (
        Dirac,
        Binomial,
        NegativeBinomial,
        Poisson,
        Geometric,
        Logarithmic,
        ZeroModifiedLogarithmic,
        BetaBinomial,
        BetaNegativeBinomial,
        BetaPoisson,
        GeneralizedBetaBinomial,
        GeneralizedBetaNegativeBinomial,
        BetaSquareBinomial,
        BetaSquareNegativeBinomial,
        BetaSquarePoisson,
    )
}


def make_sum(family, params, shift=0):
    """Instantiate a sum family from its tag and a parameter dict."""
    if family not in FAMILIES:
        raise KeyError(f"unknown sum family {family!r}")
    return FAMILIES[family](**params, shift=shift)


def sum_fit(
    family,
    data,
    weights=None,
    fixed=None,
    shift=0,
    ctl: SeriesControl = DEFAULT_CONTROL,
):
    """Weighted MLE for a sum family; ``shift='auto'`` searches the
    admissible integer shift range and keeps the best likelihood."""
    if family not in FAMILIES:
        raise KeyError(f"unknown sum family {family!r}")
    cls = FAMILIES[family]
    if shift == "auto":
        data_arr = np.asarray(data, dtype=float)
        low = cls._fit_support_low()
        lo_shift = -low
        hi_shift = int(data_arr.min()) - low
        candidates = range(lo_shift, hi_shift + 1)
        if len(candidates) > 64:
            candidates = range(hi_shift - 63, hi_shift + 1)
        best = None
        for d in candidates:
            try:
                model, info = cls.fit(data, weights, fixed, d, ctl)
            except ValueError:
                continue
            if model is None:
                continue
            ll = model.loglik(data, weights)
            if best is None or ll > best[0]:
                best = (ll, model, info)
        if best is None:
            raise ValueError(f"no admissible shift for {family}")
        _, model, info = best
        info["shift"] = model.shift
        return model, info
    return cls.fit(data, weights, fixed, int(shift), ctl)
