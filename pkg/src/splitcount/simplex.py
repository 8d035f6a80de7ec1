"""Count distributions on the discrete simplex and their convolution algebra.

The families here (multinomial, Dirichlet multinomial, multivariate
hypergeometric) share one construction: a parametric sequence a(t, y),
additive under convolution, gives the simplex PMF

    P(Y = y | |Y| = n) = prod_j a(t_j, y_j) / a(|t|, n).

The same additivity yields the law of one coordinate block after the rest
is summed out; `DamageSum` packages that block total, compounded over a
random grand total, as an ordinary univariate sum distribution.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import digamma, gammaln, logsumexp

from .series import DEFAULT_CONTROL, NonConvergenceError, SeriesControl
from .sums import SumModel

SIMPLEX_CAP = 10**7
FLAT_TOTAL = 1e6


def enumerate_simplex(dim, total, cap=SIMPLEX_CAP):
    """All vectors of `dim` non-negative integers summing to `total`, in
    lexicographic order, as an int array of shape (count, dim)."""
    dim, total = int(dim), int(total)
    if dim < 1 or total < 0:
        raise ValueError("need dim >= 1 and total >= 0")
    count = math.comb(total + dim - 1, dim - 1)
    if count > cap:
        raise ValueError(f"simplex has {count} points, above the cap of {cap}")
    out = np.empty((count, dim), dtype=np.int64)
    # stars and bars: bar positions in lex order give compositions in lex order
    for i, bars in enumerate(itertools.combinations(range(total + dim - 1), dim - 1)):
        edges = (-1,) + bars + (total + dim - 1,)
        out[i] = [edges[j + 1] - edges[j] - 1 for j in range(dim)]
    return out


class ConvolutionSequence:
    """A non-negative sequence a(t, y), additive under convolution:
    sum_y a(t, y) a(t', n - y) = a(t + t', n).

    `polya_c` is the urn step: the three instances are a(t, y) =
    prod_{i<y} (t + c i) / y! with c = 0, +1, -1.
    """

    name = None
    polya_c = 0.0

    def eval(self, t, y):
        """log a(t, y); broadcasts over arrays, -inf where a vanishes."""
        raise NotImplementedError

    def normalizer(self, total, n):
        """log of the simplex normalizing constant, a(|t|, n) by additivity."""
        return self.eval(total, n)

    def max_count(self, t):
        """Largest y with a(t, y) > 0."""
        return math.inf

    def mean_factor(self, t, total):
        """E of one block over its conditional given a total n is n times this."""
        return t / total

    def pair_factor(self, t, total):
        """E[M (M - 1) | n] = n (n - 1) times this, for a block of weight t."""
        c = self.polya_c
        return t * (t + c) / (total * (total + c))

    def split_sample(self, t, gamma, ns, rng):
        """Draw the block total given grand totals `ns`."""
        raise NotImplementedError


class MultinomialSequence(ConvolutionSequence):
    name = "multinomial"
    polya_c = 0.0

    def eval(self, t, y):
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = y * np.log(t) - gammaln(y + 1.0)
        # 0^0 = 1 so a degenerate category still carries the zero count
        return np.where((t == 0.0) & (y == 0.0), 0.0, out)

    def split_sample(self, t, gamma, ns, rng):
        return rng.binomial(ns, t / (t + gamma))


class DirichletMultinomialSequence(ConvolutionSequence):
    name = "dirichlet-multinomial"
    polya_c = 1.0

    def eval(self, t, y):
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        return gammaln(t + y) - gammaln(t) - gammaln(y + 1.0)

    def split_sample(self, t, gamma, ns, rng):
        ns = np.asarray(ns)
        return rng.binomial(ns, rng.beta(t, gamma, size=ns.shape))


class HypergeometricSequence(ConvolutionSequence):
    name = "hypergeometric"
    polya_c = -1.0

    def eval(self, t, y):
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        out = gammaln(t + 1.0) - gammaln(y + 1.0) - gammaln(t - y + 1.0)
        return np.where(y <= np.floor(t), out, -np.inf)

    def max_count(self, t):
        return math.floor(t)

    def split_sample(self, t, gamma, ns, rng):
        return rng.hypergeometric(int(round(t)), int(round(gamma)), ns)


MULTINOMIAL_SEQUENCE = MultinomialSequence()
DIRICHLET_SEQUENCE = DirichletMultinomialSequence()
HYPERGEOMETRIC_SEQUENCE = HypergeometricSequence()


class SingularModel:
    """A distribution on the simplex {y : |y| = n}, for every n at once."""

    kind = None
    sequence: ConvolutionSequence = None

    def weightvec(self):
        """The sequence parameters, one per category."""
        raise NotImplementedError

    @property
    def dim(self):
        return self.weightvec().size

    def total(self):
        return float(self.weightvec().sum())

    def restrict(self, coords):
        """Same-kind model on a subset of categories."""
        raise NotImplementedError

    def log_pmf(self, n, y):
        """log P(Y = y | |Y| = n); y a vector or a matrix of rows."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 1
        rows = np.atleast_2d(y)
        if rows.shape[1] != self.dim:
            raise ValueError(
                f"y has {rows.shape[1]} categories, model has {self.dim}"
            )
        n = np.broadcast_to(np.asarray(n, dtype=float), (rows.shape[0],))
        w = self.weightvec()
        ok = (
            np.all((rows >= 0) & (rows == np.floor(rows)), axis=1)
            & (rows.sum(axis=1) == n)
            & (n == np.floor(n))
        )
        out = np.full(rows.shape[0], -np.inf)
        if ok.any():
            seq = self.sequence
            parts = seq.eval(w[None, :], rows[ok]).sum(axis=1)
            norm = seq.normalizer(self.total(), n[ok])
            with np.errstate(invalid="ignore"):
                vals = np.where(np.isfinite(norm), parts - norm, -np.inf)
            out[ok] = vals
        return float(out[0]) if scalar else out

    def pmf(self, n, y):
        return np.exp(self.log_pmf(n, y))

    def sample(self, n, rng, count=None):
        """Draws from the conditional law on the simplex of total n."""
        n = int(n)
        ns = np.full(1 if count is None else int(count), n)
        draws = self.sample_many(ns, rng)
        return draws[0] if count is None else draws

    def sample_many(self, ns, rng):
        """One draw per entry of `ns`, stacked as rows."""
        raise NotImplementedError

    def mean_direction(self):
        """E[Y | n] = n times this vector."""
        w = self.weightvec()
        return w / w.sum()

    def pair_moment_matrix(self):
        """M with E[Y_i Y_j | n] = n (n-1) M_ij off the diagonal and
        E[Y_j (Y_j - 1) | n] = n (n-1) M_jj on it."""
        w = self.weightvec()
        c = self.sequence.polya_c
        t = w.sum()
        return (np.outer(w, w) + c * np.diag(w)) / (t * (t + c))

    def conditional_moments(self, n):
        """(mean, covariance) of Y given |Y| = n."""
        n = float(n)
        m1 = n * self.mean_direction()
        second = n * (n - 1.0) * self.pair_moment_matrix() + np.diag(m1)
        return m1, second - np.outer(m1, m1)

    def block_weights(self, coords):
        """(weight inside `coords`, weight outside)."""
        coords = _check_coords(coords, self.dim)
        w = self.weightvec()
        inside = float(w[coords].sum())
        return inside, float(w.sum() - inside)

    def __repr__(self):
        vec = np.array2string(self.weightvec(), separator=", ", precision=6)
        return f"{type(self).__name__}({vec})"


def _check_coords(coords, dim):
    coords = np.atleast_1d(np.asarray(coords, dtype=int))
    if coords.size == 0 or np.unique(coords).size != coords.size:
        raise ValueError("coords must be a non-empty set of distinct indices")
    if coords.min() < 0 or coords.max() >= dim:
        raise ValueError(f"coords out of range for dimension {dim}")
    return coords


class Multinomial(SingularModel):
    """Simplex multinomial; stored as the normalized representative since
    scaling all weights by a constant leaves the law unchanged."""

    kind = "multinomial"
    sequence = MULTINOMIAL_SEQUENCE

    def __init__(self, pi):
        pi = np.asarray(pi, dtype=float)
        if pi.ndim != 1 or pi.size < 1:
            raise ValueError("pi must be a 1-D vector")
        if not np.all(pi > 0) or not np.all(np.isfinite(pi)):
            raise ValueError("weights must be positive and finite")
        self.pi = pi / pi.sum()

    def weightvec(self):
        return self.pi

    def restrict(self, coords):
        return Multinomial(self.pi[_check_coords(coords, self.dim)])

    def sample_many(self, ns, rng):
        return rng.multinomial(np.asarray(ns, dtype=np.int64), self.pi)


class DirichletMultinomial(SingularModel):
    """Multinomial mixed over a latent Dirichlet direction."""

    kind = "dirichlet-multinomial"
    sequence = DIRICHLET_SEQUENCE

    def __init__(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size < 1:
            raise ValueError("alpha must be a 1-D vector")
        if not np.all(alpha > 0) or not np.all(np.isfinite(alpha)):
            raise ValueError("alpha must be positive and finite")
        self.alpha = alpha

    def weightvec(self):
        return self.alpha

    def restrict(self, coords):
        return DirichletMultinomial(self.alpha[_check_coords(coords, self.dim)])

    def sample_many(self, ns, rng):
        ns = np.asarray(ns, dtype=np.int64)
        probs = rng.dirichlet(self.alpha, size=ns.size)
        return rng.multinomial(ns, probs)


class MultivariateHypergeometric(SingularModel):
    """Drawing n items without replacement from categories of sizes k."""

    kind = "hypergeometric"
    sequence = HYPERGEOMETRIC_SEQUENCE

    def __init__(self, k):
        k = np.asarray(k)
        if k.ndim != 1 or k.size < 1:
            raise ValueError("k must be a 1-D vector")
        if not np.all(k == np.floor(np.asarray(k, dtype=float))) or np.any(k < 0):
            raise ValueError("k must be non-negative integers")
        if int(np.sum(k)) < 1:
            raise ValueError("need at least one item overall")
        self.k = np.asarray(k, dtype=np.int64)

    def weightvec(self):
        return np.asarray(self.k, dtype=float)

    def restrict(self, coords):
        return MultivariateHypergeometric(self.k[_check_coords(coords, self.dim)])

    def sample_many(self, ns, rng):
        ns = np.asarray(ns, dtype=np.int64)
        cap = int(self.k.sum())
        if np.any(ns > cap):
            raise ValueError(f"cannot draw more than {cap} items without replacement")
        out = np.empty((ns.size, self.dim), dtype=np.int64)
        # numpy draws one fixed total at a time, so group equal totals
        for n in np.unique(ns):
            rows = np.flatnonzero(ns == n)
            out[rows] = rng.multivariate_hypergeometric(self.k, int(n), size=rows.size)
        return out


KINDS = {
    "multinomial": Multinomial,
    "dirichlet-multinomial": DirichletMultinomial,
    "hypergeometric": MultivariateHypergeometric,
}


def make_singular(kind, weights):
    if kind not in KINDS:
        raise KeyError(f"unknown singular kind {kind!r}")
    return KINDS[kind](weights)


# -- estimation --------------------------------------------------------------


def _as_count_matrix(data):
    rows = np.asarray(data, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise ValueError("data must be a non-empty matrix of count rows")
    if not np.all((rows >= 0) & (rows == np.floor(rows)) & np.isfinite(rows)):
        raise ValueError("data must contain non-negative integers")
    return rows


def _as_weights(weights, count):
    if weights is None:
        return np.ones(count)
    w = np.asarray(weights, dtype=float)
    if w.shape != (count,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be non-negative, one per row")
    if w.sum() <= 0:
        raise ValueError("weights must not all be zero")
    return w


def multinomial_mle(data, weights=None):
    """Closed-form weighted MLE of the simplex multinomial direction.

    Returns (pi_hat, info); a category never observed gives a zero entry
    and a "boundary" flag rather than being clamped away.
    """
    rows = _as_count_matrix(data)
    w = _as_weights(weights, rows.shape[0])
    colsums = w @ rows
    grand = colsums.sum()
    if grand <= 0:
        raise ValueError("all counts are zero; the direction is unidentified")
    pi = colsums / grand
    flags = {"boundary"} if np.any(pi == 0.0) else set()
    return pi, {"converged": True, "iterations": 0, "flags": flags}


def _dm_log_likelihood(alpha, rows, w, ns):
    seq = DIRICHLET_SEQUENCE
    parts = seq.eval(alpha[None, :], rows).sum(axis=1)
    return float(w @ (parts - seq.eval(alpha.sum(), ns)))


def _dm_scale_slope(rows, w, ns, d, t):
    """Derivative of the log-likelihood along alpha = t d at scale t."""
    a = t * d
    per_cat = (d[None, :] * (digamma(rows + a[None, :]) - digamma(a[None, :]))).sum(
        axis=1
    )
    return float(w @ (per_cat - (digamma(ns + t) - digamma(t))))


def dirichlet_multinomial_mle(
    data,
    weights=None,
    fixed_total=None,
    tol=1e-8,
    max_iter=10_000,
):
    """Weighted MLE of the Dirichlet multinomial on count rows.

    Unconstrained, alternates the digamma fixed point (which never
    decreases the likelihood but moves the overall scale very slowly) with
    a bounded line maximization of the profile over |alpha|; with
    `fixed_total` the total |alpha| is pinned and only the direction is
    optimized.  Returns (alpha_hat, info) where info holds `converged`,
    `iterations`, `flags` and the per-iteration `loglik_path`.

    When the counts are not overdispersed relative to the best multinomial,
    the likelihood keeps increasing in |alpha| and the supremum is the
    multinomial limit; that case returns the direction scaled to a large
    total with a "flat-direction" flag instead of iterating forever.
    """
    full_rows = _as_count_matrix(data)
    full_w = _as_weights(weights, full_rows.shape[0])
    # the likelihood only sees weighted unique rows
    rows, inverse = np.unique(full_rows, axis=0, return_inverse=True)
    w = np.bincount(inverse, weights=full_w)
    ns = rows.sum(axis=1)
    colsums = w @ rows
    if np.any(colsums <= 0):
        dead = np.flatnonzero(colsums <= 0)
        raise ValueError(
            f"degenerate category {dead.tolist()}: never observed, "
            "its weight is not estimable"
        )
    q = colsums / colsums.sum()

    if fixed_total is not None:
        return _dm_direction_mle(rows, w, ns, q, float(fixed_total))

    # slope of the likelihood in 1/|alpha| at the multinomial limit: if it
    # is not positive the maximum sits at |alpha| = infinity
    curv = float(w @ ((rows * (rows - 1.0) / q[None, :]).sum(axis=1) - ns * (ns - 1.0)))
    if curv <= 0:
        alpha = FLAT_TOTAL * q
        return alpha, {
            "converged": True,
            "iterations": 0,
            "flags": {"flat-direction"},
            "loglik_path": [_dm_log_likelihood(alpha, rows, w, ns)],
        }

    alpha = q.copy()
    path = [_dm_log_likelihood(alpha, rows, w, ns)]
    for it in range(1, max_iter + 1):
        numer = w @ (digamma(rows + alpha[None, :]) - digamma(alpha[None, :]))
        denom = float(w @ (digamma(ns + alpha.sum()) - digamma(alpha.sum())))
        new = alpha * numer / denom

        # rescale along the current ray: the fixed point's slow mode is the
        # total, so maximize the scale profile directly
        t = float(new.sum())
        d = new / t
        if _dm_scale_slope(rows, w, ns, d, FLAT_TOTAL) >= 0.0:
            alpha = FLAT_TOTAL * d
            path.append(_dm_log_likelihood(alpha, rows, w, ns))
            return alpha, {
                "converged": True,
                "iterations": it,
                "flags": {"flat-direction"},
                "loglik_path": path,
            }
        ll_new = _dm_log_likelihood(new, rows, w, ns)
        res = minimize_scalar(
            lambda u: -_dm_log_likelihood(math.exp(u) * d, rows, w, ns),
            bounds=(math.log(t) - 5.0, min(math.log(t) + 5.0, math.log(FLAT_TOTAL))),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if -res.fun > ll_new:
            new = math.exp(res.x) * d
            ll_new = -res.fun

        delta = float(np.max(np.abs(new - alpha)))
        alpha = new
        path.append(ll_new)
        if delta < tol:
            return alpha, {
                "converged": True,
                "iterations": it,
                "flags": set(),
                "loglik_path": path,
            }
    raise NonConvergenceError(
        f"Dirichlet multinomial fixed point still moving after {max_iter} iterations",
        path[-1],
        max_iter,
    )


def _dm_direction_mle(rows, w, ns, q, total):
    if not total > 0:
        raise ValueError("fixed_total must be positive")

    # the |alpha| part of the likelihood is a constant here, so optimize the
    # direction through unconstrained softmax coordinates
    def unpack(z):
        e = np.exp(z - z.max())
        return e / e.sum()

    def objective(z):
        alpha = total * unpack(z)
        ll = float(w @ (DIRICHLET_SEQUENCE.eval(alpha[None, :], rows).sum(axis=1)))
        g_alpha = w @ (digamma(rows + alpha[None, :]) - digamma(alpha[None, :]))
        qz = alpha / total
        grad = total * qz * (g_alpha - float(qz @ g_alpha))
        return -ll, -grad

    res = minimize(objective, np.log(q), jac=True, method="L-BFGS-B")
    alpha = total * unpack(res.x)
    return alpha, {
        "converged": bool(res.success),
        "iterations": int(res.nit),
        "flags": set() if res.success else {"optimizer-stopped"},
        "loglik_path": [_dm_log_likelihood(alpha, rows, w, ns)],
    }


# -- damage laws -------------------------------------------------------------


def convolution_damage_log_pmf(
    sequence, theta, gamma, sum_model, y, ctl: SeriesControl = DEFAULT_CONTROL
):
    """log P of a block total: sum_{k >= y} of the two-block split law
    a(theta, y) a(gamma, k - y) / a(theta + gamma, k) times P(|Y| = k),
    truncated where the tail mass of the sum distribution drops below
    ctl.rel_tol."""
    if not theta > 0 or not gamma > 0:
        raise ValueError("theta and gamma must be positive")
    y = int(y)
    if y < 0 or y > sequence.max_count(theta):
        return -math.inf
    low, _ = sum_model.support()
    upper = sum_model.support_upper(ctl.rel_tol)
    if upper - low + 1 > ctl.max_terms:
        raise NonConvergenceError(
            f"sum support needs more than {ctl.max_terms} terms", 0.0, int(ctl.max_terms)
        )
    ks = np.arange(max(low, y), upper + 1)
    if ks.size == 0:
        return -math.inf
    terms = (
        sequence.eval(theta, y)
        + sequence.eval(gamma, ks - y)
        - sequence.normalizer(theta + gamma, ks)
        + sum_model.log_pmf(ks)
    )
    return float(logsumexp(terms)) if terms.size else -math.inf


class DamageSum(SumModel):
    """Distribution of one block of an additive split when the grand total
    follows `total_law`: a univariate sum model usable anywhere one is."""

    family = "damage"
    n_params = 0

    def __init__(self, sequence, theta, gamma, total_law, ctl: SeriesControl = DEFAULT_CONTROL):
        if not theta > 0 or not gamma > 0:
            raise ValueError("theta and gamma must be positive")
        self.sequence = sequence
        self.theta = float(theta)
        self.gamma = float(gamma)
        self.total_law = total_law
        self.ctl = ctl
        super().__init__(0)

    def params(self):
        return {"theta": self.theta, "gamma": self.gamma}

    def __repr__(self):
        return (
            f"DamageSum({self.sequence.name}, theta={self.theta:g}, "
            f"gamma={self.gamma:g}, total={self.total_law!r})"
        )

    def _grid(self):
        if not hasattr(self, "_grid_cache"):
            low, _ = self.total_law.support()
            upper = self.total_law.support_upper(self.ctl.rel_tol)
            ks = np.arange(low, upper + 1)
            self._grid_cache = (ks, self.total_law.log_pmf(ks))
        return self._grid_cache

    def _base_support(self):
        high = min(self.sequence.max_count(self.theta), self.total_law.support()[1])
        return 0, high

    def _base_log_pmf(self, z):
        seq = self.sequence
        ks, logp = self._grid()
        out = np.full(z.shape, -np.inf)
        for start in range(0, z.size, 512):
            zz = z[start : start + 512, None]
            diff = ks[None, :] - zz
            with np.errstate(invalid="ignore"):
                terms = (
                    seq.eval(self.theta, zz)
                    + seq.eval(self.gamma, np.maximum(diff, 0))
                    - seq.normalizer(self.theta + self.gamma, ks[None, :])
                    + logp[None, :]
                )
            terms = np.where(diff >= 0, terms, -np.inf)
            out[start : start + 512] = logsumexp(terms, axis=1)
        return out

    def _base_factorial_moments(self):
        m1, m2 = self.total_law.factorial_moments()
        t, g = self.theta, self.gamma
        return (
            self.sequence.mean_factor(t, t + g) * m1,
            self.sequence.pair_factor(t, t + g) * m2,
        )

    def _base_pgf_derivative(self, order, s, ctl):
        return self._series_pgf_derivative(order, s, ctl)

    def _base_sample(self, rng, size):
        ns = self.total_law.sample(rng, size)
        return self.sequence.split_sample(self.theta, self.gamma, ns, rng)

    @classmethod
    def _fit_base(cls, values, weights, fixed, ctl):
        raise NotImplementedError("damage laws are derived, not fitted directly")
