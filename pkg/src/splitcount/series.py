"""Hypergeometric-type series with explicit truncation control.

Non-terminating series are truncated once new contributions fall below
``rel_tol`` relative to the running partial sum (two consecutive small
terms required), and raise :class:`NonConvergenceError` past ``max_terms``.
Series that terminate because an upper parameter is a non-positive integer
are summed exactly, with no tolerance-based truncation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "SeriesControl",
    "NonConvergenceError",
    "log_pochhammer",
    "log_multinomial_coefficient",
    "gauss_2f1",
    "confluent_1f1",
    "lauricella_d",
]

_TINY = 1e-300


@dataclass(frozen=True)
class SeriesControl:
    """Truncation policy shared by all series evaluators."""

    rel_tol: float = 1e-12
    max_terms: int = 1_000_000

    def __post_init__(self):
        if not self.rel_tol > 0.0:
            raise ValueError("rel_tol must be positive")
        if int(self.max_terms) < 1:
            raise ValueError("max_terms must be at least 1")


DEFAULT_CONTROL = SeriesControl()


class NonConvergenceError(ArithmeticError):
    """A series did not converge; carries the partial sum and term count."""

    def __init__(self, message, partial_sum, n_terms):
        super().__init__(
            f"{message} (partial sum {partial_sum!r} after {n_terms} terms)"
        )
        self.partial_sum = partial_sum
        self.n_terms = n_terms


def _is_nonpositive_integer(x) -> bool:
    return x <= 0.0 and float(x).is_integer()


def _termination_order(*uppers):
    """Index of the last nonzero term, or None if no upper parameter terminates."""
    orders = [int(-u) for u in uppers if _is_nonpositive_integer(u)]
    return min(orders) if orders else None


def _check_lower(c, terminate_at, what):
    # a lower parameter may be a non-positive integer only if the series
    # terminates strictly before the zero factor is reached
    if _is_nonpositive_integer(c) and (terminate_at is None or -c < terminate_at):
        raise ValueError(f"{what}: lower parameter {c} is a non-positive integer")


def log_pochhammer(a, n):
    """log of the rising factorial (a)_n = Gamma(a+n)/Gamma(a), for a > 0, n >= 0."""
    a = np.asarray(a, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(a <= 0.0):
        raise ValueError("log_pochhammer requires a > 0")
    if np.any(n < 0.0) or np.any(n != np.floor(n)):
        raise ValueError("log_pochhammer requires integer n >= 0")
    out = gammaln(a + n) - gammaln(a)
    return float(out) if out.ndim == 0 else out


def log_multinomial_coefficient(n, y):
    """log of n! / ((n - |y|)! * prod_j y_j!) for integer counts with |y| <= n."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("y must be non-empty")
    if np.any(y < 0.0) or np.any(y != np.floor(y)):
        raise ValueError("y must contain integers >= 0")
    n = float(n)
    if n < 0.0 or n != np.floor(n):
        raise ValueError("n must be an integer >= 0")
    total = float(y.sum())
    if total > n:
        raise ValueError(f"|y| = {total:g} exceeds n = {n:g}")
    return float(gammaln(n + 1.0) - gammaln(n - total + 1.0) - gammaln(y + 1.0).sum())


def _power_series(term_ratio, ctl, terminate_at, what):
    """Sum t_0 = 1.0 with t_{k+1} = t_k * term_ratio(k)."""
    total = 1.0
    t = 1.0
    small = 0
    kmax = terminate_at if terminate_at is not None else int(ctl.max_terms)
    for k in range(kmax):
        t *= term_ratio(k)
        total += t
        if not np.isfinite(total):
            raise NonConvergenceError(f"{what} overflowed", total, k + 1)
        if terminate_at is None:
            if abs(t) <= ctl.rel_tol * max(abs(total), _TINY):
                small += 1
                if small >= 2:
                    return total
            else:
                small = 0
    if terminate_at is None:
        raise NonConvergenceError(f"{what} did not converge", total, int(ctl.max_terms))
    return total


def gauss_2f1(a, b, c, s, ctl: SeriesControl = DEFAULT_CONTROL):
    """Gauss series sum_k (a)_k (b)_k / (c)_k * s^k / k!.

    Terminating series (a or b a non-positive integer) accept any real s and
    are summed exactly; otherwise 0 <= s < 1 is required.
    """
    a, b, c, s = float(a), float(b), float(c), float(s)
    terminate_at = _termination_order(a, b)
    if terminate_at is None and not 0.0 <= s < 1.0:
        raise ValueError("gauss_2f1 requires 0 <= s < 1 unless the series terminates")
    _check_lower(c, terminate_at, "gauss_2f1")
    if s == 0.0:
        return 1.0

    def ratio(k):
        return (a + k) * (b + k) / ((c + k) * (k + 1.0)) * s

    return _power_series(ratio, ctl, terminate_at, "gauss_2f1")


def confluent_1f1(b, c, s, ctl: SeriesControl = DEFAULT_CONTROL):
    """Kummer series sum_k (b)_k / (c)_k * s^k / k!.

    Negative arguments of non-terminating series are routed through the
    Kummer transform 1F1(b; c; s) = e^s 1F1(c-b; c; -s) to keep all summed
    terms positive.
    """
    b, c, s = float(b), float(c), float(s)
    terminate_at = _termination_order(b)
    _check_lower(c, terminate_at, "confluent_1f1")
    if s == 0.0:
        return 1.0
    if terminate_at is None and s < 0.0:
        return float(np.exp(s)) * confluent_1f1(c - b, c, -s, ctl)

    def ratio(k):
        return (b + k) / ((c + k) * (k + 1.0)) * s

    return _power_series(ratio, ctl, terminate_at, "confluent_1f1")


def _product_series_coefficients(b, s, length):
    """Taylor coefficients of prod_j (1 - s_j t)^(-b_j) up to degree length-1."""
    coef = np.zeros(length)
    coef[0] = 1.0
    for bj, sj in zip(b, s):
        f = np.empty(length)
        f[0] = 1.0
        for m in range(1, length):
            f[m] = f[m - 1] * sj * (bj + m - 1.0) / m
        coef = np.convolve(coef, f)[:length]
    return coef


def _shell_ratios(uppers, lowers, length):
    """r_n = prod_up (u)_n / prod_low (l)_n for n = 0 .. length-1."""
    n = np.arange(length - 1, dtype=float)
    step = np.ones(length - 1)
    for u in uppers:
        step = step * (u + n)
    for lo in lowers:
        step = step / (lo + n)
    return np.concatenate(([1.0], np.cumprod(step)))


def lauricella_d(a, b, c, s, ctl: SeriesControl = DEFAULT_CONTROL, second=None):
    """Multivariate series sum over y in N^J of
    (a)_{|y|} / (c)_{|y|} * prod_j (b_j)_{y_j} s_j^{y_j} / y_j!,
    optionally carrying a second upper/lower pair ``second=(a2, c2)`` whose
    Pochhammer ratio (a2)_{|y|} / (c2)_{|y|} multiplies every term.

    The sum is accumulated shell by shell in the total degree |y|; each shell
    is collapsed through the Taylor coefficients of prod_j (1 - s_j t)^(-b_j).
    Convergence is declared once two consecutive whole shells fall below
    ``rel_tol`` relative mass; ``max_terms`` caps the number of shells.
    Requires b_j > 0 and |s_j| < 1.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if b.ndim != 1 or b.shape != s.shape or b.size == 0:
        raise ValueError("b and s must be matching non-empty vectors")
    if np.any(b <= 0.0):
        raise ValueError("lauricella_d requires b_j > 0")
    if np.any(np.abs(s) >= 1.0):
        raise ValueError("lauricella_d requires |s_j| < 1")
    uppers = [float(a)]
    lowers = [float(c)]
    if second is not None:
        a2, c2 = second
        uppers.append(float(a2))
        lowers.append(float(c2))
    terminate_at = _termination_order(*uppers)
    for lo in lowers:
        _check_lower(lo, terminate_at, "lauricella_d")

    if terminate_at is not None:
        length = terminate_at + 1
        shells = _shell_ratios(uppers, lowers, length) * _product_series_coefficients(
            b, s, length
        )
        return float(shells.sum())

    length = 64
    partial = None
    while True:
        shells = _shell_ratios(uppers, lowers, length) * _product_series_coefficients(
            b, s, length
        )
        partial = np.cumsum(shells)
        if not np.all(np.isfinite(partial)):
            raise NonConvergenceError("lauricella_d overflowed", partial[-1], length)
        small = np.abs(shells) <= ctl.rel_tol * np.maximum(np.abs(partial), _TINY)
        settled = np.flatnonzero(small[1:] & small[:-1])
        if settled.size:
            return float(partial[settled[0] + 1])
        if length > int(ctl.max_terms):
            raise NonConvergenceError(
                "lauricella_d did not converge", float(partial[-1]), length
            )
        length *= 2
