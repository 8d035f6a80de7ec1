"""Input checks shared by the estimator facade and the command line."""

from __future__ import annotations

import numpy as np
from sklearn.exceptions import NotFittedError

from .simplex import _as_count_matrix, _as_weights


def check_count_matrix(y):
    """Coerce to a float matrix of non-negative integer count rows."""
    return _as_count_matrix(y)


def check_weights(weights, n_rows):
    """Per-row non-negative weights, or uniform ones when None."""
    return _as_weights(weights, n_rows)


def check_covariates(x, n_rows):
    """Covariate rows as a finite float matrix aligned with the counts."""
    if x is None:
        return np.zeros((n_rows, 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != n_rows:
        raise ValueError("covariates must be a matrix with one row per count row")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariates must be finite")
    return x


def check_random_state(seed):
    """Coerce None, an integer, or a Generator to a numpy Generator."""
    if seed is None or isinstance(seed, (int, np.integer)):
        return np.random.default_rng(seed)
    if isinstance(seed, np.random.Generator):
        return seed
    raise TypeError("random_state must be None, an integer, or a numpy Generator")


def check_is_fitted(estimator, attribute="model_"):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first"
        )
