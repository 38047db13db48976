"""scikit-learn style wrappers for Kronecker completion.

Both estimators take a partially observed matrix and a boolean mask at
``fit`` time.  When the mask is omitted, ``NaN`` entries are treated as
missing.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import check_mask, check_matrix
from .aggregation import aggregate_estimate, cv_mse_curve, cv_partition, argmin_curve
from .als import ConvergencePolicy, complete
from .core import Configuration, ConfigurationSet, parse_candidates, parse_configuration
from .selection import rank_configurations

__all__ = ["KroneckerCompletion", "AggregatedKroneckerCompletion"]


def _split_observed(Y, mask):
    """Zero-filled observation and boolean mask from ``(Y, mask)``."""
    Y = check_matrix(Y, "Y", allow_nonfinite=mask is None)
    if mask is None:
        W = np.isfinite(Y)
    else:
        W = check_mask(mask, Y.shape)
        if not np.all(np.isfinite(Y[W])):
            raise ValueError("observed entries must be finite")
    return np.where(W, Y, 0.0), W


def _resolve_candidates(candidates, P, Q):
    if isinstance(candidates, str):
        return list(parse_candidates(candidates, P, Q))
    if isinstance(candidates, ConfigurationSet):
        return list(candidates)
    out = []
    for c in candidates:
        if isinstance(c, Configuration):
            out.append(Configuration(c.p, c.q, P, Q))
        elif isinstance(c, str):
            out.append(parse_configuration(c, P, Q))
        else:
            out.append(Configuration(int(c[0]), int(c[1]), P, Q))
    return out


class _CompletionBase(BaseEstimator, TransformerMixin):

    def _policy(self):
        return ConvergencePolicy(
            max_iterations=self.max_iter,
            relative_tolerance=self.tol,
            singular=self.singular,
        )

    def _check_fitted(self):
        if not hasattr(self, "reconstruction_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    def _rank(self, Y, W):
        P, Q = Y.shape
        configs = _resolve_candidates(self.candidates, P, Q)
        return rank_configurations(Y, W, configs, n_jobs=self.n_jobs)

    def transform(self, Y, mask=None):
        """Fill the missing entries of ``Y`` with the fitted reconstruction.

        Observed entries are kept unless ``keep_observed=False``, in which
        case the whole reconstruction is returned.
        """
        self._check_fitted()
        Y0, W = _split_observed(Y, mask)
        if Y0.shape != self.reconstruction_.shape:
            raise ValueError(f"expected shape {self.reconstruction_.shape}, got {Y0.shape}")
        if not self.keep_observed:
            return self.reconstruction_.copy()
        return np.where(W, Y0, self.reconstruction_)

    def fit_transform(self, Y, mask=None, **fit_params):
        return self.fit(Y, mask, **fit_params).transform(Y, mask)

    def predict(self, indices):
        """Reconstructed values at 1-based ``(row, col)`` pairs."""
        self._check_fitted()
        idx = np.asarray(indices, dtype=int).reshape(-1, 2) - 1
        P, Q = self.reconstruction_.shape
        if idx.size and (idx.min() < 0 or np.any(idx[:, 0] >= P) or np.any(idx[:, 1] >= Q)):
            raise IndexError("index outside the fitted matrix")
        return self.reconstruction_[idx[:, 0], idx[:, 1]]

    def score(self, Y, mask=None):
        """Negative mean squared error on the observed entries of ``Y``."""
        self._check_fitted()
        Y0, W = _split_observed(Y, mask)
        return -float(np.mean((Y0[W] - self.reconstruction_[W]) ** 2))


class KroneckerCompletion(_CompletionBase):
    """Matrix completion with a K-rank-``krank`` Kronecker product model.

    Parameters
    ----------
    config : str, tuple or None
        Fixed configuration ``"pxq"`` / ``(p, q)``.  When None, the
        configuration maximizing the selection criterion over
        ``candidates`` is used.
    candidates : str or sequence
        ``"s=<int>"``, ``"delta=<float>"`` or explicit configurations.
    krank : int
        Number of Kronecker terms.
    max_iter, tol : int, float
        Alternating least squares stopping rules.
    singular : {"raise", "ridge"}
        Handling of singular least-squares blocks.
    keep_observed : bool
        Whether ``transform`` keeps observed entries as given.
    n_jobs : int
        Threads used to score candidate configurations.

    Attributes
    ----------
    config_ : Configuration
    ranking_ : ConfigRanking or None
    model_ : KroneckerModel
    reconstruction_ : ndarray
    n_iter_ : int
    """

    def __init__(self, config=None, candidates="delta=0.05", krank=1, max_iter=200,
                 tol=1e-8, singular="raise", keep_observed=True, n_jobs=1):
        self.config = config
        self.candidates = candidates
        self.krank = krank
        self.max_iter = max_iter
        self.tol = tol
        self.singular = singular
        self.keep_observed = keep_observed
        self.n_jobs = n_jobs

    def fit(self, Y, mask=None):
        Y0, W = _split_observed(Y, mask)
        P, Q = Y0.shape
        if self.config is None:
            self.ranking_ = self._rank(Y0, W)
            self.config_ = self.ranking_.best
        else:
            self.ranking_ = None
            self.config_ = _resolve_candidates([self.config], P, Q)[0]
        self.model_, self.reconstruction_ = complete(Y0, W, self.config_, self.krank,
                                                     self._policy())
        self.n_iter_ = self.model_.info.iterations
        return self


class AggregatedKroneckerCompletion(_CompletionBase):
    """Entrywise average of completions under the top-ranked configurations.

    Parameters
    ----------
    num_configs : int or "auto"
        Number of aggregated configurations; ``"auto"`` picks the value
        minimizing the ``folds``-fold CV-MSE over ``1..max_configs``.
    weights : array-like or None
        Positive per-rank weights (equal by default).
    fallback : {"best_feasible", "benchmark"}
        Treatment of entries infeasible under all top configurations.
    random_state : int or None
        Seed of the cross-validation partition.

    The remaining parameters match :class:`KroneckerCompletion`.

    Attributes
    ----------
    ranking_ : ConfigRanking
    num_configs_ : int
    cv_curve_ : ndarray or None
    estimate_ : AggregateEstimate
    reconstruction_ : ndarray
    """

    def __init__(self, candidates="delta=0.05", krank=1, num_configs="auto", max_configs=10,
                 folds=10, weights=None, fallback="best_feasible", random_state=None,
                 max_iter=200, tol=1e-8, singular="raise", keep_observed=True, n_jobs=1):
        self.candidates = candidates
        self.krank = krank
        self.num_configs = num_configs
        self.max_configs = max_configs
        self.folds = folds
        self.weights = weights
        self.fallback = fallback
        self.random_state = random_state
        self.max_iter = max_iter
        self.tol = tol
        self.singular = singular
        self.keep_observed = keep_observed
        self.n_jobs = n_jobs

    def fit(self, Y, mask=None):
        Y0, W = _split_observed(Y, mask)
        policy = self._policy()
        self.ranking_ = self._rank(Y0, W)
        if self.num_configs == "auto":
            k_max = min(self.max_configs, len(self.ranking_))
            partition = cv_partition(W, self.folds, self.random_state)
            self.cv_curve_ = cv_mse_curve(Y0, W, partition, self.ranking_, k_max,
                                          self.weights, self.krank, policy, self.fallback)
            self.num_configs_ = argmin_curve(self.cv_curve_)
        else:
            self.cv_curve_ = None
            self.num_configs_ = int(self.num_configs)
        self.estimate_ = aggregate_estimate(Y0, W, self.ranking_, self.num_configs_,
                                            self.weights, self.krank, policy, self.fallback)
        self.reconstruction_ = self.estimate_.combined
        return self
