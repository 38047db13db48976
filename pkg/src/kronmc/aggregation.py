"""Feasibility analysis, multi-configuration aggregation and cross-validation."""

import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_mask, check_matrix, check_positive_int
from .als import ConvergencePolicy, complete
from .core import ObservationMask, inverse_rearrange, rearrange
from .exceptions import EmptyMask, FoldFailed, KronMCError, ShrinkNotAllowed

__all__ = [
    "FeasibilityMap",
    "AggregateEstimate",
    "FoldPartition",
    "irrecoverable_entries",
    "irrecoverable_indices",
    "feasibility_map",
    "benchmark_mean_fill",
    "pad_dimensions",
    "aggregate_estimate",
    "aggregate_path",
    "cv_partition",
    "cv_mse",
    "cv_mse_curve",
    "select_num_configurations",
]

logger = logging.getLogger(__name__)

FALLBACKS = ("best_feasible", "benchmark")


def _configs_of(ranking):
    return [getattr(item, "config", item) for item in ranking]


def irrecoverable_entries(mask, c):
    """Boolean ``P x Q`` array of entries irrecoverable under ``c``.

    An entry is irrecoverable when its row or its column of the rearranged
    mask is completely unobserved.
    """
    W = check_mask(mask)
    Wt = rearrange(W.astype(np.float64), c) > 0
    bad = np.zeros_like(Wt)
    bad[~Wt.any(axis=1), :] = True
    bad[:, ~Wt.any(axis=0)] = True
    return inverse_rearrange(bad.astype(np.float64), c) > 0


def irrecoverable_indices(mask, c):
    """Set of 1-based ``(i, j)`` pairs irrecoverable under ``c``."""
    ii, jj = np.nonzero(irrecoverable_entries(mask, c))
    return {(int(i) + 1, int(j) + 1) for i, j in zip(ii, jj)}


@dataclass(frozen=True)
class FeasibilityMap:
    """Per-configuration recoverability of every entry.

    ``feasible[i, j, k]`` is true iff entry ``(i, j)`` is recoverable under
    the k-th ranked configuration.  ``first_feasible[i, j]`` is the 1-based
    rank of the first such configuration, ``inf`` if there is none.
    """

    configs: tuple
    feasible: np.ndarray
    first_feasible: np.ndarray

    @property
    def globally_infeasible(self):
        return ~np.isfinite(self.first_feasible)


def _first_true(stack):
    """1-based index of the first true along the last axis, inf if none."""
    any_true = stack.any(axis=-1)
    first = np.argmax(stack, axis=-1).astype(np.float64) + 1
    first[~any_true] = np.inf
    return first


def feasibility_map(mask, ranking):
    W = check_mask(mask)
    configs = _configs_of(ranking)
    if configs:
        feasible = np.stack([~irrecoverable_entries(W, c) for c in configs], axis=-1)
    else:
        feasible = np.zeros(W.shape + (0,), dtype=bool)
    return FeasibilityMap(tuple(configs), feasible, _first_true(feasible))


def benchmark_mean_fill(Y_obs, mask):
    """Keep observed entries and fill the rest with their mean."""
    Y = check_matrix(Y_obs, "Y_obs")
    W = check_mask(mask, Y.shape)
    if not W.any():
        raise EmptyMask("cannot mean-fill without observed entries")
    return np.where(W, Y, Y[W].mean())


def pad_dimensions(Y_obs, mask, P_star, Q_star):
    """Embed ``Y_obs`` top-left in a ``P_star x Q_star`` matrix of unobserved zeros."""
    Y = check_matrix(Y_obs, "Y_obs")
    W = check_mask(mask, Y.shape)
    P, Q = Y.shape
    if P_star < P or Q_star < Q:
        raise ShrinkNotAllowed(f"cannot pad {P}x{Q} down to {P_star}x{Q_star}")
    Yp = np.zeros((P_star, Q_star))
    Wp = np.zeros((P_star, Q_star), dtype=bool)
    Yp[:P, :Q] = np.where(W, Y, 0.0)
    Wp[:P, :Q] = W
    return Yp, ObservationMask(Wp)


class _FitCache:
    """Lazily fitted per-configuration completions for one training mask."""

    def __init__(self, Y, W, configs, r, policy):
        self.Y = Y
        self.W = W
        self.configs = configs
        self.r = r
        self.policy = policy
        self._fits = {}
        self.errors = {}

    def __len__(self):
        return len(self.configs)

    def get(self, k):
        """``(model, X_hat, feasible)`` for 0-based rank ``k``; ``None`` if the fit failed."""
        if k not in self._fits:
            c = self.configs[k]
            try:
                model, X_hat = complete(
                    self.Y, self.W, c, self.r, self.policy, allow_irrecoverable=True
                )
                self._fits[k] = (model, X_hat, ~model.info.infeasible)
            except KronMCError as err:
                logger.info("dropping configuration %s from aggregation: %s", c, err)
                self.errors[k] = err
                self._fits[k] = None
        return self._fits[k]


def _weights(weights, n):
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    if len(w) < n:
        # beyond the supplied weights only one configuration contributes per entry
        w = np.concatenate([w, np.ones(n - len(w))])
    return w


def _path(cache, d_max, weights, fallback, mean_value):
    """Aggregates for ``d = 1..d_max`` plus per-entry diagnostics."""
    shape = cache.W.shape
    w = _weights(weights, len(cache))
    num = np.zeros(shape)
    den = np.zeros(shape)
    first_value = np.full(shape, np.nan)
    first_rank = np.full(shape, np.inf)
    estimates = []
    nu_cols = []
    for k in range(d_max):
        fit = cache.get(k)
        nu = fit[2] if fit is not None else np.zeros(shape, dtype=bool)
        nu_cols.append(nu)
        if fit is not None:
            num += w[k] * np.where(nu, fit[1], 0.0)
            den += w[k] * nu
            newly = nu & ~np.isfinite(first_rank)
            first_value[newly] = fit[1][newly]
            first_rank[newly] = k + 1
        estimates.append((num.copy(), den.copy()))

    if fallback == "best_feasible":
        k = d_max
        while k < len(cache) and not np.all(np.isfinite(first_rank)):
            fit = cache.get(k)
            if fit is not None:
                newly = fit[2] & ~np.isfinite(first_rank)
                first_value[newly] = fit[1][newly]
                first_rank[newly] = k + 1
            k += 1

    out = []
    for d, (nm, dn) in enumerate(estimates, start=1):
        covered = dn > 0
        est = np.full(shape, mean_value)
        est[covered] = nm[covered] / dn[covered]
        beyond = ~covered & np.isfinite(first_rank)
        if fallback == "best_feasible":
            est[beyond] = first_value[beyond]
            mean_filled = ~covered & ~np.isfinite(first_rank)
        else:
            mean_filled = ~covered
        out.append((est, beyond, mean_filled))
    return out, np.stack(nu_cols, axis=-1), first_rank


@dataclass(frozen=True)
class AggregateEstimate:
    """Weighted multi-configuration completion.

    ``fallback_entries`` marks entries infeasible under all of the first
    ``d`` configurations; ``mean_filled`` marks entries that received the
    mean-fill benchmark value (always including globally infeasible ones).
    """

    ranking: tuple
    weights: np.ndarray
    models: tuple
    d: int
    combined: np.ndarray
    fallback_entries: np.ndarray
    mean_filled: np.ndarray
    feasibility: FeasibilityMap = field(repr=False)
    dropped: tuple = ()

    @property
    def fallback_count(self):
        return int(self.fallback_entries.sum())


def _prepare(Y_obs, mask):
    Y = check_matrix(Y_obs, "Y_obs")
    W = check_mask(mask, Y.shape)
    if not W.any():
        raise EmptyMask("no observed entries")
    return np.where(W, Y, 0.0), W


def aggregate_path(Y_obs, mask, ranking, d_max, weights=None, r=1, policy=None,
                   fallback="best_feasible"):
    """Aggregated completions for every ``d`` in ``1..d_max``.

    Returns a list of ``d_max`` arrays; completions are shared across ``d``.
    """
    Y, W = _prepare(Y_obs, mask)
    configs = _configs_of(ranking)
    d_max = min(check_positive_int(d_max, "d_max"), len(configs))
    cache = _FitCache(Y, W, configs, r, policy or ConvergencePolicy())
    path, _, _ = _path(cache, d_max, weights, fallback, Y[W].mean())
    return [est for est, _, _ in path]


def aggregate_estimate(Y_obs, mask, ranking, d=1, weights=None, r=1, policy=None,
                       fallback="best_feasible"):
    """Entrywise weighted average of completions under the top-``d`` configurations.

    For entry ``(i, j)`` the average runs over ranks ``k <= max(d, d_ij)``
    where ``d_ij`` is the first rank under which the entry is feasible, and
    only feasible configurations contribute.  With
    ``fallback="benchmark"`` entries infeasible under all top-``d``
    configurations are mean-filled instead of borrowing ``C_{d_ij}``.
    Configurations whose completion fails are dropped (feasible nowhere).
    Entries infeasible everywhere are mean-filled and flagged.
    """
    if fallback not in FALLBACKS:
        raise ValueError(f"fallback must be one of {FALLBACKS}")
    Y, W = _prepare(Y_obs, mask)
    configs = _configs_of(ranking)
    d = check_positive_int(d, "d")
    if d > len(configs):
        raise ValueError(f"d={d} exceeds the {len(configs)} ranked configurations")
    if weights is not None and len(np.ravel(weights)) < d:
        raise ValueError("need at least d weights")
    w = _weights(weights, len(configs))
    cache = _FitCache(Y, W, configs, r, policy or ConvergencePolicy())
    path, nu, first_rank = _path(cache, d, weights, fallback, Y[W].mean())
    est, _, mean_filled = path[-1]
    fitted = sorted(cache._fits)
    models = tuple(cache._fits[k][0] if cache._fits[k] is not None else None for k in fitted)
    # feasibility over every configuration that was fitted
    if len(fitted) > nu.shape[-1]:
        extra = [
            cache._fits[k][2] if cache._fits[k] is not None else np.zeros(W.shape, bool)
            for k in fitted[nu.shape[-1]:]
        ]
        nu = np.concatenate([nu, np.stack(extra, axis=-1)], axis=-1)
    fmap = FeasibilityMap(tuple(configs[: nu.shape[-1]]), nu, _first_true(nu))
    return AggregateEstimate(
        ranking=tuple(ranking),
        weights=w[:d],
        models=models,
        d=d,
        combined=est,
        fallback_entries=~nu[..., :d].any(axis=-1),
        mean_filled=mean_filled,
        feasibility=fmap,
        dropped=tuple(sorted(cache.errors)),
    )


@dataclass(frozen=True)
class FoldPartition:
    K: int
    folds: tuple

    def __post_init__(self):
        sizes = [len(f) for f in self.folds]
        if len(self.folds) != self.K:
            raise ValueError("fold count does not match K")
        if sizes and max(sizes) - min(sizes) > 1:
            raise ValueError("fold sizes differ by more than one")

    @property
    def sizes(self):
        return [len(f) for f in self.folds]


def cv_partition(mask, K, seed=None):
    """Uniformly random ``K``-fold partition of the observed entries."""
    W = check_mask(mask)
    K = check_positive_int(K, "K")
    idx = np.flatnonzero(W.ravel())
    if K > idx.size:
        raise ValueError(f"K={K} exceeds the {idx.size} observed entries")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(idx)
    folds = []
    for chunk in np.array_split(perm, K):
        f = np.zeros(W.size, dtype=bool)
        f[chunk] = True
        folds.append(ObservationMask(f.reshape(W.shape)))
    return FoldPartition(K, tuple(folds))


def cv_mse_curve(Y_obs, mask, partition, ranking, k_max, weights=None, r=1, policy=None,
                 fallback="best_feasible"):
    """CV-MSE for ``k = 1..k_max`` aggregated configurations.

    Each fold is refit on the remaining observed entries (rankings are not
    re-estimated) and scored on its held-out entries; the total squared
    error is divided by ``|Omega|``.
    """
    Y, W = _prepare(Y_obs, mask)
    configs = _configs_of(ranking)
    k_max = min(check_positive_int(k_max, "k_max"), len(configs))
    policy = policy or ConvergencePolicy()
    sse = np.zeros(k_max)
    for i, fold in enumerate(partition.folds):
        held = np.asarray(fold, dtype=bool)
        if np.any(held & ~W):
            raise ValueError(f"fold {i} contains unobserved entries")
        train = W & ~held
        try:
            Wt_mean = Y[train].mean() if train.any() else 0.0
            cache = _FitCache(Y, train, configs, r, policy)
            path, _, _ = _path(cache, k_max, weights, fallback, Wt_mean)
        except KronMCError as err:
            raise FoldFailed(i, err) from err
        for k, (est, _, _) in enumerate(path):
            sse[k] += np.sum((Y[held] - est[held]) ** 2)
    return sse / W.sum()


def cv_mse(Y_obs, mask, partition, ranking, k, weights=None, r=1, policy=None,
           fallback="best_feasible"):
    """CV-MSE of the aggregate over the first ``k`` configurations."""
    return float(cv_mse_curve(Y_obs, mask, partition, ranking, k, weights, r, policy,
                              fallback)[-1])


def argmin_curve(curve):
    """1-based argmin, smallest ``k`` on ties."""
    return int(np.argmin(np.asarray(curve))) + 1


def select_num_configurations(Y_obs, mask, partition, ranking, k_max, weights=None, r=1,
                              policy=None, fallback="best_feasible"):
    """Number of aggregated configurations minimizing CV-MSE."""
    curve = cv_mse_curve(Y_obs, mask, partition, ranking, k_max, weights, r, policy, fallback)
    return argmin_curve(curve)
