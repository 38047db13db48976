"""Synthetic data generators and the experiment drivers built on them.

Configurations in the scenario descriptions are in log2 form: ``(m, n)``
stands for a ``2^m x 2^n`` left factor of a ``2^M x 2^N`` matrix.
"""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import check_mask, check_matrix
from .aggregation import (
    _FitCache,
    _path,
    argmin_curve,
    benchmark_mean_fill,
    cv_mse_curve,
    cv_partition,
    irrecoverable_entries,
)
from .als import ConvergencePolicy
from .core import Configuration, candidate_set, kronecker_product, project, rearrange
from .exceptions import ConfigOutOfRange, InvalidGap
from .selection import rank_configurations
from .spectral import spectral_norm

__all__ = [
    "ScenarioSpec",
    "SCENARIOS",
    "SimulationReport",
    "orthonormal_pair",
    "gen_krank1_pair",
    "gen_mixture",
    "corrupt_and_mask",
    "incoherence_coefficient",
    "representation_gap",
    "mse",
    "reconstruction_error",
    "replicate_rng",
    "run_selection_sweep",
    "gamma_star",
    "run_aggregation_study",
    "forced_block",
    "with_overrides",
    "kronecker_image",
    "matched_svd_rank",
    "compare_kpd_svd",
]

logger = logging.getLogger(__name__)


def replicate_rng(seed, replicate, *streams):
    """Independent generator for one replicate, fixed by ``(seed, replicate)``."""
    return np.random.default_rng([int(seed), int(replicate), *map(int, streams)])


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def orthonormal_pair(shape, rng):
    """Two unit-Frobenius matrices of ``shape`` with ``tr(D1 D2^T) = 0``."""
    D1 = rng.standard_normal(shape)
    D2 = rng.standard_normal(shape)
    D1 /= np.linalg.norm(D1)
    D2 -= np.sum(D1 * D2) * D1
    D2 /= np.linalg.norm(D2)
    return D1, D2


def _check_gap(phi2):
    if not 0 < phi2 < 1:
        raise InvalidGap(f"gap parameter must lie in (0, 1), got {phi2}")


def gen_krank1_pair(m0, n0, M, N, phi2, seed=None):
    """Unit-norm factors ``(A, B)`` whose product has representation gap near ``phi2``.

    ``A`` is ``2^m0 x 2^n0`` and ``B`` is ``2^(M-m0) x 2^(N-n0)``; each stacks
    two orthonormal halves weighted by ``sqrt(1 - phi2)`` and ``sqrt(phi2)``.
    """
    _check_gap(phi2)
    if not (1 <= m0 < M and 0 <= n0 <= N):
        raise ConfigOutOfRange(f"({m0}, {n0}) does not fit inside ({M}, {N})")
    rng = _rng(seed)
    hi, lo = np.sqrt(1 - phi2), np.sqrt(phi2)
    top = np.array([[hi], [0.0]])
    bottom = np.array([[0.0], [lo]])
    D1, D2 = orthonormal_pair((2 ** (m0 - 1), 2**n0), rng)
    D3, D4 = orthonormal_pair((2 ** (M - m0 - 1), 2 ** (N - n0)), rng)
    A = kronecker_product(top, D1) + kronecker_product(bottom, D2)
    B = kronecker_product(top, D3) + kronecker_product(bottom, D4)
    return A, B


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one simulation scenario.

    ``snr`` is ``lambda / sigma``: signals are built with unit term strength
    times ``lambda`` and noise ``sigma / sqrt(PQ)`` per entry with
    ``sigma = 1`` for selection sweeps, and ``sigma = 1 / snr`` for mixtures.
    """

    M: int = 9
    N: int = 9
    terms: tuple = ((5, 4),)
    phi2: float = 0.5
    snr: float = 0.5
    tau: float = 0.2
    krank_fit: int = 1
    candidate_s: int = 7
    seed: int = 0
    replicates: int = 20
    d_max: int = 10
    folds: int = 10
    name: str = ""

    def __post_init__(self):
        _check_gap(self.phi2)
        if not 0 < self.tau <= 1:
            raise ValueError(f"observing rate must lie in (0, 1], got {self.tau}")
        object.__setattr__(self, "terms", tuple(tuple(int(v) for v in t) for t in self.terms))

    @property
    def sigma(self):
        return 1.0 / self.snr

    @property
    def shape(self):
        return (2**self.M, 2**self.N)

    def candidates(self):
        return candidate_set(2**self.M, 2**self.N, s=self.candidate_s)

    def to_dict(self):
        return asdict(self)


SCENARIOS = {
    "L1": ScenarioSpec(terms=((5, 4),), phi2=0.5, name="L1"),
    "S1": ScenarioSpec(terms=((5, 4),), phi2=0.05, name="S1"),
    "L2": ScenarioSpec(terms=((5, 4), (4, 5)), phi2=0.5, name="L2"),
    "S2": ScenarioSpec(terms=((5, 4), (4, 5)), phi2=0.05, name="S2"),
}


def gen_mixture(spec, seed=None):
    """Signal ``X = sum_i A_i (x) B_i`` with unit-norm, gap-controlled factors.

    ``A_i`` splits its columns into the sum/difference pattern
    ``[1, 1]/sqrt2`` and ``[1, -1]/sqrt2``; ``B_i`` does the same on rows.
    """
    _check_gap(spec.phi2)
    rng = _rng(spec.seed if seed is None else seed)
    M, N = spec.M, spec.N
    a, b = np.sqrt(spec.phi2), np.sqrt(1 - spec.phi2)
    plus = np.array([[1.0, 1.0]]) / np.sqrt(2)
    minus = np.array([[1.0, -1.0]]) / np.sqrt(2)
    X = np.zeros(spec.shape)
    for m, n in spec.terms:
        if not (0 <= m < M and 1 <= n <= N):
            raise ConfigOutOfRange(f"term ({m}, {n}) does not fit inside ({M}, {N})")
        D1, D2 = orthonormal_pair((2**m, 2 ** (n - 1)), rng)
        D3, D4 = orthonormal_pair((2 ** (M - m - 1), 2 ** (N - n)), rng)
        A = a * kronecker_product(D1, plus) + b * kronecker_product(D2, minus)
        B = a * kronecker_product(plus.T, D3) + b * kronecker_product(minus.T, D4)
        X += kronecker_product(A, B)
    return X


def corrupt_and_mask(X, sigma, tau, seed=None):
    """Add ``sigma / sqrt(PQ)`` Gaussian noise and draw a Bernoulli(``tau``) mask.

    Returns the zero-filled observation, the boolean mask and the full noisy
    matrix.
    """
    X = check_matrix(X, "X")
    rng = _rng(seed)
    P, Q = X.shape
    Y = X + sigma / np.sqrt(P * Q) * rng.standard_normal((P, Q))
    W = rng.random((P, Q)) < tau
    return np.where(W, Y, 0.0), W, Y


def incoherence_coefficient(M):
    """``sqrt(mn) * max|M_ij| / ||M||_F``; at least 1."""
    M = check_matrix(M, "M")
    norm = np.linalg.norm(M)
    if norm == 0:
        raise ValueError("incoherence is undefined for the zero matrix")
    return float(np.sqrt(M.size) * np.max(np.abs(M)) / norm)


def representation_gap(X, true_c, configs):
    """``(phi, psi2)``: best wrong-configuration rank-one fit and ``1 - phi^2``.

    ``X`` is normalized to unit Frobenius norm first.  If ``true_c`` is not
    among ``configs`` every member counts as wrong.
    """
    X = check_matrix(X, "X")
    X = X / np.linalg.norm(X)
    wrong = [c for c in configs if c != true_c]
    if not wrong:
        raise ValueError("no wrong configurations to compare against")
    phi = max(spectral_norm(rearrange(X, c)) for c in wrong)
    phi = min(phi, 1.0)
    return phi, 1.0 - phi**2


def mse(X_hat, X, region=None):
    """Mean squared entrywise error, optionally over a boolean ``region``."""
    X_hat = check_matrix(X_hat, "X_hat")
    X = check_matrix(X, "X")
    if X_hat.shape != X.shape:
        from .exceptions import DimensionMismatch

        raise DimensionMismatch(f"{X_hat.shape} vs {X.shape}")
    diff2 = (X_hat - X) ** 2
    if region is None:
        return float(diff2.mean())
    R = check_mask(region, X.shape)
    return float(diff2[R].mean())


def reconstruction_error(X_hat, X):
    """``||X - X_hat||_F^2 / ||X||_F^2``."""
    X_hat = check_matrix(X_hat, "X_hat")
    X = check_matrix(X, "X")
    denom = np.sum(X**2)
    if denom == 0:
        raise ValueError("reconstruction error is undefined for X = 0")
    return float(np.sum((X - X_hat) ** 2) / denom)


@dataclass
class SimulationReport:
    """Per-replicate records plus summary tables of one experiment."""

    kind: str
    settings: dict
    records: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)

    @property
    def replicates(self):
        return self.settings.get("replicates")

    def to_dict(self):
        return {"kind": self.kind, "settings": self.settings, "tables": self.tables,
                "records": self.records}


def gamma_star(snrs, freqs, threshold=0.5):
    """Smallest swept SNR whose correct-selection frequency exceeds ``threshold``."""
    for v, f in sorted(zip(snrs, freqs)):
        if f > threshold:
            return float(v)
    return float("nan")


def _finite_or_none(x):
    return x if np.isfinite(x) else None


def _round_grid(values):
    return [round(float(v), 10) for v in values]


def run_selection_sweep(M=9, N=9, true_config=(4, 4), snrs=None, taus=(0.2,), phi2s=(0.5,),
                        candidate_s=(7,), replicates=20, seed=0, cells=None):
    """Correct-selection frequency of the criterion over an SNR grid.

    The grid is every ``(tau, phi2, s)`` combination, or the explicit
    ``cells`` list of such triples.  Each replicate draws all of its
    randomness from ``(seed, replicate)`` alone, so every grid cell and SNR
    value reuses it; the mask at rate ``tau`` is ``U < tau`` for shared
    uniform scores ``U``.
    """
    snrs = _round_grid(snrs if snrs is not None else np.arange(1, 21) / 10)
    P, Q = 2**M, 2**N
    truth = Configuration.from_log2(*true_config, M, N)
    if cells is None:
        cells = [(t, f, s) for t in taus for f in phi2s for s in candidate_s]
    cells = [(float(t), float(f), int(s)) for t, f, s in cells]
    candidate_s = sorted({s for _, _, s in cells})
    hits = {(cell, v): 0 for cell in cells for v in snrs}
    candidates = {s: candidate_set(P, Q, s=s) for s in candidate_s}
    records = []
    for rep in range(replicates):
        base = replicate_rng(seed, rep)
        noise = base.standard_normal((P, Q)) / np.sqrt(P * Q)
        uniform = base.random((P, Q))
        pattern_seed = int(base.integers(2**63))
        for tau, phi2, s in cells:
            A, B = gen_krank1_pair(*true_config, M, N, phi2, np.random.default_rng(pattern_seed))
            X0 = kronecker_product(A, B)
            W = uniform < tau
            for v in snrs:
                Y = np.where(W, v * X0 + noise, 0.0)
                ranking = rank_configurations(Y, W, candidates[s])
                picked = ranking.best
                correct = picked == truth
                hits[((tau, phi2, s), v)] += correct
                records.append({
                    "replicate": rep, "tau": tau, "phi2": phi2, "s": s, "snr": v,
                    "selected_m": picked.log2[0], "selected_n": picked.log2[1],
                    "correct": int(correct), "top_score": ranking[0].score,
                })
    freq_rows, gamma_rows = [], []
    for tau, phi2, s in cells:
        freqs = [hits[((tau, phi2, s), v)] / replicates for v in snrs]
        freq_rows += [{"tau": tau, "phi2": phi2, "s": s, "snr": v, "frequency": f}
                      for v, f in zip(snrs, freqs)]
        gamma_rows.append({"M": M, "N": N, "tau": tau, "phi2": phi2, "s": s,
                           "gamma_star": _finite_or_none(gamma_star(snrs, freqs))})
    settings = {"M": M, "N": N, "true_config": list(true_config), "snrs": snrs,
                "cells": [list(c) for c in cells], "replicates": replicates, "seed": seed}
    return SimulationReport("selection_sweep", settings, records,
                            {"frequency": freq_rows, "gamma_star": gamma_rows})


def forced_block(shape, block):
    """Boolean mask of the top-left ``2^a x 2^b`` block for log2 sizes ``block``."""
    B = np.zeros(shape, dtype=bool)
    B[: 2 ** block[0], : 2 ** block[1]] = True
    return B


def _median_rows(records, key, kranks, d_max):
    rows = []
    for r in kranks:
        vals = np.array([rec[key] for rec in records if rec["krank"] == r])
        for d in range(min(d_max, vals.shape[1] if vals.size else 0)):
            rows.append({"krank": r, "d": d + 1, "mean": float(vals[:, d].mean()),
                         "median": float(np.median(vals[:, d]))})
    return rows


def run_aggregation_study(spec, d_max=None, kranks=(1, 2), forced_missing_block=None,
                          cv=True, fallback=None, policy=None):
    """MSE (and CV-MSE) of aggregated completions against the number of configurations.

    MSEs (overall and block-restricted alike) are divided by the mean square
    of the whole signal, which puts them on the unit-variance signal scale.
    With ``forced_missing_block`` (log2 sizes) the top-left block is removed
    from the mask, entries not covered by the top ``d`` configurations fall
    back to the mean-fill benchmark unless ``fallback`` says otherwise, and
    the benchmark's MSEs are recorded along with ``block_coverage``, the
    share of block entries recoverable under at least one of the top ``d``
    configurations.
    """
    d_max = d_max or spec.d_max
    policy = policy or ConvergencePolicy()
    if fallback is None:
        fallback = "benchmark" if forced_missing_block else "best_feasible"
    candidates = spec.candidates()
    true_configs = [Configuration.from_log2(m, n, spec.M, spec.N) for m, n in spec.terms]
    cv_kranks = tuple(kranks) if cv is True else tuple(cv or ())
    records = []
    for rep in range(spec.replicates):
        rng = replicate_rng(spec.seed, rep)
        X = gen_mixture(spec, rng)
        _, W, Y = corrupt_and_mask(X, spec.sigma, spec.tau, rng)
        block = None
        if forced_missing_block:
            block = forced_block(X.shape, forced_missing_block)
            W = W & ~block
        Y_obs = np.where(W, Y, 0.0)
        ranking = rank_configurations(Y_obs, W, candidates)
        top = ranking.configs[:d_max]
        base = {
            "replicate": rep,
            "top_configs": [list(c.log2) for c in top],
            "top_scores": ranking.scores[:d_max],
            "top_k_true": int(set(ranking.configs[: len(true_configs)]) == set(true_configs)),
        }
        norm = float(np.mean(X**2))
        bench = benchmark_mean_fill(Y_obs, W)
        if block is not None:
            base["benchmark_mse"] = mse(bench, X) / norm
            base["benchmark_block_mse"] = mse(bench, X, block) / norm
            covered = np.zeros(block.shape, dtype=bool)
            coverage = []
            for c in top:
                covered |= ~irrecoverable_entries(W, c)
                coverage.append(float(covered[block].mean()))
            base["block_coverage"] = coverage
        partition = (cv_partition(W, spec.folds, replicate_rng(spec.seed, rep, 1))
                     if cv_kranks else None)
        for r in kranks:
            cache = _FitCache(Y_obs, W, ranking.configs, r, policy)
            path, _, _ = _path(cache, min(d_max, len(ranking)), None, fallback,
                               float(Y_obs[W].mean()))
            rec = dict(base, krank=r)
            rec["mse"] = [mse(est, X) / norm for est, _, _ in path]
            rec["single_mse"] = [
                mse(cache.get(k)[1], X) / norm if cache.get(k) is not None else None
                for k in range(len(path))
            ]
            rec["mse_argmin"] = argmin_curve(rec["mse"])
            if block is not None:
                rec["block_mse"] = [mse(est, X, block) / norm for est, _, _ in path]
            if r in cv_kranks:
                curve = cv_mse_curve(Y_obs, W, partition, ranking, d_max, None, r, policy,
                                     fallback)
                rec["cv_mse"] = [float(v) for v in curve]
                rec["cv_argmin"] = argmin_curve(curve)
            records.append(rec)
            logger.info("replicate %d krank %d done", rep, r)
    tables = {"mse": _median_rows(records, "mse", kranks, d_max)}
    if cv_kranks:
        tables["cv_mse"] = _median_rows(records, "cv_mse", cv_kranks, d_max)
        tables["cv_agreement"] = [
            {"krank": r, "agreement": float(np.mean(
                [rec["cv_argmin"] == rec["mse_argmin"] for rec in records if rec["krank"] == r]))}
            for r in cv_kranks
        ]
    if forced_missing_block:
        tables["block_mse"] = _median_rows(records, "block_mse", kranks, d_max)
        tables["benchmark"] = [{
            "mse_median": float(np.median([rec["benchmark_mse"] for rec in records])),
            "block_mse_median": float(np.median([rec["benchmark_block_mse"] for rec in records])),
        }]
    settings = dict(spec.to_dict(), d_max=d_max, kranks=list(kranks),
                    forced_missing_block=list(forced_missing_block or []),
                    fallback=fallback, cv_kranks=list(cv_kranks))
    settings["terms"] = [list(t) for t in spec.terms]
    return SimulationReport("aggregation_study", settings, records, tables)


def with_overrides(spec, **kwargs):
    return replace(spec, **{k: v for k, v in kwargs.items() if v is not None})


def kronecker_image(size=256, block=8, seed=None, blobs=6):
    """Synthetic grayscale image in ``[0, 1]`` equal to ``A (x) B``.

    ``A`` is a smooth ``size/block`` square field built from Gaussian bumps
    and ``B`` a ``block x block`` texture with entries in ``[0, 1]``.
    """
    rng = _rng(seed)
    n = size // block
    if n * block != size:
        raise ConfigOutOfRange(f"block {block} does not divide {size}")
    grid = (np.arange(n) + 0.5) / n
    A = np.zeros((n, n))
    for _ in range(blobs):
        cy, cx = rng.random(2)
        width = 0.08 + 0.2 * rng.random()
        A += rng.uniform(0.3, 1.0) * np.exp(
            -((grid[:, None] - cy) ** 2 + (grid[None, :] - cx) ** 2) / (2 * width**2))
    A = (A - A.min()) / (A.max() - A.min())
    B = rng.random((block, block))
    return kronecker_product(A, B)


def matched_svd_rank(config, krank=1):
    """Classical completion rank with roughly the parameter count of a KPD fit.

    A K-rank-``r`` fit under ``(p, q)`` carries ``r (pq + p*q*)`` factor
    entries; a rank-``k`` factorization of a ``P x Q`` matrix stores about
    ``k max(P, Q)`` entries per side.
    """
    c = config
    per_term = c.p * c.q + c.p_star * c.q_star
    return max(1, int(round(krank * per_term / max(c.P, c.Q))))


def compare_kpd_svd(X, tau=0.2, noise=0.1, seed=None, krank=1, candidate_s=6, policy=None):
    """Reconstruction errors of KPD completion and parameter-matched SVD completion.

    Adds ``noise * E`` to ``X``, observes a Bernoulli(``tau``) subset,
    selects the configuration from the ``s``-candidate set and fits K-rank
    ``krank``; the baseline is configuration ``(P, 1)``, for which the
    rearranged matrix is the observation itself, at the matched rank.  Both
    fits damp singular least-squares blocks unless ``policy`` says otherwise.
    """
    from .als import complete

    policy = policy or ConvergencePolicy(singular="ridge")
    X = check_matrix(X, "X")
    rng = _rng(seed)
    P, Q = X.shape
    Y = X + noise * rng.standard_normal((P, Q))
    W = rng.random((P, Q)) < tau
    Y_obs = np.where(W, Y, 0.0)
    ranking = rank_configurations(Y_obs, W, candidate_set(P, Q, s=candidate_s))
    chosen = ranking.best
    _, X_kpd = complete(Y_obs, W, chosen, krank, policy, allow_irrecoverable=True)
    svd_rank = matched_svd_rank(chosen, krank)
    _, X_svd = complete(Y_obs, W, Configuration(P, 1, P, Q), svd_rank, policy,
                        allow_irrecoverable=True)
    return {
        "config": [chosen.p, chosen.q],
        "krank": krank,
        "svd_rank": svd_rank,
        "kpd_error": reconstruction_error(X_kpd, X),
        "svd_error": reconstruction_error(X_svd, X),
        "kpd_error_trimmed": reconstruction_error(np.clip(X_kpd, 0, 1), X),
        "svd_error_trimmed": reconstruction_error(np.clip(X_svd, 0, 1), X),
    }
