"""Fixed-configuration completion by alternating least squares.

The observed matrix is rearranged under the configuration, which turns the
K-rank-``r`` problem into a rank-``r`` completion problem.  That problem is
initialized from the rescaled truncated SVD of the zero-filled rearranged
matrix and refined by alternating exact masked least-squares solves, with the
product renormalized to SVD form after every sweep.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_mask, check_matrix, check_positive_int
from .core import Configuration, inverse_rearrange, kronecker_product, rearrange, unvec
from .exceptions import Diverged, Irrecoverable, RankTooLarge, UnderdeterminedRow
from .spectral import SvdTriple, _fix_signs, truncated_svd

__all__ = [
    "ConvergencePolicy",
    "CompletionInfo",
    "KroneckerModel",
    "spectral_init",
    "masked_ls_update",
    "complete",
    "reconstruct",
    "masked_residual",
]

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12
RIDGE = 1e-10


@dataclass(frozen=True)
class ConvergencePolicy:
    """Stopping rules for :func:`complete`.

    Iteration stops once the masked residual changes by less than
    ``relative_tolerance`` (relative) between sweeps, or after
    ``max_iterations`` sweeps.  :class:`~kronmc.exceptions.Diverged` is raised
    if the residual ever exceeds ``divergence_cap`` times the residual of the
    spectral initialization.  ``singular="ridge"`` damps singular
    normal-equation blocks instead of raising.
    """

    max_iterations: int = 200
    relative_tolerance: float = 1e-8
    divergence_cap: float = 1e6
    singular: str = "raise"

    def __post_init__(self):
        check_positive_int(self.max_iterations, "max_iterations")
        if not self.relative_tolerance > 0:
            raise ValueError("relative_tolerance must be positive")
        if not self.divergence_cap > 0:
            raise ValueError("divergence_cap must be positive")
        if self.singular not in ("raise", "ridge"):
            raise ValueError("singular must be 'raise' or 'ridge'")


@dataclass(frozen=True)
class CompletionInfo:
    iterations: int
    converged: bool
    residual_history: tuple
    observed_fraction: float
    empty_rows: tuple = ()
    empty_cols: tuple = ()
    infeasible: np.ndarray = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class KroneckerModel:
    """Fitted ``sum_i lambda_i A_i (x) B_i`` at a fixed configuration."""

    config: Configuration
    lambdas: np.ndarray
    A_factors: tuple
    B_factors: tuple
    info: CompletionInfo = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=np.float64)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "A_factors", tuple(np.asarray(a, float) for a in self.A_factors))
        object.__setattr__(self, "B_factors", tuple(np.asarray(b, float) for b in self.B_factors))
        if not (len(lam) == len(self.A_factors) == len(self.B_factors)):
            raise ValueError("lambdas and factor lists differ in length")
        if np.any(lam < 0) or np.any(np.diff(lam) > 0):
            raise ValueError("lambdas must be non-negative and non-increasing")
        for a in self.A_factors:
            if a.shape != self.config.left_shape:
                raise ValueError(f"left factor shape {a.shape} != {self.config.left_shape}")
        for b in self.B_factors:
            if b.shape != self.config.right_shape:
                raise ValueError(f"right factor shape {b.shape} != {self.config.right_shape}")

    @property
    def krank(self):
        return len(self.lambdas)

    def left_matrix(self):
        """Columns ``vec(A_i)``."""
        return np.column_stack([a.reshape(-1, order="F") for a in self.A_factors])

    def right_matrix(self):
        """Columns ``vec(B_i)``."""
        return np.column_stack([b.reshape(-1, order="F") for b in self.B_factors])


def reconstruct(model):
    """Dense matrix ``sum_i lambda_i A_i (x) B_i`` of a fitted model."""
    U = model.left_matrix()
    V = model.right_matrix()
    return inverse_rearrange((U * model.lambdas) @ V.T, model.config)


def reconstruct_by_kron(model):
    """Same as :func:`reconstruct`, summed term by term with explicit Kronecker products."""
    X = np.zeros((model.config.P, model.config.Q))
    for lam, A, B in zip(model.lambdas, model.A_factors, model.B_factors):
        X += lam * kronecker_product(A, B)
    return X


def _empty_lines(W):
    rows = np.flatnonzero(~W.any(axis=1))
    cols = np.flatnonzero(~W.any(axis=0))
    return rows, cols


def spectral_init(Y_tilde, mask_tilde, r, *, allow_irrecoverable=False):
    """Rank-``r`` SVD of the zero-filled rearranged matrix, rescaled by ``1/tau_hat``.

    ``tau_hat`` is the observed fraction of ``mask_tilde``.

    Raises
    ------
    Irrecoverable
        If ``mask_tilde`` has a fully unobserved row or column (1-based
        indices are attached), unless ``allow_irrecoverable``.
    """
    Yt = check_matrix(Y_tilde, "Y_tilde")
    Wt = check_mask(mask_tilde, Yt.shape)
    rows, cols = _empty_lines(Wt)
    if (rows.size or cols.size) and not allow_irrecoverable:
        raise Irrecoverable(rows + 1, cols + 1)
    tau_hat = Wt.sum() / Wt.size
    if tau_hat == 0:
        raise Irrecoverable(rows + 1, cols + 1)
    svd = truncated_svd(np.where(Wt, Yt, 0.0), r)
    return SvdTriple(svd.singular_values / tau_hat, svd.left_vectors, svd.right_vectors)


def _solve_rows(Y0, W, F, singular, skip):
    """Per-row masked least squares ``min_u ||W_i * (Y0_i - u F^T)||``.

    ``Y0`` is zero outside ``W`` (float 0/1).  Rows flagged in ``skip`` are
    left at zero.
    """
    m = Y0.shape[0]
    r = F.shape[1]
    rhs = Y0 @ F
    if r == 1:
        G = W @ (F[:, 0] ** 2)
        scale = np.max(G) if G.size else 0.0
        bad = G <= SINGULAR_TOL * max(scale, 1e-300)
        bad &= ~skip
        if bad.any():
            if singular == "raise":
                i = int(np.flatnonzero(bad)[0])
                raise UnderdeterminedRow(i + 1, int(W[i].sum()))
            G = np.where(bad, G + RIDGE, G)
        G = np.where(skip, 1.0, G)
        out = rhs / G[:, None]
        out[skip] = 0.0
        return out
    outer = (F[:, :, None] * F[:, None, :]).reshape(F.shape[0], r * r)
    G = (W @ outer).reshape(m, r, r)
    eig = np.linalg.eigvalsh(G)
    top = np.maximum(eig[:, -1], 1e-300)
    bad = (eig[:, 0] <= SINGULAR_TOL * top) & ~skip
    if bad.any():
        if singular == "raise":
            i = int(np.flatnonzero(bad)[0])
            raise UnderdeterminedRow(i + 1, int(W[i].sum()))
        G[bad] += RIDGE * np.eye(r)
    G[skip] = np.eye(r)
    out = np.linalg.solve(G, rhs[:, :, None])[:, :, 0]
    out[skip] = 0.0
    return out


def masked_ls_update(Y_tilde, mask_tilde, fixed, side="left", *, singular="raise", skip=None):
    """One exact alternating least-squares half-step.

    With ``side="left"`` solve ``min_U ||P(Y - U F^T)||_F`` row by row for the
    fixed right factor ``F``; with ``side="right"`` solve
    ``min_V ||P(Y - F V^T)||_F`` column by column.

    Raises
    ------
    UnderdeterminedRow
        If a normal-equation block is singular (relative tolerance 1e-12) and
        ``singular == "raise"``; the 1-based row (or column) is attached.
    """
    Yt = check_matrix(Y_tilde, "Y_tilde")
    Wt = check_mask(mask_tilde, Yt.shape)
    F = np.asarray(fixed, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    Y0 = np.where(Wt, Yt, 0.0)
    W = Wt.astype(np.float64)
    if side == "right":
        Y0, W = Y0.T, W.T
    elif side != "left":
        raise ValueError("side must be 'left' or 'right'")
    if F.shape[0] != Y0.shape[1]:
        raise ValueError(f"fixed factor has {F.shape[0]} rows, expected {Y0.shape[1]}")
    if skip is None:
        skip = np.zeros(Y0.shape[0], dtype=bool)
    try:
        return _solve_rows(Y0, W, F, singular, skip)
    except UnderdeterminedRow as err:
        raise UnderdeterminedRow(err.row, err.observed, side) from None


def _standard_form(U, V):
    """Rewrite ``U V^T`` as ``U' diag(s) V'^T`` with orthonormal ``U'``, ``V'``."""
    Qu, Ru = np.linalg.qr(U)
    Qv, Rv = np.linalg.qr(V)
    Wl, s, Wrt = np.linalg.svd(Ru @ Rv.T)
    Un, Vn = _fix_signs(Qu @ Wl, Qv @ Wrt.T)
    return Un, s, Vn


def masked_residual(Y_tilde, mask_tilde, U, lambdas, V):
    """``||P(Y - U diag(lambdas) V^T)||_F`` on the rearranged scale."""
    W = np.asarray(mask_tilde, dtype=bool)
    fit = (U * lambdas) @ V.T
    return float(np.linalg.norm(np.where(W, Y_tilde - fit, 0.0)))


def _infeasible_from_lines(c, rows, cols):
    m, n = c.shape
    bad = np.zeros((m, n), dtype=bool)
    bad[rows, :] = True
    bad[:, cols] = True
    return inverse_rearrange(bad.astype(np.float64), c).astype(bool)


def complete(Y_obs, mask, c, r, policy=None, *, allow_irrecoverable=False):
    """Complete ``Y_obs`` as a K-rank-``r`` Kronecker model under configuration ``c``.

    Parameters
    ----------
    Y_obs : array of shape (P, Q)
        Observed matrix; entries outside ``mask`` are ignored.
    mask : array of bool or ObservationMask
    c : Configuration
    r : int
        K-rank of the fit, at most ``min(pq, p*q*)``.
    policy : ConvergencePolicy, optional
    allow_irrecoverable : bool
        Fit anyway when the rearranged mask has empty rows/columns.  Their
        factor rows stay at zero and the affected entries are reported in
        ``model.info.infeasible``.

    Returns
    -------
    model : KroneckerModel
    X_hat : ndarray of shape (P, Q)
        Equal to ``reconstruct(model)``.
    """
    policy = policy or ConvergencePolicy()
    Y = check_matrix(Y_obs, "Y_obs")
    W = check_mask(mask, Y.shape)
    if (c.P, c.Q) != Y.shape:
        rearrange(Y, c)  # raises DimensionMismatch
    r = check_positive_int(r, "r")
    if r > min(c.shape):
        raise RankTooLarge(f"K-rank {r} exceeds min{c.shape} for configuration {c}")

    Wt = rearrange(W.astype(np.float64), c).astype(bool)
    Yt = rearrange(np.where(W, Y, 0.0), c)
    empty_rows, empty_cols = _empty_lines(Wt)
    svd = spectral_init(Yt, Wt, r, allow_irrecoverable=allow_irrecoverable)

    Wf = Wt.astype(np.float64)
    WfT = np.ascontiguousarray(Wf.T)
    YtT = np.ascontiguousarray(Yt.T)
    skip_rows = np.zeros(Wt.shape[0], dtype=bool)
    skip_rows[empty_rows] = True
    skip_cols = np.zeros(Wt.shape[1], dtype=bool)
    skip_cols[empty_cols] = True
    floor = 1e-14 * max(float(np.linalg.norm(Yt)), 1e-300)

    U, lam, V = svd.left_vectors, svd.singular_values, svd.right_vectors
    res0 = masked_residual(Yt, Wt, U, lam, V)
    history = [res0]
    converged = False
    it = 0
    for it in range(1, policy.max_iterations + 1):
        Ustar = _solve_rows(Yt, Wf, V, policy.singular, skip_rows)
        try:
            Vstar = _solve_rows(YtT, WfT, Ustar, policy.singular, skip_cols)
        except UnderdeterminedRow as err:
            raise UnderdeterminedRow(err.row, err.observed, "right") from None
        U, lam, V = _standard_form(Ustar, Vstar)
        res = masked_residual(Yt, Wt, U, lam, V)
        history.append(res)
        if not np.isfinite(res) or res > policy.divergence_cap * max(res0, floor):
            raise Diverged(f"masked residual {res:.3e} exceeds cap at iteration {it}")
        prev = history[-2]
        if res <= floor or abs(prev - res) <= policy.relative_tolerance * prev:
            converged = True
            break
    if not converged:
        logger.debug("ALS stopped at max_iterations=%d under %s", policy.max_iterations, c)

    tau_hat = float(Wt.mean())
    infeasible = _infeasible_from_lines(c, empty_rows, empty_cols)
    info = CompletionInfo(
        iterations=it,
        converged=converged,
        residual_history=tuple(history),
        observed_fraction=tau_hat,
        empty_rows=tuple(int(i) + 1 for i in empty_rows),
        empty_cols=tuple(int(j) + 1 for j in empty_cols),
        infeasible=infeasible,
    )
    model = KroneckerModel(
        config=c,
        lambdas=lam,
        A_factors=[unvec(U[:, i], c.left_shape) for i in range(r)],
        B_factors=[unvec(V[:, i], c.right_shape) for i in range(r)],
        info=info,
    )
    return model, reconstruct(model)
