import numpy as np
import pytest
from hypothesis import given, strategies as st

from kronmc.als import (
    ConvergencePolicy,
    KroneckerModel,
    complete,
    masked_ls_update,
    masked_residual,
    reconstruct,
    reconstruct_by_kron,
    spectral_init,
)
from kronmc.core import Configuration, kronecker_product, rearrange
from kronmc.exceptions import Diverged, Irrecoverable, RankTooLarge, UnderdeterminedRow


def unit(M):
    return M / np.linalg.norm(M)


def test_spectral_init_full_rank_one(rng):
    u, v = rng.standard_normal(6), rng.standard_normal(5)
    Y = np.outer(u, v)
    t = spectral_init(Y, np.ones(Y.shape, bool), 1)
    np.testing.assert_allclose(t.reconstruct(), Y, atol=1e-12)


def test_spectral_init_empty_row(rng):
    W = np.ones((4, 5), bool)
    W[2] = False
    with pytest.raises(Irrecoverable) as exc:
        spectral_init(rng.standard_normal((4, 5)), W, 1)
    assert exc.value.rows == (3,)
    assert exc.value.cols == ()


def test_spectral_init_close_at_half_rate():
    # sign-pattern factors have the smallest possible incoherence
    errs = []
    for seed in range(20):
        r = np.random.default_rng(seed)
        Y = np.outer(r.choice([-1.0, 1.0], 64), r.choice([-1.0, 1.0], 64))
        W = r.random(Y.shape) < 0.5
        t = spectral_init(np.where(W, Y, 0), W, 1)
        errs.append(np.linalg.norm(t.reconstruct() - Y) / np.linalg.norm(Y))
    assert np.mean(errs) <= 0.2
    assert max(errs) <= 0.25


def test_ls_full_observation(rng):
    Y = rng.standard_normal((7, 5))
    v = unit(rng.standard_normal((5, 1)))
    U = masked_ls_update(Y, np.ones(Y.shape, bool), v, "left")
    np.testing.assert_allclose(U, Y @ v, atol=1e-12)


def test_ls_one_entry_per_row_interpolates(rng):
    Y = rng.standard_normal((6, 4))
    W = np.zeros(Y.shape, bool)
    W[np.arange(6), rng.integers(0, 4, 6)] = True
    v = rng.uniform(0.5, 1.5, (4, 1))
    U = masked_ls_update(Y, W, v, "left")
    assert masked_residual(Y, W, U, np.ones(1), v) <= 1e-12


def test_ls_matches_per_row_oracle(rng):
    Y = rng.standard_normal((30, 2)) @ rng.standard_normal((2, 20))
    Y += 0.1 * rng.standard_normal(Y.shape)
    W = rng.random(Y.shape) < 0.6
    V = rng.standard_normal((20, 2))
    U = masked_ls_update(Y, W, V, "left")
    oracle = np.vstack([np.linalg.lstsq(V[W[i]], Y[i, W[i]], rcond=None)[0] for i in range(30)])
    assert abs(masked_residual(Y, W, U, np.ones(2), V)
               - masked_residual(Y, W, oracle, np.ones(2), V)) <= 1e-10
    Vr = masked_ls_update(Y, W, U, "right")
    oracle_r = np.vstack([np.linalg.lstsq(U[W[:, j]], Y[W[:, j], j], rcond=None)[0]
                          for j in range(20)])
    np.testing.assert_allclose(Vr, oracle_r, atol=1e-8)


def test_ls_underdetermined(rng):
    Y = rng.standard_normal((3, 4))
    W = np.ones(Y.shape, bool)
    W[1] = [True, False, False, False]
    with pytest.raises(UnderdeterminedRow) as exc:
        masked_ls_update(Y, W, rng.standard_normal((4, 2)), "left")
    assert exc.value.row == 2 and exc.value.observed == 1 and exc.value.side == "left"
    U = masked_ls_update(Y, W, rng.standard_normal((4, 2)), "left", singular="ridge")
    assert np.all(np.isfinite(U))


def test_complete_full_noiseless(rng):
    A, B = rng.standard_normal((4, 8)), rng.standard_normal((8, 4))
    X = kronecker_product(A, B)
    model, X_hat = complete(X, np.ones(X.shape, bool), Configuration(4, 8, 32, 32), 1)
    assert np.linalg.norm(X_hat - X) / np.linalg.norm(X) <= 1e-8
    assert np.isclose(model.lambdas[0], np.linalg.norm(A) * np.linalg.norm(B))


def test_complete_exact_recovery_regime():
    c = Configuration(16, 8, 128, 128)
    for seed in range(3):
        r = np.random.default_rng(seed)
        X = kronecker_product(r.standard_normal(c.left_shape), r.standard_normal(c.right_shape))
        W = r.random(X.shape) < 0.5
        model, X_hat = complete(np.where(W, X, 0), W, c, 1)
        assert np.linalg.norm(X_hat - X) / np.linalg.norm(X) <= 1e-6
        assert model.info.converged


def test_complete_irrecoverable_mask(rng):
    c = Configuration(4, 4, 16, 16)
    W = rng.random((16, 16)) < 0.8
    W[:4, :4] = False  # first block of size p* x q*
    with pytest.raises(Irrecoverable) as exc:
        complete(rng.standard_normal((16, 16)), W, c, 1)
    assert 1 in exc.value.rows
    model, _ = complete(rng.standard_normal((16, 16)), W, c, 1, allow_irrecoverable=True)
    assert model.info.infeasible[:4, :4].all()


def test_complete_rank_too_large(rng):
    with pytest.raises(RankTooLarge):
        complete(rng.standard_normal((4, 4)), np.ones((4, 4), bool), Configuration(2, 1, 4, 4), 3)


def test_diverged_cap(rng):
    X = rng.standard_normal((16, 16))
    W = rng.random(X.shape) < 0.3
    policy = ConvergencePolicy(divergence_cap=1e-12, singular="ridge")
    with pytest.raises(Diverged):
        complete(np.where(W, X, 0), W, Configuration(4, 4, 16, 16), 2, policy)


def test_reconstruct_example():
    A = np.array([[1.0, 0], [0, 0]])
    B = np.eye(2) / np.sqrt(2)
    model = KroneckerModel(Configuration(2, 2, 4, 4), [2.0], [A], [B])
    np.testing.assert_allclose(reconstruct(model), 2 * kronecker_product(A, B), atol=1e-15)


def test_reconstruct_equals_complete_output(rng):
    X = rng.standard_normal((16, 8))
    W = rng.random(X.shape) < 0.7
    model, X_hat = complete(np.where(W, X, 0), W, Configuration(4, 2, 16, 8), 2)
    np.testing.assert_array_equal(reconstruct(model), X_hat)


def test_reconstruct_matches_kron_sum(rng):
    c = Configuration(3, 2, 6, 8)
    lam = np.array([3.0, 2.0, 0.5])
    model = KroneckerModel(c, lam, [unit(rng.standard_normal((3, 2))) for _ in range(3)],
                           [unit(rng.standard_normal((2, 4))) for _ in range(3)])
    np.testing.assert_allclose(reconstruct(model), reconstruct_by_kron(model), atol=1e-12)


def test_model_validation(rng):
    c = Configuration(2, 2, 4, 4)
    with pytest.raises(ValueError):
        KroneckerModel(c, [1.0, 2.0], [np.eye(2)] * 2, [np.eye(2)] * 2)
    with pytest.raises(ValueError):
        KroneckerModel(c, [1.0], [np.eye(3)], [np.eye(2)])


def test_error_shrinks_with_rate():
    c = Configuration(8, 8, 64, 64)
    gaps = []
    for seed in range(4):
        r = np.random.default_rng(seed)
        X = kronecker_product(unit(r.standard_normal((8, 8))), unit(r.standard_normal((8, 8))))
        E = r.standard_normal(X.shape) / 64 * 0.5
        U = r.random(X.shape)
        errs = []
        for tau in (0.3, 0.8):
            W = U < tau
            _, X_hat = complete(np.where(W, X + E, 0), W, c, 1)
            errs.append(np.linalg.norm(X_hat - X))
        gaps.append(errs[1] < errs[0])
    assert all(gaps)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.floats(0.3, 0.9))
def test_property_residual_monotone_and_standard_form(seed, r, tau):
    rng = np.random.default_rng(seed)
    c = Configuration(4, 4, 16, 16)
    X = sum(kronecker_product(rng.standard_normal((4, 4)), rng.standard_normal((4, 4)))
            for _ in range(r))
    Y = X + 0.3 * rng.standard_normal(X.shape)
    W = rng.random(X.shape) < tau
    try:
        model, X_hat = complete(np.where(W, Y, 0), W, c, r, ConvergencePolicy(max_iterations=30))
    except (Irrecoverable, UnderdeterminedRow):
        return
    h = np.array(model.info.residual_history)
    assert np.all(np.diff(h) <= 1e-12 * max(h[0], 1.0) + 1e-9 * h[:-1])
    for a, b in zip(model.A_factors, model.B_factors):
        assert abs(np.linalg.norm(a) - 1) <= 1e-8 and abs(np.linalg.norm(b) - 1) <= 1e-8
    assert np.all(model.lambdas >= 0) and np.all(np.diff(model.lambdas) <= 0)
    # both objective forms agree on the final iterate
    original = np.linalg.norm(np.where(W, Y - X_hat, 0))
    rearranged = np.linalg.norm(np.where(rearrange(W.astype(float), c) > 0,
                                         rearrange(Y - X_hat, c), 0))
    assert np.isclose(original, rearranged, rtol=1e-12)
    assert np.isclose(original, h[-1], rtol=1e-8)
