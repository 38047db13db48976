import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from kronmc.core import (
    Configuration,
    ConfigurationSet,
    ObservationMask,
    candidate_set,
    divisors,
    inverse_rearrange,
    kronecker_product,
    parse_candidates,
    parse_configuration,
    project,
    rearrange,
    rearrange_mask,
    unvec,
    vec,
)
from kronmc.exceptions import DimensionMismatch, DuplicateIndex, InvalidBound, OutOfBounds

from conftest import brute_kron, brute_rearrange


def test_kron_example():
    A = np.array([[1, 2], [3, 4]])
    B = np.array([[0, 1], [1, 0]])
    expected = [[0, 1, 0, 2], [1, 0, 2, 0], [0, 3, 0, 4], [3, 0, 4, 0]]
    np.testing.assert_array_equal(kronecker_product(A, B), expected)


def test_kron_scalar_identity(rng):
    B = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(kronecker_product([[1.0]], B), B)


def test_kron_matches_index_oracle(rng):
    A = rng.standard_normal((3, 2))
    B = rng.standard_normal((2, 5))
    np.testing.assert_allclose(kronecker_product(A, B), brute_kron(A, B), rtol=0, atol=0)


def test_vec_column_major():
    np.testing.assert_array_equal(vec([[1, 2], [3, 4]]).ravel(), [1, 3, 2, 4])


def test_vec_column_and_row_vectors():
    col = np.arange(4.0).reshape(4, 1)
    np.testing.assert_array_equal(vec(col), col)
    row = np.arange(4.0).reshape(1, 4)
    np.testing.assert_array_equal(vec(row), row.T)


def test_unvec_inverts_vec(rng):
    M = rng.standard_normal((3, 5))
    np.testing.assert_array_equal(unvec(vec(M), M.shape), M)


def test_rearrange_one_by_one_blocks():
    A = np.array([[1.0, 2], [3, 4]])
    M = kronecker_product(A, [[5.0]])
    R = rearrange(M, Configuration(2, 2, 2, 2))
    np.testing.assert_array_equal(R.ravel(), [5, 15, 10, 20])


def test_rearrange_rank_one_example():
    A = np.array([[1.0, 2], [3, 4]])
    B = np.array([[0.0, 1], [1, 0]])
    R = rearrange(kronecker_product(A, B), Configuration(2, 2, 4, 4))
    expected = [[0, 1, 1, 0], [0, 3, 3, 0], [0, 2, 2, 0], [0, 4, 4, 0]]
    np.testing.assert_array_equal(R, expected)


def test_rearrange_matches_block_oracle(rng):
    M = rng.standard_normal((12, 18))
    for p in divisors(12):
        for q in divisors(18):
            c = Configuration(p, q, 12, 18)
            np.testing.assert_array_equal(rearrange(M, c), brute_rearrange(M, p, q))


def test_rearrange_preserves_norm_all_configs(rng):
    M = rng.standard_normal((6, 6))
    for p in divisors(6):
        for q in divisors(6):
            R = rearrange(M, Configuration(p, q, 6, 6))
            assert R.shape == (p * q, 36 // (p * q))
            assert np.isclose(np.linalg.norm(R), np.linalg.norm(M), rtol=1e-14)


def test_inverse_round_trip(rng):
    M = rng.standard_normal((8, 8))
    c = Configuration(4, 2, 8, 8)
    np.testing.assert_array_equal(inverse_rearrange(rearrange(M, c), c), M)


def test_inverse_of_rank_one(rng):
    A = rng.standard_normal((2, 3))
    B = rng.standard_normal((4, 2))
    c = Configuration(2, 3, 8, 6)
    N = vec(A) @ vec(B).T
    np.testing.assert_allclose(inverse_rearrange(N, c), kronecker_product(A, B), atol=1e-15)


def test_inverse_zero():
    c = Configuration(2, 2, 4, 4)
    np.testing.assert_array_equal(inverse_rearrange(np.zeros((4, 4)), c), np.zeros((4, 4)))


def test_rearrange_shape_errors(rng):
    with pytest.raises(DimensionMismatch):
        rearrange(rng.standard_normal((6, 6)), Configuration(2, 2, 4, 4))
    with pytest.raises(DimensionMismatch):
        inverse_rearrange(rng.standard_normal((3, 3)), Configuration(2, 2, 4, 4))
    with pytest.raises(DimensionMismatch):
        Configuration(3, 2, 4, 4)


def test_rearrange_mask_full_and_single():
    c = Configuration(2, 4, 4, 8)
    full = rearrange_mask(ObservationMask.full((4, 8)), c)
    assert np.all(full.array) and full.shape == (8, 4)
    # entry (i, j) = (3, 6) 1-based: block row 1, block col 2 -> row 1 + 2*2 = 5;
    # offset inside the 2x2 block is (0, 1) -> column-major position 0 + 1*2 = 2
    one = ObservationMask.from_indices([(3, 6)], (4, 8))
    R = rearrange_mask(one, c)
    assert len(R) == 1
    assert R.indices() == [(6, 3)]


def test_rearrange_mask_empty_block_gives_empty_row():
    W = np.ones((8, 8), dtype=bool)
    W[:4, :2] = False  # first p* x q* block for c = (2, 4)
    R = rearrange_mask(W, Configuration(2, 4, 8, 8)).array
    assert not R[0].any()
    assert R[1:].any(axis=1).all()


def test_project_examples(rng):
    M = rng.standard_normal((5, 4))
    np.testing.assert_array_equal(project(M, np.ones((5, 4), bool)), M)
    np.testing.assert_array_equal(project(M, np.zeros((5, 4), bool)), np.zeros((5, 4)))
    W = rng.random((5, 4)) < 0.5
    out = project(M, W)
    for i in range(5):
        for j in range(4):
            assert out[i, j] == (M[i, j] if W[i, j] else 0.0)
    with pytest.raises(DimensionMismatch):
        project(M, np.ones((4, 4), bool))


def test_divisors():
    assert divisors(12) == [1, 2, 3, 4, 6, 12]
    assert divisors(1) == [1]
    assert divisors(512) == [2**k for k in range(10)]
    with pytest.raises(ValueError):
        divisors(0)


def test_candidate_set_s_mode_512():
    cs = candidate_set(512, 512, s=7)
    logs = {c.log2 for c in cs}
    expected = {(a, b) for a in range(10) for b in range(10) if 7 <= a + b <= 11}
    assert logs == expected
    assert [(c.p, c.q) for c in cs] == sorted((c.p, c.q) for c in cs)


def test_candidate_set_delta_mode():
    cs = candidate_set(16, 16, delta=1 / 8)
    lo, hi = 256 ** (3 / 8), 256 ** (5 / 8)
    assert np.isclose(lo, 8) and np.isclose(hi, 32)
    brute = {(p, q) for p in divisors(16) for q in divisors(16) if 8 <= p * q <= 32}
    assert {(c.p, c.q) for c in cs} == brute


def test_candidate_set_empty_near_quarter():
    # divisor products of a 2x3 matrix are 1, 2, 3, 6; the window is [2.41, 2.49]
    with pytest.raises(InvalidBound):
        candidate_set(2, 3, delta=0.24)
    with pytest.raises(InvalidBound):
        candidate_set(16, 16, delta=0.3)


def test_configuration_set_validation():
    c = Configuration(2, 2, 4, 4)
    with pytest.raises(ValueError):
        ConfigurationSet((c, c), (1, 16))
    with pytest.raises(ValueError):
        ConfigurationSet((c,), (5, 16))


def test_mask_from_indices_errors():
    with pytest.raises(OutOfBounds):
        ObservationMask.from_indices([(0, 1)], (2, 2))
    with pytest.raises(DuplicateIndex):
        ObservationMask.from_indices([(1, 1), (1, 1)], (2, 2))


def test_mask_is_read_only():
    m = ObservationMask.full((2, 2))
    with pytest.raises(ValueError):
        m.array[0, 0] = False


def test_parsers():
    assert parse_configuration("4x2", 8, 8) == Configuration(4, 2, 8, 8)
    assert len(parse_candidates("s=3", 8, 8)) == len(candidate_set(8, 8, s=3))
    with pytest.raises(ValueError):
        parse_configuration("four", 8, 8)
    with pytest.raises(ValueError):
        parse_candidates("k=3", 8, 8)


dims = st.integers(1, 4)


@st.composite
def kron_case(draw):
    m, n, r, s = (draw(dims) for _ in range(4))
    elems = st.floats(-10, 10, allow_nan=False, allow_subnormal=False)
    A = draw(arrays(np.float64, (m, n), elements=elems))
    B = draw(arrays(np.float64, (r, s), elements=elems))
    return A, B


@given(kron_case())
def test_property_rank_one_identity(case):
    A, B = case
    c = Configuration(A.shape[0], A.shape[1], A.shape[0] * B.shape[0], A.shape[1] * B.shape[1])
    R = rearrange(kronecker_product(A, B), c)
    np.testing.assert_array_equal(R, vec(A) @ vec(B).T)


@st.composite
def matrix_and_config(draw):
    P = draw(st.sampled_from([1, 2, 4, 6, 8, 12]))
    Q = draw(st.sampled_from([1, 2, 3, 6, 9]))
    M = draw(arrays(np.float64, (P, Q), elements=st.floats(-1e3, 1e3, allow_nan=False)))
    p = draw(st.sampled_from(divisors(P)))
    q = draw(st.sampled_from(divisors(Q)))
    return M, Configuration(p, q, P, Q)


@given(matrix_and_config())
def test_property_bijection_and_norm(case):
    M, c = case
    R = rearrange(M, c)
    np.testing.assert_array_equal(inverse_rearrange(R, c), M)
    np.testing.assert_array_equal(np.sort(R.ravel()), np.sort(M.ravel()))


@given(matrix_and_config(), st.floats(-5, 5), st.floats(-5, 5))
def test_property_linearity(case, a, b):
    M, c = case
    M2 = np.flipud(M)
    lhs = rearrange(a * M + b * M2, c)
    rhs = a * rearrange(M, c) + b * rearrange(M2, c)
    np.testing.assert_array_equal(lhs, rhs)  # permutation commutes with arithmetic


@given(matrix_and_config(), st.integers(0, 2**32 - 1))
def test_property_mask_commutes_with_project(case, seed):
    M, c = case
    W = np.random.default_rng(seed).random(M.shape) < 0.5
    lhs = rearrange(project(M, W), c)
    rhs = project(rearrange(M, c), rearrange_mask(W, c))
    np.testing.assert_array_equal(lhs, rhs)


@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 6))
def test_property_candidate_set_complete(M, N, s):
    P, Q = 2**M, 2**N
    lo, hi = 2**s, P * Q / 2**s
    brute = {(p, q) for p in divisors(P) for q in divisors(Q) if lo <= p * q <= hi}
    if not brute:
        with pytest.raises(InvalidBound):
            candidate_set(P, Q, s=s)
        return
    cs = candidate_set(P, Q, s=s)
    assert {(c.p, c.q) for c in cs} == brute
    assert len(set(cs)) == len(cs)
