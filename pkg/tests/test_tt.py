import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from tnqc.tt import (
    DenseGuardError,
    TTMatrix,
    TTVector,
    add,
    dot,
    frobenius_norm,
    matmat,
    matvec,
    norm,
    orthogonalize,
    scalar_mul,
    to_dense_matrix,
    to_dense_vector,
    trace_adjoint_product,
    tt_round,
    tt_svd_matrix,
    tt_svd_vector,
)

TOL = 1e-10


def random_tt_vector(rng, n, r):
    bonds = [1] + [r] * (n - 1) + [1]
    return TTVector([crandn(rng, bonds[k], 2, bonds[k + 1]) for k in range(n)])


def random_tt_matrix(rng, n, r):
    bonds = [1] + [r] * (n - 1) + [1]
    return TTMatrix([crandn(rng, bonds[k], 2, 2, bonds[k + 1]) for k in range(n)])


sizes = st.tuples(st.integers(1, 8), st.integers(1, 3), st.integers(0, 2**31 - 1))


@given(sizes)
def test_vector_ops_match_dense(args):
    n, r, seed = args
    rng = np.random.default_rng(seed)
    x, y = random_tt_vector(rng, n, r), random_tt_vector(rng, n, r)
    dx, dy = to_dense_vector(x), to_dense_vector(y)
    scale = max(np.linalg.norm(dx) * np.linalg.norm(dy), 1.0)
    assert abs(dot(x, y) - np.vdot(dx, dy)) <= TOL * scale
    assert abs(norm(x) - np.linalg.norm(dx)) <= TOL * max(np.linalg.norm(dx), 1.0)
    assert np.allclose(to_dense_vector(add(x, y)), dx + dy, atol=TOL * scale)
    assert np.allclose(to_dense_vector(x - y), dx - dy, atol=TOL * scale)
    assert np.allclose(to_dense_vector(scalar_mul(2.5 - 1j, x)), (2.5 - 1j) * dx, atol=TOL * scale)


@given(st.tuples(st.integers(1, 6), st.integers(1, 2), st.integers(0, 2**31 - 1)))
def test_matrix_ops_match_dense(args):
    n, r, seed = args
    rng = np.random.default_rng(seed)
    a, b = random_tt_matrix(rng, n, r), random_tt_matrix(rng, n, r)
    x = random_tt_vector(rng, n, r)
    da, db, dx = to_dense_matrix(a), to_dense_matrix(b), to_dense_vector(x)
    scale = np.linalg.norm(da) * max(np.linalg.norm(db), np.linalg.norm(dx))
    assert np.abs(to_dense_vector(matvec(a, x)) - da @ dx).max() <= TOL * scale
    assert np.abs(to_dense_matrix(matmat(a, b)) - da @ db).max() <= TOL * scale
    assert abs(trace_adjoint_product(a, b) - np.trace(da.conj().T @ db)) <= TOL * scale
    assert abs(frobenius_norm(a) - np.linalg.norm(da)) <= TOL * np.linalg.norm(da)


@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_tt_svd_is_exact_at_zero_tol(n, seed):
    rng = np.random.default_rng(seed)
    v = crandn(rng, 2**n)
    x = tt_svd_vector(v)
    assert np.abs(to_dense_vector(x) - v).max() <= TOL * np.linalg.norm(v)
    assert x.max_rank <= 2 ** (n // 2)


@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_tt_svd_matrix_roundtrip(n, seed):
    rng = np.random.default_rng(seed)
    m = crandn(rng, 2**n, 2**n)
    assert np.abs(to_dense_matrix(tt_svd_matrix(m)) - m).max() <= TOL * np.linalg.norm(m)


@given(st.integers(2, 8), st.sampled_from([1e-1, 1e-2, 1e-4]), st.integers(0, 2**31 - 1))
def test_rounding_error_bound(n, tol, seed):
    rng = np.random.default_rng(seed)
    x = random_tt_vector(rng, n, 3)
    y = add(x, scalar_mul(1e-3, random_tt_vector(rng, n, 2)))
    z = tt_round(y, tol)
    err = np.linalg.norm(to_dense_vector(z) - to_dense_vector(y))
    assert err <= tol * norm(y) * (1 + 1e-8)
    assert z.max_rank <= y.max_rank


def test_round_removes_redundant_rank(rng):
    x = random_tt_vector(rng, 6, 2)
    doubled = add(x, x)
    assert doubled.max_rank == 4
    z = tt_round(doubled, 1e-12)
    assert z.max_rank == 2
    assert np.allclose(to_dense_vector(z), 2 * to_dense_vector(x))


def test_round_max_rank_cap(rng):
    x = random_tt_vector(rng, 6, 4)
    assert tt_round(x, 0.0, max_rank=2).max_rank <= 2


@pytest.mark.parametrize("center", [0, 2, 4])
def test_orthogonalize_preserves_tensor_and_is_canonical(rng, center):
    x = random_tt_vector(rng, 5, 3)
    y = orthogonalize(x, center)
    assert np.allclose(to_dense_vector(y), to_dense_vector(x))
    for k, g in enumerate(y.cores):
        a, s, b = g.shape
        if k < center:
            q = g.reshape(a * s, b)
            assert np.allclose(q.conj().T @ q, np.eye(b), atol=1e-12)
        elif k > center:
            q = g.reshape(a, s * b)
            assert np.allclose(q @ q.conj().T, np.eye(a), atol=1e-12)


def test_rank_profile_and_dims(rng):
    x = random_tt_vector(rng, 4, 3)
    assert tuple(x.rank_profile) == (1, 3, 3, 3, 1)
    assert x.max_rank == 3
    assert tuple(x.phys_dims) == (2, 2, 2, 2)
    a = random_tt_matrix(rng, 3, 2)
    assert tuple(a.col_dims) == (2, 2, 2)


def test_msb_ordering():
    # site 0 is the most significant bit
    e = np.zeros(8)
    e[4] = 1.0
    x = tt_svd_vector(e)
    assert np.allclose(np.abs(x.cores[0].reshape(-1)), [0, 1])


def test_dense_guard():
    x = TTVector([np.ones((1, 2, 1))] * 20)
    with pytest.raises(DenseGuardError):
        to_dense_vector(x)
    a = TTMatrix([np.ones((1, 2, 2, 1))] * 12)
    with pytest.raises(DenseGuardError):
        to_dense_matrix(a)


def test_shape_mismatch_errors(rng):
    x = random_tt_vector(rng, 3, 2)
    y = random_tt_vector(rng, 4, 2)
    with pytest.raises(ValueError):
        dot(x, y)
    with pytest.raises(ValueError):
        add(x, y)
    with pytest.raises(ValueError):
        matvec(random_tt_matrix(rng, 4, 2), x)


def test_invalid_cores():
    with pytest.raises(ValueError):
        TTVector([np.ones((1, 2, 2)), np.ones((3, 2, 1))])
    with pytest.raises(ValueError):
        TTVector([np.ones((2, 2, 1))])
    with pytest.raises(ValueError):
        tt_svd_vector(np.ones(6))


def test_operators(rng):
    x = random_tt_vector(rng, 3, 2)
    a = random_tt_matrix(rng, 3, 2)
    assert np.allclose(to_dense_vector(a @ x), to_dense_matrix(a) @ to_dense_vector(x))
    assert np.allclose(to_dense_vector(x + x), 2 * to_dense_vector(x))
    assert np.allclose(to_dense_vector(3 * x), 3 * to_dense_vector(x))
