import numpy as np
import pytest
from scipy.optimize import minimize

from waveblur.errors import BadEpsilon, MemoryGuard
from waveblur.precond import DiagonalPreconditioner, gram_diagonals, identity, jacobi, spai
from waveblur.theta import SparseOperator


def random_sparse(rng, n=16, density=0.3):
    A = rng.standard_normal((n, n)) * (rng.random((n, n)) < density)
    return A, SparseOperator.from_dense(A)


def op_with_gram(M):
    """A sparse operator A with A^T A = M (M symmetric positive definite)."""
    return SparseOperator.from_dense(np.linalg.cholesky(M).T)


def spd(rng, n=8):
    B = rng.standard_normal((n, n))
    return B @ B.T + 0.5 * np.eye(n)


def frob_objective(p, M):
    return np.sum((np.eye(len(M)) - M / p[:, None]) ** 2)


def test_identity_gram():
    op = SparseOperator.from_dense(np.eye(10))
    dm, dm2 = gram_diagonals(op)
    np.testing.assert_array_equal(dm, 1)
    np.testing.assert_array_equal(dm2, 1)


def test_zero_column(rng):
    A, _ = random_sparse(rng)
    A[:, 4] = 0
    op = SparseOperator.from_dense(A)
    dm, dm2 = gram_diagonals(op)
    assert dm[4] == 0 and dm2[4] == 0
    assert jacobi(op, 1e-3).p[4] == 1e-3
    assert spai(op).p[4] == 1.0


def test_gram_matches_dense(rng):
    A, op = random_sparse(rng)
    M = A.T @ A
    dm, dm2 = gram_diagonals(op)
    assert np.abs(dm - np.diag(M)).max() < 1e-12
    assert np.abs(dm2 - np.diag(M @ M)).max() < 1e-12


def test_memory_guard(rng):
    A, op = random_sparse(rng, 32, 0.5)
    with pytest.raises(MemoryGuard):
        gram_diagonals(op, max_nnz=10)


def test_jacobi(rng):
    assert np.all(jacobi(SparseOperator.from_dense(np.eye(6)), 1e-3).p == 1)
    A, op = random_sparse(rng)
    eps = 0.5
    np.testing.assert_allclose(jacobi(op, eps).p, np.maximum(np.diag(A.T @ A), eps), rtol=1e-14)
    for bad in (0.0, -1.0):
        with pytest.raises(BadEpsilon):
            jacobi(op, bad)
    # default eps is relative to the largest diagonal entry
    P = jacobi(op)
    assert P.eps == pytest.approx(1e-3 * np.diag(A.T @ A).max())


def test_jacobi_small_eps_limit(rng):
    A = rng.standard_normal((12, 12))
    op = SparseOperator.from_dense(A)
    np.testing.assert_allclose(jacobi(op, 1e-300).p, np.diag(A.T @ A), rtol=1e-13)


def test_spai_examples():
    # orthogonal columns: M diagonal, p = diag(M)
    A = np.diag([1.0, 2.0, 3.0]) @ np.eye(3)[[2, 0, 1]]
    np.testing.assert_allclose(spai(SparseOperator.from_dense(A)).p, [4.0, 9.0, 1.0], rtol=1e-14)
    P = spai(op_with_gram(np.array([[2.0, 1.0], [1.0, 2.0]])))
    np.testing.assert_allclose(P.p, [2.5, 2.5], rtol=1e-12)


def test_spai_scale_equivariance(rng):
    A, op = random_sparse(rng)
    p = spai(op).p
    p3 = spai(SparseOperator.from_dense(3.0 * A)).p
    nz = np.diag(A.T @ A) > 0
    np.testing.assert_allclose(p3[nz], 9.0 * p[nz], rtol=1e-12)


def test_spai_kkt_and_minimizer(rng):
    for _ in range(10):
        M = spd(rng)
        p = spai(op_with_gram(M)).p
        kkt = np.diag(M @ M / p[None, :])
        assert np.abs(kkt - np.diag(M)).max() < 1e-10 * np.abs(np.diag(M)).max()
        # independent numerical minimizer of ||I - P^-1 M||_F^2 over positive diagonals
        res = minimize(lambda q: frob_objective(np.exp(q), M), np.log(np.diag(M)),
                       method="BFGS", options={"gtol": 1e-12})
        assert np.abs(np.exp(res.x) - p).max() <= 1e-6 * max(1.0, p.max())
        # local optimality on a perturbation grid
        f0 = frob_objective(p, M)
        for i in range(8):
            for s in (0.99, 1.01):
                q = p.copy()
                q[i] *= s
                assert frob_objective(q, M) > f0


def test_positivity(rng):
    A, op = random_sparse(rng, 30, 0.05)
    for P in (jacobi(op), spai(op), identity(30)):
        assert np.all(P.p > 0)
    with pytest.raises(ValueError):
        DiagonalPreconditioner(np.array([1.0, 0.0]), "jacobi")
